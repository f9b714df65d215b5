//! Quasi-static plasmonic sensing in the strong interaction regime.
//!
//! A small dielectric target near a plasmonic disk shifts the disk's resonances. The shifts are
//! simulated through a Möbius map onto a shell-core geometry. Inverting them gives the target's
//! contracted generalized polarization tensors, from which its outline is reconstructed.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgpt;
pub mod conformal;
pub mod error;
pub mod forward;
pub mod fourier;
pub mod geometry;
pub mod interaction;
pub mod inversion;
pub mod potentials;
pub mod shaperec;

pub use cgpt::{CgptTable, NTable};
pub use conformal::{DiskPair, MobiusMap, PlacedTarget};
pub use error::{Error, Result};
pub use forward::{ForwardOptions, MeasurementSet, PairResponse, ResponseCurve, Scene};
pub use geometry::{BoundaryCurve, EllipseAxes, Point, StarShape};
pub use interaction::{DirectOperator, InteractionOperator, InteractionSpectrum};
pub use inversion::{CgptUnknowns, Recovery, RecoveryOptions};
pub use potentials::{LayerPotentials, NpSpectrum, Resolvent};
pub use shaperec::{ReconstructOptions, ShapeIterate};
