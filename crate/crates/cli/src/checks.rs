//! Quick closed-form checks run with `--check`. Each prints one pass/fail line and never
//! aborts the command that follows.

use std::f64::consts::PI;

use plasmo_core::cgpt::compute_cgpt;
use plasmo_core::{BoundaryCurve, DiskPair, LayerPotentials, Point};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {:.6e} (tolerance {:.1e})", self.name, self.value, self.tolerance)
    }
}

fn outcome(name: &'static str, value: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome { name, value, tolerance, pass: value.is_finite() && value <= tolerance }
}

/// Distance of the transformed radius ratio at δ = 1e-3, d = 5δ from 0.127.
pub fn radius_ratio() -> Result<CheckOutcome, CliError> {
    let (t1, t2) = DiskPair::new(1e-3, 1.0, 5e-3)?.transformed_radii();
    Ok(outcome("transformed radius ratio vs 0.127", (t1 / t2 - 0.127).abs(), 1e-3))
}

/// Largest NP eigenvalue of a circle on mean-zero densities.
pub fn circle_spectrum() -> Result<CheckOutcome, CliError> {
    let c = BoundaryCurve::circle(Point::zeros(), 1.0, 128)?;
    let s = LayerPotentials::new(&c).spectrum_truncated(4)?;
    Ok(outcome("circle NP spectrum", s.values.iter().fold(0.0, |m, v| f64::max(m, v.abs())), 1e-10))
}

/// Disk tensors against `πn r^{2n}/λ`.
pub fn disk_tensors() -> Result<CheckOutcome, CliError> {
    let (r, lambda) = (0.7, 1.5);
    let c = BoundaryCurve::circle(Point::zeros(), r, 64)?;
    let t = compute_cgpt(&c, lambda, 3, Point::zeros())?;
    let mut err: f64 = 0.0;
    for n in 1..=3 {
        let e = PI * n as f64 * f64::powi(r, 2 * n as i32) / lambda;
        err = err.max((t.block(n, n)[(0, 0)] - e).abs() / e);
    }
    Ok(outcome("disk tensors", err, 1e-8))
}

/// The pair map sends both boundary circles onto circles about the origin.
pub fn concentric_images() -> Result<CheckOutcome, CliError> {
    let p = DiskPair::new(1e-3, 1.0, 5e-3)?;
    let (t1, t2) = p.transformed_radii();
    let m = p.map();
    let mut err: f64 = 0.0;
    for j in 0..64 {
        let t = 2.0 * PI * j as f64 / 64.0 + 0.01;
        let e = Point::new(t.cos(), t.sin());
        err = err.max((m.forward(p.c1() + e * p.r1)?.norm() - t1).abs() / t1);
        err = err.max((m.forward(p.c2() + e * p.r2)?.norm() - t2).abs() / t2);
    }
    Ok(outcome("concentric images", err, 1e-9))
}

pub fn run_all() -> Result<Vec<CheckOutcome>, CliError> {
    Ok(vec![radius_ratio()?, circle_spectrum()?, disk_tensors()?, concentric_images()?])
}
