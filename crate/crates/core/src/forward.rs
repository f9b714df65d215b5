//! Forward model: contrasts, the pair polarization tensor, response scans, peak extraction
//! and multi-angle measurement sets.

use std::f64::consts::PI;

use log::warn;
use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgpt::{compute_cgpt, CgptTable};
use crate::conformal::{place_target, DiskPair, PlacedTarget};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Point, StarShape};
use crate::interaction::{InteractionOperator, InteractionSpectrum};

/// Gap-to-radius ratios `d/r1` regarded as the strong interaction regime.
pub const STRONG_REGIME: (f64, f64) = (0.5, 10.0);

/// Contrast `λ = (ε + ε_m) / (2(ε − ε_m))` of a particle with permittivity `ε` in a background `ε_m`.
pub fn contrast(eps: Complex64, eps_m: f64) -> Result<Complex64> {
    let den = 2.0 * (eps - eps_m);
    if den.norm() < f64::EPSILON * eps_m.abs().max(1.0) {
        return Err(Error::Numerical(format!("contrast diverges: permittivity {eps} matches the background")));
    }
    Ok((eps + eps_m) / den)
}

/// `k = (2λ + 1)/(2λ − 1)`, the permittivity ratio of a contrast.
pub fn contrast_k(lambda: f64) -> Result<f64> {
    if (lambda - 0.5).abs() < 1e-14 {
        return Err(Error::Pole { lambda, eigenvalue: 0.5 });
    }
    Ok((2.0 * lambda + 1.0) / (2.0 * lambda - 1.0))
}

/// Inverse of [`contrast_k`].
pub fn lambda_of_k(k: f64) -> Result<f64> {
    if (k - 1.0).abs() < 1e-14 {
        return Err(Error::Usage("k = 1 carries no contrast".into()));
    }
    Ok((k + 1.0) / (2.0 * (k - 1.0)))
}

/// Drude permittivity `ε(ω) = 1 − ω_p²/(ω(ω + iγ))` in a background `ε_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrudeModel {
    pub omega_p: f64,
    pub gamma: f64,
    pub eps_m: f64,
}

impl DrudeModel {
    pub fn new(omega_p: f64, gamma: f64, eps_m: f64) -> Result<Self> {
        if !(omega_p > 0.0) || !(gamma >= 0.0) || !(eps_m > 0.0) {
            return Err(Error::Usage(format!("invalid Drude parameters ω_p={omega_p}, γ={gamma}, ε_m={eps_m}")));
        }
        Ok(DrudeModel { omega_p, gamma, eps_m })
    }

    pub fn permittivity(&self, omega: f64) -> Result<Complex64> {
        if !(omega > 0.0) {
            return Err(Error::Usage(format!("frequency must be positive, got {omega}")));
        }
        Ok(1.0 - self.omega_p * self.omega_p / (omega * Complex64::new(omega, self.gamma)))
    }

    pub fn lambda_of_omega(&self, omega: f64) -> Result<Complex64> {
        contrast(self.permittivity(omega)?, self.eps_m)
    }
}

/// Spectral data needed to evaluate the pair polarization tensor at any sensor contrast.
#[derive(Clone, Debug)]
pub struct PairResponse {
    eigenvalues: Vec<f64>,
    /// `(ν_l, ψ_j)_H*` for `l = 1, 2`.
    nu_coupling: Vec<[f64; 2]>,
    /// `(ψ_j, x_m)` for `m = 1, 2`.
    x_coupling: Vec<[f64; 2]>,
    area: f64,
}

impl PairResponse {
    /// Couplings of the operator's eigenfunctions with `ν_l` and `x_m` on `∂D2`, evaluated on the
    /// image circle where `x∘Φ⁻¹` and the transported normal have closed-form Fourier series.
    pub fn new(op: &InteractionOperator, spectrum: &InteractionSpectrum, pair: &DiskPair) -> Self {
        let r = op.outer_radius();
        let a = pair.a;
        let n_tr = op.truncation();
        let mut nu_coupling = Vec::with_capacity(spectrum.values.len());
        let mut x_coupling = Vec::with_capacity(spectrum.values.len());
        for j in 0..spectrum.values.len() {
            let v = spectrum.vectors.column(j);
            let (mut c1, mut c2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
            for n in 1..=n_tr {
                let g = PI * a * r.powi(1 - n as i32);
                let (vc, vs) = (v[2 * (n - 1)], v[2 * (n - 1) + 1]);
                c1 += g * vc;
                c2 -= g * vs;
                d1 += 2.0 * g * vc;
                d2 -= 2.0 * g * vs;
            }
            nu_coupling.push([c1, c2]);
            x_coupling.push([d1, d2]);
        }
        PairResponse { eigenvalues: spectrum.values.clone(), nu_coupling, x_coupling, area: PI * pair.r2 * pair.r2 }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `M_lm = |D2| δ_lm/λ + Σ_j (ν_l,ψ_j)(ψ_j,x_m) [1/(λ − λ_j) − 1/λ]`: the spectral sum over the
    /// retained modes, with all remaining modes of the disk taken at eigenvalue 0.
    pub fn polarization(&self, lambda2: Complex64) -> Result<Matrix2<Complex64>> {
        if lambda2.norm() == 0.0 {
            return Err(Error::Pole { lambda: 0.0, eigenvalue: 0.0 });
        }
        if lambda2.im == 0.0 {
            if let Some(&e) = self.eigenvalues.iter().find(|&&e| (lambda2.re - e).abs() < 1e-12) {
                return Err(Error::Pole { lambda: lambda2.re, eigenvalue: e });
            }
        }
        let inv = 1.0 / lambda2;
        let mut m = Matrix2::from_diagonal_element(inv * self.area);
        for ((e, c), d) in self.eigenvalues.iter().zip(&self.nu_coupling).zip(&self.x_coupling) {
            let f = 1.0 / (lambda2 - *e) - inv;
            for l in 0..2 {
                for k in 0..2 {
                    m[(l, k)] += f * (c[l] * d[k]);
                }
            }
        }
        Ok(m)
    }
}

/// `Im(p · ê)` with `p = M(−∇u^i)` and `ê = −∇u^i/|∇u^i|`.
pub fn absorption_proxy(m: &Matrix2<Complex64>, grad: [f64; 2]) -> f64 {
    let norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let e = [-grad[0] / norm, -grad[1] / norm];
    let p = [m[(0, 0)] * -grad[0] + m[(0, 1)] * -grad[1], m[(1, 0)] * -grad[0] + m[(1, 1)] * -grad[1]];
    (p[0] * e[0] + p[1] * e[1]).im
}

/// Equispaced real grid `lo, lo + step, …, hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid { lo: -0.3, hi: 0.3, step: 1e-4 }
    }
}

impl ScanGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.hi > self.lo) {
            return Err(Error::Usage(format!("invalid scan grid [{}, {}] step {}", self.lo, self.hi, self.step)));
        }
        let n = ((self.hi - self.lo) / self.step).round() as usize + 1;
        Ok((0..n).map(|i| self.lo + self.step * i as f64).collect())
    }
}

/// `‖M(x + i·im)‖_F` sampled on a real grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub lambda: Vec<f64>,
    pub response: Vec<f64>,
    pub im: f64,
}

pub fn scan_response(resp: &PairResponse, grid: &ScanGrid, im: f64) -> Result<ResponseCurve> {
    if !(im > 0.0) {
        return Err(Error::Usage(format!("scan needs a positive imaginary part, got {im}")));
    }
    let lambda = grid.points()?;
    let response =
        lambda.par_iter().map(|&x| Ok(resp.polarization(Complex64::new(x, im))?.norm())).collect::<Result<Vec<f64>>>()?;
    Ok(ResponseCurve { lambda, response, im })
}

/// Interior local maxima of the curve in grid order, each refined by a three-point parabola.
pub fn local_maxima(curve: &ResponseCurve) -> Vec<f64> {
    let y = &curve.response;
    let x = &curve.lambda;
    let mut peaks = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let den = y[i - 1] - 2.0 * y[i] + y[i + 1];
            let shift = if den < 0.0 { 0.5 * (y[i - 1] - y[i + 1]) / den } else { 0.0 };
            let h = x[i + 1] - x[i];
            peaks.push(x[i] + shift.clamp(-0.5, 0.5) * h);
        }
    }
    peaks
}

/// Positions of the `count` local maxima farthest from zero, ordered by decreasing `|·|`.
pub fn find_peaks(curve: &ResponseCurve, count: usize) -> Result<Vec<f64>> {
    let mut peaks = local_maxima(curve);
    if peaks.len() < count {
        return Err(Error::InsufficientPeaks { found: peaks.len(), needed: count });
    }
    peaks.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    peaks.truncate(count);
    Ok(peaks)
}

/// How measured peak positions are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureMode {
    /// Leading eigenvalues of the interaction operator (noiseless ideal peak positions).
    #[default]
    Eigenvalues,
    /// Local maxima of the scanned response curve.
    Peaks,
}

/// How a rotation of the target enters the forward model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationModel {
    /// Rotate the image `D̃1` about the annulus center (exact rotation law of its tensors).
    #[default]
    Transformed,
    /// Rotate `D1` about the center of `B1` and transform the rotated target.
    Physical,
}

/// Numerical and physical parameters of a forward simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardOptions {
    pub r2: f64,
    pub d: f64,
    pub lambda1: f64,
    pub nodes: usize,
    pub truncation: usize,
    pub im_lambda2: f64,
    pub scan: ScanGrid,
    pub mode: MeasureMode,
    pub rotation: RotationModel,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            r2: 1.0,
            d: 5e-3,
            lambda1: 1.0,
            nodes: 128,
            truncation: crate::interaction::DEFAULT_TRUNCATION,
            im_lambda2: 3e-3,
            scan: ScanGrid::default(),
            mode: MeasureMode::Eigenvalues,
            rotation: RotationModel::Transformed,
        }
    }
}

/// A target placed next to the sensor disk, with its image tensors cached.
#[derive(Clone, Debug)]
pub struct Scene {
    pub placed: PlacedTarget,
    pub options: ForwardOptions,
    /// Tensors of `D̃1` about the annulus center, order `truncation`.
    pub table: CgptTable,
}

impl Scene {
    pub fn new(target: &StarShape, options: ForwardOptions) -> Result<Self> {
        if options.nodes < 16 || options.truncation == 0 {
            return Err(Error::Usage("nodes must be >= 16 and truncation >= 1".into()));
        }
        let placed = place_target(target, options.r2, options.d)?;
        let ratio = placed.pair.gap_ratio();
        if ratio < STRONG_REGIME.0 || ratio > STRONG_REGIME.1 {
            warn!("gap ratio d/r1 = {ratio:.3} lies outside the strong regime [{}, {}]", STRONG_REGIME.0, STRONG_REGIME.1);
        }
        let table = image_table(&placed, &options, 0.0)?;
        Ok(Scene { placed, options, table })
    }

    pub fn pair(&self) -> &DiskPair {
        &self.placed.pair
    }

    pub fn radii(&self) -> (f64, f64) {
        self.placed.pair.transformed_radii()
    }

    /// Physical target rotated by `theta` about the center of `B1`.
    pub fn rotated_target(&self, theta: f64) -> StarShape {
        self.placed.shape.rotate_about(theta, self.placed.pair.c1())
    }

    /// Image `D̃1` of the target rotated by `theta` under the configured rotation model.
    pub fn image_curve(&self, theta: f64) -> Result<BoundaryCurve> {
        let map = self.placed.pair.map();
        match self.options.rotation {
            RotationModel::Physical => map.transform_curve(&self.rotated_target(theta).sample(self.options.nodes)?),
            RotationModel::Transformed => {
                let base = map.transform_curve(&self.placed.shape.sample(self.options.nodes)?)?;
                let rot = crate::geometry::rotation_matrix(theta);
                BoundaryCurve::from_samples(base.nodes().iter().map(|p| rot * p).collect())
            }
        }
    }

    /// Tensors of the image of the target rotated by `theta`.
    pub fn table_at(&self, theta: f64) -> Result<CgptTable> {
        match self.options.rotation {
            RotationModel::Transformed => Ok(self.table.rotated(theta)),
            RotationModel::Physical => image_table(&self.placed, &self.options, theta),
        }
    }

    pub fn operator_at(&self, theta: f64) -> Result<InteractionOperator> {
        InteractionOperator::assemble(&self.table_at(theta)?, self.radii().1, self.options.truncation)
    }

    pub fn response_at(&self, theta: f64) -> Result<PairResponse> {
        let op = self.operator_at(theta)?;
        let spec = op.eigenpairs(2 * op.truncation())?;
        Ok(PairResponse::new(&op, &spec, self.pair()))
    }

    /// The two measured peak positions at rotation `theta`.
    pub fn peaks_at(&self, theta: f64) -> Result<(f64, f64)> {
        match self.options.mode {
            MeasureMode::Eigenvalues => {
                let v = self.operator_at(theta)?.eigenpairs(2)?.values;
                Ok((v[0], v[1]))
            }
            MeasureMode::Peaks => {
                let curve = scan_response(&self.response_at(theta)?, &self.options.scan, self.options.im_lambda2)?;
                let p = find_peaks(&curve, 2)?;
                Ok((p[0], p[1]))
            }
        }
    }
}

fn image_table(placed: &PlacedTarget, options: &ForwardOptions, theta: f64) -> Result<CgptTable> {
    let shape = placed.shape.rotate_about(theta, placed.pair.c1());
    let image = placed.pair.map().transform_curve(&shape.sample(options.nodes)?)?;
    compute_cgpt(&image, options.lambda1, options.truncation, Point::zeros())
}

/// Peak positions `(P1, P2)` recorded at each rotation angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSet {
    pub angles: Vec<f64>,
    #[serde(rename = "P1")]
    pub p1: Vec<f64>,
    #[serde(rename = "P2")]
    pub p2: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// `θ_i = 2π(i − 1)/count`.
pub fn default_angles(count: usize) -> Vec<f64> {
    (0..count).map(|i| 2.0 * PI * i as f64 / count as f64).collect()
}

/// Peak pairs for every angle, optionally perturbed by seeded multiplicative Gaussian noise.
pub fn simulate_measurements(scene: &Scene, angles: &[f64], noise: f64, seed: u64) -> Result<MeasurementSet> {
    if !(noise >= 0.0) {
        return Err(Error::Usage(format!("noise level must be non-negative, got {noise}")));
    }
    let clean = angles.par_iter().map(|&t| scene.peaks_at(t)).collect::<Result<Vec<_>>>()?;
    let (mut p1, mut p2): (Vec<f64>, Vec<f64>) = clean.into_iter().unzip();
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).map_err(|e| Error::Usage(e.to_string()))?;
        for v in p1.iter_mut().chain(p2.iter_mut()) {
            *v *= 1.0 + normal.sample(&mut rng);
        }
    }
    Ok(MeasurementSet { angles: angles.to_vec(), p1, p2, noise, seed })
}
