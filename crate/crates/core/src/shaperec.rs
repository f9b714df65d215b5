//! Shape reconstruction from CGPTs: transmission traces, analytic shape gradient and descent.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cgpt::{harmonics, CgptTable};
use crate::conformal::MobiusMap;
use crate::error::{Error, Result};
use crate::forward::contrast_k;
use crate::geometry::{equivalent_ellipse, BoundaryCurve, Point, StarShape, DEFAULT_SHAPE_ORDER};
use crate::potentials::{np, LayerPotentials};

/// Interior traces of `u = H + S[(λI − K*)⁻¹ ∂H/∂ν]` and `v = F + D[(λI − K)⁻¹ F]` for one harmonic
/// `Re P_m` (`channel = 0`) or `Im P_m` (`channel = 1`).
#[derive(Clone, Debug)]
pub struct TransmissionTraces {
    pub order: usize,
    pub channel: usize,
    pub u_minus: Vec<f64>,
    pub du_dn_minus: Vec<f64>,
    pub du_dt_minus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub dv_dn_minus: Vec<f64>,
    pub dv_dt_minus: Vec<f64>,
    /// Densities of the two representations.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Traces for every harmonic of order `1..=order` about `origin`, indexed `2(m−1) + channel`.
pub fn all_traces(pots: &LayerPotentials, k: f64, order: usize, origin: Point) -> Result<Vec<TransmissionTraces>> {
    if !(k > 0.0) || (k - 1.0).abs() < 1e-14 || !k.is_finite() {
        return Err(Error::Usage(format!("transmission traces need k > 0, k != 1, got {k}")));
    }
    let lambda = (k + 1.0) / (2.0 * (k - 1.0));
    let curve = pots.curve();
    let n = curve.len();
    let h = harmonics(curve, order, origin);
    let tangential = harmonic_tangential(curve, order, origin);

    let phi = pots.resolvent(lambda)?.solve_many(&h.normal_derivatives)?;
    let kmat = np(curve);
    let dl = DMatrix::identity(n, n) * lambda - &kmat;
    let psi =
        dl.lu().solve(&h.values).ok_or_else(|| Error::Numerical(format!("singular double-layer system at λ = {lambda}")))?;
    let s_phi = pots.single_layer() * &phi;
    let ks_phi = pots.np_star() * &phi;
    let k_psi = &kmat * &psi;

    let mut out = Vec::with_capacity(2 * order);
    for col in 0..2 * order {
        let hv = h.values.column(col);
        let hn = h.normal_derivatives.column(col);
        let ht = tangential.column(col);
        let ph = phi.column(col);
        let ps = psi.column(col);
        let u: Vec<f64> = (0..n).map(|j| hv[j] + s_phi[(j, col)]).collect();
        let du_dn: Vec<f64> = (0..n).map(|j| hn[j] + ks_phi[(j, col)] - 0.5 * ph[j]).collect();
        let s_trace: Vec<f64> = (0..n).map(|j| s_phi[(j, col)]).collect();
        let du_dt: Vec<f64> = curve.tangential_derivative(&s_trace).iter().zip(ht.iter()).map(|(a, b)| a + b).collect();
        let d_trace: Vec<f64> = (0..n).map(|j| 0.5 * ps[j] + k_psi[(j, col)]).collect();
        let v: Vec<f64> = (0..n).map(|j| hv[j] + d_trace[j]).collect();
        let dv_dt: Vec<f64> = curve.tangential_derivative(&d_trace).iter().zip(ht.iter()).map(|(a, b)| a + b).collect();
        // ∂ν D[ψ] = ∂T S[∂T ψ]
        let ps_vec: Vec<f64> = ps.iter().copied().collect();
        let dpsi = DVector::from_vec(curve.tangential_derivative(&ps_vec));
        let s_dpsi: Vec<f64> = (pots.single_layer() * dpsi).iter().copied().collect();
        let dv_dn: Vec<f64> = curve.tangential_derivative(&s_dpsi).iter().zip(hn.iter()).map(|(a, b)| a + b).collect();
        out.push(TransmissionTraces {
            order: col / 2 + 1,
            channel: col % 2,
            u_minus: u,
            du_dn_minus: du_dn,
            du_dt_minus: du_dt,
            v_minus: v,
            dv_dn_minus: dv_dn,
            dv_dt_minus: dv_dt,
            phi: ph.iter().copied().collect(),
            psi: ps_vec,
        });
    }
    Ok(out)
}

/// Traces for the single harmonic `(order, channel)`.
pub fn transmission_traces(
    curve: &BoundaryCurve,
    k: f64,
    order: usize,
    channel: usize,
    origin: Point,
) -> Result<TransmissionTraces> {
    if order == 0 || channel > 1 {
        return Err(Error::Usage(format!("invalid harmonic (order {order}, channel {channel})")));
    }
    let mut all = all_traces(&LayerPotentials::new(curve), k, order, origin)?;
    Ok(all.swap_remove(2 * (order - 1) + channel))
}

fn harmonic_tangential(curve: &BoundaryCurve, order: usize, origin: Point) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(curve.len(), 2 * order);
    for (j, (x, t)) in curve.nodes().iter().zip(curve.tangents()).enumerate() {
        let z = Complex64::new(x.x - origin.x, x.y - origin.y);
        let mut zm1 = Complex64::new(1.0, 0.0);
        for m in 1..=order {
            let dp = zm1 * m as f64;
            out[(j, 2 * (m - 1))] = dp.re * t.x - dp.im * t.y;
            out[(j, 2 * (m - 1) + 1)] = dp.im * t.x + dp.re * t.y;
            zm1 *= z;
        }
    }
    out
}

/// Tensor order needed to cover all pairs with `m + n ≤ k_sum`.
fn needed_order(k_sum: usize) -> Result<usize> {
    if k_sum < 2 {
        return Err(Error::Usage(format!("matching order must be at least 2, got {k_sum}")));
    }
    Ok(k_sum - 1)
}

fn check_target(target: &CgptTable, k_sum: usize) -> Result<usize> {
    let order = needed_order(k_sum)?;
    if target.order() < order {
        return Err(Error::OrderMismatch { needed: order, found: target.order() });
    }
    Ok(order)
}

/// `½ Σ_{H,F} Σ_{m+n≤K} |M_mn(B) − M_mn(target)|²`.
pub fn objective(shape: &StarShape, target: &CgptTable, k_sum: usize, nodes: usize) -> Result<f64> {
    let order = check_target(target, k_sum)?;
    let curve = shape.sample(nodes)?;
    let table = crate::cgpt::compute_cgpt(&curve, target.lambda(), order, target.origin())?;
    Ok(misfit(&table, target, k_sum))
}

fn misfit(table: &CgptTable, target: &CgptTable, k_sum: usize) -> f64 {
    let mut j = 0.0;
    for m in 1..k_sum {
        for n in 1..=k_sum - m {
            j += (table.block(m, n) - target.block(m, n)).norm_squared();
        }
    }
    0.5 * j
}

/// Loss and shape gradient of the matching functional at `shape`.
#[derive(Clone, Debug)]
pub struct ShapeGradient {
    pub loss: f64,
    /// Pointwise gradient `g(x_j)` at the boundary nodes.
    pub pointwise: Vec<f64>,
    /// Derivative of the loss with respect to [`StarShape::coefficients`].
    pub coefficients: Vec<f64>,
    /// `∂M^{HF}_mn/∂c_i` for every matched entry (rows) and coefficient (columns).
    pub jacobian: DMatrix<f64>,
    /// Matched entry misfits `M(B) − M(target)`, row-aligned with `jacobian`.
    pub residual: DVector<f64>,
}

/// Matched entries `(m, n, h, f)` with `m + n ≤ K`.
fn matched_entries(k_sum: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for m in 1..k_sum {
        for n in 1..=k_sum - m {
            for h in 0..2 {
                for f in 0..2 {
                    out.push((m, n, h, f));
                }
            }
        }
    }
    out
}

/// `g = Σ δ^{HF}_mn (k−1)[∂νu ∂νv + (1/k) ∂Tu ∂Tv]` on `∂B`, projected onto the radial Fourier basis.
pub fn shape_gradient(shape: &StarShape, target: &CgptTable, k_sum: usize, nodes: usize) -> Result<ShapeGradient> {
    let order = check_target(target, k_sum)?;
    let k = contrast_k(target.lambda())?;
    let curve = shape.sample(nodes)?;
    let pots = LayerPotentials::new(&curve);
    let table = crate::cgpt::compute_cgpt_with(&pots, target.lambda(), order, target.origin())?;
    let traces = all_traces(&pots, k, order, target.origin())?;
    let n = curve.len();
    let entries = matched_entries(k_sum);
    let ncoef = shape.coefficients().len();
    // radial displacement weights: h dσ = basis · r dt
    let mut radial = DMatrix::zeros(n, ncoef);
    for j in 0..n {
        let t = 2.0 * PI * j as f64 / n as f64;
        let phi = t - shape.rotation;
        let r = shape.radius_derivatives(phi).0;
        for i in 0..ncoef {
            radial[(j, i)] = StarShape::coefficient_basis(i, phi) * r * 2.0 * PI / n as f64;
        }
    }
    let mut kernels = DMatrix::zeros(entries.len(), n);
    let mut residual = DVector::zeros(entries.len());
    for (row, &(m, nn, h, f)) in entries.iter().enumerate() {
        let u = &traces[2 * (m - 1) + h];
        let v = &traces[2 * (nn - 1) + f];
        for j in 0..n {
            kernels[(row, j)] = (k - 1.0) * (u.du_dn_minus[j] * v.dv_dn_minus[j] + u.du_dt_minus[j] * v.dv_dt_minus[j] / k);
        }
        residual[row] = table.block(m, nn)[(h, f)] - target.block(m, nn)[(h, f)];
    }
    let pointwise: Vec<f64> = (kernels.transpose() * &residual).iter().copied().collect();
    let jacobian = &kernels * &radial;
    let coefficients = (jacobian.transpose() * &residual).iter().copied().collect();
    Ok(ShapeGradient { loss: 0.5 * residual.norm_squared(), pointwise, coefficients, jacobian, residual })
}

/// One accepted descent iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeIterate {
    pub shape: StarShape,
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub step: f64,
}

/// Search direction used by [`reconstruct`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descent {
    /// Steepest descent on the radial coefficients.
    #[default]
    Gradient,
    /// Levenberg-damped Gauss–Newton direction built from the same entry sensitivities.
    GaussNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructOptions {
    pub iterations: usize,
    pub nodes: usize,
    pub shape_order: usize,
    pub descent: Descent,
    /// Match orders 2 then `K` when set.
    pub multi_resolution: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            iterations: 30,
            nodes: 128,
            shape_order: DEFAULT_SHAPE_ORDER,
            descent: Descent::Gradient,
            multi_resolution: false,
        }
    }
}

const ARMIJO_C: f64 = 1e-4;
const MAX_REJECTIONS: usize = 20;
/// Largest boundary displacement of the first trial step, relative to `a0`.
const FIRST_MOVE: f64 = 0.02;

/// Initial guess: the ellipse whose first-order tensor equals the target's.
pub fn default_init(target: &CgptTable, shape_order: usize) -> Result<StarShape> {
    let shape = equivalent_ellipse(&target.first_order(), target.lambda(), shape_order)?;
    Ok(shape.translate(target.origin()))
}

/// Descent on the matching functional. Lengths are rescaled by `a0` of `init` internally so that
/// all tensor orders carry comparable weight; the history is reported in the original units with
/// losses of the rescaled problem.
pub fn reconstruct(
    target: &CgptTable,
    init: &StarShape,
    k_sum: usize,
    options: &ReconstructOptions,
) -> Result<Vec<ShapeIterate>> {
    check_target(target, k_sum)?;
    init.validate()?;
    let s = init.a0;
    let origin = target.origin();
    let to_unit = |sh: &StarShape| sh.translate(-origin).scale(1.0 / s);
    let from_unit = |sh: &StarShape| sh.scale(s).translate(origin);
    let unit_target = target.clone().with_origin(Point::zeros()).scaled(1.0 / s);
    let mut shape = to_unit(&init.with_order(options.shape_order));
    let stages: Vec<usize> = if options.multi_resolution && k_sum > 2 { vec![2, k_sum] } else { vec![k_sum] };
    let mut history = Vec::new();
    let mut remaining = options.iterations;
    for (si, &stage_k) in stages.iter().enumerate() {
        let budget = if si + 1 == stages.len() { remaining } else { options.iterations / 2 };
        let mut grad = shape_gradient(&shape, &unit_target, stage_k, options.nodes)?;
        let mut step = 0.0;
        let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
        if history.is_empty() {
            history.push(ShapeIterate { shape: from_unit(&shape), loss: grad.loss, gradient: grad.coefficients.clone(), step });
        }
        for _ in 0..budget {
            if grad.loss == 0.0 || norm(&grad.coefficients) < 1e-14 {
                break;
            }
            let dir = direction(&grad, options.descent)?;
            let slope: f64 = dir.iter().zip(&grad.coefficients).map(|(d, g)| d * g).sum();
            if !(slope < 0.0) {
                break;
            }
            if step == 0.0 {
                step = FIRST_MOVE * shape.a0 / max_displacement(&dir);
                if options.descent == Descent::GaussNewton {
                    step = step.min(1.0);
                }
            } else if options.descent == Descent::GaussNewton {
                step = (2.0 * step).min(1.0);
            } else {
                step = match &previous {
                    Some((x, g)) => barzilai_borwein(x, g, &shape.coefficients(), &grad.coefficients).unwrap_or(2.0 * step),
                    None => 2.0 * step,
                };
            }
            let coeffs = shape.coefficients();
            previous = Some((coeffs.clone(), grad.coefficients.clone()));
            let mut rejected = 0;
            loop {
                let trial: Vec<f64> = coeffs.iter().zip(&dir).map(|(c, d)| c + step * d).collect();
                let candidate = shape.with_coefficients(&trial);
                let accepted = candidate.validate().is_ok() && {
                    let loss = objective(&candidate, &unit_target, stage_k, options.nodes)?;
                    loss <= grad.loss + ARMIJO_C * step * slope
                };
                if accepted {
                    shape = candidate;
                    break;
                }
                rejected += 1;
                if rejected >= MAX_REJECTIONS {
                    return Err(Error::Stall(rejected));
                }
                step *= 0.5;
            }
            grad = shape_gradient(&shape, &unit_target, stage_k, options.nodes)?;
            history.push(ShapeIterate { shape: from_unit(&shape), loss: grad.loss, gradient: grad.coefficients.clone(), step });
            remaining = remaining.saturating_sub(1);
        }
    }
    Ok(history)
}

/// Trial step `sᵀs / sᵀy` from the last accepted move, when the curvature along it is positive.
fn barzilai_borwein(x0: &[f64], g0: &[f64], x1: &[f64], g1: &[f64]) -> Option<f64> {
    let (mut ss, mut sy) = (0.0, 0.0);
    for i in 0..x0.len() {
        let s = x1[i] - x0[i];
        ss += s * s;
        sy += s * (g1[i] - g0[i]);
    }
    (sy > 0.0 && ss > 0.0).then(|| ss / sy)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn direction(grad: &ShapeGradient, descent: Descent) -> Result<Vec<f64>> {
    match descent {
        Descent::Gradient => Ok(grad.coefficients.iter().map(|g| -g).collect()),
        Descent::GaussNewton => {
            let j = &grad.jacobian;
            let mut a = j.transpose() * j;
            let mu = 1e-8 * a.diagonal().max().max(f64::MIN_POSITIVE);
            for i in 0..a.nrows() {
                a[(i, i)] += mu;
            }
            let g = DVector::from_column_slice(&grad.coefficients);
            let d =
                a.cholesky().ok_or_else(|| Error::Numerical("Gauss–Newton system is not positive definite".into()))?.solve(&(-g));
            Ok(d.iter().copied().collect())
        }
    }
}

/// Largest radial displacement produced by a unit step along `dir`.
fn max_displacement(dir: &[f64]) -> f64 {
    let m = 256;
    (0..m)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / m as f64;
            dir.iter().enumerate().map(|(i, d)| d * StarShape::coefficient_basis(i, phi)).sum::<f64>().abs()
        })
        .fold(f64::MIN_POSITIVE, f64::max)
}

/// Physical boundary `Φ⁻¹(B̃)`.
pub fn pull_back(map: &MobiusMap, curve: &BoundaryCurve) -> Result<BoundaryCurve> {
    map.pull_back(curve)
}
