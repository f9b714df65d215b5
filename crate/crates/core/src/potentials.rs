//! Nyström discretizations of the Laplace single-layer potential, the Neumann–Poincaré
//! operator and its adjoint, the H* inner product, resolvents and NP spectra.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Point};

/// Distance below which a contrast is treated as sitting on the NP spectrum.
pub const TOL_SPEC: f64 = 1e-8;

const INV_2PI: f64 = 0.5 / PI;

/// Kress weights `R_d` for the periodic log-split quadrature on `N = 2n` points,
/// indexed by the node offset `d = i − j mod N`.
fn kress_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes / 2;
    let nf = n as f64;
    (0..n_nodes)
        .map(|d| {
            let t = PI * d as f64 / nf;
            let mut s = 0.0;
            for m in 1..n {
                s += (m as f64 * t).cos() / m as f64;
            }
            -2.0 * PI / nf * s - PI / (nf * nf) * (nf * t).cos()
        })
        .collect()
}

/// Matrix of `φ ↦ S[φ]|∂D` with `S[φ](x) = (1/2π)∫ log|x−y| φ(y) dσ(y)`.
pub fn single_layer(curve: &BoundaryCurve) -> DMatrix<f64> {
    let n = curve.len();
    let r = kress_weights(n);
    let h = curve.step();
    let x = curve.nodes();
    let sp = curve.speed();
    DMatrix::from_fn(n, n, |i, j| {
        let d = (i + n - j) % n;
        let smooth = if i == j {
            sp[i].ln()
        } else {
            let dt = h * (i as f64 - j as f64);
            (x[i] - x[j]).norm().ln() - 0.5 * (4.0 * (0.5 * dt).sin().powi(2)).ln()
        };
        INV_2PI * (0.5 * r[d] + h * smooth) * sp[j]
    })
}

/// Matrix of the NP adjoint `K*[φ](x) = (1/2π)∫ (x−y)·ν(x)/|x−y|² φ(y) dσ(y)`.
pub fn np_star(curve: &BoundaryCurve) -> DMatrix<f64> {
    let n = curve.len();
    let x = curve.nodes();
    let nu = curve.normals();
    let w = curve.weights();
    let kappa = curve.curvature();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            kappa[i] * w[i] * 0.5 * INV_2PI
        } else {
            let r = x[i] - x[j];
            INV_2PI * r.dot(&nu[i]) / r.norm_squared() * w[j]
        }
    })
}

/// Matrix of the NP operator `K[φ](x) = (1/2π)∫ (y−x)·ν(y)/|x−y|² φ(y) dσ(y)`.
pub fn np(curve: &BoundaryCurve) -> DMatrix<f64> {
    let n = curve.len();
    let x = curve.nodes();
    let nu = curve.normals();
    let w = curve.weights();
    let kappa = curve.curvature();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            kappa[i] * w[i] * 0.5 * INV_2PI
        } else {
            let r = x[j] - x[i];
            INV_2PI * r.dot(&nu[j]) / r.norm_squared() * w[j]
        }
    })
}

/// `S[φ](p)` at a point off the curve (trapezoidal rule).
pub fn eval_single_layer(curve: &BoundaryCurve, density: &[f64], p: Point) -> f64 {
    curve.nodes().iter().zip(curve.weights()).zip(density).map(|((y, w), f)| (p - y).norm().ln() * f * w).sum::<f64>() * INV_2PI
}

/// `∇S[φ](p)` at a point off the curve.
pub fn eval_single_layer_grad(curve: &BoundaryCurve, density: &[f64], p: Point) -> Point {
    curve
        .nodes()
        .iter()
        .zip(curve.weights())
        .zip(density)
        .map(|((y, w), f)| {
            let r = p - y;
            r / r.norm_squared() * (f * w)
        })
        .sum::<Point>()
        * INV_2PI
}

/// Double-layer potential `D[φ](p) = (1/2π)∫ (y−p)·ν(y)/|p−y|² φ(y) dσ(y)` off the curve.
pub fn eval_double_layer(curve: &BoundaryCurve, density: &[f64], p: Point) -> f64 {
    curve
        .nodes()
        .iter()
        .zip(curve.normals())
        .zip(curve.weights())
        .zip(density)
        .map(|(((y, nu), w), f)| {
            let r = y - p;
            r.dot(nu) / r.norm_squared() * f * w
        })
        .sum::<f64>()
        * INV_2PI
}

/// Boundary integral operators on one curve, assembled once and shared.
#[derive(Debug)]
pub struct LayerPotentials {
    curve: BoundaryCurve,
    s: DMatrix<f64>,
    kstar: DMatrix<f64>,
    eigenvalues: OnceLock<Vec<f64>>,
}

impl Clone for LayerPotentials {
    fn clone(&self) -> Self {
        LayerPotentials { curve: self.curve.clone(), s: self.s.clone(), kstar: self.kstar.clone(), eigenvalues: OnceLock::new() }
    }
}

/// Eigenpairs of `K*` on mean-zero densities, ordered by decreasing `|λ|`.
#[derive(Clone, Debug)]
pub struct NpSpectrum {
    pub values: Vec<f64>,
    /// Column `j` holds the nodal values of the H*-normalized eigenfunction `φ_j`.
    pub densities: DMatrix<f64>,
}

impl LayerPotentials {
    pub fn new(curve: &BoundaryCurve) -> Self {
        LayerPotentials { curve: curve.clone(), s: single_layer(curve), kstar: np_star(curve), eigenvalues: OnceLock::new() }
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn single_layer(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn np_star(&self) -> &DMatrix<f64> {
        &self.kstar
    }

    /// Gram matrix `G` of the H* form: `(φ, ψ)_H* = φᵀ G ψ = −∫ φ S[ψ] dσ`.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = DVector::from_column_slice(self.curve.weights());
        let mut g = -DMatrix::from_diagonal(&w) * &self.s;
        symmetrize(&mut g);
        g
    }

    pub fn hstar_inner(&self, phi: &[f64], psi: &[f64]) -> Result<f64> {
        let n = self.curve.len();
        if phi.len() != n || psi.len() != n {
            return Err(Error::Usage(format!(
                "density lengths ({}, {}) do not match the curve ({n} nodes)",
                phi.len(),
                psi.len()
            )));
        }
        let spsi = &self.s * DVector::from_column_slice(psi);
        Ok(-phi.iter().zip(self.curve.weights()).zip(spsi.iter()).map(|((a, w), b)| a * w * b).sum::<f64>())
    }

    /// Orthogonal complement of constants in the trapezoidal `L²` pairing:
    /// columns `e_j − w_j/|∂D|` for `j < N − 1`.
    fn mean_zero_basis(&self) -> DMatrix<f64> {
        let n = self.curve.len();
        let w = self.curve.weights();
        let total: f64 = w.iter().sum();
        DMatrix::from_fn(n, n - 1, |i, j| if i == j { 1.0 } else { 0.0 } - w[j] / total)
    }

    /// Full NP spectrum on mean-zero densities.
    pub fn spectrum(&self) -> Result<NpSpectrum> {
        self.spectrum_truncated(self.curve.len() - 1)
    }

    /// Leading `count` eigenpairs of `K*` on mean-zero densities.
    pub fn spectrum_truncated(&self, count: usize) -> Result<NpSpectrum> {
        let q = self.mean_zero_basis();
        let g = self.gram();
        let gq = &g * &q;
        let mut b = q.transpose() * &gq;
        symmetrize(&mut b);
        let mut a = gq.transpose() * &self.kstar * &q;
        symmetrize(&mut a);
        let (vals, vecs) = generalized_symmetric_eigen(&a, &b)?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
        let count = count.min(order.len());
        let values = order[..count].iter().map(|&i| vals[i]).collect();
        let mut densities = DMatrix::zeros(self.curve.len(), count);
        for (c, &i) in order[..count].iter().enumerate() {
            densities.set_column(c, &(&q * vecs.column(i)));
        }
        Ok(NpSpectrum { values, densities })
    }

    fn eigenvalues(&self) -> Result<&[f64]> {
        if let Some(v) = self.eigenvalues.get() {
            return Ok(v);
        }
        let mut vals = self.spectrum()?.values;
        vals.push(0.5);
        Ok(self.eigenvalues.get_or_init(|| vals))
    }

    /// Rejects contrasts that sit on the discrete spectrum of `K*` (mean-zero part and `1/2`).
    pub fn check_contrast(&self, lambda: Complex64) -> Result<()> {
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::Usage(format!("contrast {lambda} is not finite")));
        }
        if lambda.im.abs() >= TOL_SPEC || lambda.re.abs() > 0.5 + TOL_SPEC {
            return Ok(());
        }
        let (nearest, distance) = self
            .eigenvalues()?
            .iter()
            .map(|&e| (e, (lambda - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty spectrum");
        if distance < TOL_SPEC {
            return Err(Error::ResonanceProximity { lambda: lambda.re, nearest, distance });
        }
        Ok(())
    }

    /// LU factorization of `λI − K*` for real `λ`.
    pub fn resolvent(&self, lambda: f64) -> Result<Resolvent> {
        self.check_contrast(Complex64::new(lambda, 0.0))?;
        let n = self.curve.len();
        let m = DMatrix::identity(n, n) * lambda - &self.kstar;
        Ok(Resolvent { lu: m.lu(), lambda })
    }

    /// Solves `(λI − K*)φ = rhs` for complex `λ`.
    pub fn resolvent_apply(&self, lambda: Complex64, rhs: &[f64]) -> Result<DVector<Complex64>> {
        self.check_contrast(lambda)?;
        let n = self.curve.len();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            d - self.kstar[(i, j)]
        });
        let b = DVector::from_iterator(n, rhs.iter().map(|&v| Complex64::new(v, 0.0)));
        let x = m.lu().solve(&b).ok_or_else(|| Error::Numerical("singular resolvent system".into()))?;
        Ok(x)
    }
}

/// Factored `λI − K*` with real contrast.
#[derive(Clone, Debug)]
pub struct Resolvent {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lambda: f64,
}

impl Resolvent {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(rhs).ok_or_else(|| Error::Numerical(format!("singular resolvent at λ = {}", self.lambda)))
    }

    /// Solves for every column of `rhs`.
    pub fn solve_many(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu.solve(rhs).ok_or_else(|| Error::Numerical(format!("singular resolvent at λ = {}", self.lambda)))
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Solves `A x = λ B x` for symmetric `A` and symmetric positive definite `B`.
/// Eigenvectors are `B`-orthonormal.
pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::Numerical("H* Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(a).ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c =
        l.solve_lower_triangular(&linv_a.transpose()).ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    symmetrize(&mut c);
    let eig = c.symmetric_eigen();
    let vecs = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok((eig.eigenvalues.iter().copied().collect(), vecs))
}
