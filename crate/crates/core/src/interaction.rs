//! Interaction operator of the target and the plasmonic disk, in the annulus picture
//! (truncated Fourier block matrix) and directly in the physical plane.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::cgpt::CgptTable;
use crate::conformal::DiskPair;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Point};
use crate::potentials::{self, generalized_symmetric_eigen, LayerPotentials};

/// Default number of retained Fourier harmonics.
pub const DEFAULT_TRUNCATION: usize = 8;

/// Truncated matrix of the annulus operator acting on coefficients of `cos nθ, sin nθ`
/// (`n = 1..n_tr`) on the circle of radius `r̃2`. Index `2(n−1) + h`, `h = 0` cos, `h = 1` sin.
#[derive(Clone, Debug)]
pub struct InteractionOperator {
    n_tr: usize,
    r2t: f64,
    matrix: DMatrix<f64>,
    weights: Vec<f64>,
}

/// Eigenvalues ordered by decreasing `|λ|` with `W`-orthonormal coefficient vectors.
#[derive(Clone, Debug)]
pub struct InteractionSpectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// `w_n = π r̃2²/(2n)`, the H* norm of `cos nθ` on the circle.
pub fn hstar_weight(n: usize, r2t: f64) -> f64 {
    PI * r2t * r2t / (2.0 * n as f64)
}

impl InteractionOperator {
    /// `Ã[(m,F),(n,H)] = −r̃2^{−(n+m)}/(4πn) · M^{HF}_{nm}` for a table computed about the annulus center.
    pub fn assemble(table: &CgptTable, r2t: f64, n_tr: usize) -> Result<Self> {
        if n_tr == 0 {
            return Err(Error::Usage("truncation order must be at least 1".into()));
        }
        if table.order() < n_tr {
            return Err(Error::OrderMismatch { needed: n_tr, found: table.order() });
        }
        if !(r2t > 1.0) {
            return Err(Error::Geometry(format!("outer radius {r2t} must exceed 1")));
        }
        let dim = 2 * n_tr;
        let mut matrix = DMatrix::zeros(dim, dim);
        for n in 1..=n_tr {
            for m in 1..=n_tr {
                let b = table.block(n, m);
                let c = -r2t.powi(-((n + m) as i32)) / (4.0 * PI * n as f64);
                for h in 0..2 {
                    for f in 0..2 {
                        matrix[(2 * (m - 1) + f, 2 * (n - 1) + h)] = c * b[(h, f)];
                    }
                }
            }
        }
        let weights = (1..=n_tr).flat_map(|n| [hstar_weight(n, r2t); 2]).collect();
        Ok(InteractionOperator { n_tr, r2t, matrix, weights })
    }

    pub fn truncation(&self) -> usize {
        self.n_tr
    }

    pub fn outer_radius(&self) -> f64 {
        self.r2t
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `2×2` block mapping harmonic `n` (columns: cos, sin) to harmonic `m` (rows: cos, sin).
    pub fn block(&self, m: usize, n: usize) -> Matrix2<f64> {
        let (r, c) = (2 * (m - 1), 2 * (n - 1));
        Matrix2::new(self.matrix[(r, c)], self.matrix[(r, c + 1)], self.matrix[(r + 1, c)], self.matrix[(r + 1, c + 1)])
    }

    /// `‖WÃ − (WÃ)ᵀ‖ / ‖WÃ‖`.
    pub fn symmetry_defect(&self) -> f64 {
        let wa = DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights)) * &self.matrix;
        let n = wa.norm();
        if n == 0.0 {
            0.0
        } else {
            (&wa - wa.transpose()).norm() / n
        }
    }

    /// Leading `count` eigenpairs of the `W`-symmetric matrix.
    pub fn eigenpairs(&self, count: usize) -> Result<InteractionSpectrum> {
        let dim = 2 * self.n_tr;
        if count > dim {
            return Err(Error::Usage(format!("requested {count} eigenpairs from a {dim}-dimensional operator")));
        }
        let sq: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut c = DMatrix::from_fn(dim, dim, |i, j| sq[i] * self.matrix[(i, j)] / sq[j]);
        potentials::symmetrize(&mut c);
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
        let values = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(dim, count);
        for (k, &i) in order[..count].iter().enumerate() {
            for r in 0..dim {
                vectors[(r, k)] = eig.eigenvectors[(r, i)] / sq[r];
            }
        }
        Ok(InteractionSpectrum { values, vectors })
    }

    /// Eigenvalues only, ordered by decreasing `|λ|`.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigenpairs(2 * self.n_tr)?.values)
    }
}

/// Physical-plane discretization of the interaction operator on `∂D2`,
/// `A = K*_{D2} − ∂ν2 S_{D1} (λ1 I − K*_{D1})⁻¹ ∂ν1 S_{D2}`.
#[derive(Clone, Debug)]
pub struct DirectOperator {
    pub sensor: BoundaryCurve,
    pub matrix: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl DirectOperator {
    /// `target` is the discretized `∂D1`; `∂D2` is the circle of `pair` centered at `pair.c2()`,
    /// sampled with `n2` nodes clustered towards the gap. Pass `None` to drop the target.
    pub fn new(target: Option<&BoundaryCurve>, pair: &DiskPair, lambda1: f64, n2: usize) -> Result<Self> {
        let c2 = pair.c2();
        // Node density matched to the map's stretching on ∂B2: near and far distances to the pole.
        let near = pair.a - (c2.x - pair.r2);
        let far = c2.x + pair.r2 - pair.a;
        let grading = (far / near).powi(2).max(1.0);
        let sensor = BoundaryCurve::graded_circle(c2, pair.r2, n2, PI, grading)?;
        let pots2 = LayerPotentials::new(&sensor);
        let mut matrix = pots2.np_star().clone();
        if let Some(d1) = target {
            let res = LayerPotentials::new(d1).resolvent(lambda1)?;
            let t12 = normal_derivative_cross(d1, &sensor);
            let t21 = normal_derivative_cross(&sensor, d1);
            let inner = res.solve_many(&t12)?;
            matrix -= t21 * inner;
        }
        Ok(DirectOperator { gram: pots2.gram(), sensor, matrix })
    }

    /// Eigenvalues on mean-zero densities, ordered by decreasing `|λ|`.
    pub fn eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        let n = self.sensor.len();
        let w = self.sensor.weights();
        let total: f64 = w.iter().sum();
        let q = DMatrix::from_fn(n, n - 1, |i, j| if i == j { 1.0 } else { 0.0 } - w[j] / total);
        let gq = &self.gram * &q;
        let mut b = q.transpose() * &gq;
        potentials::symmetrize(&mut b);
        let mut a = gq.transpose() * &self.matrix * &q;
        potentials::symmetrize(&mut a);
        let (mut vals, _) = generalized_symmetric_eigen(&a, &b)?;
        vals.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
        vals.truncate(count);
        Ok(vals)
    }
}

/// Matrix of `φ ↦ ∂ν_x S_{src}[φ](x)` evaluated at the nodes `x` of `dst`.
fn normal_derivative_cross(dst: &BoundaryCurve, src: &BoundaryCurve) -> DMatrix<f64> {
    let x = dst.nodes();
    let nu = dst.normals();
    let y = src.nodes();
    let w = src.weights();
    DMatrix::from_fn(dst.len(), src.len(), |i, j| {
        let r: Point = x[i] - y[j];
        0.5 / PI * r.dot(&nu[i]) / r.norm_squared() * w[j]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgpt::compute_cgpt;
    use crate::conformal::place_target;
    use crate::geometry::StarShape;

    fn disk_table(rho: f64, lambda: f64, order: usize) -> CgptTable {
        let mut t = CgptTable::zeros(order, lambda);
        for n in 1..=order {
            let v = PI * n as f64 * rho.powi(2 * n as i32) / lambda;
            t.set_block(n, n, Matrix2::new(v, 0.0, 0.0, v));
        }
        t
    }

    #[test]
    fn empty_target_gives_zero_operator() {
        let op = InteractionOperator::assemble(&CgptTable::zeros(4, 1.0), 1.01, 4).unwrap();
        assert_eq!(op.matrix().amax(), 0.0);
        assert!(op.eigenvalues().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn disk_target_is_diagonal() {
        let (rho, r2t) = (0.08, 1.006);
        let op = InteractionOperator::assemble(&disk_table(rho, 1.0, 6), r2t, 6).unwrap();
        for n in 1..=6 {
            let e = -rho.powi(2 * n as i32) * r2t.powi(-2 * n as i32) / 4.0;
            let b = op.block(n, n);
            assert!((b[(0, 0)] - e).abs() < 1e-15 * e.abs().max(1e-300) + 1e-300);
            assert!((b[(1, 1)] - e).abs() <= 1e-15 * e.abs());
        }
        let s = op.eigenpairs(2).unwrap();
        assert!((s.values[0] + rho * rho / (4.0 * r2t * r2t)).abs() < 1e-15);
        let single = InteractionOperator::assemble(&disk_table(rho, 1.0, 1), r2t, 1).unwrap();
        let expect = disk_table(rho, 1.0, 1).first_order() * (-1.0 / (4.0 * PI * r2t * r2t));
        assert!((single.block(1, 1) - expect).amax() < 1e-18);
    }

    #[test]
    fn order_mismatch_is_reported() {
        assert!(matches!(
            InteractionOperator::assemble(&CgptTable::zeros(3, 1.0), 1.01, 4),
            Err(Error::OrderMismatch { needed: 4, found: 3 })
        ));
        let op = InteractionOperator::assemble(&CgptTable::zeros(3, 1.0), 1.01, 3).unwrap();
        assert!(op.eigenpairs(7).is_err());
    }

    fn transformed_flower(delta: f64, c: f64) -> (DiskPair, BoundaryCurve, BoundaryCurve) {
        let flower = StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).unwrap().rotate(0.3);
        let placed = place_target(&flower, 1.0, c * delta).unwrap();
        let phys = placed.shape.sample(256).unwrap();
        let img = placed.pair.map().transform_curve(&phys).unwrap();
        (placed.pair, phys, img)
    }

    #[test]
    fn weighted_symmetry_and_smallness() {
        let (pair, _, img) = transformed_flower(1e-3, 5.0);
        let (t1, t2) = pair.transformed_radii();
        let table = compute_cgpt(&img, 1.0, 8, Point::zeros()).unwrap();
        let op = InteractionOperator::assemble(&table, t2, 8).unwrap();
        assert!(op.symmetry_defect() < 1e-8);
        let s = op.eigenpairs(16).unwrap();
        assert!(s.values[0].abs() <= 10.0 * (t1 / t2).powi(2));
        assert!(s.values.iter().all(|v| v.abs() < 0.5));
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(op.weights()));
        let g = s.vectors.transpose() * w * &s.vectors;
        assert!((g - DMatrix::identity(16, 16)).amax() < 1e-10);
    }

    #[test]
    fn truncation_converges_geometrically() {
        let (pair, _, img) = transformed_flower(1e-3, 5.0);
        let (t1, t2) = pair.transformed_radii();
        let table = compute_cgpt(&img, 1.0, 8, Point::zeros()).unwrap();
        let q = t1 / t2;
        for n in [2, 4, 6] {
            let a = InteractionOperator::assemble(&table, t2, n).unwrap().eigenvalues().unwrap();
            let b = InteractionOperator::assemble(&table, t2, n + 2).unwrap().eigenvalues().unwrap();
            let diff = a.iter().zip(&b).take(2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 10.0 * q.powi(2 * n as i32 + 2), "n={n}: {diff}");
        }
    }

    #[test]
    fn direct_operator_without_target_vanishes() {
        let pair = DiskPair::new(1e-3, 1.0, 5e-3).unwrap();
        let op = DirectOperator::new(None, &pair, 1.0, 128).unwrap();
        let e = op.eigenvalues(10).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-8), "{e:?}");
    }

    #[test]
    fn direct_operator_matches_annulus_operator() {
        let (pair, phys, img) = transformed_flower(1e-3, 5.0);
        let (_, t2) = pair.transformed_radii();
        let table = compute_cgpt(&img, 1.0, 8, Point::zeros()).unwrap();
        let annulus = InteractionOperator::assemble(&table, t2, 8).unwrap().eigenvalues().unwrap();
        let direct = DirectOperator::new(Some(&phys), &pair, 1.0, 128).unwrap().eigenvalues(4).unwrap();
        for (d, a) in direct.iter().zip(&annulus) {
            assert!((d - a).abs() < 1e-3 * a.abs(), "{direct:?} vs {annulus:?}");
        }
        let finer = DirectOperator::new(Some(&phys), &pair, 1.0, 256).unwrap().eigenvalues(4).unwrap();
        for (d, f) in direct.iter().zip(&finer) {
            assert!((d - f).abs() < 1e-6 * d.abs().max(1e-3));
        }
    }
}
