//! Contracted generalized polarization tensors and their rotation law.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Point};
use crate::potentials::LayerPotentials;

/// Blocks `M_mn = [[cc, cs], [sc, ss]]` for `1 ≤ m, n ≤ order`, where
/// `M^{HF}_mn = ∫ F_n (λI − K*)⁻¹[∂H_m/∂ν] dσ`, `H_m, F_n ∈ {Re P, Im P}` and `P_m = (x − origin)^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgptTable {
    order: usize,
    lambda: f64,
    origin: [f64; 2],
    blocks: Vec<Matrix2<f64>>,
}

/// Complex recombination `N1 = (cc − ss) + i(cs + sc)`, `N2 = (cc + ss) + i(cs − sc)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NTable {
    pub order: usize,
    pub n1: Vec<Complex64>,
    pub n2: Vec<Complex64>,
}

impl CgptTable {
    pub fn zeros(order: usize, lambda: f64) -> Self {
        CgptTable { order, lambda, origin: [0.0, 0.0], blocks: vec![Matrix2::zeros(); order * order] }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn origin(&self) -> Point {
        Point::new(self.origin[0], self.origin[1])
    }

    pub fn with_origin(mut self, origin: Point) -> Self {
        self.origin = [origin.x, origin.y];
        self
    }

    fn idx(&self, m: usize, n: usize) -> usize {
        assert!(m >= 1 && n >= 1 && m <= self.order && n <= self.order, "block ({m},{n}) outside order {}", self.order);
        (m - 1) * self.order + (n - 1)
    }

    pub fn block(&self, m: usize, n: usize) -> Matrix2<f64> {
        self.blocks[self.idx(m, n)]
    }

    pub fn set_block(&mut self, m: usize, n: usize, b: Matrix2<f64>) {
        let i = self.idx(m, n);
        self.blocks[i] = b;
    }

    /// First-order polarization tensor `M_11`.
    pub fn first_order(&self) -> Matrix2<f64> {
        self.block(1, 1)
    }

    /// Copy limited to blocks with `m, n ≤ order`.
    pub fn truncated(&self, order: usize) -> Result<CgptTable> {
        if order > self.order {
            return Err(Error::OrderMismatch { needed: order, found: self.order });
        }
        let mut out =
            CgptTable { order, lambda: self.lambda, origin: self.origin, blocks: vec![Matrix2::zeros(); order * order] };
        for m in 1..=order {
            for n in 1..=order {
                out.set_block(m, n, self.block(m, n));
            }
        }
        Ok(out)
    }

    /// Tensors of the domain scaled by `s` about the origin: `M_mn ↦ s^{m+n} M_mn`.
    pub fn scaled(&self, s: f64) -> CgptTable {
        let mut out = self.clone();
        for m in 1..=self.order {
            for n in 1..=self.order {
                out.set_block(m, n, self.block(m, n) * s.powi((m + n) as i32));
            }
        }
        out
    }

    /// Largest `‖M_mn − M_nmᵀ‖` relative to the largest block norm.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for m in 1..=self.order {
            for n in m..=self.order {
                worst = worst.max((self.block(m, n) - self.block(n, m).transpose()).norm());
            }
        }
        worst / scale
    }

    /// Frobenius norm over blocks with `m + n ≤ max_sum`.
    pub fn norm_up_to(&self, max_sum: usize) -> f64 {
        self.pairs_up_to(max_sum).map(|(m, n)| self.block(m, n).norm_squared()).sum::<f64>().sqrt()
    }

    /// Relative Frobenius distance to `truth` over blocks with `m + n ≤ max_sum`.
    pub fn relative_error(&self, truth: &CgptTable, max_sum: usize) -> f64 {
        let num: f64 = truth
            .pairs_up_to(max_sum)
            .filter(|&(m, n)| m <= self.order && n <= self.order)
            .map(|(m, n)| (self.block(m, n) - truth.block(m, n)).norm_squared())
            .sum();
        num.sqrt() / truth.norm_up_to(max_sum)
    }

    /// Largest entrywise relative deviation over blocks with `m + n ≤ max_sum`,
    /// each entry measured against the norm of its own block.
    pub fn max_block_error(&self, truth: &CgptTable, max_sum: usize) -> f64 {
        truth
            .pairs_up_to(max_sum)
            .map(|(m, n)| {
                let t = truth.block(m, n);
                let scale = t.norm().max(f64::MIN_POSITIVE);
                (self.block(m, n) - t).norm() / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn pairs_up_to(&self, max_sum: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.order;
        (1..=k).flat_map(move |m| (1..=k).map(move |n| (m, n))).filter(move |&(m, n)| m + n <= max_sum)
    }

    pub fn to_ntable(&self) -> NTable {
        let mut n1 = Vec::with_capacity(self.blocks.len());
        let mut n2 = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (cc, cs, sc, ss) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
            n1.push(Complex64::new(cc - ss, cs + sc));
            n2.push(Complex64::new(cc + ss, cs - sc));
        }
        NTable { order: self.order, n1, n2 }
    }

    pub fn from_ntable(n: &NTable, lambda: f64) -> Self {
        let blocks =
            n.n1.iter()
                .zip(&n.n2)
                .map(|(a, b)| {
                    let cc = 0.5 * (a.re + b.re);
                    let ss = 0.5 * (b.re - a.re);
                    let cs = 0.5 * (a.im + b.im);
                    let sc = 0.5 * (a.im - b.im);
                    Matrix2::new(cc, cs, sc, ss)
                })
                .collect();
        CgptTable { order: n.order, lambda, origin: [0.0, 0.0], blocks }
    }

    /// Tensors of the domain rotated by `theta` about the table origin.
    pub fn rotated(&self, theta: f64) -> CgptTable {
        let mut nt = self.to_ntable();
        for m in 1..=self.order {
            for n in 1..=self.order {
                let i = (m - 1) * self.order + (n - 1);
                nt.n1[i] *= Complex64::from_polar(1.0, (n + m) as f64 * theta);
                nt.n2[i] *= Complex64::from_polar(1.0, (n as f64 - m as f64) * theta);
            }
        }
        CgptTable { origin: self.origin, ..CgptTable::from_ntable(&nt, self.lambda) }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CgptJson::from(self)).expect("table serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgptJson {
    lambda: [f64; 2],
    order: usize,
    #[serde(default)]
    origin: [f64; 2],
    blocks: BTreeMap<String, [[f64; 2]; 2]>,
}

impl From<&CgptTable> for CgptJson {
    fn from(t: &CgptTable) -> Self {
        let mut blocks = BTreeMap::new();
        for m in 1..=t.order {
            for n in 1..=t.order {
                let b = t.block(m, n);
                blocks.insert(format!("{m},{n}"), [[b[(0, 0)], b[(0, 1)]], [b[(1, 0)], b[(1, 1)]]]);
            }
        }
        CgptJson { lambda: [t.lambda, 0.0], order: t.order, origin: t.origin, blocks }
    }
}

impl TryFrom<CgptJson> for CgptTable {
    type Error = String;

    fn try_from(j: CgptJson) -> std::result::Result<Self, String> {
        if j.lambda[1] != 0.0 {
            return Err("complex contrasts are not supported in stored tables".into());
        }
        let mut t = CgptTable::zeros(j.order, j.lambda[0]);
        t.origin = j.origin;
        for (key, b) in j.blocks {
            let (m, n) = key
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| format!("malformed block key {key:?}"))?;
            if m == 0 || n == 0 || m > j.order || n > j.order {
                return Err(format!("block key {key:?} outside order {}", j.order));
            }
            t.set_block(m, n, Matrix2::new(b[0][0], b[0][1], b[1][0], b[1][1]));
        }
        Ok(t)
    }
}

impl Serialize for CgptTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CgptJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CgptTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        CgptJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// `(Re P_m, Im P_m)` and the normal derivatives of both at every node, `P_m(x) = (x − origin)^m`.
pub(crate) struct Harmonics {
    /// `values[(j, 2(m−1)+h)]`: h = 0 for Re, 1 for Im.
    pub values: DMatrix<f64>,
    pub normal_derivatives: DMatrix<f64>,
}

pub(crate) fn harmonics(curve: &BoundaryCurve, order: usize, origin: Point) -> Harmonics {
    let n = curve.len();
    let mut values = DMatrix::zeros(n, 2 * order);
    let mut normal_derivatives = DMatrix::zeros(n, 2 * order);
    for (j, (x, nu)) in curve.nodes().iter().zip(curve.normals()).enumerate() {
        let z = Complex64::new(x.x - origin.x, x.y - origin.y);
        let mut zm1 = Complex64::new(1.0, 0.0);
        for m in 1..=order {
            let dp = zm1 * m as f64;
            let p = zm1 * z;
            values[(j, 2 * (m - 1))] = p.re;
            values[(j, 2 * (m - 1) + 1)] = p.im;
            normal_derivatives[(j, 2 * (m - 1))] = dp.re * nu.x - dp.im * nu.y;
            normal_derivatives[(j, 2 * (m - 1) + 1)] = dp.im * nu.x + dp.re * nu.y;
            zm1 = p;
        }
    }
    Harmonics { values, normal_derivatives }
}

/// CGPTs up to `order` about `origin`, reusing assembled operators.
pub fn compute_cgpt_with(pots: &LayerPotentials, lambda: f64, order: usize, origin: Point) -> Result<CgptTable> {
    if order == 0 {
        return Err(Error::Usage("CGPT order must be at least 1".into()));
    }
    let curve = pots.curve();
    let h = harmonics(curve, order, origin);
    let phi = pots.resolvent(lambda)?.solve_many(&h.normal_derivatives)?;
    let w = curve.weights();
    let mut t = CgptTable::zeros(order, lambda).with_origin(origin);
    for m in 1..=order {
        for n in 1..=order {
            let mut b = Matrix2::zeros();
            for hh in 0..2 {
                for ff in 0..2 {
                    let pcol = phi.column(2 * (m - 1) + hh);
                    let fcol = h.values.column(2 * (n - 1) + ff);
                    b[(hh, ff)] = (0..curve.len()).map(|j| w[j] * fcol[j] * pcol[j]).sum();
                }
            }
            t.set_block(m, n, b);
        }
    }
    Ok(t)
}

/// CGPTs up to `order` with harmonics centered at `origin`.
pub fn compute_cgpt(curve: &BoundaryCurve, lambda: f64, order: usize, origin: Point) -> Result<CgptTable> {
    compute_cgpt_with(&LayerPotentials::new(curve), lambda, order, origin)
}

/// First-order polarization tensor about the coordinate origin.
pub fn first_order_pt(curve: &BoundaryCurve, lambda: f64) -> Result<Matrix2<f64>> {
    Ok(compute_cgpt(curve, lambda, 1, Point::zeros())?.first_order())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_matrix, StarShape};
    use std::f64::consts::PI;

    fn flower(n: usize) -> BoundaryCurve {
        StarShape::flower([0.0, 0.0], 1.0, 5, 0.3).unwrap().sample(n).unwrap()
    }

    #[test]
    fn disk_tensors_are_diagonal() {
        let r: f64 = 0.8;
        let c = BoundaryCurve::circle(Point::zeros(), r, 128).unwrap();
        for lambda in [1.0, -2.0, 0.75] {
            let t = compute_cgpt(&c, lambda, 5, Point::zeros()).unwrap();
            for m in 1..=5 {
                for n in 1..=5 {
                    let b = t.block(m, n);
                    if m == n {
                        let e = PI * n as f64 * r.powi(2 * n as i32) / lambda;
                        assert!((b[(0, 0)] - e).abs() < 1e-10 * e.abs());
                        assert!((b[(1, 1)] - e).abs() < 1e-10 * e.abs());
                        assert!(b[(0, 1)].abs() < 1e-12 && b[(1, 0)].abs() < 1e-12);
                    } else {
                        assert!(b.amax() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn ellipse_tensor_matches_closed_form() {
        let (a, b) = (2.0, 1.0);
        let c = BoundaryCurve::ellipse(a, b, 256).unwrap();
        for lambda in [1.0, 3.0, -1.5] {
            let m = first_order_pt(&c, lambda).unwrap();
            let k = (2.0 * lambda + 1.0) / (2.0 * lambda - 1.0);
            let e = PI * a * b;
            let m11 = e * (k - 1.0) * (a + b) / (a + k * b);
            let m22 = e * (k - 1.0) * (a + b) / (b + k * a);
            assert!((m[(0, 0)] - m11).abs() < 1e-8 * m11.abs(), "{} vs {m11}", m[(0, 0)]);
            assert!((m[(1, 1)] - m22).abs() < 1e-8 * m22.abs());
            assert!(m[(0, 1)].abs() < 1e-10);
        }
    }

    #[test]
    fn rotated_ellipse_tensor_transforms() {
        let s = StarShape::ellipse([0.0, 0.0], 2.0, 1.0, 0.0, 60).unwrap();
        let m = first_order_pt(&s.sample(256).unwrap(), 1.0).unwrap();
        let mr = first_order_pt(&s.rotate(0.4).sample(256).unwrap(), 1.0).unwrap();
        let r = rotation_matrix(0.4);
        assert!((mr - r * m * r.transpose()).amax() < 1e-8 * m.amax());
    }

    #[test]
    fn ntable_round_trip() {
        let t = compute_cgpt(&flower(128), 1.0, 4, Point::new(0.1, 0.0)).unwrap();
        let back = CgptTable::from_ntable(&t.to_ntable(), 1.0).with_origin(t.origin());
        for (a, b) in back.blocks.iter().zip(&t.blocks) {
            assert!((a - b).amax() < 1e-12 * b.amax().max(1.0));
        }
    }

    #[test]
    fn rotation_law_matches_recomputation() {
        let s = StarShape::new([0.0, 0.0], 1.0, vec![0.05, 0.1, 0.0, 0.0, 0.3], vec![0.0, 0.02, 0.04, 0.0, 0.0], 0.0).unwrap();
        let t = compute_cgpt(&s.sample(256).unwrap(), 1.0, 5, Point::zeros()).unwrap();
        let direct = compute_cgpt(&s.rotate(0.7).sample(256).unwrap(), 1.0, 5, Point::zeros()).unwrap();
        let rotated = t.rotated(0.7);
        assert!(rotated.max_block_error(&direct, 10) < 1e-6);
        assert!(t.rotated(0.0).max_block_error(&t, 10) < 1e-14);
        // the N2 diagonal is rotation invariant
        let n2 = rotated.to_ntable().n2;
        assert!((n2[0] - t.to_ntable().n2[0]).norm() < 1e-12 * n2[0].norm());
    }

    #[test]
    fn tables_are_symmetric() {
        let s = StarShape::new([0.1, -0.2], 1.0, vec![0.1, 0.05, 0.02], vec![-0.03, 0.04, 0.0], 0.3).unwrap();
        let t = compute_cgpt(&s.sample(256).unwrap(), 1.0, 6, Point::zeros()).unwrap();
        assert!(t.symmetry_defect() < 1e-8, "{}", t.symmetry_defect());
    }

    #[test]
    fn dipole_far_field_matches_single_layer() {
        let c = BoundaryCurve::ellipse(0.02, 0.01, 128).unwrap();
        let pots = LayerPotentials::new(&c);
        let lambda = 1.0;
        let t = compute_cgpt_with(&pots, lambda, 1, Point::zeros()).unwrap();
        let h = harmonics(&c, 1, Point::zeros());
        let phi = pots.resolvent(lambda).unwrap().solve_many(&h.normal_derivatives).unwrap();
        let dens: Vec<f64> = phi.column(0).iter().copied().collect();
        let m = t.first_order();
        for ang in [0.0f64, 1.0, 2.5] {
            let x = Point::new(ang.cos(), ang.sin()) * 4.0;
            let direct = crate::potentials::eval_single_layer(&c, &dens, x);
            let dipole = -(x.x * m[(0, 0)] + x.y * m[(0, 1)]) / (2.0 * PI * x.norm_squared());
            assert!((direct - dipole).abs() < 1e-3 * dipole.abs(), "{direct} vs {dipole}");
        }
    }

    #[test]
    fn decay_is_geometric_in_enclosing_radius() {
        let c = flower(256);
        let rho: f64 = 1.3;
        let t = compute_cgpt(&c, 1.0, 8, Point::zeros()).unwrap();
        for (m, n) in t.pairs_up_to(16).collect::<Vec<_>>() {
            let ratio = t.block(m, n).amax() / rho.powi((m + n) as i32);
            assert!(ratio < 10.0 * PI * (m.max(n)) as f64, "({m},{n}) {ratio}");
        }
    }

    #[test]
    fn json_round_trip() {
        let t = compute_cgpt(&flower(64), 1.0, 3, Point::new(0.5, 0.0)).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["lambda"], serde_json::json!([1.0, 0.0]));
        assert!(v["blocks"]["2,3"].is_array());
        let back: CgptTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<CgptTable>(r#"{"lambda":[1,0],"order":1,"blocks":{"2,1":[[0,0],[0,0]]}}"#).is_err());
    }

    #[test]
    fn order_must_be_positive() {
        let c = BoundaryCurve::circle(Point::zeros(), 1.0, 64).unwrap();
        assert!(compute_cgpt(&c, 1.0, 0, Point::zeros()).is_err());
        assert!(matches!(compute_cgpt(&c, 0.5, 2, Point::zeros()), Err(Error::ResonanceProximity { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10))]
            #[test]
            fn random_shapes_give_symmetric_tables(
                a in proptest::collection::vec(-0.08f64..0.08, 4),
                b in proptest::collection::vec(-0.08f64..0.08, 4),
                lambda in prop_oneof![0.8f64..4.0, -4.0f64..-0.8],
            ) {
                let s = StarShape::new([0.05, 0.0], 1.0, a, b, 0.0).unwrap();
                let t = compute_cgpt(&s.sample(192).unwrap(), lambda, 5, Point::zeros()).unwrap();
                prop_assert!(t.symmetry_defect() < 1e-8);
            }

            #[test]
            fn rotation_composes(alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
                let t = compute_cgpt(&flower(64), 1.0, 3, Point::zeros()).unwrap();
                let lhs = t.rotated(alpha).rotated(beta);
                let rhs = t.rotated(alpha + beta);
                prop_assert!(lhs.max_block_error(&rhs, 6) < 1e-12);
            }
        }
    }
}
