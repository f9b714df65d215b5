//! Möbius map sending the exterior of two separated disks onto a concentric annulus.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Point, StarShape};

/// Distance to a pole below which the map refuses to evaluate.
pub const POLE_TOL: f64 = 1e-12;

/// Target enclosing disk `B1` (radius `r1`) and plasmonic disk `B2` (radius `r2`) separated by `d`,
/// placed so the map's fixed points are `(∓a, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskPair {
    pub r1: f64,
    pub r2: f64,
    pub d: f64,
    pub a: f64,
}

impl DiskPair {
    pub fn new(r1: f64, r2: f64, d: f64) -> Result<Self> {
        for (name, v) in [("r1", r1), ("r2", r2), ("d", d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Geometry(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let a = d.sqrt() * ((2.0 * r1 + d) * (2.0 * r2 + d) * (2.0 * r1 + 2.0 * r2 + d)).sqrt() / (2.0 * (r1 + r2 + d));
        Ok(DiskPair { r1, r2, d, a })
    }

    /// Center of `B1`, on the negative real axis.
    pub fn c1(&self) -> Point {
        Point::new(-(self.r1 * self.r1 + self.a * self.a).sqrt(), 0.0)
    }

    /// Center of `B2`, on the positive real axis.
    pub fn c2(&self) -> Point {
        Point::new((self.r2 * self.r2 + self.a * self.a).sqrt(), 0.0)
    }

    /// Radii `(r̃1, r̃2)` of the image circles, `r̃1 < 1 < r̃2`.
    pub fn transformed_radii(&self) -> (f64, f64) {
        ((-(self.a / self.r1).asinh()).exp(), (self.a / self.r2).asinh().exp())
    }

    pub fn map(&self) -> MobiusMap {
        MobiusMap { a: self.a }
    }

    /// `d / r1`, the gap measured in target radii.
    pub fn gap_ratio(&self) -> f64 {
        self.d / self.r1
    }
}

/// `Φ(z) = (z + a)/(z − a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    pub a: f64,
}

fn to_c(p: Point) -> Complex64 {
    Complex64::new(p.x, p.y)
}

fn to_p(z: Complex64) -> Point {
    Point::new(z.re, z.im)
}

impl MobiusMap {
    pub fn forward(&self, p: Point) -> Result<Point> {
        let z = to_c(p);
        let den = z - self.a;
        if den.norm() < POLE_TOL {
            return Err(Error::MapSingularity { distance: den.norm() });
        }
        Ok(to_p((z + self.a) / den))
    }

    pub fn inverse(&self, p: Point) -> Result<Point> {
        let w = to_c(p);
        let den = w - 1.0;
        if den.norm() < POLE_TOL {
            return Err(Error::MapSingularity { distance: den.norm() });
        }
        Ok(to_p((w + 1.0) * self.a / den))
    }

    /// `|Φ'(z)| = 2a/|z − a|²`.
    pub fn forward_stretch(&self, p: Point) -> f64 {
        2.0 * self.a / (to_c(p) - self.a).norm_sqr()
    }

    pub fn forward_points(&self, pts: &[Point]) -> Result<Vec<Point>> {
        pts.iter().map(|&p| self.forward(p)).collect()
    }

    pub fn inverse_points(&self, pts: &[Point]) -> Result<Vec<Point>> {
        pts.iter().map(|&p| self.inverse(p)).collect()
    }

    /// Image of a curve under `Φ`, with geometry rebuilt spectrally from the mapped nodes.
    pub fn transform_curve(&self, curve: &BoundaryCurve) -> Result<BoundaryCurve> {
        curve.map_nodes(|p| self.forward(p))
    }

    /// Preimage of a curve under `Φ`.
    pub fn pull_back(&self, curve: &BoundaryCurve) -> Result<BoundaryCurve> {
        curve.map_nodes(|p| self.inverse(p))
    }
}

/// Target placed in the map's frame: its smallest enclosing disk is `B1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedTarget {
    pub pair: DiskPair,
    /// Target translated so the enclosing disk center sits at `pair.c1()`.
    pub shape: StarShape,
    /// Translation applied to the input shape.
    pub shift: Point,
}

/// Places `target` next to a disk of radius `r2` at gap `d` from the target's enclosing disk.
pub fn place_target(target: &StarShape, r2: f64, d: f64) -> Result<PlacedTarget> {
    let (center, r1) = target.enclosing_circle()?;
    let pair = DiskPair::new(r1, r2, d)?;
    let shift = pair.c1() - center;
    Ok(PlacedTarget { pair, shape: target.translate(shift), shift })
}

/// Inversion in the circle of radius `r` about `c`.
pub fn reflect(c: Point, r: f64, p: Point) -> Point {
    let v = p - c;
    c + v * (r * r / v.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Ratio `r̃1/r̃2` from `a` solved geometrically and `|Φ|` measured on both circles.
    fn geometric_ratio(r1: f64, r2: f64, d: f64) -> f64 {
        let a = bisect(|a| (r1 * r1 + a * a).sqrt() + (r2 * r2 + a * a).sqrt() - (r1 + r2 + d), 0.0, 10.0 * (r1 + r2 + d));
        let m = MobiusMap { a };
        let c1 = -(r1 * r1 + a * a).sqrt();
        let c2 = (r2 * r2 + a * a).sqrt();
        let on1 = m.forward(Point::new(c1, r1)).unwrap().norm();
        let on2 = m.forward(Point::new(c2, r2)).unwrap().norm();
        on1 / on2
    }

    #[test]
    fn symmetric_pair_constant() {
        let p = DiskPair::new(1.0, 1.0, 2.0).unwrap();
        assert!((p.a - 3f64.sqrt()).abs() < 1e-14);
        // (±a, 0) are fixed by the composed reflections
        let q = reflect(p.c1(), 1.0, reflect(p.c2(), 1.0, Point::new(-p.a, 0.0)));
        assert!((q - Point::new(-p.a, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn centers_are_separated_by_gap() {
        for (r1, r2, d) in [(1e-3, 1.0, 5e-3), (0.3, 2.0, 0.1), (1.0, 1.0, 50.0)] {
            let p = DiskPair::new(r1, r2, d).unwrap();
            assert!(((p.c2() - p.c1()).norm() - (r1 + r2 + d)).abs() < 1e-12 * (r1 + r2 + d));
            assert!((p.c1().x.powi(2) - p.a * p.a - r1 * r1).abs() < 1e-12 * r1.max(p.a).powi(2) * 10.0);
            let a1 = reflect(p.c1(), r1, reflect(p.c2(), r2, Point::new(-p.a, 0.0)));
            assert!((a1 - Point::new(-p.a, 0.0)).norm() < 1e-10 * p.a);
            let a2 = reflect(p.c2(), r2, reflect(p.c1(), r1, Point::new(p.a, 0.0)));
            assert!((a2 - Point::new(p.a, 0.0)).norm() < 1e-10 * p.a);
        }
    }

    #[test]
    fn large_gap_asymptotics() {
        let p = DiskPair::new(1.0, 1.0, 1e3).unwrap();
        assert!((p.a / 500.0 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn invalid_pairs_are_rejected() {
        assert!(DiskPair::new(0.0, 1.0, 1.0).is_err());
        assert!(DiskPair::new(1.0, -1.0, 1.0).is_err());
        assert!(DiskPair::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn radii_match_geometric_oracle() {
        let delta = 1e-3;
        for c in [0.5, 1.0, 3.0, 5.0, 10.0] {
            let p = DiskPair::new(delta, 1.0, c * delta).unwrap();
            let (t1, t2) = p.transformed_radii();
            assert!(t1 < 1.0 && 1.0 < t2);
            let oracle = geometric_ratio(delta, 1.0, c * delta);
            assert!((t1 / t2 - oracle).abs() < 1e-10, "c={c}: {} vs {oracle}", t1 / t2);
        }
        // the 0.127 ratio belongs to a gap of three target radii
        let p = DiskPair::new(delta, 1.0, 3.0 * delta).unwrap();
        let (t1, t2) = p.transformed_radii();
        assert!((t1 / t2 - 0.127).abs() < 1e-3);
    }

    #[test]
    fn outer_radius_tends_to_one_linearly() {
        let slopes: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&delta| (DiskPair::new(delta, 1.0, 5.0 * delta).unwrap().transformed_radii().1 - 1.0) / delta)
            .collect();
        assert!((slopes[1] / slopes[2] - 1.0).abs() < 0.02);
        assert!((slopes[0] / slopes[2] - 1.0).abs() < 0.1);
    }

    #[test]
    fn circles_map_to_concentric_circles() {
        let p = DiskPair::new(1e-3, 1.0, 5e-3).unwrap();
        let (t1, t2) = p.transformed_radii();
        let m = p.map();
        for j in 0..100 {
            let t = 2.0 * PI * j as f64 / 100.0 + 0.01;
            let e = Point::new(t.cos(), t.sin());
            assert!((m.forward(p.c1() + e * p.r1).unwrap().norm() - t1).abs() < 1e-10);
            assert!((m.forward(p.c2() + e * p.r2).unwrap().norm() - t2).abs() < 1e-10);
        }
    }

    #[test]
    fn round_trip_and_poles() {
        let m = MobiusMap { a: 0.3 };
        for p in [Point::new(0.1, 0.2), Point::new(-2.0, 5.0), Point::new(0.29, -0.01)] {
            let q = m.inverse(m.forward(p).unwrap()).unwrap();
            assert!((q - p).norm() < 1e-12 * p.norm().max(1.0));
        }
        assert!(matches!(m.forward(Point::new(0.3, 0.0)), Err(Error::MapSingularity { .. })));
        assert!(matches!(m.inverse(Point::new(1.0, 0.0)), Err(Error::MapSingularity { .. })));
    }

    #[test]
    fn exterior_maps_into_annulus() {
        let p = DiskPair::new(0.1, 1.0, 0.2).unwrap();
        let (t1, t2) = p.transformed_radii();
        let m = p.map();
        for i in 0..60 {
            for j in 0..60 {
                let z = Point::new(-3.0 + 6.0 * i as f64 / 59.0, -3.0 + 6.0 * j as f64 / 59.0);
                if (z - p.c1()).norm() <= p.r1 || (z - p.c2()).norm() <= p.r2 {
                    continue;
                }
                let r = m.forward(z).unwrap().norm();
                assert!(r > t1 && r < t2, "{z:?} -> {r}");
            }
        }
    }

    #[test]
    fn enclosing_circle_maps_to_centered_circle() {
        let p = DiskPair::new(1e-3, 1.0, 5e-3).unwrap();
        let b1 = BoundaryCurve::circle(p.c1(), p.r1, 128).unwrap();
        let img = p.map().transform_curve(&b1).unwrap();
        let (t1, _) = p.transformed_radii();
        let xs: Vec<f64> = img.nodes().iter().map(|q| q.x).collect();
        let ys: Vec<f64> = img.nodes().iter().map(|q| q.y).collect();
        let cx = 0.5 * (xs.iter().cloned().fold(f64::MIN, f64::max) + xs.iter().cloned().fold(f64::MAX, f64::min));
        let cy = 0.5 * (ys.iter().cloned().fold(f64::MIN, f64::max) + ys.iter().cloned().fold(f64::MAX, f64::min));
        assert!(cx.abs() < 1e-8 && cy.abs() < 1e-8);
        for (q, k) in img.nodes().iter().zip(img.curvature()) {
            assert!((q.norm() - t1).abs() < 1e-12);
            assert!((k * t1 - 1.0).abs() < 1e-6);
        }
        let back = p.map().pull_back(&img).unwrap();
        for (a, b) in back.nodes().iter().zip(b1.nodes()) {
            assert!((a - b).norm() < 1e-10 * p.r1);
        }
    }

    /// Relative residual of the best complex-affine fit `ζ ≈ αz + β` of an image to its preimage.
    fn non_similarity(z: &[Point], w: &[Point]) -> f64 {
        let zc: Vec<Complex64> = z.iter().map(|p| to_c(*p)).collect();
        let wc: Vec<Complex64> = w.iter().map(|p| to_c(*p)).collect();
        let n = zc.len() as f64;
        let zm = zc.iter().sum::<Complex64>() / n;
        let wm = wc.iter().sum::<Complex64>() / n;
        let num: Complex64 = zc.iter().zip(&wc).map(|(a, b)| (a - zm).conj() * (b - wm)).sum();
        let den: f64 = zc.iter().map(|a| (a - zm).norm_sqr()).sum();
        let alpha = num / den;
        let res: f64 = zc.iter().zip(&wc).map(|(a, b)| (b - wm - alpha * (a - zm)).norm_sqr()).sum();
        let tot: f64 = wc.iter().map(|b| (b - wm).norm_sqr()).sum();
        (res / tot).sqrt()
    }

    #[test]
    fn flower_image_is_embedded() {
        let delta = 1e-3;
        let flower = StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).unwrap();
        let placed = place_target(&flower, 1.0, 5.0 * delta).unwrap();
        assert!((placed.pair.r1 - delta).abs() < 1e-9 * delta);
        let img = placed.pair.map().transform_curve(&placed.shape.sample(256).unwrap()).unwrap();
        assert!(img.is_simple());
        assert_eq!(img.winding_number(img.centroid()), 1);
        assert!(img.perimeter().is_finite());
    }

    #[test]
    fn close_gap_distorts_more() {
        let delta = 1e-3;
        let flower = StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).unwrap();
        let distortion = |c: f64| {
            let placed = place_target(&flower, 1.0, c * delta).unwrap();
            let src = placed.shape.sample(256).unwrap();
            let img = placed.pair.map().transform_curve(&src).unwrap();
            non_similarity(src.nodes(), img.nodes())
        };
        let far = distortion(5.0);
        let near = distortion(0.5);
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn image_shape_depends_on_gap_ratio() {
        let flower = |delta: f64| StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).unwrap();
        let image = |delta: f64| {
            let placed = place_target(&flower(delta), 1.0, 5.0 * delta).unwrap();
            let (t1, _) = placed.pair.transformed_radii();
            let img = placed.pair.map().transform_curve(&placed.shape.sample(128).unwrap()).unwrap();
            img.nodes().iter().map(|q| q / t1).collect::<Vec<_>>()
        };
        let a = image(1e-2);
        let b = image(1e-3);
        let dev = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-2, "{dev}");
    }

    #[test]
    fn pair_json_round_trip() {
        let p = DiskPair::new(1e-3, 1.0, 5e-3).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DiskPair>(&s).unwrap(), p);
    }
}
