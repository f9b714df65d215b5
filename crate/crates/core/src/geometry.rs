//! Star-shaped domains and quadrature-ready discretizations of smooth closed curves.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;

pub type Point = Vector2<f64>;

/// Default number of radial Fourier modes for reconstructed shapes.
pub const DEFAULT_SHAPE_ORDER: usize = 8;

/// Star-shaped domain with boundary `center + r(θ − rotation)·(cos θ, sin θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarShape {
    pub center: [f64; 2],
    pub a0: f64,
    pub ak: Vec<f64>,
    pub bk: Vec<f64>,
    #[serde(default)]
    pub rotation: f64,
}

impl StarShape {
    pub fn new(center: [f64; 2], a0: f64, ak: Vec<f64>, bk: Vec<f64>, rotation: f64) -> Result<Self> {
        if ak.len() != bk.len() {
            return Err(Error::Geometry(format!("cosine and sine coefficient counts differ ({} vs {})", ak.len(), bk.len())));
        }
        let shape = StarShape { center, a0, ak, bk, rotation };
        shape.validate()?;
        Ok(shape)
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        Self::new(center, radius, Vec::new(), Vec::new(), 0.0)
    }

    /// `r(θ) = r0 (1 + amplitude cos(petals θ))`.
    pub fn flower(center: [f64; 2], r0: f64, petals: usize, amplitude: f64) -> Result<Self> {
        let mut ak = vec![0.0; petals];
        if petals > 0 {
            ak[petals - 1] = r0 * amplitude;
        }
        Self::new(center, r0, ak, vec![0.0; petals], 0.0)
    }

    /// Ellipse with semi-axes `a` (along the rotated x-axis) and `b`, as a truncated radial series.
    pub fn ellipse(center: [f64; 2], a: f64, b: f64, rotation: f64, order: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Geometry(format!("ellipse semi-axes must be positive, got ({a}, {b})")));
        }
        let samples = (4 * order + 64).next_power_of_two().max(512);
        let radii: Vec<f64> = (0..samples)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / samples as f64;
                a * b / ((b * t.cos()).powi(2) + (a * t.sin()).powi(2)).sqrt()
            })
            .collect();
        let (a0, ak, bk) = fourier::real_coefficients(&radii, order);
        Self::new(center, a0, ak, bk, rotation)
    }

    pub fn order(&self) -> usize {
        self.ak.len()
    }

    pub fn center(&self) -> Point {
        Point::new(self.center[0], self.center[1])
    }

    /// Radius and its first two derivatives at body-frame angle `phi`.
    pub fn radius_derivatives(&self, phi: f64) -> (f64, f64, f64) {
        let (mut r, mut dr, mut ddr) = (self.a0, 0.0, 0.0);
        for (idx, (&a, &b)) in self.ak.iter().zip(&self.bk).enumerate() {
            let k = (idx + 1) as f64;
            let (s, c) = (k * phi).sin_cos();
            r += a * c + b * s;
            dr += k * (b * c - a * s);
            ddr -= k * k * (a * c + b * s);
        }
        (r, dr, ddr)
    }

    /// Radius along the physical polar angle `theta` measured from the center.
    pub fn radius(&self, theta: f64) -> f64 {
        self.radius_derivatives(theta - self.rotation).0
    }

    pub fn min_radius(&self) -> f64 {
        let m = (16 * self.order()).max(2048);
        (0..m).map(|j| self.radius_derivatives(2.0 * PI * j as f64 / m as f64).0).fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        let m = (16 * self.order()).max(2048);
        (0..m).map(|j| self.radius_derivatives(2.0 * PI * j as f64 / m as f64).0).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0) || !self.a0.is_finite() {
            return Err(Error::Geometry(format!("mean radius must be positive, got {}", self.a0)));
        }
        if self.ak.iter().chain(&self.bk).any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite radial coefficient".into()));
        }
        let rmin = self.min_radius();
        if !(rmin > 0.0) {
            return Err(Error::Geometry(format!("radius function is non-positive (min {rmin:.3e})")));
        }
        Ok(())
    }

    /// Equispaced-in-angle trapezoidal discretization with analytic derivatives.
    pub fn sample(&self, n: usize) -> Result<BoundaryCurve> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::Geometry(format!("node count must be even and >= 16, got {n}")));
        }
        self.validate()?;
        let c = self.center();
        let mut x = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        let mut ddx = Vec::with_capacity(n);
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            let (r, dr, ddr) = self.radius_derivatives(t - self.rotation);
            let e = Point::new(t.cos(), t.sin());
            let e_perp = Point::new(-t.sin(), t.cos());
            x.push(c + r * e);
            dx.push(dr * e + r * e_perp);
            ddx.push((ddr - r) * e + 2.0 * dr * e_perp);
        }
        BoundaryCurve::from_derivatives(x, dx, ddx)
    }

    /// Rotation about the coordinate origin; the center rotates as well.
    pub fn rotate(&self, theta: f64) -> StarShape {
        self.rotate_about(theta, Point::zeros())
    }

    pub fn rotate_about(&self, theta: f64, pivot: Point) -> StarShape {
        let rot = rotation_matrix(theta);
        let c = pivot + rot * (self.center() - pivot);
        StarShape { center: [c.x, c.y], rotation: self.rotation + theta, ..self.clone() }
    }

    pub fn translate(&self, shift: Point) -> StarShape {
        StarShape { center: [self.center[0] + shift.x, self.center[1] + shift.y], ..self.clone() }
    }

    /// Smallest disk containing the domain. Extremal boundary points are polished
    /// by a local maximization of the distance to the discrete solution's center.
    pub fn enclosing_circle(&self) -> Result<(Point, f64)> {
        let n = 1024;
        let curve = self.sample(n)?;
        let (c0, r0) = minimal_enclosing_circle(curve.nodes());
        let h = 2.0 * PI / n as f64;
        let point = |t: f64| self.center() + Point::new(t.cos(), t.sin()) * self.radius_derivatives(t - self.rotation).0;
        let mut pts = curve.nodes().to_vec();
        for j in 0..n {
            if (curve.nodes()[j] - c0).norm() < r0 * (1.0 - 1e-3) {
                continue;
            }
            let f = |t: f64| (point(t) - c0).norm();
            // golden-section search on the bracket around the node
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (h * j as f64 - h, h * j as f64 + h);
            let mut x1 = b - g * (b - a);
            let mut x2 = a + g * (b - a);
            let (mut f1, mut f2) = (f(x1), f(x2));
            for _ in 0..80 {
                if f1 > f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - g * (b - a);
                    f1 = f(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + g * (b - a);
                    f2 = f(x2);
                }
            }
            pts.push(point(0.5 * (a + b)));
        }
        Ok(minimal_enclosing_circle(&pts))
    }

    /// Uniform scaling about the coordinate origin.
    pub fn scale(&self, factor: f64) -> StarShape {
        StarShape {
            center: [self.center[0] * factor, self.center[1] * factor],
            a0: self.a0 * factor,
            ak: self.ak.iter().map(|v| v * factor).collect(),
            bk: self.bk.iter().map(|v| v * factor).collect(),
            rotation: self.rotation,
        }
    }

    /// Radial coefficients packed as `[a0, a1, b1, a2, b2, ...]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 2 * self.order());
        out.push(self.a0);
        for (a, b) in self.ak.iter().zip(&self.bk) {
            out.push(*a);
            out.push(*b);
        }
        out
    }

    pub fn with_coefficients(&self, coeffs: &[f64]) -> StarShape {
        let order = (coeffs.len() - 1) / 2;
        StarShape {
            center: self.center,
            a0: coeffs[0],
            ak: (0..order).map(|k| coeffs[1 + 2 * k]).collect(),
            bk: (0..order).map(|k| coeffs[2 + 2 * k]).collect(),
            rotation: self.rotation,
        }
    }

    /// Same shape expressed with `order` radial modes (zero padded or truncated).
    pub fn with_order(&self, order: usize) -> StarShape {
        let mut ak = self.ak.clone();
        let mut bk = self.bk.clone();
        ak.resize(order, 0.0);
        bk.resize(order, 0.0);
        StarShape { ak, bk, ..self.clone() }
    }

    /// Basis function attached to packed coefficient `idx`, evaluated at body angle `phi`.
    pub fn coefficient_basis(idx: usize, phi: f64) -> f64 {
        if idx == 0 {
            1.0
        } else {
            let k = idx.div_ceil(2) as f64;
            if idx % 2 == 1 {
                (k * phi).cos()
            } else {
                (k * phi).sin()
            }
        }
    }
}

pub fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Nodes, unit tangents, outward normals, curvature and trapezoidal weights of a closed curve
/// sampled at equispaced parameter values `t_j = 2πj/N`.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    nodes: Vec<Point>,
    tangents: Vec<Point>,
    normals: Vec<Point>,
    curvature: Vec<f64>,
    speed: Vec<f64>,
    weights: Vec<f64>,
}

impl BoundaryCurve {
    /// Builds the curve from position and parameter derivatives at `t_j = 2πj/N`.
    /// The parameterization must be counterclockwise.
    pub fn from_derivatives(x: Vec<Point>, dx: Vec<Point>, ddx: Vec<Point>) -> Result<Self> {
        let n = x.len();
        if n < 4 || n % 2 != 0 || dx.len() != n || ddx.len() != n {
            return Err(Error::Geometry(format!("inconsistent curve data with {n} nodes")));
        }
        let h = 2.0 * PI / n as f64;
        let mut tangents = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        for j in 0..n {
            let s = dx[j].norm();
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Geometry(format!("degenerate parameterization at node {j}")));
            }
            let t = dx[j] / s;
            tangents.push(t);
            normals.push(Point::new(t.y, -t.x));
            curvature.push((dx[j].x * ddx[j].y - dx[j].y * ddx[j].x) / (s * s * s));
            speed.push(s);
        }
        let weights = speed.iter().map(|s| s * h).collect();
        Ok(BoundaryCurve { nodes: x, tangents, normals, curvature, speed, weights })
    }

    /// Rebuilds geometry from node positions alone by trigonometric interpolation.
    /// Clockwise input is reversed so the result is counterclockwise.
    pub fn from_samples(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 16 || n % 2 != 0 {
            return Err(Error::Geometry(format!("node count must be even and >= 16, got {n}")));
        }
        let mut pts = points;
        if signed_polygon_area(&pts) < 0.0 {
            pts.reverse();
        }
        let z: Vec<Complex64> = pts.iter().map(|p| Complex64::new(p.x, p.y)).collect();
        let (d1, d2) = fourier::periodic_derivatives(&z);
        let dx = d1.iter().map(|v| Point::new(v.re, v.im)).collect();
        let ddx = d2.iter().map(|v| Point::new(v.re, v.im)).collect();
        Self::from_derivatives(pts, dx, ddx)
    }

    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self> {
        Self::ellipse_at(center, radius, radius, n)
    }

    /// Axis-aligned ellipse `(a cos t, b sin t)` about `center`.
    pub fn ellipse_at(center: Point, a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Geometry(format!("semi-axes must be positive, got ({a}, {b})")));
        }
        let mut x = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        let mut ddx = Vec::with_capacity(n);
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            let (s, c) = t.sin_cos();
            x.push(center + Point::new(a * c, b * s));
            dx.push(Point::new(-a * s, b * c));
            ddx.push(Point::new(-a * c, -b * s));
        }
        Self::from_derivatives(x, dx, ddx)
    }

    pub fn ellipse(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::ellipse_at(Point::zeros(), a, b, n)
    }

    /// Circle whose nodes cluster around the direction `focus`: node density there is
    /// `grading` times the density on the opposite side.
    ///
    /// Uses the disk automorphism `w ↦ (w + β)/(1 + βw)` with `β = (√g − 1)/(√g + 1)`.
    pub fn graded_circle(center: Point, radius: f64, n: usize, focus: f64, grading: f64) -> Result<Self> {
        if !(grading >= 1.0) {
            return Err(Error::Geometry(format!("grading must be >= 1, got {grading}")));
        }
        let g = grading.sqrt();
        let beta = (g - 1.0) / (g + 1.0);
        let rot = Complex64::from_polar(radius, focus);
        let c = Complex64::new(center.x, center.y);
        let i = Complex64::i();
        let mut x = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        let mut ddx = Vec::with_capacity(n);
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            let w = Complex64::from_polar(1.0, t);
            let den = 1.0 + beta * w;
            let m = (w + beta) / den;
            let dm = (1.0 - beta * beta) / (den * den);
            let ddm = -2.0 * beta * (1.0 - beta * beta) / (den * den * den);
            let z = c + rot * m;
            let dz = rot * dm * i * w;
            let ddz = rot * (-ddm * w * w - dm * w);
            x.push(Point::new(z.re, z.im));
            dx.push(Point::new(dz.re, dz.im));
            ddx.push(Point::new(ddz.re, ddz.im));
        }
        Self::from_derivatives(x, dx, ddx)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn tangents(&self) -> &[Point] {
        &self.tangents
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    /// `|x'(t_j)|`, the parameter speed.
    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Parameter step `2π/N`.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Enclosed area from `½∮(x dy − y dx)`.
    pub fn area(&self) -> f64 {
        let h = self.step();
        self.nodes.iter().zip(&self.tangents).zip(&self.speed).map(|((p, t), s)| 0.5 * (p.x * t.y - p.y * t.x) * s * h).sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point {
        let h = self.step();
        let (mut cx, mut cy) = (0.0, 0.0);
        for ((p, t), s) in self.nodes.iter().zip(&self.tangents).zip(&self.speed) {
            let dx = t.x * s * h;
            let dy = t.y * s * h;
            cx += 0.5 * p.x * p.x * dy;
            cy -= 0.5 * p.y * p.y * dx;
        }
        Point::new(cx, cy) / self.area()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Arclength derivative `df/ds` of nodal values.
    pub fn tangential_derivative(&self, values: &[f64]) -> Vec<f64> {
        fourier::periodic_derivative_real(values).into_iter().zip(&self.speed).map(|(d, s)| d / s).collect()
    }

    /// Maps every node through `f` and rebuilds the geometry spectrally.
    pub fn map_nodes<F>(&self, f: F) -> Result<BoundaryCurve>
    where
        F: Fn(Point) -> Result<Point>,
    {
        let pts = self.nodes.iter().map(|&p| f(p)).collect::<Result<Vec<_>>>()?;
        BoundaryCurve::from_samples(pts)
    }

    /// True when no two non-adjacent polygon edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.len();
        for i in 0..n {
            let (a, b) = (self.nodes[i], self.nodes[(i + 1) % n]);
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (self.nodes[j], self.nodes[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Winding number of the node polygon around `p`.
    pub fn winding_number(&self, p: Point) -> i32 {
        let n = self.len();
        let mut total = 0.0;
        for i in 0..n {
            let a = self.nodes[i] - p;
            let b = self.nodes[(i + 1) % n] - p;
            total += (a.x * b.y - a.y * b.x).atan2(a.dot(&b));
        }
        (total / (2.0 * PI)).round() as i32
    }
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

pub fn signed_polygon_area(points: &[Point]) -> f64 {
    let n = points.len();
    (0..n).map(|i| cross(points[i], points[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Smallest disk containing every point (incremental Welzl construction).
pub fn minimal_enclosing_circle(points: &[Point]) -> (Point, f64) {
    assert!(!points.is_empty(), "empty point set");
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;
    let inside = |c: &Point, r: f64, p: &Point| (p - c).norm() <= r + eps;
    let mut c = points[0];
    let mut r = 0.0;
    for i in 1..points.len() {
        if inside(&c, r, &points[i]) {
            continue;
        }
        c = points[i];
        r = 0.0;
        for j in 0..i {
            if inside(&c, r, &points[j]) {
                continue;
            }
            c = (points[i] + points[j]) * 0.5;
            r = (points[i] - c).norm();
            for k in 0..j {
                if inside(&c, r, &points[k]) {
                    continue;
                }
                if let Some((cc, rr)) = circumcircle(points[i], points[j], points[k]) {
                    c = cc;
                    r = rr;
                }
            }
        }
    }
    (c, r)
}

fn circumcircle(a: Point, b: Point, c: Point) -> Option<(Point, f64)> {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    if d.abs() < f64::EPSILON * (a.norm_squared() + b.norm_squared() + c.norm_squared()) {
        return None;
    }
    let (a2, b2, c2) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    let center = Point::new(ux, uy);
    Some((center, (a - center).norm()))
}

/// Distance from `origin` to the farthest crossing of the node polygon along direction `phi`.
fn ray_radius(nodes: &[Point], origin: Point, phi: f64) -> Option<f64> {
    let dir = Point::new(phi.cos(), phi.sin());
    let n = nodes.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let p = nodes[i] - origin;
        let q = nodes[(i + 1) % n] - origin;
        let e = q - p;
        let den = cross(dir, e);
        if den.abs() < 1e-300 {
            continue;
        }
        let s = cross(p, e) / den;
        let u = cross(p, dir) / den;
        if s >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    }
    best
}

/// Area of the symmetric difference of two domains that are star-shaped about `origin`,
/// integrated over `rays` equispaced directions.
pub fn symmetric_difference_area(a: &BoundaryCurve, b: &BoundaryCurve, origin: Point, rays: usize) -> Result<f64> {
    let mut total = 0.0;
    for m in 0..rays {
        let phi = 2.0 * PI * m as f64 / rays as f64;
        let ra = ray_radius(a.nodes(), origin, phi)
            .ok_or_else(|| Error::Geometry("domain is not star-shaped about the origin".into()))?;
        let rb = ray_radius(b.nodes(), origin, phi)
            .ok_or_else(|| Error::Geometry("domain is not star-shaped about the origin".into()))?;
        total += 0.5 * (ra * ra - rb * rb).abs();
    }
    Ok(total * 2.0 * PI / rays as f64)
}

/// Hausdorff distance between the polygons through the nodes of two curves.
pub fn hausdorff_distance(a: &BoundaryCurve, b: &BoundaryCurve) -> f64 {
    fn one_sided(a: &[Point], b: &[Point]) -> f64 {
        a.iter()
            .map(|p| {
                (0..b.len())
                    .map(|i| {
                        let (s, e) = (b[i], b[(i + 1) % b.len()]);
                        let d = e - s;
                        let t = ((p - s).dot(&d) / d.norm_squared().max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
                        (p - (s + t * d)).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    one_sided(a.nodes(), b.nodes()).max(one_sided(b.nodes(), a.nodes()))
}

/// Closed-form semi-axes and orientation of an ellipse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseAxes {
    /// Semi-axis along `angle`.
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

/// Ellipse whose first-order polarization tensor at contrast `lambda` equals `m`.
///
/// For semi-axes `(a, b)` aligned with the eigenvectors of `m` and `k = (2λ+1)/(2λ−1)`:
/// `m_a = πab(k−1)(a+b)/(a+kb)`, `m_b = πab(k−1)(a+b)/(b+ka)`.
pub fn equivalent_ellipse_axes(m: &Matrix2<f64>, lambda: f64) -> Result<EllipseAxes> {
    if !(lambda.abs() > 0.5) || !lambda.is_finite() {
        return Err(Error::NoEquivalentEllipse(format!("contrast {lambda} must satisfy |λ| > 1/2")));
    }
    let asym = (m[(0, 1)] - m[(1, 0)]).abs();
    let scale = m.norm();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NoEquivalentEllipse("polarization tensor is zero".into()));
    }
    if asym > 1e-6 * scale {
        return Err(Error::NoEquivalentEllipse(format!("tensor is not symmetric (defect {asym:.3e})")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let k = (2.0 * lambda + 1.0) / (2.0 * lambda - 1.0);
    // Eigenvalues share the sign of k − 1 for a genuine ellipse.
    let (mut i1, mut i2) = (0, 1);
    let s = (k - 1.0).signum();
    if s * eig.eigenvalues[0] < s * eig.eigenvalues[1] {
        std::mem::swap(&mut i1, &mut i2);
    }
    let (ma, mb) = (eig.eigenvalues[i1], eig.eigenvalues[i2]);
    if ma * s <= 0.0 || mb * s <= 0.0 {
        return Err(Error::NoEquivalentEllipse(format!(
            "eigenvalues ({ma:.3e}, {mb:.3e}) are inconsistent with contrast {lambda}"
        )));
    }
    // ρ = m_a/m_b = (b + ka)/(a + kb); solve for t = a/b.
    let rho = ma / mb;
    let lo = k.min(1.0 / k);
    let hi = k.max(1.0 / k);
    if rho < lo || rho > hi {
        return Err(Error::NoEquivalentEllipse(format!(
            "eigenvalue ratio {rho:.6} outside the admissible range [{lo:.6}, {hi:.6}]"
        )));
    }
    let t = if (k - rho).abs() < 1e-15 { f64::INFINITY } else { (rho * k - 1.0) / (k - rho) };
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NoEquivalentEllipse(format!("degenerate axis ratio {t}")));
    }
    // m_a = π b² t (k−1)(t+1)/(t+k)
    let b2 = ma * (t + k) / (PI * t * (k - 1.0) * (t + 1.0));
    if !(b2 > 0.0) {
        return Err(Error::NoEquivalentEllipse("non-positive axis".into()));
    }
    let b = b2.sqrt();
    let v = eig.eigenvectors.column(i1);
    Ok(EllipseAxes { a: t * b, b, angle: v[1].atan2(v[0]) })
}

/// Star-shaped representation of the equivalent ellipse, centered at the origin.
pub fn equivalent_ellipse(m: &Matrix2<f64>, lambda: f64, order: usize) -> Result<StarShape> {
    let ax = equivalent_ellipse_axes(m, lambda)?;
    StarShape::ellipse([0.0, 0.0], ax.a, ax.b, ax.angle, order)
}
