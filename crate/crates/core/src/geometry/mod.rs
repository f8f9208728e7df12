//! NURBS scatterer boundaries: curve evaluation, the shape template,
//! boundary sampling and membership tests.

mod nurbs;
mod template;
mod vec2;

pub use nurbs::{basis, KnotVector, NurbsCurve};
pub use template::{
    circle_shape, random_shape, shape_from_vector, vector_from_shape, CircleFit, ShapeVector, CENTER,
    MAGNITUDE_RANGE,
};
pub use vec2::Vec2;

use crate::error::{domain, Result};

/// Offset applied to sample parameters that land on an interior knot.
pub const KNOT_OFFSET: f64 = 1e-9;

/// Segments in the membership polygon.
pub const POLYLINE_SEGMENTS: usize = 512;

/// Points closer than this to the polygon count as inside.
pub const ON_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub position: Vec2,
    pub outward_normal: Vec2,
    /// Nominal parameter `j / N`.
    pub u: f64,
}

/// `n` samples at `u_j = j / n`. Position is taken at `u_j`; the normal at
/// an interior knot is evaluated at `u_j + 1e-9`.
pub fn sample_boundary(curve: &NurbsCurve, n: usize) -> Result<Vec<BoundarySample>> {
    if n < 3 {
        return domain(format!("need at least 3 boundary samples, got {n}"));
    }
    (0..n)
        .map(|j| {
            let u = j as f64 / n as f64;
            let un = if curve.is_interior_knot(u) { u + KNOT_OFFSET } else { u };
            Ok(BoundarySample { position: curve.evaluate(u)?, outward_normal: curve.outward_normal(un)?, u })
        })
        .collect()
}

/// Closed polygonal approximation of a curve used for inside/outside tests.
#[derive(Clone, Debug)]
pub struct Polyline {
    vertices: Vec<Vec2>,
    lo: Vec2,
    hi: Vec2,
}

impl Polyline {
    pub fn from_curve(curve: &NurbsCurve, segments: usize) -> Result<Self> {
        if segments < 3 {
            return domain("polyline needs at least 3 segments");
        }
        let vertices = (0..segments)
            .map(|j| curve.evaluate(j as f64 / segments as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_vertices(vertices))
    }

    pub fn from_vertices(vertices: Vec<Vec2>) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        Self { vertices, lo, hi }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let ab = b - a;
                let len2 = ab.dot(ab);
                let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (p - (a + ab * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd ray test along +x; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let tol = ON_BOUNDARY_TOL;
        if p.x < self.lo.x - tol || p.x > self.hi.x + tol || p.y < self.lo.y - tol || p.y > self.hi.y + tol {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside || self.distance(p) <= tol
    }

    /// Total edge length of the closed polygon.
    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }
}

/// Whether `x` lies inside (or on) the scatterer bounded by `curve`.
/// Builds a fresh polygon; reuse a [`Polyline`] for many queries.
pub fn point_in_shape(curve: &NurbsCurve, x: Vec2) -> bool {
    match Polyline::from_curve(curve, POLYLINE_SEGMENTS) {
        Ok(poly) => poly.contains(x),
        Err(_) => false,
    }
}

/// Membership of many points in the shape of `v`, sharing one polygon.
pub fn point_in_shape_many(v: &ShapeVector, points: &[Vec2]) -> Result<Vec<bool>> {
    let poly = Polyline::from_curve(&shape_from_vector(v)?, POLYLINE_SEGMENTS)?;
    Ok(points.iter().map(|p| poly.contains(*p)).collect())
}
