use super::Vec2;
use crate::error::{domain, Error, Result};

/// Non-decreasing, clamped knot sequence on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector(Vec<f64>);

impl KnotVector {
    /// Checks monotonicity, the [0, 1] range and degree-`degree` clamping.
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return domain(format!("{} knots cannot clamp a degree-{degree} curve", knots.len()));
        }
        if knots.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return domain("knots must lie in [0, 1]");
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return domain("knot vector must be non-decreasing");
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if knots[..=degree].iter().any(|&t| t != first) || knots[knots.len() - degree - 1..].iter().any(|&t| t != last) {
            return domain("knot vector is not clamped");
        }
        Ok(Self(knots))
    }

    /// `[0,0,0,¼,¼,½,½,¾,¾,1,1,1]`: closed quadratic with a double knot at
    /// every quarter.
    pub fn quarter_double() -> Self {
        Self(vec![0.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn is_interior_knot(&self, u: f64) -> bool {
        let first = self.0[0];
        let last = self.0[self.0.len() - 1];
        u > first && u < last && self.0.contains(&u)
    }
}

/// Which one-sided limit a degree-0 indicator takes at a knot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    /// `[t_i, t_{i+1})`, with the last non-empty span closed at the final knot.
    Right,
    /// `(t_i, t_{i+1}]`, with the first non-empty span closed at the first knot.
    Left,
}

fn indicator(i: usize, u: f64, t: &[f64], side: Side) -> f64 {
    let (a, b) = (t[i], t[i + 1]);
    if a == b {
        return 0.0;
    }
    let inside = match side {
        Side::Right => (a <= u && u < b) || (u == b && b == t[t.len() - 1]),
        Side::Left => (a < u && u <= b) || (u == a && a == t[0]),
    };
    if inside {
        1.0
    } else {
        0.0
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn cox_de_boor(i: usize, k: usize, u: f64, t: &[f64], side: Side) -> f64 {
    if k == 0 {
        return indicator(i, u, t, side);
    }
    let left = ratio(u - t[i], t[i + k] - t[i]);
    let right = ratio(t[i + k + 1] - u, t[i + k + 1] - t[i + 1]);
    let mut v = 0.0;
    if left != 0.0 {
        v += left * cox_de_boor(i, k - 1, u, t, side);
    }
    if right != 0.0 {
        v += right * cox_de_boor(i + 1, k - 1, u, t, side);
    }
    v
}

fn cox_de_boor_derivative(i: usize, k: usize, u: f64, t: &[f64], side: Side) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    kf * ratio(cox_de_boor(i, k - 1, u, t, side), t[i + k] - t[i])
        - kf * ratio(cox_de_boor(i + 1, k - 1, u, t, side), t[i + k + 1] - t[i + 1])
}

/// B-spline basis `N_{i,k}(u)` by the Cox–de Boor recursion, with 0/0 := 0.
pub fn basis(i: usize, k: usize, u: f64, knots: &KnotVector) -> Result<f64> {
    let t = knots.as_slice();
    if !(0.0..=1.0).contains(&u) {
        return domain(format!("parameter u = {u} outside [0, 1]"));
    }
    if i + k + 1 >= t.len() {
        return domain(format!("basis index {i} invalid for degree {k} with {} knots", t.len()));
    }
    Ok(cox_de_boor(i, k, u, t, Side::Right))
}

/// Rational B-spline curve in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct NurbsCurve {
    degree: usize,
    control_points: Vec<Vec2>,
    weights: Vec<f64>,
    knots: KnotVector,
    /// Template magnitudes the curve was built from, if any.
    pub(crate) magnitudes: Option<[f64; 16]>,
}

impl NurbsCurve {
    pub fn new(degree: usize, control_points: Vec<Vec2>, weights: Vec<f64>, knots: KnotVector) -> Result<Self> {
        if weights.len() != control_points.len() {
            return domain("one weight per control point required");
        }
        if knots.len() != control_points.len() + degree + 1 {
            return domain(format!(
                "knot count {} != control points {} + degree {} + 1",
                knots.len(),
                control_points.len(),
                degree
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return domain("weights must be strictly positive");
        }
        if control_points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return domain("control points must be finite");
        }
        Ok(Self { degree, control_points, weights, knots, magnitudes: None })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn control_points(&self) -> &[Vec2] {
        &self.control_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn is_closed(&self) -> bool {
        self.control_points.first() == self.control_points.last()
    }

    fn check_param(u: f64) -> Result<()> {
        if (0.0..=1.0).contains(&u) {
            Ok(())
        } else {
            domain(format!("parameter u = {u} outside [0, 1]"))
        }
    }

    /// Returns (A, W, A', W') with C = A / W.
    fn homogeneous(&self, u: f64, side: Side, derivative: bool) -> (Vec2, f64, Vec2, f64) {
        let t = self.knots.as_slice();
        let (mut a, mut w, mut da, mut dw) = (Vec2::ZERO, 0.0, Vec2::ZERO, 0.0);
        for (i, (p, &wi)) in self.control_points.iter().zip(&self.weights).enumerate() {
            let n = cox_de_boor(i, self.degree, u, t, side);
            a = a + *p * (wi * n);
            w += wi * n;
            if derivative {
                let dn = cox_de_boor_derivative(i, self.degree, u, t, side);
                da = da + *p * (wi * dn);
                dw += wi * dn;
            }
        }
        (a, w, da, dw)
    }

    /// Curve point `Σ w_i N_i C_i / Σ w_j N_j`.
    pub fn evaluate(&self, u: f64) -> Result<Vec2> {
        Self::check_param(u)?;
        let (a, w, _, _) = self.homogeneous(u, Side::Right, false);
        if w <= 0.0 {
            return Err(Error::DegenerateGeometry(format!("rational denominator {w} at u = {u}")));
        }
        Ok(a / w)
    }

    /// dC/du. At interior knots the limit from below is taken; at u = 0 the
    /// limit from above.
    pub fn tangent(&self, u: f64) -> Result<Vec2> {
        Self::check_param(u)?;
        let side = if u == 0.0 { Side::Right } else { Side::Left };
        let (a, w, da, dw) = self.homogeneous(u, side, true);
        if w <= 0.0 {
            return Err(Error::DegenerateGeometry(format!("rational denominator {w} at u = {u}")));
        }
        let c = a / w;
        Ok((da - c * dw) / w)
    }

    /// Unit tangent rotated by −90°, pointing out of a counter-clockwise curve.
    pub fn outward_normal(&self, u: f64) -> Result<Vec2> {
        let t = self.tangent(u)?;
        let len = t.norm();
        if len == 0.0 || !len.is_finite() {
            return Err(Error::DegenerateGeometry(format!("zero tangent at u = {u}")));
        }
        Ok(Vec2::new(t.y / len, -t.x / len))
    }

    pub(crate) fn is_interior_knot(&self, u: f64) -> bool {
        self.knots.is_interior_knot(u)
    }
}
