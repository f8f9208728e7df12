//! The 16-parameter octagon template mapping shape vectors to closed curves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::nurbs::{KnotVector, NurbsCurve};
use super::Vec2;
use crate::error::{domain, Error, Result};

/// Where every template shape is centred inside the unit square.
pub const CENTER: Vec2 = Vec2::new(0.5, 0.5);

/// Magnitude range used for generated shapes.
pub const MAGNITUDE_RANGE: (f64, f64) = (0.05, 0.15);

/// Octant signs of control points C_0..C_7; a zero marks a coordinate that
/// the point does not use (on-axis points).
const SIGNS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (1.0, 1.0),
    (0.0, 1.0),
    (-1.0, 1.0),
    (-1.0, 0.0),
    (-1.0, -1.0),
    (0.0, -1.0),
    (1.0, -1.0),
];

/// Sixteen control-point offsets: 8 along x, then 8 along y. The network
/// sees all sixteen; the on-axis points ignore their off-axis slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeVector {
    pub cx: [f64; 8],
    pub cy: [f64; 8],
}

impl ShapeVector {
    pub fn uniform(m: f64) -> Self {
        Self { cx: [m; 8], cy: [m; 8] }
    }

    /// `[cx0..cx7, cy0..cy7]`
    pub fn to_array(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        out[..8].copy_from_slice(&self.cx);
        out[8..].copy_from_slice(&self.cy);
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 16 {
            return domain(format!("shape vector needs 16 values, got {}", v.len()));
        }
        let mut s = Self { cx: [0.0; 8], cy: [0.0; 8] };
        s.cx.copy_from_slice(&v[..8]);
        s.cy.copy_from_slice(&v[8..]);
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.cx.iter().chain(&self.cy).all(|v| v.is_finite())
    }
}

/// Builds the closed quadratic curve of a shape vector.
pub fn shape_from_vector(v: &ShapeVector) -> Result<NurbsCurve> {
    if !v.is_finite() {
        return domain("shape vector has non-finite entries");
    }
    let mut pts: Vec<Vec2> = (0..8)
        .map(|i| {
            let (sx, sy) = SIGNS[i];
            CENTER + Vec2::new(sx * v.cx[i].abs(), sy * v.cy[i].abs())
        })
        .collect();
    pts.push(pts[0]);
    let mut curve = NurbsCurve::new(2, pts, vec![1.0; 9], KnotVector::quarter_double())?;
    curve.magnitudes = Some(v.to_array().map(f64::abs));
    Ok(curve)
}

/// Recovers the template magnitudes of a curve. Curves made by
/// [`shape_from_vector`] return their magnitudes exactly; for other curves
/// the offsets are measured from the control points and slots the geometry
/// does not use take the on-axis magnitude of the same point.
pub fn vector_from_shape(curve: &NurbsCurve) -> Result<ShapeVector> {
    if let Some(m) = curve.magnitudes {
        return ShapeVector::from_slice(&m);
    }
    let pts = curve.control_points();
    if pts.len() != 9 || !curve.is_closed() {
        return domain("not a closed 9-point template curve");
    }
    let mut v = ShapeVector { cx: [0.0; 8], cy: [0.0; 8] };
    for i in 0..8 {
        let d = pts[i] - CENTER;
        let (sx, sy) = SIGNS[i];
        v.cx[i] = d.x.abs();
        v.cy[i] = d.y.abs();
        if sx == 0.0 {
            v.cx[i] = v.cy[i];
        }
        if sy == 0.0 {
            v.cy[i] = v.cx[i];
        }
    }
    Ok(v)
}

/// Sixteen magnitudes drawn independently from [`MAGNITUDE_RANGE`].
pub fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> ShapeVector {
    let (lo, hi) = MAGNITUDE_RANGE;
    let mut v = ShapeVector { cx: [0.0; 8], cy: [0.0; 8] };
    for x in v.cx.iter_mut() {
        *x = rng.gen_range(lo..=hi);
    }
    for y in v.cy.iter_mut() {
        *y = rng.gen_range(lo..=hi);
    }
    v
}

/// Result of fitting the template to a circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleFit {
    pub shape: ShapeVector,
    pub radius: f64,
    /// Largest |‖C(u) − center‖ − r| over 1000 uniform samples.
    pub max_radial_deviation: f64,
}

impl CircleFit {
    /// True when some magnitude exceeds the generated-shape range.
    pub fn out_of_range(&self) -> bool {
        self.shape.to_array().iter().any(|m| *m < MAGNITUDE_RANGE.0 || *m > MAGNITUDE_RANGE.1)
    }
}

/// Active (control point, axis) slots; axis 0 = x, 1 = y.
const ACTIVE: [(usize, usize); 12] =
    [(0, 0), (1, 0), (1, 1), (2, 1), (3, 0), (3, 1), (4, 0), (5, 0), (5, 1), (6, 1), (7, 0), (7, 1)];

const FIT_SAMPLES: usize = 360;

/// Least-squares template fit to the circle of radius `r` about [`CENTER`].
pub fn circle_shape(r: f64) -> Result<CircleFit> {
    if !(r > 0.0 && r <= 0.2) {
        return domain(format!("circle radius {r} outside (0, 0.2]"));
    }
    let knots = KnotVector::quarter_double();
    // basis rows at the fit parameters, C_8 folded into C_0
    let basis: Vec<[f64; 8]> = (0..FIT_SAMPLES)
        .map(|j| {
            let u = j as f64 / FIT_SAMPLES as f64;
            let mut row = [0.0; 8];
            for (i, b) in row.iter_mut().enumerate() {
                *b = super::nurbs::basis(i, 2, u, &knots).unwrap();
            }
            row[0] += super::nurbs::basis(8, 2, u, &knots).unwrap();
            row
        })
        .collect();

    let mut params = DVector::from_element(ACTIVE.len(), r);
    let point = |params: &DVector<f64>, row: &[f64; 8]| {
        let mut p = Vec2::ZERO;
        for (k, &(i, axis)) in ACTIVE.iter().enumerate() {
            let (sx, sy) = SIGNS[i];
            let d = if axis == 0 { Vec2::new(sx * params[k], 0.0) } else { Vec2::new(0.0, sy * params[k]) };
            p = p + d * row[i];
        }
        p
    };

    for _ in 0..100 {
        let mut jac = DMatrix::zeros(FIT_SAMPLES, ACTIVE.len());
        let mut res = DVector::zeros(FIT_SAMPLES);
        for (s, row) in basis.iter().enumerate() {
            let p = point(&params, row);
            let dist = p.norm();
            res[s] = dist - r;
            let dir = p / dist;
            for (k, &(i, axis)) in ACTIVE.iter().enumerate() {
                let (sx, sy) = SIGNS[i];
                jac[(s, k)] = if axis == 0 { dir.x * sx * row[i] } else { dir.y * sy * row[i] };
            }
        }
        let jt = jac.transpose();
        let step = (&jt * &jac)
            .lu()
            .solve(&(-(&jt * &res)))
            .ok_or_else(|| Error::DegenerateGeometry("singular circle-fit normal equations".into()))?;
        params += &step;
        if step.amax() < 1e-15 * r {
            break;
        }
    }

    let mut shape = ShapeVector { cx: [0.0; 8], cy: [0.0; 8] };
    for (k, &(i, axis)) in ACTIVE.iter().enumerate() {
        if axis == 0 {
            shape.cx[i] = params[k];
        } else {
            shape.cy[i] = params[k];
        }
    }
    for i in [0, 4] {
        shape.cy[i] = shape.cx[i];
    }
    for i in [2, 6] {
        shape.cx[i] = shape.cy[i];
    }

    let curve = shape_from_vector(&shape)?;
    let mut dev = 0.0f64;
    for j in 0..1000 {
        let p = curve.evaluate(j as f64 / 1000.0)?;
        dev = dev.max(((p - CENTER).norm() - r).abs());
    }
    if dev > 0.05 * r {
        return Err(Error::FitFailure { radius: r, deviation: dev });
    }
    Ok(CircleFit { shape, radius: r, max_radial_deviation: dev })
}
