//! Field comparison metrics: relative L2, R² and point-wise error.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Complex values on a list of points. `None` marks a masked point (inside
/// the scatterer). Grid fields store node `(i, j)` at index `j * n + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub points: Vec<Vec2>,
    pub values: Vec<Option<Complex64>>,
    /// Nodes per side when the points form a square grid.
    pub grid: Option<usize>,
}

/// Nodes of the `n × n` grid over [0, 1]², spacing `1 / (n − 1)`.
pub fn grid_points(n: usize) -> Vec<Vec2> {
    let h = 1.0 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            pts.push(Vec2::new(i as f64 * h, j as f64 * h));
        }
    }
    pts
}

impl ComplexField {
    pub fn new(points: Vec<Vec2>, values: Vec<Option<Complex64>>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Pairing(format!("{} points but {} values", points.len(), values.len())));
        }
        Ok(Self { points, values, grid: None })
    }

    pub fn on_grid(n: usize, values: Vec<Option<Complex64>>) -> Result<Self> {
        let mut f = Self::new(grid_points(n), values)?;
        f.grid = Some(n);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Unmasked `(point, value)` pairs in order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (Vec2, Complex64)> + '_ {
        self.points.iter().zip(&self.values).filter_map(|(p, v)| v.map(|v| (*p, v)))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { points: self.points.clone(), values: self.values.iter().map(|v| v.map(&f)).collect(), grid: self.grid }
    }

    /// Largest modulus over unmasked points.
    pub fn max_abs(&self) -> f64 {
        self.iter_valid().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }
}

/// Predicted and reference values at the same points, masked points of
/// either field removed.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub points: Vec<Vec2>,
    pub predicted: Vec<Complex64>,
    pub reference: Vec<Complex64>,
}

impl FieldPair {
    pub fn new(predicted: &ComplexField, reference: &ComplexField) -> Result<Self> {
        if predicted.len() != reference.len() {
            return Err(Error::Pairing(format!(
                "predicted field has {} points, reference {}",
                predicted.len(),
                reference.len()
            )));
        }
        let mut pair = Self { points: Vec::new(), predicted: Vec::new(), reference: Vec::new() };
        for (i, (a, b)) in predicted.points.iter().zip(&reference.points).enumerate() {
            if a != b {
                return Err(Error::Pairing(format!("point {i} differs: ({}, {}) vs ({}, {})", a.x, a.y, b.x, b.y)));
            }
            if let (Some(p), Some(r)) = (predicted.values[i], reference.values[i]) {
                pair.points.push(*a);
                pair.predicted.push(p);
                pair.reference.push(r);
            }
        }
        Ok(pair)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// ‖ref − pred‖₂ / ‖ref‖₂ over the stacked real and imaginary parts.
pub fn relative_l2(pair: &FieldPair) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, r) in pair.predicted.iter().zip(&pair.reference) {
        num += (r - p).norm_sqr();
        den += r.norm_sqr();
    }
    if den.is_nan() || den <= 0.0 {
        return Err(Error::UndefinedMetric("reference field has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Coefficient of determination over the stacked 2N real components, with a
/// single mean taken over all of them.
pub fn r2_score(pair: &FieldPair) -> Result<f64> {
    let n = 2 * pair.len();
    if n == 0 {
        return Err(Error::UndefinedMetric("no unmasked points".into()));
    }
    let mean = pair.reference.iter().map(|r| r.re + r.im).sum::<f64>() / n as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (p, r) in pair.predicted.iter().zip(&pair.reference) {
        ss_res += (r - p).norm_sqr();
        ss_tot += (r.re - mean).powi(2) + (r.im - mean).powi(2);
    }
    if ss_tot.is_nan() || ss_tot <= 0.0 {
        return Err(Error::UndefinedMetric("reference field has zero variance".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// |ref − pred| at every paired point.
pub fn pointwise_error(pair: &FieldPair) -> Vec<f64> {
    pair.predicted.iter().zip(&pair.reference).map(|(p, r)| (r - p).norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(values: &[(f64, f64)]) -> ComplexField {
        let pts = (0..values.len()).map(|i| Vec2::new(i as f64, 0.0)).collect();
        ComplexField::new(pts, values.iter().map(|&(a, b)| Some(Complex64::new(a, b))).collect()).unwrap()
    }

    fn pair(p: &[(f64, f64)], r: &[(f64, f64)]) -> FieldPair {
        FieldPair::new(&field(p), &field(r)).unwrap()
    }

    const REF: [(f64, f64); 4] = [(1.0, -2.0), (0.5, 0.25), (-3.0, 1.0), (2.0, 2.0)];

    #[test]
    fn relative_l2_examples() {
        assert_eq!(relative_l2(&pair(&REF, &REF)).unwrap(), 0.0);
        assert_eq!(relative_l2(&pair(&[(0.0, 0.0); 4], &REF)).unwrap(), 1.0);
        assert!(matches!(relative_l2(&pair(&REF, &[(0.0, 0.0); 4])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&pair(&REF, &REF)).unwrap(), 1.0);
        let n = 8.0;
        let mean = REF.iter().map(|(a, b)| a + b).sum::<f64>() / n;
        let flat = [(mean, mean); 4];
        assert!(r2_score(&pair(&flat, &REF)).unwrap().abs() < 1e-15);
        assert!(r2_score(&pair(&REF, &[(1.0, 1.0); 4])).is_err());
    }

    #[test]
    fn pointwise_examples() {
        assert!(pointwise_error(&pair(&REF, &REF)).iter().all(|e| *e == 0.0));
        let shifted: Vec<_> = REF.iter().map(|(a, b)| (a + 0.125, *b)).collect();
        for e in pointwise_error(&pair(&shifted, &REF)) {
            assert!((e - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn pairing_checks_points_and_masks() {
        let a = field(&REF);
        let mut b = field(&REF);
        b.points[2].x += 1e-12;
        assert!(matches!(FieldPair::new(&a, &b), Err(Error::Pairing(_))));
        assert!(FieldPair::new(&a, &field(&REF[..3])).is_err());
        let mut m = field(&REF);
        m.values[1] = None;
        let p = FieldPair::new(&a, &m).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.points[1], a.points[2]);
    }

    #[test]
    fn grid_layout() {
        let pts = grid_points(3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], Vec2::new(0.5, 0.0));
        assert_eq!(pts[3], Vec2::new(0.0, 0.5));
        assert_eq!(pts[8], Vec2::new(1.0, 1.0));
    }

    fn values() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)
    }

    proptest! {
        #[test]
        fn l2_scale_equivariant(r in values(), noise in values(), c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
            let n = r.len().min(noise.len());
            let r = &r[..n];
            let p: Vec<_> = r.iter().zip(&noise).map(|(a, b)| (a.0 + 0.1 * b.0, a.1 + 0.1 * b.1)).collect();
            prop_assume!(r.iter().any(|(a, b)| *a != 0.0 || *b != 0.0));
            let base = relative_l2(&pair(&p, r)).unwrap();
            let sp: Vec<_> = p.iter().map(|(a, b)| (a * c, b * c)).collect();
            let sr: Vec<_> = r.iter().map(|(a, b)| (a * c, b * c)).collect();
            prop_assert!((relative_l2(&pair(&sp, &sr)).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
        }

        #[test]
        fn r2_translation_invariant(r in values(), noise in values(), t in -3.0f64..3.0) {
            let n = r.len().min(noise.len());
            let r = &r[..n];
            let p: Vec<_> = r.iter().zip(&noise).map(|(a, b)| (a.0 + 0.1 * b.0, a.1 + 0.1 * b.1)).collect();
            let base = r2_score(&pair(&p, r));
            prop_assume!(base.is_ok());
            let tp: Vec<_> = p.iter().map(|(a, b)| (a + t, b + t)).collect();
            let tr: Vec<_> = r.iter().map(|(a, b)| (a + t, b + t)).collect();
            let moved = r2_score(&pair(&tp, &tr)).unwrap();
            prop_assert!((moved - base.unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn pointwise_symmetric_and_bounded(a in values(), b in values()) {
            let n = a.len().min(b.len());
            let ab = pointwise_error(&pair(&a[..n], &b[..n]));
            let ba = pointwise_error(&pair(&b[..n], &a[..n]));
            prop_assert_eq!(&ab, &ba);
            let l2 = ab.iter().map(|e| e * e).sum::<f64>().sqrt();
            let max = ab.iter().cloned().fold(0.0, f64::max);
            prop_assert!(max >= l2 / (n as f64).sqrt() * (1.0 - 1e-12));
        }
    }
}
