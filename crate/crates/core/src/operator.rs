//! Branch/trunk assembly of the complex scattered-pressure operator.

use std::sync::Mutex;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::geometry::{point_in_shape_many, ShapeVector, Vec2};
use crate::metrics::{grid_points, ComplexField};
use crate::net::{JetBatch, JetOrder, ResNetParams, ResNetPlan};
use crate::physics::PhysicsConfig;

pub type ComplexValue = Complex64;

/// Points per trunk evaluation chunk in batched prediction.
pub const PREDICT_CHUNK: usize = 256;

/// Branch cache capacity.
pub const CACHE_CAPACITY: usize = 128;

/// Value, gradient and Laplacian of the complex prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComplexJet {
    pub value: Complex64,
    pub grad: [Complex64; 2],
    pub laplacian: Complex64,
}

impl ComplexJet {
    pub fn normal_derivative(&self, n: Vec2) -> Complex64 {
        self.grad[0] * n.x + self.grad[1] * n.y
    }
}

/// Affine input maps: network input = (raw − center) · scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub branch_center: f64,
    pub branch_scale: f64,
    pub trunk_center: f64,
    pub trunk_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { branch_center: 0.1, branch_scale: 20.0, trunk_center: 0.0, trunk_scale: 1.0 }
    }
}

/// Trainable operator: G(v)(x) = Σ_j β_j(v) τ_j(x), first half of the
/// products summed into the real part, second half into the imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorParams {
    pub branch: ResNetParams,
    pub trunk: ResNetParams,
    pub normalization: Normalization,
    pub physics: PhysicsConfig,
}

/// Parameter gradient of an [`OperatorParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorGrad {
    pub branch: ResNetParams,
    pub trunk: ResNetParams,
}

impl OperatorGrad {
    pub fn zeros_like(p: &OperatorParams) -> Self {
        Self { branch: ResNetParams::zeros(&p.branch.plan), trunk: ResNetParams::zeros(&p.trunk.plan) }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        self.branch.add_scaled(&other.branch, c);
        self.trunk.add_scaled(&other.trunk, c);
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.branch.dot(&other.branch) + self.trunk.dot(&other.trunk)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

impl OperatorParams {
    pub fn new(
        branch: ResNetParams,
        trunk: ResNetParams,
        normalization: Normalization,
        physics: PhysicsConfig,
    ) -> Result<Self> {
        branch.plan.validate()?;
        trunk.plan.validate()?;
        if branch.plan.input_dim != 16 {
            return domain(format!("branch input must be 16-dimensional, got {}", branch.plan.input_dim));
        }
        if trunk.plan.input_dim != 2 {
            return domain(format!("trunk input must be 2-dimensional, got {}", trunk.plan.input_dim));
        }
        if branch.plan.output_dim != trunk.plan.output_dim || !branch.plan.output_dim.is_multiple_of(2) {
            return domain(format!(
                "branch and trunk outputs must match and be even, got {} and {}",
                branch.plan.output_dim, trunk.plan.output_dim
            ));
        }
        Ok(Self { branch, trunk, normalization, physics })
    }

    pub fn init<R: Rng + ?Sized>(
        branch_plan: &ResNetPlan,
        trunk_plan: &ResNetPlan,
        physics: PhysicsConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let branch = ResNetParams::init(branch_plan, rng)?;
        let trunk = ResNetParams::init(trunk_plan, rng)?;
        Self::new(branch, trunk, Normalization::default(), physics)
    }

    /// Basis functions per component (half the network output).
    pub fn basis_size(&self) -> usize {
        self.trunk.plan.output_dim / 2
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    pub fn branch_input(&self, v: &ShapeVector) -> [f64; 16] {
        let n = &self.normalization;
        v.to_array().map(|m| (m - n.branch_center) * n.branch_scale)
    }

    pub fn trunk_input(&self, x: Vec2) -> [f64; 2] {
        let n = &self.normalization;
        [(x.x - n.trunk_center) * n.trunk_scale, (x.y - n.trunk_center) * n.trunk_scale]
    }

    /// Branch outputs β for one shape.
    pub fn coefficients(&self, v: &ShapeVector) -> Result<Vec<f64>> {
        if !v.is_finite() {
            return domain("shape vector has non-finite entries");
        }
        self.branch.forward(&self.branch_input(v))
    }

    /// Branch outputs for several shapes, one row per shape.
    pub fn coefficients_batch(&self, vs: &[ShapeVector]) -> Result<Vec<Vec<f64>>> {
        let flat: Vec<f64> = vs.iter().flat_map(|v| self.branch_input(v)).collect();
        let out = self.branch.forward_batch(&JetBatch::from_values(16, &flat))?;
        Ok(out.data.chunks(out.dim).map(<[f64]>::to_vec).collect())
    }

    /// Seeds trunk jets for raw coordinates; the derivative channels carry
    /// the normalization scale so jets are with respect to raw x.
    pub(crate) fn trunk_seed(&self, order: JetOrder, points: &[Vec2]) -> JetBatch {
        let inputs: Vec<[f64; 2]> = points.iter().map(|p| self.trunk_input(*p)).collect();
        let mut seed = JetBatch::seed_points(order, &inputs);
        let s = self.normalization.trunk_scale;
        if s != 1.0 && order != JetOrder::Value {
            for c in 1..3 {
                seed.channel_mut(c).iter_mut().for_each(|d| *d *= s);
            }
        }
        seed
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.trunk.plan.output_dim {
            return domain(format!("expected {} coefficients, got {}", self.trunk.plan.output_dim, beta.len()));
        }
        Ok(())
    }

    fn combine(&self, beta: &[f64], tau: &[f64]) -> Complex64 {
        let p = self.basis_size();
        Complex64::new(dot(&beta[..p], &tau[..p]), dot(&beta[p..], &tau[p..]))
    }

    pub fn predict(&self, v: &ShapeVector, x: Vec2) -> Result<Complex64> {
        let beta = self.coefficients(v)?;
        self.predict_with(&beta, x)
    }

    /// Prediction from given branch coefficients, bypassing the branch.
    pub fn predict_with(&self, beta: &[f64], x: Vec2) -> Result<Complex64> {
        Ok(self.predict_points_with(beta, &[x])?[0])
    }

    pub fn predict_jet(&self, v: &ShapeVector, x: Vec2) -> Result<ComplexJet> {
        let beta = self.coefficients(v)?;
        self.predict_jet_with(&beta, x)
    }

    pub fn predict_jet_with(&self, beta: &[f64], x: Vec2) -> Result<ComplexJet> {
        Ok(self.predict_jets_with(beta, &[x])?[0])
    }

    /// Values at many points for fixed coefficients.
    pub fn predict_points_with(&self, beta: &[f64], points: &[Vec2]) -> Result<Vec<Complex64>> {
        self.check_beta(beta)?;
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return domain("non-finite query point");
        }
        let chunks: Vec<Result<Vec<Complex64>>> = points
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let tau = self.trunk.forward_batch(&self.trunk_seed(JetOrder::Value, chunk))?;
                Ok(tau.data.chunks(tau.dim).map(|t| self.combine(beta, t)).collect())
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// Jets at many points for fixed coefficients.
    pub fn predict_jets_with(&self, beta: &[f64], points: &[Vec2]) -> Result<Vec<ComplexJet>> {
        self.check_beta(beta)?;
        let chunks: Vec<Result<Vec<ComplexJet>>> = points
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let tau = self.trunk.forward_batch(&self.trunk_seed(JetOrder::Laplacian, chunk))?;
                let dim = tau.dim;
                Ok((0..chunk.len())
                    .map(|r| {
                        let ch = |c: usize| &tau.channel(c)[r * dim..(r + 1) * dim];
                        ComplexJet {
                            value: self.combine(beta, ch(0)),
                            grad: [self.combine(beta, ch(1)), self.combine(beta, ch(2))],
                            laplacian: self.combine(beta, ch(3)),
                        }
                    })
                    .collect())
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    /// Field at arbitrary points with one branch evaluation; nothing masked.
    pub fn predict_field(&self, v: &ShapeVector, points: &[Vec2]) -> Result<ComplexField> {
        let beta = self.coefficients(v)?;
        let values = self.predict_points_with(&beta, points)?;
        ComplexField::new(points.to_vec(), values.into_iter().map(Some).collect())
    }

    /// Field on the `n × n` grid over [0, 1]², points inside the scatterer masked.
    pub fn predict_grid(&self, v: &ShapeVector, n: usize) -> Result<ComplexField> {
        if n < 2 {
            return domain("grid needs at least 2 nodes per side");
        }
        let pts = grid_points(n);
        let inside = point_in_shape_many(v, &pts)?;
        let fluid: Vec<Vec2> = pts.iter().zip(&inside).filter(|(_, s)| !**s).map(|(p, _)| *p).collect();
        let beta = self.coefficients(v)?;
        let mut vals = self.predict_points_with(&beta, &fluid)?.into_iter();
        let values = inside.iter().map(|s| if *s { None } else { vals.next() }).collect();
        ComplexField::on_grid(n, values)
    }

    /// Prediction front end with a branch cache bound to these parameters.
    pub fn predictor(&self) -> Predictor<'_> {
        Predictor { params: self, cache: Mutex::new(BranchCache::default()) }
    }
}

#[derive(Default)]
struct BranchCache {
    /// Most recently used last.
    entries: Vec<([u64; 16], std::sync::Arc<Vec<f64>>)>,
    hits: usize,
}

/// Evaluates predictions while remembering branch outputs of the last
/// [`CACHE_CAPACITY`] shapes, keyed by their exact bit patterns. The borrow
/// of the parameters keeps cached values valid.
pub struct Predictor<'a> {
    params: &'a OperatorParams,
    cache: Mutex<BranchCache>,
}

impl<'a> Predictor<'a> {
    pub fn params(&self) -> &'a OperatorParams {
        self.params
    }

    pub fn coefficients(&self, v: &ShapeVector) -> Result<std::sync::Arc<Vec<f64>>> {
        let key = v.to_array().map(f64::to_bits);
        {
            let mut c = self.cache.lock().unwrap();
            if let Some(pos) = c.entries.iter().position(|(k, _)| *k == key) {
                let e = c.entries.remove(pos);
                let beta = e.1.clone();
                c.entries.push(e);
                c.hits += 1;
                return Ok(beta);
            }
        }
        let beta = std::sync::Arc::new(self.params.coefficients(v)?);
        let mut c = self.cache.lock().unwrap();
        if c.entries.len() == CACHE_CAPACITY {
            c.entries.remove(0);
        }
        c.entries.push((key, beta.clone()));
        Ok(beta)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache.lock().unwrap().hits
    }

    pub fn cached_shapes(&self) -> usize {
        self.cache.lock().unwrap().entries.len()
    }

    pub fn predict(&self, v: &ShapeVector, x: Vec2) -> Result<Complex64> {
        self.params.predict_with(&self.coefficients(v)?, x)
    }

    pub fn predict_jet(&self, v: &ShapeVector, x: Vec2) -> Result<ComplexJet> {
        self.params.predict_jet_with(&self.coefficients(v)?, x)
    }

    pub fn predict_points(&self, v: &ShapeVector, points: &[Vec2]) -> Result<Vec<Complex64>> {
        self.params.predict_points_with(&self.coefficients(v)?, points)
    }
}
