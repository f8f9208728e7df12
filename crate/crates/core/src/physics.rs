//! Incident wave, PDE and boundary residuals, and the physics loss with its
//! exact parameter gradient.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dataset::PointSet;
use crate::error::{domain, Error, Result};
use crate::geometry::{ShapeVector, Vec2};
use crate::net::{JetBatch, JetOrder, ResNetParams, ResNetTape};
use crate::operator::{dot, ComplexJet, OperatorGrad, OperatorParams};

/// Tolerance on |n| − 1 for boundary normals.
pub const NORMAL_TOL: f64 = 1e-9;

/// Points per trunk chunk in the loss; fixes the reduction order.
pub const LOSS_CHUNK: usize = 128;

/// Chunks accumulated sequentially into one partial gradient.
const CHUNKS_PER_GROUP: usize = 8;

/// How the rigid-body condition treats the incident forcing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RigidBcMode {
    /// ∂G/∂n − i k (ê·n) p_i, i.e. ∂(G + p_i)/∂n = 0
    #[default]
    Projected,
    /// ∂G/∂n − i k p_i without the projection factor
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub pde: f64,
    pub inner_bc: f64,
    pub outer_bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { pde: 1.0, inner_bc: 1.0, outer_bc: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsConfig {
    /// Hz
    pub frequency: f64,
    /// m/s
    pub sound_speed: f64,
    /// Pa
    pub amplitude: f64,
    /// unit propagation direction ê
    pub direction: Vec2,
    pub weights: LossWeights,
    pub rigid_bc: RigidBcMode,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            frequency: 500.0,
            sound_speed: 343.0,
            amplitude: 1.0,
            direction: Vec2::new(1.0, 0.0),
            weights: LossWeights::default(),
            rigid_bc: RigidBcMode::Projected,
        }
    }
}

impl PhysicsConfig {
    /// k = 2πf / c (rad/m).
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency / self.sound_speed
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return domain(format!("frequency must be positive, got {}", self.frequency));
        }
        if !(self.sound_speed.is_finite() && self.sound_speed > 0.0) {
            return domain(format!("sound speed must be positive, got {}", self.sound_speed));
        }
        if !self.amplitude.is_finite() {
            return domain("incident amplitude must be finite");
        }
        if (self.direction.norm() - 1.0).abs() > NORMAL_TOL {
            return domain("incident direction must be a unit vector");
        }
        let w = self.weights;
        if [w.pde, w.inner_bc, w.outer_bc].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return domain("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

/// Incident pressure p_0 e^{−i k ê·x} and its gradient −i k ê p_i.
pub fn incident(cfg: &PhysicsConfig, x: Vec2) -> (Complex64, [Complex64; 2]) {
    let k = cfg.wavenumber();
    let phase = k * cfg.direction.dot(x);
    let p = Complex64::new(phase.cos(), -phase.sin()) * cfg.amplitude;
    let g = Complex64::new(0.0, -k) * p;
    (p, [g * cfg.direction.x, g * cfg.direction.y])
}

/// ∇²G + k²G.
pub fn helmholtz_residual(jet: &ComplexJet, cfg: &PhysicsConfig) -> Complex64 {
    let k = cfg.wavenumber();
    jet.laplacian + jet.value * (k * k)
}

fn check_normal(n: Vec2) -> Result<()> {
    if (n.norm() - 1.0).abs() > NORMAL_TOL || !n.norm().is_finite() {
        return domain(format!("boundary normal ({}, {}) is not a unit vector", n.x, n.y));
    }
    Ok(())
}

/// Incident forcing g with rigid residual ∂G/∂n − g.
fn rigid_forcing(cfg: &PhysicsConfig, x: Vec2, n: Vec2) -> Complex64 {
    let (p, _) = incident(cfg, x);
    let proj = match cfg.rigid_bc {
        RigidBcMode::Projected => cfg.direction.dot(n),
        RigidBcMode::Literal => 1.0,
    };
    Complex64::new(0.0, cfg.wavenumber() * proj) * p
}

/// Sound-hard residual on the scatterer boundary at `x` with outward normal `n`.
pub fn rigid_bc_residual(jet: &ComplexJet, x: Vec2, n: Vec2, cfg: &PhysicsConfig) -> Result<Complex64> {
    check_normal(n)?;
    Ok(jet.normal_derivative(n) - rigid_forcing(cfg, x, n))
}

/// First-order absorbing residual ∂G/∂n + i k G on the outer boundary.
pub fn impedance_bc_residual(jet: &ComplexJet, n: Vec2, cfg: &PhysicsConfig) -> Result<Complex64> {
    check_normal(n)?;
    Ok(jet.normal_derivative(n) + Complex64::new(0.0, cfg.wavenumber()) * jet.value)
}

/// Mean squared residual moduli, each averaged per shape then over shapes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualBreakdown {
    pub pde: f64,
    pub inner_bc: f64,
    pub outer_bc: f64,
    pub total: f64,
}

impl ResidualBreakdown {
    pub fn weighted(pde: f64, inner_bc: f64, outer_bc: f64, w: &LossWeights) -> Self {
        Self { pde, inner_bc, outer_bc, total: w.pde * pde + w.inner_bc * inner_bc + w.outer_bc * outer_bc }
    }
}

/// Shapes and the points at which their residuals are evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBatch {
    pub shapes: Vec<ShapeVector>,
    pub points: Vec<PointSet>,
}

impl LossBatch {
    pub fn new(shapes: Vec<ShapeVector>, points: Vec<PointSet>) -> Result<Self> {
        let b = Self { shapes, points };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return domain("loss batch has no shapes");
        }
        if self.shapes.len() != self.points.len() {
            return domain("one point set per shape required");
        }
        for (s, p) in self.points.iter().enumerate() {
            if p.interior.is_empty() || p.inner_boundary.is_empty() || p.outer_boundary.is_empty() {
                return domain(format!("shape {s} has an empty point set"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Pde,
    Inner,
    Outer,
}

impl Role {
    fn order(self) -> JetOrder {
        match self {
            Role::Pde => JetOrder::Laplacian,
            _ => JetOrder::Gradient,
        }
    }
}

/// A contiguous run of points of one role on one shape.
struct Chunk {
    shape: usize,
    role: Role,
    start: usize,
    len: usize,
}

fn chunks(batch: &LossBatch) -> Vec<Chunk> {
    let mut out = Vec::new();
    for (s, p) in batch.points.iter().enumerate() {
        for (role, n) in [(Role::Pde, p.interior.len()), (Role::Inner, p.inner_boundary.len()), (Role::Outer, p.outer_boundary.len())] {
            let mut start = 0;
            while start < n {
                let len = LOSS_CHUNK.min(n - start);
                out.push(Chunk { shape: s, role, start, len });
                start += len;
            }
        }
    }
    out
}

fn chunk_points(batch: &LossBatch, c: &Chunk) -> (Vec<Vec2>, Vec<Vec2>) {
    let p = &batch.points[c.shape];
    let r = c.start..c.start + c.len;
    match c.role {
        Role::Pde => (p.interior[r].to_vec(), Vec::new()),
        Role::Inner => p.inner_boundary[r].iter().map(|b| (b.position, b.outward_normal)).unzip(),
        Role::Outer => p.outer_boundary[r].iter().map(|b| (b.position, b.outward_normal)).unzip(),
    }
}

fn jet_at(tau: &JetBatch, beta: &[f64], row: usize) -> ComplexJet {
    let p = beta.len() / 2;
    let dim = tau.dim;
    let ch = |c: usize| {
        let t = &tau.channel(c)[row * dim..(row + 1) * dim];
        Complex64::new(dot(&beta[..p], &t[..p]), dot(&beta[p..], &t[p..]))
    };
    match tau.order {
        JetOrder::Laplacian => ComplexJet { value: ch(0), grad: [ch(1), ch(2)], laplacian: ch(3) },
        _ => ComplexJet { value: ch(0), grad: [ch(1), ch(2)], laplacian: Complex64::new(0.0, 0.0) },
    }
}

fn residual(cfg: &PhysicsConfig, role: Role, jet: &ComplexJet, x: Vec2, n: Option<Vec2>) -> Result<Complex64> {
    match role {
        Role::Pde => Ok(helmholtz_residual(jet, cfg)),
        Role::Inner => rigid_bc_residual(jet, x, n.unwrap(), cfg),
        Role::Outer => impedance_bc_residual(jet, n.unwrap(), cfg),
    }
}

/// d|r|²/d(channel of G) for each channel, as complex numbers whose real
/// part refers to G_re and imaginary part to G_im.
fn residual_upstream(cfg: &PhysicsConfig, role: Role, r: Complex64, n: Option<Vec2>, out: &mut [Complex64]) {
    let k = cfg.wavenumber();
    let two_r = r * 2.0;
    match role {
        Role::Pde => {
            out[0] = two_r * (k * k);
            out[1] = Complex64::new(0.0, 0.0);
            out[2] = Complex64::new(0.0, 0.0);
            out[3] = two_r;
        }
        Role::Inner => {
            let n = n.unwrap();
            out[0] = Complex64::new(0.0, 0.0);
            out[1] = two_r * n.x;
            out[2] = two_r * n.y;
        }
        Role::Outer => {
            let n = n.unwrap();
            // r_re = ∂_n G_re − k G_im, r_im = ∂_n G_im + k G_re
            out[0] = Complex64::new(k * two_r.im, -k * two_r.re);
            out[1] = two_r * n.x;
            out[2] = two_r * n.y;
        }
    }
}

struct ChunkResult {
    sum: f64,
    beta_bar: Vec<f64>,
}

struct Evaluated {
    sums: Vec<ChunkResult>,
    trunk_grad: Option<ResNetParams>,
}

fn evaluate_chunk(
    params: &OperatorParams,
    batch: &LossBatch,
    beta: &[f64],
    c: &Chunk,
    grad: Option<&mut ResNetParams>,
) -> Result<ChunkResult> {
    let cfg = &params.physics;
    let (xs, ns) = chunk_points(batch, c);
    let seed = params.trunk_seed(c.role.order(), &xs);
    let (tau, tape): (JetBatch, Option<ResNetTape>) = if grad.is_some() {
        let (t, tape) = params.trunk.forward_tape(seed)?;
        (t, Some(tape))
    } else {
        (params.trunk.forward_batch(&seed)?, None)
    };
    let channels = c.role.order().channels();
    let mut sum = 0.0;
    let mut ups = vec![Complex64::new(0.0, 0.0); channels * c.len];
    for row in 0..c.len {
        let jet = jet_at(&tau, beta, row);
        let n = ns.get(row).copied();
        let r = residual(cfg, c.role, &jet, xs[row], n)?;
        sum += r.norm_sqr();
        if tape.is_some() {
            residual_upstream(cfg, c.role, r, n, &mut ups[row * channels..(row + 1) * channels]);
        }
    }
    let mut beta_bar = Vec::new();
    if let (Some(tape), Some(grad)) = (tape, grad) {
        let weight = match c.role {
            Role::Pde => cfg.weights.pde,
            Role::Inner => cfg.weights.inner_bc,
            Role::Outer => cfg.weights.outer_bc,
        };
        let pts = &batch.points[c.shape];
        let n_role = match c.role {
            Role::Pde => pts.interior.len(),
            Role::Inner => pts.inner_boundary.len(),
            Role::Outer => pts.outer_boundary.len(),
        };
        let scale = weight / (batch.shapes.len() as f64 * n_role as f64);
        let dim = tau.dim;
        let p = dim / 2;
        let mut up = JetBatch::zeros(c.role.order(), c.len, dim);
        beta_bar = vec![0.0; dim];
        for row in 0..c.len {
            for ch in 0..channels {
                let u = ups[row * channels + ch] * scale;
                if u.re == 0.0 && u.im == 0.0 {
                    continue;
                }
                let t = &tau.channel(ch)[row * dim..(row + 1) * dim];
                let dst = &mut up.channel_mut(ch)[row * dim..(row + 1) * dim];
                for j in 0..p {
                    dst[j] = u.re * beta[j];
                    dst[p + j] = u.im * beta[p + j];
                    beta_bar[j] += u.re * t[j];
                    beta_bar[p + j] += u.im * t[p + j];
                }
            }
        }
        params.trunk.backward_tape(&tape, &up, grad);
    }
    Ok(ChunkResult { sum, beta_bar })
}

fn evaluate(params: &OperatorParams, batch: &LossBatch, betas: &[Vec<f64>], with_grad: bool) -> Result<Evaluated> {
    let list = chunks(batch);
    let groups: Vec<Result<(Vec<ChunkResult>, Option<ResNetParams>)>> = list
        .par_chunks(CHUNKS_PER_GROUP)
        .map(|group| {
            let mut grad = with_grad.then(|| ResNetParams::zeros(&params.trunk.plan));
            let mut res = Vec::with_capacity(group.len());
            for c in group {
                res.push(evaluate_chunk(params, batch, &betas[c.shape], c, grad.as_mut())?);
            }
            Ok((res, grad))
        })
        .collect();
    let mut sums = Vec::with_capacity(list.len());
    let mut trunk_grad: Option<ResNetParams> = None;
    for g in groups {
        let (res, grad) = g?;
        sums.extend(res);
        if let Some(grad) = grad {
            match trunk_grad.as_mut() {
                Some(acc) => acc.add_scaled(&grad, 1.0),
                None => trunk_grad = Some(grad),
            }
        }
    }
    Ok(Evaluated { sums, trunk_grad })
}

fn breakdown(params: &OperatorParams, batch: &LossBatch, sums: &[ChunkResult]) -> Result<ResidualBreakdown> {
    let list = chunks(batch);
    let s = batch.shapes.len();
    let mut per = vec![[0.0f64; 3]; s];
    for (c, r) in list.iter().zip(sums) {
        per[c.shape][c.role as usize] += r.sum;
    }
    let mut acc = [0.0f64; 3];
    for (shape, p) in per.iter().enumerate() {
        let pts = &batch.points[shape];
        let counts = [pts.interior.len(), pts.inner_boundary.len(), pts.outer_boundary.len()];
        for i in 0..3 {
            acc[i] += p[i] / counts[i] as f64;
        }
    }
    let b = ResidualBreakdown::weighted(
        acc[0] / s as f64,
        acc[1] / s as f64,
        acc[2] / s as f64,
        &params.physics.weights,
    );
    if !b.total.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    Ok(b)
}

/// Physics loss of `params` over `batch`.
pub fn loss(params: &OperatorParams, batch: &LossBatch) -> Result<ResidualBreakdown> {
    batch.validate()?;
    let betas = params.coefficients_batch(&batch.shapes)?;
    let ev = evaluate(params, batch, &betas, false)?;
    breakdown(params, batch, &ev.sums)
}

/// Loss and its exact gradient with respect to every branch and trunk parameter.
pub fn loss_gradient(params: &OperatorParams, batch: &LossBatch) -> Result<(ResidualBreakdown, OperatorGrad)> {
    batch.validate()?;
    let inputs: Vec<f64> = batch.shapes.iter().flat_map(|v| params.branch_input(v)).collect();
    let (beta_batch, branch_tape) = params.branch.forward_tape(JetBatch::from_values(16, &inputs))?;
    let dim = beta_batch.dim;
    let betas: Vec<Vec<f64>> = beta_batch.data.chunks(dim).map(<[f64]>::to_vec).collect();
    let ev = evaluate(params, batch, &betas, true)?;
    let b = breakdown(params, batch, &ev.sums)?;

    let mut beta_bar = vec![0.0; batch.shapes.len() * dim];
    for (c, r) in chunks(batch).iter().zip(&ev.sums) {
        let dst = &mut beta_bar[c.shape * dim..(c.shape + 1) * dim];
        for (d, s) in dst.iter_mut().zip(&r.beta_bar) {
            *d += s;
        }
    }
    let mut grad = OperatorGrad {
        branch: ResNetParams::zeros(&params.branch.plan),
        trunk: ev.trunk_grad.expect("gradient requested"),
    };
    params.branch.backward_tape(&branch_tape, &JetBatch::from_values(dim, &beta_bar), &mut grad.branch);
    Ok((b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sample_points, PointCounts};
    use crate::geometry::random_shape;
    use crate::net::ResNetPlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_wave_jet(cfg: &PhysicsConfig, x: Vec2, sign: f64) -> ComplexJet {
        // e^{∓ikx}
        let k = cfg.wavenumber();
        let ph = Complex64::new(0.0, -sign * k * x.x).exp();
        let d = Complex64::new(0.0, -sign * k) * ph;
        ComplexJet { value: ph, grad: [d, Complex64::new(0.0, 0.0)], laplacian: ph * (-k * k) }
    }

    #[test]
    fn wavenumber_default() {
        let cfg = PhysicsConfig::default();
        assert!((cfg.wavenumber() - 2.0 * std::f64::consts::PI * 500.0 / 343.0).abs() < 1e-12);
        assert!((cfg.wavenumber() - 9.1591).abs() < 1e-4);
        assert!(cfg.validate().is_ok());
        let mut bad = cfg;
        bad.direction = Vec2::new(1.0, 1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn incident_examples() {
        let cfg = PhysicsConfig::default();
        let (p, _) = incident(&cfg, Vec2::new(0.0, 0.37));
        assert_eq!(p, Complex64::new(1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-6;
        for _ in 0..100 {
            let x = Vec2::new(rng.gen(), rng.gen());
            let (p, g) = incident(&cfg, x);
            assert!((p.norm() - 1.0).abs() < 1e-14);
            let fx = (incident(&cfg, x + Vec2::new(h, 0.0)).0 - incident(&cfg, x - Vec2::new(h, 0.0)).0) / (2.0 * h);
            let fy = (incident(&cfg, x + Vec2::new(0.0, h)).0 - incident(&cfg, x - Vec2::new(0.0, h)).0) / (2.0 * h);
            assert!((fx - g[0]).norm() <= 1e-6 * g[0].norm());
            assert!((fy - g[1]).norm() <= 1e-6);
        }
    }

    #[test]
    fn plane_wave_residuals() {
        let cfg = PhysicsConfig::default();
        let k = cfg.wavenumber();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = Vec2::new(rng.gen(), rng.gen());
            assert!(helmholtz_residual(&plane_wave_jet(&cfg, x, 1.0), &cfg).norm() <= 1e-9);
        }
        assert_eq!(helmholtz_residual(&ComplexJet::default(), &cfg), Complex64::new(0.0, 0.0));
        let exit = Vec2::new(1.0, 0.3);
        let n = Vec2::new(1.0, 0.0);
        let out = plane_wave_jet(&cfg, exit, 1.0);
        assert!(impedance_bc_residual(&out, n, &cfg).unwrap().norm() <= 1e-12);
        assert_eq!(impedance_bc_residual(&ComplexJet::default(), n, &cfg).unwrap().norm(), 0.0);
        let back = plane_wave_jet(&cfg, exit, -1.0);
        let r = impedance_bc_residual(&back, n, &cfg).unwrap();
        assert!((r.norm() - 2.0 * k * back.value.norm()).abs() < 1e-12);
        assert!(impedance_bc_residual(&out, Vec2::new(2.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn rigid_residual_examples() {
        let mut cfg = PhysicsConfig::default();
        let k = cfg.wavenumber();
        let z = ComplexJet::default();
        let x = Vec2::new(0.4, 0.6);
        assert_eq!(rigid_bc_residual(&z, x, Vec2::new(0.0, 1.0), &cfg).unwrap().norm(), 0.0);
        let r = rigid_bc_residual(&z, x, Vec2::new(1.0, 0.0), &cfg).unwrap();
        assert!((r.norm_sqr() - k * k).abs() < 1e-12);
        assert!((k * k - 83.89).abs() < 0.01);
        cfg.rigid_bc = RigidBcMode::Literal;
        let r = rigid_bc_residual(&z, x, Vec2::new(1.0, 0.0), &cfg).unwrap();
        assert!((r.norm_sqr() - k * k).abs() < 1e-12);
        let r = rigid_bc_residual(&z, x, Vec2::new(0.0, 1.0), &cfg).unwrap();
        assert!((r.norm_sqr() - k * k).abs() < 1e-12);
        assert!(rigid_bc_residual(&z, x, Vec2::new(0.0, 0.5), &cfg).is_err());
    }

    #[test]
    fn amplitude_scales_forcing() {
        let cfg = PhysicsConfig::default();
        let cfg2 = PhysicsConfig { amplitude: 2.0, ..cfg };
        let n = Vec2::new(0.6, 0.8);
        let x = Vec2::new(0.3, 0.2);
        let a = rigid_bc_residual(&ComplexJet::default(), x, n, &cfg).unwrap();
        let b = rigid_bc_residual(&ComplexJet::default(), x, n, &cfg2).unwrap();
        assert_eq!(b, a * 2.0);
    }

    #[test]
    fn conjugation_symmetry() {
        let cfg = PhysicsConfig::default();
        let neg = PhysicsConfig { frequency: -cfg.frequency, ..cfg };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = |z: Complex64| z.conj();
        for _ in 0..20 {
            let x = Vec2::new(rng.gen(), rng.gen());
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let n = Vec2::new(th.cos(), th.sin());
            let mut g = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let jet = ComplexJet { value: g(), grad: [g(), g()], laplacian: g() };
            let cj = ComplexJet { value: c(jet.value), grad: [c(jet.grad[0]), c(jet.grad[1])], laplacian: c(jet.laplacian) };
            let d = |a: Complex64, b: Complex64| (a.conj() - b).norm();
            assert!(d(helmholtz_residual(&jet, &cfg), helmholtz_residual(&cj, &neg)) <= 1e-12);
            assert!(d(rigid_bc_residual(&jet, x, n, &cfg).unwrap(), rigid_bc_residual(&cj, x, n, &neg).unwrap()) <= 1e-12);
            assert!(d(impedance_bc_residual(&jet, n, &cfg).unwrap(), impedance_bc_residual(&cj, n, &neg).unwrap()) <= 1e-12);
        }
    }

    fn tiny_plan(input: usize, omega: f64) -> ResNetPlan {
        ResNetPlan { input_dim: input, width: 8, n_blocks: 1, layers_per_block: 3, output_dim: 8, first_omega: omega }
    }

    fn tiny(seed: u64, physics: PhysicsConfig) -> OperatorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OperatorParams::init(&tiny_plan(16, 1.0), &tiny_plan(2, 3.0), physics, &mut rng).unwrap()
    }

    fn batch(seed: u64, shapes: usize, counts: PointCounts) -> LossBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<ShapeVector> = (0..shapes).map(|_| random_shape(&mut rng)).collect();
        let pts = vs.iter().map(|v| sample_points(v, &counts, &mut rng).unwrap()).collect();
        LossBatch::new(vs, pts).unwrap()
    }

    fn counts(i: usize, b: usize) -> PointCounts {
        PointCounts { interior: i, inner_boundary: b, outer_boundary: b }
    }

    #[test]
    fn zero_network_loss() {
        let mut op = tiny(1, PhysicsConfig::default());
        op.branch = ResNetParams::zeros(&op.branch.plan);
        op.trunk = ResNetParams::zeros(&op.trunk.plan);
        let b = batch(2, 3, counts(50, 40));
        let l = loss(&op, &b).unwrap();
        assert_eq!(l.pde, 0.0);
        assert_eq!(l.outer_bc, 0.0);
        let k = op.physics.wavenumber();
        let expect = b
            .points
            .iter()
            .map(|p| p.inner_boundary.iter().map(|s| (k * s.outward_normal.x).powi(2)).sum::<f64>() / p.inner_boundary.len() as f64)
            .sum::<f64>()
            / 3.0;
        assert!((l.inner_bc - expect).abs() <= 1e-10 * expect);
        assert_eq!(l.total, l.inner_bc);
    }

    #[test]
    fn weights_and_reproducibility() {
        let op = tiny(3, PhysicsConfig::default());
        let b = batch(4, 2, counts(300, 30));
        let l = loss(&op, &b).unwrap();
        assert_eq!(loss(&op, &b).unwrap(), l);
        let mut op2 = op.clone();
        op2.physics.weights.pde = 2.0;
        let l2 = loss(&op2, &b).unwrap();
        assert_eq!(l2.pde, l.pde);
        assert!((l2.total - l.total - l.pde).abs() <= 1e-12 * l2.total);
        assert!((l.total - (l.pde + l.inner_bc + l.outer_bc)).abs() <= 1e-12 * l.total);
        // loss of the gradient path is the same number
        let (lg, _) = loss_gradient(&op, &b).unwrap();
        assert_eq!(lg, l);
    }

    #[test]
    fn permutation_invariance() {
        let op = tiny(5, PhysicsConfig::default());
        let b = batch(6, 2, counts(200, 30));
        let mut p = b.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for set in &mut p.points {
            use rand::seq::SliceRandom;
            set.interior.shuffle(&mut rng);
            set.inner_boundary.shuffle(&mut rng);
            set.outer_boundary.shuffle(&mut rng);
        }
        let (a, c) = (loss(&op, &b).unwrap(), loss(&op, &p).unwrap());
        assert!((a.total - c.total).abs() <= 1e-12 * a.total);
    }

    #[test]
    fn empty_sets_rejected() {
        let op = tiny(5, PhysicsConfig::default());
        let mut b = batch(6, 1, counts(10, 5));
        b.points[0].outer_boundary.clear();
        assert!(loss(&op, &b).is_err());
        assert!(LossBatch::new(vec![], vec![]).is_err());
    }

    fn perturbed(op: &OperatorParams, d: &OperatorGrad, h: f64) -> OperatorParams {
        let mut p = op.clone();
        p.branch.add_scaled(&d.branch, h);
        p.trunk.add_scaled(&d.trunk, h);
        p
    }

    fn random_direction(op: &OperatorParams, rng: &mut ChaCha8Rng) -> OperatorGrad {
        let mut d = OperatorGrad::zeros_like(op);
        for s in d.branch.slices_mut().chain(d.trunk.slices_mut()) {
            s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        d
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for mode in [RigidBcMode::Projected, RigidBcMode::Literal] {
            let physics = PhysicsConfig { rigid_bc: mode, weights: LossWeights { pde: 0.01, inner_bc: 1.0, outer_bc: 2.0 }, ..Default::default() };
            let op = tiny(8, physics);
            let b = batch(9, 2, counts(150, 20));
            let (_, g) = loss_gradient(&op, &b).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let h = 1e-6;
            for _ in 0..10 {
                let d = random_direction(&op, &mut rng);
                let fp = loss(&perturbed(&op, &d, h), &b).unwrap().total;
                let fm = loss(&perturbed(&op, &d, -h), &b).unwrap().total;
                let fd = (fp - fm) / (2.0 * h);
                let an = g.dot(&d);
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_shape_gradients() {
        let op = tiny(11, PhysicsConfig::default());
        let b = batch(12, 3, counts(140, 20));
        let (_, g) = loss_gradient(&op, &b).unwrap();
        let mut avg = OperatorGrad::zeros_like(&op);
        for s in 0..3 {
            let one = LossBatch::new(vec![b.shapes[s]], vec![b.points[s].clone()]).unwrap();
            avg.add_scaled(&loss_gradient(&op, &one).unwrap().1, 1.0 / 3.0);
        }
        let mut diff = g.clone();
        diff.add_scaled(&avg, -1.0);
        assert!(diff.dot(&diff).sqrt() <= 1e-12 * g.dot(&g).sqrt());
    }

    #[test]
    fn stationary_at_zero_forcing_minimum() {
        // without incident forcing the zero network attains the minimum 0
        let physics = PhysicsConfig { amplitude: 0.0, ..Default::default() };
        let mut op = tiny(13, physics);
        op.branch = ResNetParams::zeros(&op.branch.plan);
        let b = batch(14, 2, counts(60, 20));
        let (l, g) = loss_gradient(&op, &b).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(g.dot(&g).sqrt() <= 1e-8);
    }
}
