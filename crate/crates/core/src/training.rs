//! Adam training of the operator against the physics loss, with logging and
//! bit-exact checkpoints.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;

use crate::dataset::{sample_points, PointCounts, PointSet, ShapeDataset};
use crate::error::{domain, Error, Result};
use crate::geometry::Vec2;
use crate::net::{DenseLayer, ResNetParams, ResNetPlan};
use crate::operator::{Normalization, OperatorGrad, OperatorParams};
use crate::physics::{loss_gradient, LossBatch, LossWeights, PhysicsConfig, ResidualBreakdown, RigidBcMode};
use crate::{mix_seed, seeded_rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// One epoch is one optimizer step.
    pub epochs: u64,
    pub shapes_per_batch: usize,
    pub points_per_batch: PointCounts,
    pub adam: AdamConfig,
    pub seed: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Draw fresh points every epoch instead of subsetting the fixed sets.
    pub resample_points: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 20_000,
            shapes_per_batch: 16,
            points_per_batch: PointCounts { interior: 512, inner_boundary: 64, outer_boundary: 64 },
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 1000,
            log_every: 100,
            resample_points: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return domain(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        let p = self.points_per_batch;
        if self.shapes_per_batch == 0 || p.interior == 0 || p.inner_boundary == 0 || p.outer_boundary == 0 {
            return domain("batch sizes must be at least 1");
        }
        if self.log_every == 0 {
            return domain("log_every must be at least 1");
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps.is_nan() || a.eps <= 0.0 {
            return domain("invalid Adam constants");
        }
        Ok(())
    }

    /// Checks batch sizes against the data they are drawn from.
    pub fn validate_against(&self, ds: &ShapeDataset, points: &[PointSet]) -> Result<()> {
        self.validate()?;
        if self.shapes_per_batch > ds.len() {
            return domain(format!("shapes_per_batch {} exceeds dataset size {}", self.shapes_per_batch, ds.len()));
        }
        if points.len() != ds.len() {
            return domain("one point set per shape required");
        }
        if self.resample_points {
            return Ok(());
        }
        let p = self.points_per_batch;
        for (i, set) in points.iter().enumerate() {
            if p.interior > set.interior.len()
                || p.inner_boundary > set.inner_boundary.len()
                || p.outer_boundary > set.outer_boundary.len()
            {
                return domain(format!("points_per_batch exceeds the point set of shape {}", ds.ids[i]));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: OperatorGrad,
    pub v: OperatorGrad,
}

impl AdamState {
    pub fn new(params: &OperatorParams) -> Self {
        Self { step: 0, m: OperatorGrad::zeros_like(params), v: OperatorGrad::zeros_like(params) }
    }
}

fn check_finite(grad: &OperatorGrad) -> Result<()> {
    for (net, p) in [("branch", &grad.branch), ("trunk", &grad.trunk)] {
        for (name, layer) in p.layer_names().into_iter().zip(p.layers()) {
            if layer.weight.iter().chain(&layer.bias).any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: format!("{net}.{name}") });
            }
        }
    }
    Ok(())
}

fn adam_net(p: &mut ResNetParams, m: &mut ResNetParams, v: &mut ResNetParams, g: &ResNetParams, lr: f64, a: &AdamConfig, t: u64) {
    let c1 = 1.0 - a.beta1.powi(t as i32);
    let c2 = 1.0 - a.beta2.powi(t as i32);
    for (((ps, ms), vs), gs) in p.slices_mut().zip(m.slices_mut()).zip(v.slices_mut()).zip(g.slices()) {
        for i in 0..ps.len() {
            let gi = gs[i];
            ms[i] = a.beta1 * ms[i] + (1.0 - a.beta1) * gi;
            vs[i] = a.beta2 * vs[i] + (1.0 - a.beta2) * gi * gi;
            let mh = ms[i] / c1;
            let vh = vs[i] / c2;
            ps[i] -= lr * mh / (vh.sqrt() + a.eps);
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves everything
/// untouched and names the first offending layer.
pub fn adam_step(state: &mut AdamState, params: &mut OperatorParams, grad: &OperatorGrad, lr: f64, adam: &AdamConfig) -> Result<()> {
    check_finite(grad)?;
    if state.m.branch.plan != params.branch.plan || state.m.trunk.plan != params.trunk.plan {
        return domain("optimizer state does not match the parameter shapes");
    }
    state.step += 1;
    let t = state.step;
    adam_net(&mut params.branch, &mut state.m.branch, &mut state.v.branch, &grad.branch, lr, adam, t);
    adam_net(&mut params.trunk, &mut state.m.trunk, &mut state.v.trunk, &grad.trunk, lr, adam, t);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRecord {
    pub epoch: u64,
    pub pde: f64,
    pub inner_bc: f64,
    pub outer_bc: f64,
    pub total: f64,
    pub seconds: f64,
}

impl TrainLogRecord {
    pub const CSV_HEADER: &'static str = "epoch,pde,inner_bc,outer_bc,total,seconds";

    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{:e},{:e},{:.3}", self.epoch, self.pde, self.inner_bc, self.outer_bc, self.total, self.seconds)
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: OperatorParams,
    pub adam: AdamState,
    /// Epochs completed.
    pub epoch: u64,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn fresh(params: OperatorParams, config: TrainConfig) -> Self {
        let adam = AdamState::new(&params);
        Self { params, adam, epoch: 0, config }
    }
}

/// Progress notifications from [`train`].
pub enum TrainEvent<'a> {
    Log(&'a TrainLogRecord),
    Checkpoint(&'a Checkpoint),
}

/// The shapes and points used at `epoch`, a pure function of the seed and
/// epoch so interrupted runs resume exactly.
pub fn epoch_batch(
    ds: &ShapeDataset,
    points: &[PointSet],
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<LossBatch> {
    let mut rng = seeded_rng(mix_seed(cfg.seed, epoch));
    let shapes: Vec<usize> = if cfg.shapes_per_batch >= ds.len() {
        (0..ds.len()).collect()
    } else {
        let mut s = sample(&mut rng, ds.len(), cfg.shapes_per_batch).into_vec();
        s.sort_unstable();
        s
    };
    let p = cfg.points_per_batch;
    let mut sets = Vec::with_capacity(shapes.len());
    for &s in &shapes {
        if cfg.resample_points {
            sets.push(sample_points(&ds.shapes[s], &p, &mut rng)?);
            continue;
        }
        let full = &points[s];
        let mut pick = |n: usize, k: usize| -> Vec<usize> {
            if k >= n {
                (0..n).collect()
            } else {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
        };
        let i = pick(full.interior.len(), p.interior);
        let b = pick(full.inner_boundary.len(), p.inner_boundary);
        let o = pick(full.outer_boundary.len(), p.outer_boundary);
        sets.push(PointSet {
            interior: i.iter().map(|&j| full.interior[j]).collect(),
            inner_boundary: b.iter().map(|&j| full.inner_boundary[j]).collect(),
            outer_boundary: o.iter().map(|&j| full.outer_boundary[j]).collect(),
        });
    }
    LossBatch::new(shapes.iter().map(|&s| ds.shapes[s]).collect(), sets)
}

/// Runs epochs `state.epoch .. state.config.epochs`. A record is logged every
/// `log_every` epochs and at the last epoch; checkpoints are emitted every
/// `checkpoint_every` completed epochs and at the end.
pub fn train(
    ds: &ShapeDataset,
    points: &[PointSet],
    mut state: Checkpoint,
    mut observer: impl FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<(Checkpoint, Vec<TrainLogRecord>)> {
    let cfg = state.config;
    cfg.validate_against(ds, points)?;
    state.params.physics.validate()?;
    let start = Instant::now();
    let mut log = Vec::new();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let batch = epoch_batch(ds, points, &cfg, epoch)?;
        let (l, grad) = loss_gradient(&state.params, &batch).map_err(|e| match e {
            Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch },
            e => e,
        })?;
        if !l.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        adam_step(&mut state.adam, &mut state.params, &grad, cfg.learning_rate, &cfg.adam)?;
        state.epoch += 1;
        if epoch.is_multiple_of(cfg.log_every) || state.epoch == cfg.epochs {
            let rec = record(epoch, &l, start.elapsed().as_secs_f64());
            observer(TrainEvent::Log(&rec))?;
            log.push(rec);
        }
        if (cfg.checkpoint_every > 0 && state.epoch.is_multiple_of(cfg.checkpoint_every)) || state.epoch == cfg.epochs {
            observer(TrainEvent::Checkpoint(&state))?;
        }
    }
    Ok((state, log))
}

fn record(epoch: u64, l: &ResidualBreakdown, seconds: f64) -> TrainLogRecord {
    TrainLogRecord { epoch, pde: l.pde, inner_bc: l.inner_bc, outer_bc: l.outer_bc, total: l.total, seconds }
}

// ---------------------------------------------------------------------------
// checkpoint container

const MAGIC: &[u8; 12] = b"SCATTERCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn array(&mut self, a: &[f64]) {
        self.u64(a.len() as u64);
        for v in a {
            self.f64(*v);
        }
    }
    fn plan(&mut self, p: &ResNetPlan) {
        for v in [p.input_dim, p.width, p.n_blocks, p.layers_per_block, p.output_dim] {
            self.u64(v as u64);
        }
        self.f64(p.first_omega);
    }
    fn net(&mut self, p: &ResNetParams) {
        for s in p.slices() {
            self.array(s);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn ckpt_err(field: &str, message: impl Into<String>) -> Error {
    Error::Checkpoint { field: field.to_string(), message: message.into() }
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        if self.data.len() - self.pos < n {
            return Err(ckpt_err(field, format!("truncated at byte {}", self.data.len())));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, field)?.try_into().unwrap()))
    }
    fn usize(&mut self, field: &str) -> Result<usize> {
        let v = self.u64(field)?;
        usize::try_from(v).ok().filter(|v| *v <= 1 << 32).ok_or_else(|| ckpt_err(field, format!("implausible value {v}")))
    }
    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8, field)?.try_into().unwrap()))
    }
    fn array_into(&mut self, dst: &mut [f64], field: &str) -> Result<()> {
        let n = self.u64(field)?;
        if n != dst.len() as u64 {
            return Err(ckpt_err(field, format!("length {n}, expected {}", dst.len())));
        }
        let raw = self.bytes(8 * dst.len(), field)?;
        for (i, (d, c)) in dst.iter_mut().zip(raw.chunks_exact(8)).enumerate() {
            *d = f64::from_le_bytes(c.try_into().unwrap());
            if !d.is_finite() {
                return Err(ckpt_err(field, format!("non-finite value at index {i}")));
            }
        }
        Ok(())
    }
    fn plan(&mut self, name: &str) -> Result<ResNetPlan> {
        let f = |s: &str| format!("{name}.{s}");
        let p = ResNetPlan {
            input_dim: self.usize(&f("input_dim"))?,
            width: self.usize(&f("width"))?,
            n_blocks: self.usize(&f("n_blocks"))?,
            layers_per_block: self.usize(&f("layers_per_block"))?,
            output_dim: self.usize(&f("output_dim"))?,
            first_omega: self.f64(&f("first_omega"))?,
        };
        p.validate().map_err(|e| ckpt_err(name, e.to_string()))?;
        if p.param_count() > 1 << 28 {
            return Err(ckpt_err(name, "implausible network size"));
        }
        Ok(p)
    }
    fn net_into(&mut self, p: &mut ResNetParams, prefix: &str) -> Result<()> {
        let names = p.layer_names();
        for (name, layer) in names.iter().zip(p.layers_mut()) {
            let DenseLayer { weight, bias, .. } = layer;
            self.array_into(weight, &format!("{prefix}.{name}.weight"))?;
            self.array_into(bias, &format!("{prefix}.{name}.bias"))?;
        }
        Ok(())
    }
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    w.u64(c.epoch);
    w.u64(c.adam.step);
    w.plan(&c.params.branch.plan);
    w.plan(&c.params.trunk.plan);
    let n = c.params.normalization;
    for v in [n.branch_center, n.branch_scale, n.trunk_center, n.trunk_scale] {
        w.f64(v);
    }
    let ph = c.params.physics;
    for v in [ph.frequency, ph.sound_speed, ph.amplitude, ph.direction.x, ph.direction.y] {
        w.f64(v);
    }
    for v in [ph.weights.pde, ph.weights.inner_bc, ph.weights.outer_bc] {
        w.f64(v);
    }
    w.u64(match ph.rigid_bc {
        RigidBcMode::Projected => 0,
        RigidBcMode::Literal => 1,
    });
    let t = c.config;
    for v in [t.learning_rate, t.adam.beta1, t.adam.beta2, t.adam.eps] {
        w.f64(v);
    }
    let p = t.points_per_batch;
    for v in [
        t.epochs,
        t.shapes_per_batch as u64,
        p.interior as u64,
        p.inner_boundary as u64,
        p.outer_boundary as u64,
        t.seed,
        t.checkpoint_every,
        t.log_every,
        u64::from(t.resample_points),
    ] {
        w.u64(v);
    }
    for net in [&c.params.branch, &c.params.trunk, &c.adam.m.branch, &c.adam.m.trunk, &c.adam.v.branch, &c.adam.v.trunk] {
        w.net(net);
    }
    w.0
}

pub fn decode_checkpoint(data: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { data, pos: 0 };
    if r.bytes(MAGIC.len(), "magic")? != MAGIC {
        return Err(ckpt_err("magic", "not a scatter checkpoint (bad magic string)"));
    }
    let version = u32::from_le_bytes(r.bytes(4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err("version", format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let epoch = r.u64("epoch")?;
    let step = r.u64("adam.step")?;
    let bp = r.plan("branch_plan")?;
    let tp = r.plan("trunk_plan")?;
    let normalization = Normalization {
        branch_center: r.f64("normalization.branch_center")?,
        branch_scale: r.f64("normalization.branch_scale")?,
        trunk_center: r.f64("normalization.trunk_center")?,
        trunk_scale: r.f64("normalization.trunk_scale")?,
    };
    let physics = PhysicsConfig {
        frequency: r.f64("physics.frequency")?,
        sound_speed: r.f64("physics.sound_speed")?,
        amplitude: r.f64("physics.amplitude")?,
        direction: Vec2::new(r.f64("physics.direction.x")?, r.f64("physics.direction.y")?),
        weights: LossWeights {
            pde: r.f64("physics.weights.pde")?,
            inner_bc: r.f64("physics.weights.inner_bc")?,
            outer_bc: r.f64("physics.weights.outer_bc")?,
        },
        rigid_bc: match r.u64("physics.rigid_bc")? {
            0 => RigidBcMode::Projected,
            1 => RigidBcMode::Literal,
            v => return Err(ckpt_err("physics.rigid_bc", format!("unknown mode {v}"))),
        },
    };
    physics.validate().map_err(|e| ckpt_err("physics", e.to_string()))?;
    let learning_rate = r.f64("train.learning_rate")?;
    let adam = AdamConfig { beta1: r.f64("train.adam.beta1")?, beta2: r.f64("train.adam.beta2")?, eps: r.f64("train.adam.eps")? };
    let config = TrainConfig {
        learning_rate,
        adam,
        epochs: r.u64("train.epochs")?,
        shapes_per_batch: r.usize("train.shapes_per_batch")?,
        points_per_batch: PointCounts {
            interior: r.usize("train.points.interior")?,
            inner_boundary: r.usize("train.points.inner_boundary")?,
            outer_boundary: r.usize("train.points.outer_boundary")?,
        },
        seed: r.u64("train.seed")?,
        checkpoint_every: r.u64("train.checkpoint_every")?,
        log_every: r.u64("train.log_every")?,
        resample_points: r.u64("train.resample_points")? != 0,
    };
    config.validate().map_err(|e| ckpt_err("train", e.to_string()))?;
    let mut nets = [
        ResNetParams::zeros(&bp),
        ResNetParams::zeros(&tp),
        ResNetParams::zeros(&bp),
        ResNetParams::zeros(&tp),
        ResNetParams::zeros(&bp),
        ResNetParams::zeros(&tp),
    ];
    for (net, prefix) in nets.iter_mut().zip(["branch", "trunk", "adam.m.branch", "adam.m.trunk", "adam.v.branch", "adam.v.trunk"]) {
        r.net_into(net, prefix)?;
    }
    if r.pos != data.len() {
        return Err(ckpt_err("end", format!("{} trailing bytes", data.len() - r.pos)));
    }
    let [branch, trunk, mb, mt, vb, vt] = nets;
    let params = OperatorParams::new(branch, trunk, normalization, physics).map_err(|e| ckpt_err("plans", e.to_string()))?;
    Ok(Checkpoint {
        params,
        adam: AdamState { step, m: OperatorGrad { branch: mb, trunk: mt }, v: OperatorGrad { branch: vb, trunk: vt } },
        epoch,
        config,
    })
}

/// Writes through a temporary file so an interrupted save never replaces a
/// good checkpoint with a partial one.
pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode_checkpoint(c))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_checkpoint(&data)
}

/// Fresh operator with the standard branch and trunk plans.
pub fn standard_operator<R: Rng + ?Sized>(physics: PhysicsConfig, rng: &mut R) -> Result<OperatorParams> {
    OperatorParams::init(&ResNetPlan::standard_branch(), &ResNetPlan::standard_trunk(), physics, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetOptions, DatasetRole};
    use crate::geometry::random_shape;

    fn tiny_plan(input: usize, omega: f64) -> ResNetPlan {
        ResNetPlan { input_dim: input, width: 8, n_blocks: 1, layers_per_block: 3, output_dim: 8, first_omega: omega }
    }

    fn tiny_op(seed: u64) -> OperatorParams {
        OperatorParams::init(&tiny_plan(16, 1.0), &tiny_plan(2, 3.0), PhysicsConfig::default(), &mut seeded_rng(seed)).unwrap()
    }

    fn setup(n: usize) -> (ShapeDataset, Vec<PointSet>, TrainConfig) {
        let ds = generate_dataset(DatasetRole::Train, n, 5, &DatasetOptions::default()).unwrap();
        let pts = ds.point_sets(&PointCounts { interior: 200, inner_boundary: 30, outer_boundary: 30 }).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            shapes_per_batch: 2,
            points_per_batch: PointCounts { interior: 64, inner_boundary: 16, outer_boundary: 16 },
            seed: 11,
            checkpoint_every: 10,
            log_every: 5,
            ..Default::default()
        };
        (ds, pts, cfg)
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut op = tiny_op(1);
        let before = op.clone();
        let mut st = AdamState::new(&op);
        let mut g = OperatorGrad::zeros_like(&op);
        g.trunk.output.bias[0] = 1.0;
        g.branch.input.weight[3] = -2.0;
        adam_step(&mut st, &mut op, &g, 5e-4, &AdamConfig::default()).unwrap();
        let d = before.trunk.output.bias[0] - op.trunk.output.bias[0];
        assert!((d - 5e-4).abs() <= 5e-4 * 1e-7, "{d}");
        let d = op.branch.input.weight[3] - before.branch.input.weight[3];
        assert!((d - 5e-4).abs() <= 5e-4 * 1e-7);
        // untouched coordinates stay put and the moments decay under zero grad
        assert_eq!(op.trunk.output.bias[1], before.trunk.output.bias[1]);
        let m0 = st.m.trunk.output.bias[0];
        let snapshot = op.clone();
        let zero = OperatorGrad::zeros_like(&op);
        adam_step(&mut st, &mut op, &zero, 5e-4, &AdamConfig::default()).unwrap();
        assert_eq!(st.m.trunk.output.bias[0], 0.9 * m0);
        assert_eq!(op.trunk.output.bias[1], snapshot.trunk.output.bias[1]);
    }

    #[test]
    fn adam_rejects_nan_with_layer_name() {
        let mut op = tiny_op(2);
        let before = op.clone();
        let mut st = AdamState::new(&op);
        let mut g = OperatorGrad::zeros_like(&op);
        g.trunk.blocks[0][1].weight[5] = f64::NAN;
        match adam_step(&mut st, &mut op, &g, 1e-3, &AdamConfig::default()) {
            Err(Error::NonFiniteGradient { layer }) => assert_eq!(layer, "trunk.blocks[0][1]"),
            other => panic!("{other:?}"),
        }
        assert_eq!(op, before);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn training_is_deterministic_and_logs_weighted_totals() {
        let (ds, pts, cfg) = setup(3);
        let run = || train(&ds, &pts, Checkpoint::fresh(tiny_op(3), cfg), |_| Ok(())).unwrap();
        let (a, log_a) = run();
        let (b, log_b) = run();
        assert_eq!(a, b);
        assert_eq!(log_a.len(), log_b.len());
        for (x, y) in log_a.iter().zip(&log_b) {
            assert_eq!((x.epoch, x.total), (y.epoch, y.total));
            assert!((x.total - (x.pde + x.inner_bc + x.outer_bc)).abs() <= 1e-12 * x.total);
        }
        assert_eq!(log_a.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 5, 10, 15, 20, 25, 29]);
        assert_eq!(a.epoch, 30);
        assert_eq!(a.adam.step, 30);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (ds, pts, cfg) = setup(3);
        let (full, _) = train(&ds, &pts, Checkpoint::fresh(tiny_op(4), cfg), |_| Ok(())).unwrap();
        let mut saved = None;
        let _ = train(&ds, &pts, Checkpoint::fresh(tiny_op(4), cfg), |e| {
            if let TrainEvent::Checkpoint(c) = e {
                if c.epoch == 10 {
                    saved = Some(encode_checkpoint(c));
                }
            }
            Ok(())
        });
        let restored = decode_checkpoint(&saved.unwrap()).unwrap();
        assert_eq!(restored.epoch, 10);
        let (resumed, _) = train(&ds, &pts, restored, |_| Ok(())).unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn batch_sizes_are_checked() {
        let (ds, pts, mut cfg) = setup(2);
        cfg.shapes_per_batch = 3;
        assert!(train(&ds, &pts, Checkpoint::fresh(tiny_op(5), cfg), |_| Ok(())).is_err());
        cfg.shapes_per_batch = 1;
        cfg.points_per_batch.interior = 201;
        assert!(train(&ds, &pts, Checkpoint::fresh(tiny_op(5), cfg), |_| Ok(())).is_err());
        cfg.points_per_batch.interior = 10;
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resampling_mode_runs() {
        let (ds, pts, mut cfg) = setup(2);
        cfg.resample_points = true;
        cfg.epochs = 3;
        let a = train(&ds, &pts, Checkpoint::fresh(tiny_op(6), cfg), |_| Ok(())).unwrap();
        let b = train(&ds, &pts, Checkpoint::fresh(tiny_op(6), cfg), |_| Ok(())).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (ds, pts, cfg) = setup(2);
        let (c, _) = train(&ds, &pts, Checkpoint::fresh(tiny_op(7), TrainConfig { epochs: 3, ..cfg }), |_| Ok(())).unwrap();
        let bytes = encode_checkpoint(&c);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        let mut rng = seeded_rng(8);
        for _ in 0..100 {
            let v = random_shape(&mut rng);
            let x = Vec2::new(rng.gen(), rng.gen());
            assert_eq!(back.params.predict(&v, x).unwrap(), c.params.predict(&v, x).unwrap());
        }
        // double cycle is stable
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupted_checkpoints_name_the_field() {
        let c = Checkpoint::fresh(tiny_op(9), TrainConfig::default());
        let bytes = encode_checkpoint(&c);
        let field = |b: &[u8]| match decode_checkpoint(b) {
            Err(Error::Checkpoint { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        let mut bad = bytes.clone();
        bad[2] ^= 0xff;
        assert_eq!(field(&bad), "magic");
        let mut bad = bytes.clone();
        bad[12] = 9;
        assert_eq!(field(&bad), "version");
        assert_eq!(field(&bytes[..bytes.len() - 3]), "adam.v.trunk.output.bias");
        assert_eq!(field(&bytes[..40]), "branch_plan.width");
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(field(&long), "end");
        // width changed in the header: first array length no longer matches
        let mut bad = bytes.clone();
        bad[12 + 4 + 16 + 8] = 9;
        assert_eq!(field(&bad), "branch.input.weight");
    }

    #[test]
    fn standard_checkpoint_parameter_count() {
        let op = standard_operator(PhysicsConfig::default(), &mut seeded_rng(1)).unwrap();
        let branch = 100 * 16 + 100 + 5 * 3 * (100 * 100 + 100) + 200 * 100 + 200;
        let trunk = 100 * 2 + 100 + 5 * 3 * (100 * 100 + 100) + 200 * 100 + 200;
        let back = decode_checkpoint(&encode_checkpoint(&Checkpoint::fresh(op, TrainConfig::default()))).unwrap();
        assert_eq!(back.params.branch.param_count(), branch);
        assert_eq!(back.params.trunk.param_count(), trunk);
        assert_eq!(back.params.param_count(), branch + trunk);
    }

    #[test]
    fn file_helpers() {
        let dir = std::env::temp_dir().join(format!("scatter-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ckpt");
        let c = Checkpoint::fresh(tiny_op(10), TrainConfig::default());
        save_checkpoint(&c, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
        assert!(matches!(load_checkpoint(&dir.join("missing")), Err(Error::FileNotFound(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_record_format() {
        let r = TrainLogRecord { epoch: 3, pde: 1.0, inner_bc: 2.0, outer_bc: 0.5, total: 3.5, seconds: 1.25 };
        assert_eq!(r.csv_row(), "3,1e0,2e0,5e-1,3.5e0,1.250");
        assert_eq!(TrainLogRecord::CSV_HEADER.split(',').count(), 6);
    }
}
