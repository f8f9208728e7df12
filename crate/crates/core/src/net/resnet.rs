use rand::Rng;

use super::jet::{sine_backward, sine_forward, JetBatch, JetOrder, SineCache, SpatialJet};
use super::kernel::{matmul, matmul_at_acc, matmul_bt};
use crate::error::{domain, Result};

/// Layer dimensions of a sine residual network.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetPlan {
    pub input_dim: usize,
    pub width: usize,
    pub n_blocks: usize,
    pub layers_per_block: usize,
    pub output_dim: usize,
    /// Frequency applied inside the activation of the input projection only.
    pub first_omega: f64,
}

impl ResNetPlan {
    /// 16 → 200, width 100, 5 blocks of 3 layers.
    pub fn standard_branch() -> Self {
        Self { input_dim: 16, width: 100, n_blocks: 5, layers_per_block: 3, output_dim: 200, first_omega: 1.0 }
    }

    /// 2 → 200, width 100, 5 blocks of 3 layers, input frequency 10.
    pub fn standard_trunk() -> Self {
        Self { input_dim: 2, width: 100, n_blocks: 5, layers_per_block: 3, output_dim: 200, first_omega: 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.output_dim == 0 || self.layers_per_block == 0 {
            return domain(format!("invalid network plan {self:?}"));
        }
        if !(self.first_omega.is_finite() && self.first_omega > 0.0) {
            return domain(format!("input frequency must be positive, got {}", self.first_omega));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let w = self.width;
        (w * self.input_dim + w)
            + self.n_blocks * self.layers_per_block * (w * w + w)
            + (self.output_dim * w + self.output_dim)
    }
}

/// Affine map `z = W x + b` with `W` stored row-major as `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { out_dim, in_dim, weight: vec![0.0; out_dim * in_dim], bias: vec![0.0; out_dim] }
    }

    /// Uniform in ±√(6/fan_in), zero bias.
    pub fn sine_init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weight = (0..out_dim * in_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { out_dim, in_dim, weight, bias: vec![0.0; out_dim] }
    }

    fn forward(&self, x: &JetBatch) -> JetBatch {
        debug_assert_eq!(x.dim, self.in_dim);
        let mut z = JetBatch::zeros(x.order, x.batch, self.out_dim);
        matmul_bt(&x.data, &self.weight, &mut z.data, x.rows(), self.in_dim, self.out_dim);
        for row in z.channel_mut(0).chunks_exact_mut(self.out_dim) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient
    /// when asked for.
    fn backward(&self, x: &JetBatch, gz: &JetBatch, grad: &mut DenseLayer, want_input: bool) -> Option<JetBatch> {
        let rows = gz.rows();
        matmul_at_acc(&gz.data, &x.data, &mut grad.weight, self.out_dim, rows, self.in_dim);
        for row in gz.channel(0).chunks_exact(self.out_dim) {
            for (g, d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        want_input.then(|| {
            let mut gx = JetBatch::zeros(gz.order, gz.batch, self.in_dim);
            matmul(&gz.data, &self.weight, &mut gx.data, rows, self.out_dim, self.in_dim);
            gx
        })
    }
}

/// Trainable parameters of one residual network. Also used as the container
/// for parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetParams {
    pub plan: ResNetPlan,
    pub input: DenseLayer,
    pub blocks: Vec<Vec<DenseLayer>>,
    pub output: DenseLayer,
}

/// Intermediate values kept by [`ResNetParams::forward_tape`].
pub struct ResNetTape {
    input: JetBatch,
    input_act: SineCache,
    blocks: Vec<BlockTape>,
    last_hidden: JetBatch,
}

struct BlockTape {
    layer_inputs: Vec<JetBatch>,
    acts: Vec<SineCache>,
}

impl ResNetParams {
    pub fn zeros(plan: &ResNetPlan) -> Self {
        let w = plan.width;
        Self {
            plan: plan.clone(),
            input: DenseLayer::zeros(w, plan.input_dim),
            blocks: (0..plan.n_blocks)
                .map(|_| (0..plan.layers_per_block).map(|_| DenseLayer::zeros(w, w)).collect())
                .collect(),
            output: DenseLayer::zeros(plan.output_dim, w),
        }
    }

    /// Sine-network initialization, deterministic in the generator state.
    pub fn init<R: Rng + ?Sized>(plan: &ResNetPlan, rng: &mut R) -> Result<Self> {
        plan.validate()?;
        let w = plan.width;
        let input = DenseLayer::sine_init(w, plan.input_dim, rng);
        let blocks = (0..plan.n_blocks)
            .map(|_| (0..plan.layers_per_block).map(|_| DenseLayer::sine_init(w, w, rng)).collect())
            .collect();
        let output = DenseLayer::sine_init(plan.output_dim, w, rng);
        Ok(Self { plan: plan.clone(), input, blocks, output })
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Layers in declared order: input projection, blocks, output projection.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        std::iter::once(&self.input).chain(self.blocks.iter().flatten()).chain(std::iter::once(&self.output))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        std::iter::once(&mut self.input)
            .chain(self.blocks.iter_mut().flatten())
            .chain(std::iter::once(&mut self.output))
    }

    /// Layer names matching [`Self::layers`] order.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names = vec!["input".to_string()];
        for (b, block) in self.blocks.iter().enumerate() {
            for l in 0..block.len() {
                names.push(format!("blocks[{b}][{l}]"));
            }
        }
        names.push("output".to_string());
        names
    }

    /// Every parameter slice in declared order (weight then bias per layer).
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        for (a, b) in self.slices_mut().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.slices().zip(other.slices()).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum()
    }

    fn check_input(&self, x: &JetBatch) -> Result<()> {
        if x.dim != self.plan.input_dim {
            return domain(format!("network expects input dimension {}, got {}", self.plan.input_dim, x.dim));
        }
        if x.order != JetOrder::Value && x.dim != 2 {
            return domain("spatial jets require a 2-D input");
        }
        Ok(())
    }

    /// Batched evaluation without keeping intermediates.
    pub fn forward_batch(&self, x: &JetBatch) -> Result<JetBatch> {
        self.check_input(x)?;
        let (mut h, _) = sine_forward(&self.input.forward(x), self.plan.first_omega);
        for block in &self.blocks {
            let mut t = self.run_block(block, &h, None);
            add_in_place(&mut t, &h);
            h = t;
        }
        Ok(self.output.forward(&h))
    }

    fn run_block(&self, block: &[DenseLayer], h: &JetBatch, mut tape: Option<&mut BlockTape>) -> JetBatch {
        let last = block.len() - 1;
        let mut t = h.clone();
        for (l, layer) in block.iter().enumerate() {
            let z = layer.forward(&t);
            let next = if l < last {
                let (a, cache) = sine_forward(&z, 1.0);
                if let Some(tape) = tape.as_deref_mut() {
                    tape.acts.push(cache);
                }
                a
            } else {
                z
            };
            if let Some(tape) = tape.as_deref_mut() {
                tape.layer_inputs.push(std::mem::replace(&mut t, next));
            } else {
                t = next;
            }
        }
        t
    }

    /// Batched evaluation that records what [`Self::backward_tape`] needs.
    pub fn forward_tape(&self, x: JetBatch) -> Result<(JetBatch, ResNetTape)> {
        self.check_input(&x)?;
        let (mut h, input_act) = sine_forward(&self.input.forward(&x), self.plan.first_omega);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let mut bt = BlockTape { layer_inputs: Vec::new(), acts: Vec::new() };
            let mut t = self.run_block(block, &h, Some(&mut bt));
            add_in_place(&mut t, &h);
            h = t;
            blocks.push(bt);
        }
        let y = self.output.forward(&h);
        Ok((y, ResNetTape { input: x, input_act, blocks, last_hidden: h }))
    }

    /// Accumulates into `grad` the parameter gradient of `⟨upstream, y⟩`
    /// summed over every channel and row of the taped batch.
    pub fn backward_tape(&self, tape: &ResNetTape, upstream: &JetBatch, grad: &mut ResNetParams) {
        let mut gh = self.output.backward(&tape.last_hidden, upstream, &mut grad.output, true).unwrap();
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let bt = &tape.blocks[b];
            let last = block.len() - 1;
            let mut gt = gh.clone();
            for l in (0..block.len()).rev() {
                let gz = if l < last { sine_backward(&gt, &bt.acts[l], 1.0) } else { gt };
                gt = block[l].backward(&bt.layer_inputs[l], &gz, &mut grad.blocks[b][l], true).unwrap();
            }
            add_in_place(&mut gh, &gt);
        }
        let gz = sine_backward(&gh, &tape.input_act, self.plan.first_omega);
        self.input.backward(&tape.input, &gz, &mut grad.input, false);
    }

    /// Plain evaluation at one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.plan.input_dim {
            return domain(format!("network expects input dimension {}, got {}", self.plan.input_dim, x.len()));
        }
        Ok(self.forward_batch(&JetBatch::from_values(x.len(), x))?.data)
    }

    /// Value, gradient and Hessian of every output with respect to a 2-D input.
    pub fn forward_jet(&self, x: [f64; 2]) -> Result<Vec<SpatialJet>> {
        let y = self.forward_batch(&JetBatch::seed_points(JetOrder::Hessian, &[x]))?;
        Ok((0..y.dim).map(|j| y.spatial_jet(0, j)).collect())
    }

    /// Gradient of `⟨upstream, forward(x)⟩` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<ResNetParams> {
        if upstream.len() != self.plan.output_dim {
            return domain(format!("upstream length {} != output dim {}", upstream.len(), self.plan.output_dim));
        }
        if x.len() != self.plan.input_dim {
            return domain(format!("network expects input dimension {}, got {}", self.plan.input_dim, x.len()));
        }
        let (_, tape) = self.forward_tape(JetBatch::from_values(x.len(), x))?;
        let mut grad = ResNetParams::zeros(&self.plan);
        self.backward_tape(&tape, &JetBatch::from_values(upstream.len(), upstream), &mut grad);
        Ok(grad)
    }

    /// Gradient of `Σ_j ⟨upstream_j, jet_j(x)⟩` where the pairing runs over
    /// value, gradient and Hessian slots.
    pub fn backward_jet(&self, x: [f64; 2], upstream: &[SpatialJet]) -> Result<ResNetParams> {
        if upstream.len() != self.plan.output_dim {
            return domain(format!("upstream length {} != output dim {}", upstream.len(), self.plan.output_dim));
        }
        let (_, tape) = self.forward_tape(JetBatch::seed_points(JetOrder::Hessian, &[x]))?;
        let mut up = JetBatch::zeros(JetOrder::Hessian, 1, self.plan.output_dim);
        for (j, u) in upstream.iter().enumerate() {
            let slots = [u.value, u.grad[0], u.grad[1], u.hess[0], u.hess[1], u.hess[2]];
            for (c, v) in slots.into_iter().enumerate() {
                *up.at_mut(c, 0, j) = v;
            }
        }
        let mut grad = ResNetParams::zeros(&self.plan);
        self.backward_tape(&tape, &up, &mut grad);
        Ok(grad)
    }
}

fn add_in_place(dst: &mut JetBatch, src: &JetBatch) {
    for (a, b) in dst.data.iter_mut().zip(&src.data) {
        *a += b;
    }
}
