//! Batched forward-mode jets with respect to a 2-D input.
//!
//! A [`JetBatch`] stores, for `batch` rows of a `dim`-wide activation, the
//! value and a fixed set of spatial derivative channels. Channels are laid out
//! channel-major: `data[(c * batch + row) * dim + j]`.

/// Which spatial derivatives a batch carries alongside the value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JetOrder {
    /// value only
    Value,
    /// value, ∂x, ∂y
    Gradient,
    /// value, ∂x, ∂y, ∂xx + ∂yy
    Laplacian,
    /// value, ∂x, ∂y, ∂xx, ∂xy, ∂yy
    Hessian,
}

const LAPLACIAN_PAIRS: &[&[(usize, usize)]] = &[&[(0, 0), (1, 1)]];
const HESSIAN_PAIRS: &[&[(usize, usize)]] = &[&[(0, 0)], &[(0, 1)], &[(1, 1)]];

impl JetOrder {
    pub fn channels(self) -> usize {
        1 + self.first_order() + self.second_order().len()
    }

    pub(crate) fn first_order(self) -> usize {
        match self {
            JetOrder::Value => 0,
            _ => 2,
        }
    }

    /// Each second-order channel is `Σ ∂_p ∂_q` over its listed pairs.
    pub(crate) fn second_order(self) -> &'static [&'static [(usize, usize)]] {
        match self {
            JetOrder::Value | JetOrder::Gradient => &[],
            JetOrder::Laplacian => LAPLACIAN_PAIRS,
            JetOrder::Hessian => HESSIAN_PAIRS,
        }
    }
}

/// Value, gradient and Hessian of one scalar output with respect to (x, y).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpatialJet {
    pub value: f64,
    /// (∂/∂x, ∂/∂y)
    pub grad: [f64; 2],
    /// (∂²/∂x², ∂²/∂x∂y, ∂²/∂y²)
    pub hess: [f64; 3],
}

impl SpatialJet {
    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JetBatch {
    pub order: JetOrder,
    pub batch: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(order: JetOrder, batch: usize, dim: usize) -> Self {
        Self { order, batch, dim, data: vec![0.0; order.channels() * batch * dim] }
    }

    /// Plain values, `values.len() / dim` rows.
    pub fn from_values(dim: usize, values: &[f64]) -> Self {
        assert!(dim > 0 && values.len().is_multiple_of(dim));
        Self { order: JetOrder::Value, batch: values.len() / dim, dim, data: values.to_vec() }
    }

    /// Seeds 2-D input points: ∂x carries (1, 0), ∂y carries (0, 1), second
    /// derivatives vanish.
    pub fn seed_points(order: JetOrder, points: &[[f64; 2]]) -> Self {
        let batch = points.len();
        let mut jet = Self::zeros(order, batch, 2);
        for (r, p) in points.iter().enumerate() {
            jet.data[r * 2] = p[0];
            jet.data[r * 2 + 1] = p[1];
        }
        if order.first_order() > 0 {
            for r in 0..batch {
                jet.data[(batch + r) * 2] = 1.0;
                jet.data[(2 * batch + r) * 2 + 1] = 1.0;
            }
        }
        jet
    }

    pub fn rows(&self) -> usize {
        self.order.channels() * self.batch
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let len = self.batch * self.dim;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.batch * self.dim;
        &mut self.data[c * len..(c + 1) * len]
    }

    #[inline]
    pub fn at(&self, c: usize, row: usize, j: usize) -> f64 {
        self.data[(c * self.batch + row) * self.dim + j]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, row: usize, j: usize) -> &mut f64 {
        &mut self.data[(c * self.batch + row) * self.dim + j]
    }

    /// Full Hessian jet of output `j` for `row`. Only valid for [`JetOrder::Hessian`].
    pub fn spatial_jet(&self, row: usize, j: usize) -> SpatialJet {
        debug_assert_eq!(self.order, JetOrder::Hessian);
        SpatialJet {
            value: self.at(0, row, j),
            grad: [self.at(1, row, j), self.at(2, row, j)],
            hess: [self.at(3, row, j), self.at(4, row, j), self.at(5, row, j)],
        }
    }
}

/// What the sine activation keeps for its reverse pass.
#[derive(Clone, Debug)]
pub(crate) struct SineCache {
    sin: Vec<f64>,
    cos: Vec<f64>,
    /// scaled pre-activation derivative channels (channels 1..)
    derivs: Vec<f64>,
    /// `Σ u_p u_r` for each second-order channel
    quad: Vec<f64>,
}

/// `y = sin(ω z)` propagated through every derivative channel.
pub(crate) fn sine_forward(z: &JetBatch, omega: f64) -> (JetBatch, SineCache) {
    let order = z.order;
    let n = z.batch * z.dim;
    let nd = order.first_order();
    let second = order.second_order();
    let mut out = JetBatch::zeros(order, z.batch, z.dim);

    let mut sin = vec![0.0; n];
    let mut cos = vec![0.0; n];
    for ((s, c), &v) in sin.iter_mut().zip(cos.iter_mut()).zip(z.channel(0)) {
        (*s, *c) = (omega * v).sin_cos();
    }
    out.channel_mut(0).copy_from_slice(&sin);

    let derivs: Vec<f64> = z.data[n..].iter().map(|v| omega * v).collect();
    let du = |a: usize| &derivs[a * n..(a + 1) * n];
    let mut quad = vec![0.0; second.len() * n];
    for (pairs, q) in second.iter().zip(quad.chunks_exact_mut(n.max(1))) {
        for &(p, r) in pairs.iter() {
            for ((q, a), b) in q.iter_mut().zip(du(p)).zip(du(r)) {
                *q += a * b;
            }
        }
    }
    if nd > 0 {
        for a in 0..nd {
            for ((y, c), u) in out.channel_mut(1 + a).iter_mut().zip(&cos).zip(du(a)) {
                *y = c * u;
            }
        }
        for si in 0..second.len() {
            let q = &quad[si * n..(si + 1) * n];
            let ys = out.channel_mut(1 + nd + si);
            for ((((y, c), s), u), q) in ys.iter_mut().zip(&cos).zip(&sin).zip(du(nd + si)).zip(q) {
                *y = c * u - s * q;
            }
        }
    }
    (out, SineCache { sin, cos, derivs, quad })
}

/// Reverse pass of [`sine_forward`]: gradient with respect to `z`.
pub(crate) fn sine_backward(grad_out: &JetBatch, cache: &SineCache, omega: f64) -> JetBatch {
    let order = grad_out.order;
    let n = grad_out.batch * grad_out.dim;
    let nd = order.first_order();
    let second = order.second_order();
    let (sin, cos) = (&cache.sin, &cache.cos);
    let u = |a: usize| &cache.derivs[a * n..(a + 1) * n];
    let g = |ch: usize| grad_out.channel(ch);
    let mut gz = JetBatch::zeros(order, grad_out.batch, grad_out.dim);

    // value channel
    let mut g0: Vec<f64> = g(0).iter().zip(cos).map(|(g, c)| g * c).collect();
    for a in 0..nd {
        for (((o, g), u), s) in g0.iter_mut().zip(g(1 + a)).zip(u(a)).zip(sin) {
            *o -= g * u * s;
        }
    }
    for si in 0..second.len() {
        let q = &cache.quad[si * n..(si + 1) * n];
        for (((((o, g), u), q), s), c) in g0.iter_mut().zip(g(1 + nd + si)).zip(u(nd + si)).zip(q).zip(sin).zip(cos) {
            *o -= g * (u * s + q * c);
        }
    }
    for (dst, v) in gz.channel_mut(0).iter_mut().zip(&g0) {
        *dst = omega * v;
    }

    // first-order channels
    for a in 0..nd {
        let mut ga: Vec<f64> = g(1 + a).iter().zip(cos).map(|(g, c)| g * c).collect();
        for (si, pairs) in second.iter().enumerate() {
            for &(p, r) in pairs.iter() {
                for other in [(p == a).then_some(r), (r == a).then_some(p)].into_iter().flatten() {
                    for (((o, g), s), u) in ga.iter_mut().zip(g(1 + nd + si)).zip(sin).zip(u(other)) {
                        *o -= g * s * u;
                    }
                }
            }
        }
        for (dst, v) in gz.channel_mut(1 + a).iter_mut().zip(&ga) {
            *dst = omega * v;
        }
    }

    // second-order channels
    for si in 0..second.len() {
        let ch = 1 + nd + si;
        for ((dst, g), c) in gz.channel_mut(ch).iter_mut().zip(g(ch)).zip(cos) {
            *dst = omega * g * c;
        }
    }
    gz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts() {
        assert_eq!(JetOrder::Value.channels(), 1);
        assert_eq!(JetOrder::Gradient.channels(), 3);
        assert_eq!(JetOrder::Laplacian.channels(), 4);
        assert_eq!(JetOrder::Hessian.channels(), 6);
    }

    #[test]
    fn seeded_points_carry_unit_derivatives() {
        let jet = JetBatch::seed_points(JetOrder::Hessian, &[[0.3, 0.7], [0.1, 0.2]]);
        assert_eq!(jet.at(0, 1, 0), 0.1);
        assert_eq!(jet.at(1, 0, 0), 1.0);
        assert_eq!(jet.at(1, 0, 1), 0.0);
        assert_eq!(jet.at(2, 1, 1), 1.0);
        assert!(jet.channel(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_of_affine_matches_closed_form() {
        // z = a x + c y + b  =>  y'' = -a^2 sin(z)
        let (a, c, b) = (1.7, -0.4, 0.25);
        let p = [0.3, 0.8];
        let mut z = JetBatch::zeros(JetOrder::Hessian, 1, 1);
        z.data = vec![a * p[0] + c * p[1] + b, a, c, 0.0, 0.0, 0.0];
        let (y, _) = sine_forward(&z, 1.0);
        let zv = z.data[0];
        let jet = y.spatial_jet(0, 0);
        assert_eq!(jet.value, zv.sin());
        assert!((jet.grad[0] - a * zv.cos()).abs() < 1e-15);
        assert!((jet.hess[0] + a * a * zv.sin()).abs() < 1e-15);
        assert!((jet.hess[1] + a * c * zv.sin()).abs() < 1e-15);
        assert!((jet.hess[2] + c * c * zv.sin()).abs() < 1e-15);
    }

    #[test]
    fn sine_backward_matches_finite_differences() {
        let omega = 3.0;
        for order in [JetOrder::Gradient, JetOrder::Laplacian, JetOrder::Hessian] {
            let ch = order.channels();
            let mut z = JetBatch::zeros(order, 2, 3);
            for (i, v) in z.data.iter_mut().enumerate() {
                *v = ((i * 7 + 3) as f64 * 0.61).sin();
            }
            let weights: Vec<f64> = (0..z.data.len()).map(|i| ((i * 5 + 1) as f64 * 0.37).cos()).collect();
            let f = |z: &JetBatch| -> f64 {
                let (y, _) = sine_forward(z, omega);
                y.data.iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = sine_forward(&z, omega);
            let mut up = JetBatch::zeros(order, 2, 3);
            up.data.copy_from_slice(&weights);
            let gz = sine_backward(&up, &cache, omega);
            let h = 1e-6;
            for i in 0..ch * 6 {
                let mut zp = z.clone();
                zp.data[i] += h;
                let mut zm = z.clone();
                zm.data[i] -= h;
                let fd = (f(&zp) - f(&zm)) / (2.0 * h);
                assert!((fd - gz.data[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{order:?} slot {i}: {fd} vs {}", gz.data[i]);
            }
        }
    }
}
