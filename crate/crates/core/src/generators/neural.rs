use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linear::{LagWindow, MetaQuadratic};
use super::simplex::SimplexWeights;
use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::models::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralConfig {
    /// Attention output width `d2`.
    pub attn_dim: usize,
    /// Width of the MLP's hidden layer.
    pub hidden: usize,
    /// Domain summaries are `scale * sum_i x_i`.
    pub summary_scale: f64,
    /// Standard deviation multiplier for the random input-side weights.
    pub init_scale: f64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            attn_dim: 8,
            hidden: 16,
            summary_scale: 1.0 / 1024.0,
            init_scale: 1.0,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attn_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("neural widths must be >= 1".into()));
        }
        if !(self.summary_scale > 0.0) || !self.summary_scale.is_finite() {
            return Err(Error::Config("summary_scale must be > 0".into()));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::Config("init_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Offsets of each weight block inside the flat weight vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    b: usize,
    d1: usize,
    d2: usize,
    h: usize,
}

impl Layout {
    fn qkv(&self) -> usize {
        self.d1 * self.d2
    }
    fn wq(&self) -> usize {
        0
    }
    fn wk(&self) -> usize {
        self.qkv()
    }
    fn wv(&self) -> usize {
        2 * self.qkv()
    }
    fn w1(&self) -> usize {
        3 * self.qkv()
    }
    fn flat(&self) -> usize {
        self.b * self.d2
    }
    fn b1(&self) -> usize {
        self.w1() + self.h * self.flat()
    }
    fn w2(&self) -> usize {
        self.b1() + self.h
    }
    fn b2(&self) -> usize {
        self.w2() + self.b * self.h
    }
    fn len(&self) -> usize {
        self.b2() + self.b
    }
}

/// Neural future-gradient generator: domain summaries, one self-attention head, a tanh MLP and
/// a softmax head producing lag coefficients on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralMfgg {
    config: NeuralConfig,
    b: usize,
    input_dim: usize,
    weights: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    z: Vec<f64>,
    hidden: Vec<f64>,
    coeffs: Vec<f64>,
}

impl ForwardCache {
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `out (r x c) = a (r x k) * b (k x c)`, row-major.
fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let x = a[i * k + l];
            if x != 0.0 {
                linalg::axpy(x, &b[l * c..(l + 1) * c], &mut out[i * c..(i + 1) * c]);
            }
        }
    }
    out
}

/// `a^T * b` for `a (k x r)` and `b (k x c)`.
fn matmul_tn(a: &[f64], b: &[f64], k: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for l in 0..k {
        for i in 0..r {
            let x = a[l * r + i];
            if x != 0.0 {
                linalg::axpy(x, &b[l * c..(l + 1) * c], &mut out[i * c..(i + 1) * c]);
            }
        }
    }
    out
}

/// `a * b^T` for `a (r x k)` and `b (c x k)`.
fn matmul_nt(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = linalg::dot(&a[i * k..(i + 1) * k], &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// Summaries `e_j = scale * sum_i x_i` for lags `1..=b`; missing lags give zero rows.
pub fn domain_summaries(window: &LagWindow, input_dim: usize, scale: f64) -> Result<Vec<Vec<f64>>> {
    (1..=window.capacity())
        .map(|i| match window.lag(i) {
            Some(batch) => {
                check_len("summary input width", input_dim, batch.dim())?;
                let mut e = vec![0.0; input_dim];
                for (x, _) in batch.rows() {
                    linalg::axpy(1.0, x, &mut e);
                }
                linalg::scale(scale, &mut e);
                Ok(e)
            }
            None => Ok(vec![0.0; input_dim]),
        })
        .collect()
}

impl NeuralMfgg {
    /// Random input-side weights and a zero output layer, so a fresh net outputs uniform
    /// coefficients.
    pub fn new(config: NeuralConfig, b: usize, input_dim: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config, b, input_dim)?;
        let l = net.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_in = net.config.init_scale / (input_dim as f64).sqrt();
        let s_mlp = net.config.init_scale / (l.flat() as f64).sqrt();
        for (i, w) in net.weights[..l.b1()].iter_mut().enumerate() {
            let s = if i < l.w1() { s_in } else { s_mlp };
            *w = s * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(net)
    }

    pub fn zeros(config: NeuralConfig, b: usize, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if b == 0 || input_dim == 0 {
            return Err(Error::Config("neural generator needs b >= 1 and input width >= 1".into()));
        }
        let l = Layout {
            b,
            d1: input_dim,
            d2: config.attn_dim,
            h: config.hidden,
        };
        Ok(Self {
            config,
            b,
            input_dim,
            weights: vec![0.0; l.len()],
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            b: self.b,
            d1: self.input_dim,
            d2: self.config.attn_dim,
            h: self.config.hidden,
        }
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.config
    }

    pub fn window(&self) -> usize {
        self.b
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        check_len("neural weights", self.weights.len(), weights.len())?;
        if !linalg::all_finite(&weights) {
            return Err(Error::Numeric("neural weights".into()));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn summaries(&self, window: &LagWindow) -> Result<Vec<Vec<f64>>> {
        check_len("neural window", self.b, window.capacity())?;
        domain_summaries(window, self.input_dim, self.config.summary_scale)
    }

    pub fn forward_cached(&self, summaries: &[Vec<f64>]) -> Result<ForwardCache> {
        let l = self.layout();
        check_len("neural window", l.b, summaries.len())?;
        let mut x = Vec::with_capacity(l.b * l.d1);
        for e in summaries {
            check_len("summary width", l.d1, e.len())?;
            x.extend_from_slice(e);
        }
        let w = &self.weights;
        let q = matmul(&x, &w[l.wq()..l.wk()], l.b, l.d1, l.d2);
        let k = matmul(&x, &w[l.wk()..l.wv()], l.b, l.d1, l.d2);
        let v = matmul(&x, &w[l.wv()..l.w1()], l.b, l.d1, l.d2);
        let mut attn = matmul_nt(&q, &k, l.b, l.d2, l.b);
        let inv = 1.0 / (l.d2 as f64).sqrt();
        for row in attn.chunks_mut(l.b) {
            linalg::scale(inv, row);
            softmax_in_place(row);
        }
        let z = matmul(&attn, &v, l.b, l.b, l.d2);
        let mut hidden = linalg::mat_vec(&w[l.w1()..l.b1()], l.h, &z);
        for (hj, bj) in hidden.iter_mut().zip(&w[l.b1()..l.w2()]) {
            *hj = (*hj + bj).tanh();
        }
        let mut coeffs = linalg::mat_vec(&w[l.w2()..l.b2()], l.b, &hidden);
        for (c, bj) in coeffs.iter_mut().zip(&w[l.b2()..]) {
            *c += bj;
        }
        softmax_in_place(&mut coeffs);
        if !linalg::all_finite(&coeffs) {
            return Err(Error::Numeric("neural generator output".into()));
        }
        Ok(ForwardCache {
            x,
            q,
            k,
            v,
            attn,
            z,
            hidden,
            coeffs,
        })
    }

    /// Gradient of a scalar loss with respect to all weights, given `dL/da` at the output.
    pub fn backward(&self, cache: &ForwardCache, grad_coeffs: &[f64]) -> Result<Vec<f64>> {
        let l = self.layout();
        check_len("output gradient", l.b, grad_coeffs.len())?;
        let w = &self.weights;
        let mut g = vec![0.0; w.len()];
        let a = &cache.coeffs;
        let mean = linalg::dot(a, grad_coeffs);
        let dlogit: Vec<f64> = a.iter().zip(grad_coeffs).map(|(ai, gi)| ai * (gi - mean)).collect();

        for i in 0..l.b {
            let row = &mut g[l.w2() + i * l.h..l.w2() + (i + 1) * l.h];
            linalg::axpy(dlogit[i], &cache.hidden, row);
        }
        g[l.b2()..].copy_from_slice(&dlogit);

        let w2 = &w[l.w2()..l.b2()];
        let mut dpre = vec![0.0; l.h];
        for i in 0..l.b {
            linalg::axpy(dlogit[i], &w2[i * l.h..(i + 1) * l.h], &mut dpre);
        }
        for (d, hj) in dpre.iter_mut().zip(&cache.hidden) {
            *d *= 1.0 - hj * hj;
        }
        let n = l.flat();
        for j in 0..l.h {
            linalg::axpy(dpre[j], &cache.z, &mut g[l.w1() + j * n..l.w1() + (j + 1) * n]);
        }
        g[l.b1()..l.w2()].copy_from_slice(&dpre);

        // dz = W1^T dpre, viewed as b x d2
        let w1 = &w[l.w1()..l.b1()];
        let mut dz = vec![0.0; n];
        for j in 0..l.h {
            linalg::axpy(dpre[j], &w1[j * n..(j + 1) * n], &mut dz);
        }
        let dattn = matmul_nt(&dz, &cache.v, l.b, l.d2, l.b);
        let dv = matmul_tn(&cache.attn, &dz, l.b, l.b, l.d2);
        let inv = 1.0 / (l.d2 as f64).sqrt();
        let mut dscore = vec![0.0; l.b * l.b];
        for r in 0..l.b {
            let ar = &cache.attn[r * l.b..(r + 1) * l.b];
            let dr = &dattn[r * l.b..(r + 1) * l.b];
            let m = linalg::dot(ar, dr);
            for c in 0..l.b {
                dscore[r * l.b + c] = ar[c] * (dr[c] - m) * inv;
            }
        }
        let dq = matmul(&dscore, &cache.k, l.b, l.b, l.d2);
        let dk = matmul_tn(&dscore, &cache.q, l.b, l.b, l.d2);
        g[l.wq()..l.wk()].copy_from_slice(&matmul_tn(&cache.x, &dq, l.b, l.d1, l.d2));
        g[l.wk()..l.wv()].copy_from_slice(&matmul_tn(&cache.x, &dk, l.b, l.d1, l.d2));
        g[l.wv()..l.w1()].copy_from_slice(&matmul_tn(&cache.x, &dv, l.b, l.d1, l.d2));
        Ok(g)
    }

    pub fn coefficients(&self, summaries: &[Vec<f64>]) -> Result<SimplexWeights> {
        SimplexWeights::normalized(self.forward_cached(summaries)?.coeffs)
    }

    /// Meta loss `L(a(phi))` and its gradient in the net weights.
    pub fn loss_and_grad(&self, objective: &MetaQuadratic, summaries: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        check_len("meta objective", self.b, objective.dim())?;
        let cache = self.forward_cached(summaries)?;
        let loss = objective.value(&cache.coeffs);
        let g = self.backward(&cache, &objective.gradient(&cache.coeffs))?;
        Ok((loss, g))
    }

    /// One gradient step with rate `eta`; returns the loss before the step.
    pub fn train_step(&mut self, objective: &MetaQuadratic, summaries: &[Vec<f64>], eta: f64) -> Result<f64> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::Config(format!("neural meta learning rate must be >= 0, got {eta}")));
        }
        let (loss, g) = self.loss_and_grad(objective, summaries)?;
        linalg::axpy(-eta, &g, &mut self.weights);
        if !linalg::all_finite(&self.weights) {
            return Err(Error::Numeric("neural weights after meta step".into()));
        }
        Ok(loss)
    }
}

/// Coefficients the net assigns to a window.
pub fn neural_forward(net: &NeuralMfgg, window: &LagWindow) -> Result<SimplexWeights> {
    net.coefficients(&net.summaries(window)?)
}

/// Parameter snapshots from one round's inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBuffer {
    stride: usize,
    snapshots: Vec<ParamVector>,
}

impl TrajectoryBuffer {
    pub fn new(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("buffer stride must be >= 1".into()));
        }
        Ok(Self {
            stride,
            snapshots: Vec::new(),
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn clear(&mut self) {
        self.snapshots.clear();
    }

    /// Keeps the iterate reached after `iter` steps when `iter` is a multiple of the stride.
    pub fn offer(&mut self, iter: usize, theta: &[f64]) {
        if iter.is_multiple_of(self.stride) {
            self.snapshots.push(ParamVector::from_slice(theta));
        }
    }

    pub fn push(&mut self, theta: &[f64]) {
        self.snapshots.push(ParamVector::from_slice(theta));
    }

    pub fn last(&self) -> Option<&ParamVector> {
        self.snapshots.last()
    }

    pub fn snapshots(&self) -> &[ParamVector] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Mean over snapshots of `h(a) = ||grad r_t(theta) - sum_i a_i grad r_{t-i}(theta)||^2`,
    /// as a quadratic in `a`. `grad(s, theta)` must return zero for `s <= 0`.
    pub fn meta_objective(
        &self,
        b: usize,
        target: usize,
        mut grad: impl FnMut(i64, &[f64]) -> Result<Vec<f64>>,
    ) -> Result<MetaQuadratic> {
        if self.snapshots.is_empty() {
            return Err(Error::Precondition("trajectory buffer is empty".into()));
        }
        let mut total = MetaQuadratic::zeros(b);
        for theta in &self.snapshots {
            let lags = super::linear::lag_gradients(target, b, theta, &mut grad)?;
            let g = grad(target as i64, theta)?;
            total.add(&MetaQuadratic::new(&lags, &g));
        }
        let inv = 1.0 / self.snapshots.len() as f64;
        linalg::scale(inv, &mut total.gram);
        linalg::scale(inv, &mut total.cross);
        total.target_sq *= inv;
        Ok(total)
    }
}

/// One meta step on the buffer; errors when the buffer is empty.
pub fn neural_train_step(
    net: &mut NeuralMfgg,
    buffer: &TrajectoryBuffer,
    window: &LagWindow,
    grad: impl FnMut(i64, &[f64]) -> Result<Vec<f64>>,
    eta: f64,
) -> Result<f64> {
    let objective = buffer.meta_objective(net.window(), window.target(), grad)?;
    let summaries = net.summaries(window)?;
    net.train_step(&objective, &summaries, eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_summaries(b: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    fn random_objective(b: usize, dim: usize, seed: u64) -> MetaQuadratic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lags: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let target: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        MetaQuadratic::new(&lags, &target)
    }

    fn randomized_net(b: usize, d: usize, seed: u64) -> NeuralMfgg {
        let mut net = NeuralMfgg::new(NeuralConfig::default(), b, d, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let w: Vec<f64> = net
            .weights()
            .iter()
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        net.set_weights(w).unwrap();
        net
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = NeuralMfgg::zeros(NeuralConfig::default(), 4, 3).unwrap();
        let a = net.coefficients(&random_summaries(4, 3, 1)).unwrap();
        for x in a.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
        let fresh = NeuralMfgg::new(NeuralConfig::default(), 4, 3, 9).unwrap();
        assert!(fresh.coefficients(&random_summaries(4, 3, 2)).unwrap().iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let (b, d) = (3, 4);
            let net = randomized_net(b, d, seed);
            let s = random_summaries(b, d, 100 + seed);
            let obj = random_objective(b, 6, 200 + seed);
            let (_, g) = net.loss_and_grad(&obj, &s).unwrap();
            let step = 1e-4;
            let mut num = vec![0.0; g.len()];
            for i in 0..g.len() {
                let mut p = net.clone();
                let mut w = net.weights().to_vec();
                w[i] += step;
                p.set_weights(w.clone()).unwrap();
                let up = p.loss_and_grad(&obj, &s).unwrap().0;
                w[i] -= 2.0 * step;
                p.set_weights(w).unwrap();
                let down = p.loss_and_grad(&obj, &s).unwrap().0;
                num[i] = (up - down) / (2.0 * step);
            }
            let rel = linalg::dist_sq(&g, &num).sqrt() / (linalg::norm(&g) + 1e-12);
            assert!(rel <= 1e-4, "seed {seed}: rel {rel}");
        }
    }

    #[test]
    fn zero_loss_means_no_update() {
        let (b, d) = (3, 2);
        let mut net = randomized_net(b, d, 4);
        let s = random_summaries(b, d, 5);
        let a = net.coefficients(&s).unwrap();
        let lags = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let target = super::super::linear::combine(&a, &lags).unwrap();
        // identical lag gradients make h flat in a, so the gradient is exactly zero
        let same = vec![target.clone(); 3];
        let obj = MetaQuadratic::new(&same, &target);
        let before = net.weights().to_vec();
        net.train_step(&obj, &s, 0.1).unwrap();
        assert_eq!(net.weights(), &before[..]);
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let buf = TrajectoryBuffer::new(2).unwrap();
        assert!(matches!(
            buf.meta_objective(2, 3, |_, t| Ok(t.to_vec())),
            Err(Error::Precondition(_))
        ));
        assert!(TrajectoryBuffer::new(0).is_err());
    }

    #[test]
    fn buffer_stride() {
        let mut buf = TrajectoryBuffer::new(3).unwrap();
        for i in 0..10 {
            buf.offer(i, &[i as f64]);
        }
        let kept: Vec<f64> = buf.snapshots().iter().map(|p| p[0]).collect();
        assert_eq!(kept, vec![0.0, 3.0, 6.0, 9.0]);
        buf.clear();
        assert!(buf.is_empty());
    }

    #[test]
    fn shape_errors() {
        let net = NeuralMfgg::zeros(NeuralConfig::default(), 3, 2).unwrap();
        assert!(net.coefficients(&random_summaries(2, 2, 0)).is_err());
        assert!(net.coefficients(&random_summaries(3, 4, 0)).is_err());
    }
}
