//! Prediction models with their per-example loss and analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::stream::DomainBatch;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Flat model parameter vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(Error::Numeric("parameter vector".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Copies an iterate already known to be finite.
    pub fn from_slice(values: &[f64]) -> Self {
        debug_assert!(linalg::all_finite(values));
        Self(values.to_vec())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    fn eval(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let a = z.tanh();
                (a, 1.0 - a * a)
            }
            Activation::Softplus => (softplus(z), sigmoid(z)),
        }
    }
}

/// Model family together with its loss.
///
/// * `LinearSquared`: `f(x) = <theta, x>`, squared error.
/// * `Logistic`: `f(x) = sigmoid(<theta, x>)`, log loss on `{0,1}` labels.
/// * `Mlp`: one hidden layer, linear output, squared error. Parameters are laid out as
///   `[W1 (hidden x dim, row-major), b1 (hidden), w2 (hidden), b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossModelSpec {
    LinearSquared {
        dim: usize,
    },
    Logistic {
        dim: usize,
    },
    Mlp {
        dim: usize,
        hidden: usize,
        activation: Activation,
    },
}

impl LossModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossModelSpec::LinearSquared { dim } | LossModelSpec::Logistic { dim } if dim >= 1 => {
                Ok(())
            }
            LossModelSpec::Mlp { dim, hidden, .. } if dim >= 1 && hidden >= 1 => Ok(()),
            _ => Err(Error::Config(format!("invalid model {self:?}"))),
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            LossModelSpec::LinearSquared { dim }
            | LossModelSpec::Logistic { dim }
            | LossModelSpec::Mlp { dim, .. } => dim,
        }
    }

    /// Total parameter dimension `d_theta`.
    pub fn param_dim(&self) -> usize {
        match *self {
            LossModelSpec::LinearSquared { dim } | LossModelSpec::Logistic { dim } => dim,
            LossModelSpec::Mlp { dim, hidden, .. } => hidden * dim + 2 * hidden + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossModelSpec::LinearSquared { .. } => "linear-squared",
            LossModelSpec::Logistic { .. } => "logistic",
            LossModelSpec::Mlp { .. } => "mlp",
        }
    }

    /// Starting parameters: zero for the linear models, small Gaussian weights for the MLP
    /// (zero is a saddle there).
    pub fn init_params(&self, seed: u64) -> ParamVector {
        match *self {
            LossModelSpec::Mlp { dim, hidden, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                let scale = 1.0 / (dim as f64).sqrt();
                let mut v: Vec<f64> = (0..self.param_dim())
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                // zero biases
                for b in &mut v[hidden * dim..hidden * dim + hidden] {
                    *b = 0.0;
                }
                *v.last_mut().unwrap() = 0.0;
                ParamVector(v)
            }
            _ => ParamVector::zeros(self.param_dim()),
        }
    }

    fn check(&self, theta: &[f64], batch: &DomainBatch) -> Result<()> {
        check_len("model parameters", self.param_dim(), theta.len())?;
        check_len("batch feature dimension", self.input_dim(), batch.dim())
    }

    /// Model output for one input: a regression value, or a probability for `Logistic`.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            LossModelSpec::LinearSquared { .. } => linalg::dot(theta, x),
            LossModelSpec::Logistic { .. } => sigmoid(linalg::dot(theta, x)),
            LossModelSpec::Mlp {
                dim,
                hidden,
                activation,
            } => {
                let (w1, rest) = theta.split_at(hidden * dim);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut out = b2[0];
                for j in 0..hidden {
                    let z = linalg::dot(&w1[j * dim..(j + 1) * dim], x) + b1[j];
                    out += w2[j] * activation.eval(z).0;
                }
                out
            }
        }
    }

    /// Mean per-example loss `r(theta)` over the batch.
    pub fn loss(&self, theta: &[f64], batch: &DomainBatch) -> Result<f64> {
        self.check(theta, batch)?;
        let total: f64 = match *self {
            LossModelSpec::Logistic { .. } => batch
                .rows()
                .map(|(x, y)| {
                    let z = linalg::dot(theta, x);
                    softplus(z) - y * z
                })
                .sum(),
            _ => batch
                .rows()
                .map(|(x, y)| {
                    let r = self.predict(theta, x) - y;
                    r * r
                })
                .sum(),
        };
        let value = total / batch.len() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        Ok(value)
    }

    /// Exact gradient of [`loss`](Self::loss) with respect to `theta`.
    pub fn grad(&self, theta: &[f64], batch: &DomainBatch) -> Result<Vec<f64>> {
        self.check(theta, batch)?;
        let mut g = vec![0.0; theta.len()];
        match *self {
            LossModelSpec::LinearSquared { .. } => {
                for (x, y) in batch.rows() {
                    let r = linalg::dot(theta, x) - y;
                    linalg::axpy(2.0 * r, x, &mut g);
                }
            }
            LossModelSpec::Logistic { .. } => {
                for (x, y) in batch.rows() {
                    let r = sigmoid(linalg::dot(theta, x)) - y;
                    linalg::axpy(r, x, &mut g);
                }
            }
            LossModelSpec::Mlp {
                dim,
                hidden,
                activation,
            } => {
                let (w1, rest) = theta.split_at(hidden * dim);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut act = vec![0.0; hidden];
                let mut dact = vec![0.0; hidden];
                for (x, y) in batch.rows() {
                    let mut out = b2[0];
                    for j in 0..hidden {
                        let z = linalg::dot(&w1[j * dim..(j + 1) * dim], x) + b1[j];
                        let (a, da) = activation.eval(z);
                        act[j] = a;
                        dact[j] = da;
                        out += w2[j] * a;
                    }
                    let dout = 2.0 * (out - y);
                    let (gw1, grest) = g.split_at_mut(hidden * dim);
                    let (gb1, grest) = grest.split_at_mut(hidden);
                    let (gw2, gb2) = grest.split_at_mut(hidden);
                    gb2[0] += dout;
                    for j in 0..hidden {
                        gw2[j] += dout * act[j];
                        let dz = dout * w2[j] * dact[j];
                        gb1[j] += dz;
                        linalg::axpy(dz, x, &mut gw1[j * dim..(j + 1) * dim]);
                    }
                }
            }
        }
        linalg::scale(1.0 / batch.len() as f64, &mut g);
        if !linalg::all_finite(&g) {
            return Err(Error::Numeric("gradient".into()));
        }
        Ok(g)
    }
}

/// Central-difference estimate of the loss gradient, one coordinate at a time.
pub fn finite_diff_grad(
    model: &LossModelSpec,
    theta: &[f64],
    batch: &DomainBatch,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Precondition(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = model.loss(&probe, batch)?;
        probe[i] = theta[i] - step;
        let down = model.loss(&probe, batch)?;
        probe[i] = theta[i];
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{next_domain, DriftKind, ScenarioSpec, Task};

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        linalg::dist_sq(a, b).sqrt() / (linalg::norm(a) + 1e-12)
    }

    #[test]
    fn logistic_at_zero_is_ln2() {
        let s = ScenarioSpec::new(DriftKind::stationary(), 3)
            .task(Task::Classification)
            .samples(50)
            .build()
            .unwrap();
        let b = next_domain(&s, 1).unwrap();
        let m = LossModelSpec::Logistic { dim: 3 };
        let l = m.loss(&[0.0; 3], &b).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_single_example_gradient() {
        let b = DomainBatch::new(1, 2, vec![1.0, 0.0], vec![1.0]).unwrap();
        let g = LossModelSpec::Logistic { dim: 2 }.grad(&[0.0, 0.0], &b).unwrap();
        assert_eq!(g, vec![-0.5, 0.0]);
    }

    #[test]
    fn linear_interpolation_has_zero_loss() {
        let theta = [0.5, -1.0];
        let xs = vec![1.0, 2.0, -1.0, 0.5, 3.0, 1.0];
        let ys: Vec<f64> = xs.chunks(2).map(|x| linalg::dot(&theta, x)).collect();
        let b = DomainBatch::new(1, 2, xs, ys).unwrap();
        let m = LossModelSpec::LinearSquared { dim: 2 };
        assert_eq!(m.loss(&theta, &b).unwrap(), 0.0);
        assert!(linalg::norm(&m.grad(&theta, &b).unwrap()) < 1e-14);
    }

    #[test]
    fn least_squares_solution_is_stationary() {
        // Normal equations for a 2-d problem solved by hand.
        let xs = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0];
        let ys = vec![1.0, 2.0, 2.5, 0.0];
        let b = DomainBatch::new(1, 2, xs.clone(), ys.clone()).unwrap();
        let (mut a, mut c) = ([0.0; 4], [0.0; 2]);
        for (x, y) in xs.chunks(2).zip(&ys) {
            for i in 0..2 {
                c[i] += x[i] * y;
                for j in 0..2 {
                    a[i * 2 + j] += x[i] * x[j];
                }
            }
        }
        let det = a[0] * a[3] - a[1] * a[2];
        let theta = [
            (a[3] * c[0] - a[1] * c[1]) / det,
            (a[0] * c[1] - a[2] * c[0]) / det,
        ];
        let g = LossModelSpec::LinearSquared { dim: 2 }.grad(&theta, &b).unwrap();
        assert!(linalg::norm(&g) < 1e-12);
    }

    /// Straight-line forward pass, written independently of `predict`.
    fn mlp_loss_by_hand(theta: &[f64], xs: &[[f64; 2]], ys: &[f64]) -> f64 {
        // dim 2, hidden 3
        let w1 = &theta[0..6];
        let b1 = &theta[6..9];
        let w2 = &theta[9..12];
        let b2 = theta[12];
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let h0 = (w1[0] * x[0] + w1[1] * x[1] + b1[0]).tanh();
            let h1 = (w1[2] * x[0] + w1[3] * x[1] + b1[1]).tanh();
            let h2 = (w1[4] * x[0] + w1[5] * x[1] + b1[2]).tanh();
            let out = w2[0] * h0 + w2[1] * h1 + w2[2] * h2 + b2;
            total += (out - y) * (out - y);
        }
        total / xs.len() as f64
    }

    #[test]
    fn mlp_loss_matches_hand_forward_pass() {
        let xs = [[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0], [0.0, 0.3]];
        let ys = [0.2, -0.4, 1.0, 0.0];
        let theta: Vec<f64> = (0..13).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let flat: Vec<f64> = xs.iter().flatten().copied().collect();
        let b = DomainBatch::new(1, 2, flat, ys.to_vec()).unwrap();
        let m = LossModelSpec::Mlp {
            dim: 2,
            hidden: 3,
            activation: Activation::Tanh,
        };
        let got = m.loss(&theta, &b).unwrap();
        let want = mlp_loss_by_hand(&theta, &xs, &ys);
        assert!((got - want).abs() < 1e-14 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = ScenarioSpec::new(DriftKind::stationary(), 4)
            .samples(40)
            .seed(3)
            .build()
            .unwrap();
        let b = next_domain(&s, 2).unwrap();
        for model in [
            LossModelSpec::LinearSquared { dim: 4 },
            LossModelSpec::Mlp {
                dim: 4,
                hidden: 5,
                activation: Activation::Softplus,
            },
        ] {
            let theta: Vec<f64> = (0..model.param_dim())
                .map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0)
                .collect();
            let g = model.grad(&theta, &b).unwrap();
            let fd = finite_diff_grad(&model, &theta, &b, 1e-5).unwrap();
            assert!(rel_err(&g, &fd) < 1e-6, "{}", model.name());
        }
    }

    #[test]
    fn finite_diff_is_exact_on_quadratics() {
        let b = DomainBatch::new(1, 2, vec![1.0, 2.0, -0.5, 1.0], vec![0.3, -0.1]).unwrap();
        let m = LossModelSpec::LinearSquared { dim: 2 };
        let theta = [0.7, -0.2];
        let fd = finite_diff_grad(&m, &theta, &b, 0.5).unwrap();
        let g = m.grad(&theta, &b).unwrap();
        assert!(rel_err(&g, &fd) < 1e-12);
    }

    #[test]
    fn zero_step_is_rejected() {
        let b = DomainBatch::new(1, 1, vec![1.0], vec![1.0]).unwrap();
        let m = LossModelSpec::LinearSquared { dim: 1 };
        assert!(matches!(
            finite_diff_grad(&m, &[0.0], &b, 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let b = DomainBatch::new(1, 2, vec![1.0, 2.0], vec![1.0]).unwrap();
        let m = LossModelSpec::LinearSquared { dim: 3 };
        assert!(matches!(m.loss(&[0.0; 3], &b), Err(Error::Shape { .. })));
        assert!(matches!(
            LossModelSpec::LinearSquared { dim: 2 }.grad(&[0.0; 3], &b),
            Err(Error::Shape { .. })
        ));
    }
}
