use std::rc::Rc;

use super::simplex::SimplexWeights;
use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::models::LossModelSpec;
use crate::stream::{DomainBatch, GradientSource, History};

/// The `b` domains preceding `target`, most recent first. Lags that fall before round 1 are
/// absent and contribute zero gradient.
#[derive(Debug, Clone)]
pub struct LagWindow {
    target: usize,
    capacity: usize,
    batches: Vec<Rc<DomainBatch>>,
}

impl LagWindow {
    /// `batches[i]` must be the batch of round `target - 1 - i`.
    pub fn new(target: usize, capacity: usize, batches: Vec<Rc<DomainBatch>>) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("window size b must be >= 1".into()));
        }
        let expected = capacity.min(target.saturating_sub(1));
        check_len("lag window", expected, batches.len())?;
        for (i, b) in batches.iter().enumerate() {
            if b.round() != target - 1 - i {
                return Err(Error::Precondition(format!(
                    "lag {} of target {target} holds round {}",
                    i + 1,
                    b.round()
                )));
            }
        }
        Ok(Self {
            target,
            capacity,
            batches,
        })
    }

    /// Collects the window from revealed history.
    pub fn collect(history: &History<'_>, target: usize, capacity: usize) -> Result<Self> {
        let batches = (1..=capacity)
            .map_while(|i| target.checked_sub(i).filter(|&r| r >= 1))
            .map(|r| history.batch(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(target, capacity, batches)
    }

    /// Same, without causality checks.
    pub fn collect_from(source: &dyn GradientSource, target: usize, capacity: usize) -> Result<Self> {
        let batches = (1..=capacity)
            .map_while(|i| target.checked_sub(i).filter(|&r| r >= 1))
            .map(|r| source.batch(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(target, capacity, batches)
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Batch for lag `i` (1-based), if that round exists.
    pub fn lag(&self, i: usize) -> Option<&DomainBatch> {
        self.batches.get(i.checked_sub(1)?).map(|b| &**b)
    }

    /// Rounds `target - 1, .., target - b` (possibly <= 0).
    pub fn lag_rounds(&self) -> impl Iterator<Item = i64> + '_ {
        (1..=self.capacity).map(move |i| self.target as i64 - i as i64)
    }

    /// Empirical lag gradients on the window's own batches.
    pub fn empirical_gradients(&self, model: &LossModelSpec, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        (1..=self.capacity)
            .map(|i| match self.lag(i) {
                Some(b) => model.grad(theta, b),
                None => Ok(vec![0.0; theta.len()]),
            })
            .collect()
    }
}

/// Lag gradients `grad r_{t-1}(theta), .., grad r_{t-b}(theta)` from any gradient oracle.
pub fn lag_gradients(
    target: usize,
    b: usize,
    theta: &[f64],
    mut grad: impl FnMut(i64, &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    (1..=b as i64).map(|i| grad(target as i64 - i, theta)).collect()
}

/// `m = sum_i a_i g_i`, accumulated in lag order starting from zero.
pub fn combine(phi: &[f64], lag_grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_len("linear generator", phi.len(), lag_grads.len())?;
    let dim = lag_grads.first().map_or(0, Vec::len);
    let mut m = vec![0.0; dim];
    for (a, g) in phi.iter().zip(lag_grads) {
        check_len("lag gradient", dim, g.len())?;
        linalg::axpy(*a, g, &mut m);
    }
    Ok(m)
}

/// Linear autoregressive forecast `m(theta; phi, t) = sum_i a_i grad r_{t-i}(theta)` on the
/// window's batches.
pub fn linear_forward(
    phi: &SimplexWeights,
    window: &LagWindow,
    model: &LossModelSpec,
    theta: &[f64],
) -> Result<Vec<f64>> {
    check_len("window capacity", window.capacity(), phi.len())?;
    combine(phi, &window.empirical_gradients(model, theta)?)
}

/// `h(phi) = ||target - sum_i a_i g_i||^2` and its gradient
/// `dh/da_i = -2 <g_i, target - sum_j a_j g_j>`.
pub fn meta_loss_and_grad(phi: &[f64], lag_grads: &[Vec<f64>], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let m = combine(phi, lag_grads)?;
    check_len("target gradient", m.len(), target.len())?;
    let resid = linalg::sub(target, &m);
    let h = linalg::norm_sq(&resid);
    let grad = lag_grads.iter().map(|g| -2.0 * linalg::dot(g, &resid)).collect();
    Ok((h, grad))
}

/// `h` as an explicit quadratic in `phi`: `h(a) = target_sq - 2 <cross, a> + a^T gram a`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetaQuadratic {
    /// Row-major `b x b` Gram matrix of the lag gradients.
    pub gram: Vec<f64>,
    pub cross: Vec<f64>,
    pub target_sq: f64,
}

impl MetaQuadratic {
    pub fn new(lag_grads: &[Vec<f64>], target: &[f64]) -> Self {
        let b = lag_grads.len();
        let mut gram = vec![0.0; b * b];
        for i in 0..b {
            for j in i..b {
                let v = linalg::dot(&lag_grads[i], &lag_grads[j]);
                gram[i * b + j] = v;
                gram[j * b + i] = v;
            }
        }
        Self {
            gram,
            cross: lag_grads.iter().map(|g| linalg::dot(g, target)).collect(),
            target_sq: linalg::norm_sq(target),
        }
    }

    pub fn dim(&self) -> usize {
        self.cross.len()
    }

    pub fn zeros(b: usize) -> Self {
        Self {
            gram: vec![0.0; b * b],
            cross: vec![0.0; b],
            target_sq: 0.0,
        }
    }

    /// Accumulates `other` into `self` (sums of the `h_t`).
    pub fn add(&mut self, other: &MetaQuadratic) {
        linalg::axpy(1.0, &other.gram, &mut self.gram);
        linalg::axpy(1.0, &other.cross, &mut self.cross);
        self.target_sq += other.target_sq;
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        let b = self.dim();
        let quad: f64 = (0..b)
            .map(|i| a[i] * linalg::dot(&self.gram[i * b..(i + 1) * b], a))
            .sum();
        (self.target_sq - 2.0 * linalg::dot(&self.cross, a) + quad).max(0.0)
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let b = self.dim();
        (0..b)
            .map(|i| 2.0 * (linalg::dot(&self.gram[i * b..(i + 1) * b], a) - self.cross[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_selects_a_lag() {
        let grads = vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 7.0]];
        let phi = SimplexWeights::one_hot(3, 2).unwrap();
        assert_eq!(combine(&phi, &grads).unwrap(), grads[1]);
    }

    #[test]
    fn convex_combination() {
        let grads = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = combine(&[0.3, 0.7], &grads).unwrap();
        assert_eq!(m, vec![0.3, 0.7]);
    }

    #[test]
    fn hand_evaluated_meta_loss() {
        let grads = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (h, g) = meta_loss_and_grad(&[0.5, 0.5], &grads, &[1.0, 0.0]).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        assert_eq!(g, vec![-1.0, 1.0]);
        // finite differences of h
        let f = |a: [f64; 2]| meta_loss_and_grad(&a, &grads, &[1.0, 0.0]).unwrap().0;
        let e = 1e-6;
        let d0 = (f([0.5 + e, 0.5]) - f([0.5 - e, 0.5])) / (2.0 * e);
        let d1 = (f([0.5, 0.5 + e]) - f([0.5, 0.5 - e])) / (2.0 * e);
        assert!((d0 + 1.0).abs() < 1e-8 && (d1 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let grads = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let target = combine(&[0.25, 0.75], &grads).unwrap();
        let (h, _) = meta_loss_and_grad(&[0.25, 0.75], &grads, &target).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn quadratic_form_agrees_with_direct_evaluation() {
        let grads = vec![vec![1.0, 2.0, 0.5], vec![3.0, -1.0, 0.0], vec![0.2, 0.2, -2.0]];
        let target = vec![0.7, -0.3, 1.1];
        let q = MetaQuadratic::new(&grads, &target);
        let a = [0.2, 0.5, 0.3];
        let (h, g) = meta_loss_and_grad(&a, &grads, &target).unwrap();
        assert!((q.value(&a) - h).abs() < 1e-12);
        for (x, y) in q.gradient(&a).iter().zip(&g) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn window_rounds_and_missing_lags() {
        let b = |r: usize| Rc::new(DomainBatch::new(r, 1, vec![r as f64], vec![1.0]).unwrap());
        let w = LagWindow::new(3, 4, vec![b(2), b(1)]).unwrap();
        assert_eq!(w.lag_rounds().collect::<Vec<_>>(), vec![2, 1, 0, -1]);
        assert!(w.lag(3).is_none());
        let g = w
            .empirical_gradients(&LossModelSpec::LinearSquared { dim: 1 }, &[0.0])
            .unwrap();
        assert_eq!(g[2], vec![0.0]);
        assert!(LagWindow::new(3, 4, vec![b(1), b(2)]).is_err());
        assert!(LagWindow::new(5, 2, vec![b(4)]).is_err());
    }
}
