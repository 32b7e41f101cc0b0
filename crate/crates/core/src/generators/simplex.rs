use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Coordinates are never allowed below this after a multiplicative update.
pub const SIMPLEX_FLOOR: f64 = 1e-12;

/// A point `[a_1, .., a_b]` of the probability simplex; `a_i` weights lag `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Config("simplex dimension must be >= 1".into()));
        }
        if a.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("simplex weights must be finite and >= 0: {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(a))
    }

    pub fn uniform(b: usize) -> Self {
        Self(vec![1.0 / b as f64; b])
    }

    /// All mass on lag `lag` (1-based).
    pub fn one_hot(b: usize, lag: usize) -> Result<Self> {
        if lag == 0 || lag > b {
            return Err(Error::Config(format!("lag {lag} outside 1..={b}")));
        }
        let mut a = vec![0.0; b];
        a[lag - 1] = 1.0;
        Ok(Self(a))
    }

    /// Normalizes a nonnegative vector with positive sum.
    pub fn normalized(mut a: Vec<f64>) -> Result<Self> {
        let sum: f64 = a.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Numeric("simplex normalization".into()));
        }
        for x in a.iter_mut() {
            *x /= sum;
        }
        Self::new(a)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_distance(&self, other: &SimplexWeights) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl std::ops::Deref for SimplexWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Negative entropy `psi(a) = sum a_i ln a_i`, with `0 ln 0 = 0`.
pub fn neg_entropy(a: &[f64]) -> f64 {
    a.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Bregman divergence of the negative entropy on the simplex: `sum a_i ln(a_i / b_i)`.
pub fn bregman(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, &y)| x * (x / y).ln())
        .sum()
}

/// One exponentiated-gradient step: `phi * exp(-eta * grad) / ||.||_1`, then floored at
/// [`SIMPLEX_FLOOR`] and renormalized.
pub fn eg_update(phi: &SimplexWeights, grad_h: &[f64], eta: f64) -> Result<SimplexWeights> {
    check_len("exponentiated gradient", phi.len(), grad_h.len())?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Config(format!("meta learning rate must be > 0, got {eta}")));
    }
    if let Some(i) = phi.iter().position(|&a| a == 0.0) {
        return Err(Error::DegenerateSupport(i));
    }
    if grad_h.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("meta gradient".into()));
    }
    // A common shift cancels in the normalization; subtracting the minimum keeps exp() <= 1.
    let min = grad_h.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = phi
        .iter()
        .zip(grad_h)
        .map(|(&a, &g)| a * (-eta * (g - min)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    let floored: Vec<f64> = w.iter().map(|x| (x / sum).max(SIMPLEX_FLOOR)).collect();
    SimplexWeights::normalized(floored)
}
