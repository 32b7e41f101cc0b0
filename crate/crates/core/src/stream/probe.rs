use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamVector;

/// Box and count for the quasi-random part of a probe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lower: -2.0,
            upper: 2.0,
            count: 64,
            seed: 0,
        }
    }
}

/// Finite stand-in for "all theta": a supremum over it is a lower bound on the true one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    points: Vec<ParamVector>,
}

impl ProbeSet {
    pub fn new(points: Vec<ParamVector>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyProbe)?;
        let dim = first.len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Shape {
                context: "probe point",
                expected: dim,
                got: p.len(),
            });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ParamVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Union with more points (e.g. parameters visited by another run).
    pub fn extended(&self, more: &[ParamVector]) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend_from_slice(more);
        Self::new(points)
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= k).all(|&p| !k.is_multiple_of(p)) {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Union of `config.count` shifted-Halton points in `[lower, upper]^dim` and the visited iterates.
pub fn build_probe_set(config: &ProbeConfig, dim: usize, visited: &[ParamVector]) -> Result<ProbeSet> {
    if !config.lower.is_finite() || !config.upper.is_finite() || config.lower > config.upper {
        return Err(Error::Config(format!(
            "probe box [{}, {}] must be finite and ordered",
            config.lower, config.upper
        )));
    }
    if config.count == 0 && visited.is_empty() {
        return Err(Error::Config("probe set would be empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let bases = primes(dim);
    let width = config.upper - config.lower;
    let mut points: Vec<ParamVector> = (0..config.count as u64)
        .map(|k| {
            let v = bases
                .iter()
                .zip(&shift)
                .map(|(&b, &s)| config.lower + width * (radical_inverse(k + 1, b) + s).fract())
                .collect();
            ParamVector::new(v)
        })
        .collect::<Result<_>>()?;
    points.extend_from_slice(visited);
    ProbeSet::new(points)
}
