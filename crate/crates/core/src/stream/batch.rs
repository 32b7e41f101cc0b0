use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One round's labeled dataset, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBatch {
    round: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl DomainBatch {
    pub fn new(round: usize, dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if round == 0 {
            return Err(Error::Precondition("round index must be at least 1".into()));
        }
        if dim == 0 || labels.is_empty() {
            return Err(Error::Precondition("a batch needs d >= 1 and n >= 1".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape {
                context: "batch features",
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        Ok(Self {
            round,
            dim,
            features,
            labels,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    /// Part `index` of `count` near-equal contiguous slices of a seeded permutation of the rows.
    /// Every row lands in exactly one part.
    pub fn part(&self, index: usize, count: usize, seed: u64) -> Result<DomainBatch> {
        if count == 0 || index >= count || count > self.len() {
            return Err(Error::Precondition(format!(
                "mini-batch part {index} of {count} for a batch of {} rows",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.round as u64);
        order.shuffle(&mut rng);
        let n = self.len();
        let lo = index * n / count;
        let hi = (index + 1) * n / count;
        let mut features = Vec::with_capacity((hi - lo) * self.dim);
        let mut labels = Vec::with_capacity(hi - lo);
        for &i in &order[lo..hi] {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        DomainBatch::new(self.round, self.dim, features, labels)
    }

    /// Row-wise concatenation; keeps the round index of the first batch.
    pub fn concat(batches: &[&DomainBatch]) -> Result<DomainBatch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::Precondition("nothing to concatenate".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for b in batches {
            if b.dim != first.dim {
                return Err(Error::Shape {
                    context: "concat",
                    expected: first.dim,
                    got: b.dim,
                });
            }
            features.extend_from_slice(&b.features);
            labels.extend_from_slice(&b.labels);
        }
        DomainBatch::new(first.round, first.dim, features, labels)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<DomainBatch> {
        let mut features = Vec::with_capacity(self.features.len());
        let mut labels = Vec::with_capacity(self.len());
        for &i in perm {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        DomainBatch::new(self.round, self.dim, features, labels)
    }
}
