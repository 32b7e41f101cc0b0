use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::batch::DomainBatch;
use crate::error::{Error, Result};
use crate::linalg;

// RNG stream tags; the round index occupies the low bits.
const STREAM_MONTE_CARLO: u64 = 1 << 40;
const STREAM_JUMP: u64 = 1 << 41;
const STREAM_WALK: u64 = 1 << 42;

/// How the concept (and, for rotations, the feature mean) moves from round to round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftKind {
    /// Rotates the concept vector and the feature mean in the plane of the first two
    /// coordinates by `angle_step` per round, wrapping every `period` rounds.
    PeriodicRotation { period: usize, angle_step: f64 },
    /// Concept moves by `velocity` each round.
    LinearDrift { velocity: Vec<f64> },
    /// Concept jumps to a fresh Gaussian offset every `segment_len` rounds.
    PiecewiseStationary { segment_len: usize, jump_scale: f64 },
    /// Concept follows a Gaussian random walk.
    RandomWalk { step_scale: f64 },
}

impl DriftKind {
    pub fn stationary() -> Self {
        DriftKind::PeriodicRotation {
            period: 1,
            angle_step: 0.0,
        }
    }

    pub fn periodic(period: usize) -> Self {
        DriftKind::PeriodicRotation {
            period,
            angle_step: std::f64::consts::TAU / period.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// `y = <concept, x> + noise * eps`
    Regression,
    /// `y ~ Bernoulli(sigmoid(<concept, x>))`
    Classification,
}

/// Unvalidated scenario description. Build a [`DriftScenario`] from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub drift: DriftKind,
    pub task: Task,
    pub dim: usize,
    pub samples: usize,
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`.
    pub covariance: Vec<f64>,
    pub noise: f64,
    pub concept: Vec<f64>,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Defaults: zero mean, identity covariance, noise 0.1, concept `e_0`.
    pub fn new(drift: DriftKind, dim: usize) -> Self {
        let mut covariance = vec![0.0; dim * dim];
        for i in 0..dim {
            covariance[i * dim + i] = 1.0;
        }
        let mut concept = vec![0.0; dim];
        if let Some(c) = concept.first_mut() {
            *c = 1.0;
        }
        Self {
            drift,
            task: Task::Regression,
            dim,
            samples: 1024,
            mean: vec![0.0; dim],
            covariance,
            noise: 0.1,
            concept,
            seed: 1,
        }
    }

    pub fn task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn concept(mut self, concept: Vec<f64>) -> Self {
        self.concept = concept;
        self
    }

    pub fn mean(mut self, mean: Vec<f64>) -> Self {
        self.mean = mean;
        self
    }

    pub fn covariance(mut self, covariance: Vec<f64>) -> Self {
        self.covariance = covariance;
        self
    }

    pub fn build(self) -> Result<DriftScenario> {
        DriftScenario::new(self)
    }
}

/// A validated drift scenario. Pure: every batch is a function of `(seed, round)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftScenario {
    spec: ScenarioSpec,
    chol: Vec<f64>,
}

/// Distribution parameters of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundParams {
    pub mean: Vec<f64>,
    pub concept: Vec<f64>,
}

/// Second moment `E[x x^T]` (row-major) and cross moment `E[x y]` of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub second: Vec<f64>,
    pub cross: Vec<f64>,
    pub noise_var: f64,
    pub concept: Vec<f64>,
}

impl DriftScenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        if spec.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        for (name, len) in [("mean", spec.mean.len()), ("concept", spec.concept.len())] {
            if len != d {
                return Err(Error::Config(format!("{name} has length {len}, expected {d}")));
            }
        }
        if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
            return Err(Error::Config("noise must be finite and >= 0".into()));
        }
        if !linalg::all_finite(&spec.mean) || !linalg::all_finite(&spec.concept) {
            return Err(Error::Config("mean and concept must be finite".into()));
        }
        match &spec.drift {
            DriftKind::PeriodicRotation { period, angle_step } => {
                if *period < 1 {
                    return Err(Error::Config("period must be >= 1".into()));
                }
                if !angle_step.is_finite() {
                    return Err(Error::Config("angle_step must be finite".into()));
                }
                if d < 2 && *period > 1 {
                    return Err(Error::Config("rotation needs dim >= 2".into()));
                }
            }
            DriftKind::LinearDrift { velocity } => {
                if velocity.len() != d || !linalg::all_finite(velocity) {
                    return Err(Error::Config(format!(
                        "velocity must be {d} finite values"
                    )));
                }
            }
            DriftKind::PiecewiseStationary {
                segment_len,
                jump_scale,
            } => {
                if *segment_len < 1 || !jump_scale.is_finite() {
                    return Err(Error::Config(
                        "segment_len must be >= 1 and jump_scale finite".into(),
                    ));
                }
            }
            DriftKind::RandomWalk { step_scale } => {
                if !step_scale.is_finite() {
                    return Err(Error::Config("step_scale must be finite".into()));
                }
            }
        }
        let chol = linalg::cholesky(&spec.covariance, d)?;
        Ok(Self { spec, chol })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn samples(&self) -> usize {
        self.spec.samples
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn task(&self) -> Task {
        self.spec.task
    }

    /// Same scenario under another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.spec.seed = seed;
        s
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(stream);
        rng
    }

    fn gaussian(&self, stream: u64) -> Vec<f64> {
        let mut rng = self.rng(stream);
        (0..self.spec.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Mean and concept vector in effect at `round` (>= 1).
    pub fn params(&self, round: usize) -> Result<RoundParams> {
        if round == 0 {
            return Err(Error::Precondition("round index must be at least 1".into()));
        }
        let mut mean = self.spec.mean.clone();
        let mut concept = self.spec.concept.clone();
        match &self.spec.drift {
            DriftKind::PeriodicRotation { period, angle_step } => {
                let phase = ((round - 1) % period) as f64 * angle_step;
                if self.spec.dim >= 2 && phase != 0.0 {
                    let (s, c) = phase.sin_cos();
                    for v in [&mut mean, &mut concept] {
                        let (a, b) = (v[0], v[1]);
                        v[0] = c * a - s * b;
                        v[1] = s * a + c * b;
                    }
                }
            }
            DriftKind::LinearDrift { velocity } => {
                linalg::axpy((round - 1) as f64, velocity, &mut concept);
            }
            DriftKind::PiecewiseStationary {
                segment_len,
                jump_scale,
            } => {
                let segment = ((round - 1) / segment_len) as u64;
                if segment > 0 {
                    let z = self.gaussian(STREAM_JUMP + segment);
                    linalg::axpy(*jump_scale, &z, &mut concept);
                }
            }
            DriftKind::RandomWalk { step_scale } => {
                for s in 2..=round as u64 {
                    let z = self.gaussian(STREAM_WALK + s);
                    linalg::axpy(*step_scale, &z, &mut concept);
                }
            }
        }
        Ok(RoundParams { mean, concept })
    }

    /// Population moments of round `round`. The cross moment is closed-form for regression only.
    pub fn moments(&self, round: usize) -> Result<Moments> {
        if self.spec.task != Task::Regression {
            return Err(Error::UnsupportedOracle(
                "classification labels (cross moment has no closed form)".into(),
            ));
        }
        let p = self.params(round)?;
        let d = self.spec.dim;
        let mut second = self.spec.covariance.clone();
        for i in 0..d {
            for j in 0..d {
                second[i * d + j] += p.mean[i] * p.mean[j];
            }
        }
        let cross = linalg::mat_vec(&second, d, &p.concept);
        Ok(Moments {
            second,
            cross,
            noise_var: self.spec.noise * self.spec.noise,
            concept: p.concept,
        })
    }

    fn draw(&self, round: usize, n: usize, mut rng: ChaCha8Rng) -> Result<DomainBatch> {
        let p = self.params(round)?;
        let d = self.spec.dim;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut z = vec![0.0; d];
        for _ in 0..n {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let start = features.len();
            for i in 0..d {
                let li = &self.chol[i * d..i * d + i + 1];
                features.push(p.mean[i] + linalg::dot(li, &z[..=i]));
            }
            let score = linalg::dot(&features[start..], &p.concept);
            let label = match self.spec.task {
                Task::Regression => {
                    let eps: f64 = rng.sample(StandardNormal);
                    score + self.spec.noise * eps
                }
                Task::Classification => {
                    let u: f64 = rng.random();
                    if u < crate::models::sigmoid(score) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            labels.push(label);
        }
        DomainBatch::new(round, d, features, labels)
    }

    /// Independent sample of `n` points from `P_round`, on a stream disjoint from the round batches.
    pub fn monte_carlo_sample(&self, round: usize, n: usize) -> Result<DomainBatch> {
        if n == 0 {
            return Err(Error::Precondition("Monte-Carlo budget must be >= 1".into()));
        }
        self.draw(round, n, self.rng(STREAM_MONTE_CARLO + round as u64))
    }
}

/// The round-`round` batch of the stream; a pure function of `(scenario.seed, round)`.
pub fn next_domain(scenario: &DriftScenario, round: usize) -> Result<DomainBatch> {
    if round == 0 {
        return Err(Error::Precondition("round index must be at least 1".into()));
    }
    scenario.draw(round, scenario.samples(), scenario.rng(round as u64))
}

/// Writes rounds `1..=rounds` as CSV with header `t,feature_0,..,feature_{d-1},label`.
pub fn write_stream_csv<W: std::io::Write>(
    scenario: &DriftScenario,
    rounds: usize,
    mut out: W,
) -> Result<()> {
    let d = scenario.dim();
    let mut header = String::from("t");
    for i in 0..d {
        header.push_str(&format!(",feature_{i}"));
    }
    header.push_str(",label\n");
    out.write_all(header.as_bytes())?;
    for t in 1..=rounds {
        let batch = next_domain(scenario, t)?;
        for (x, y) in batch.rows() {
            let mut line = t.to_string();
            for v in x {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push_str(&y.to_string());
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}
