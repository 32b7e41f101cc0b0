#![allow(dead_code)]

use fgd_sim::models::LossModelSpec;
use fgd_sim::stream::{DriftKind, PopulationSource, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Stationary,
    Periodic3,
    LinearDrift,
}

pub const SHAPES: [Shape; 3] = [Shape::Stationary, Shape::Periodic3, Shape::LinearDrift];

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Stationary => "stationary",
            Shape::Periodic3 => "periodic-3",
            Shape::LinearDrift => "linear-drift",
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Regression scenario whose concept and feature mean depend on the seed, so population
/// runs differ across seeds.
pub fn spec(shape: Shape, seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
    let mut concept = gaussian(&mut rng, DIM, 0.3);
    concept[0] += 1.0;
    concept[2] += 0.5;
    let mean = gaussian(&mut rng, DIM, 0.2);
    let drift = match shape {
        Shape::Stationary => DriftKind::stationary(),
        Shape::Periodic3 => DriftKind::periodic(3),
        Shape::LinearDrift => {
            let mut v = gaussian(&mut rng, DIM, 0.005);
            v[0] += 0.02;
            DriftKind::LinearDrift { velocity: v }
        }
    };
    ScenarioSpec::new(drift, DIM).concept(concept).mean(mean).seed(seed)
}

pub fn source(shape: Shape, seed: u64) -> PopulationSource {
    PopulationSource::exact(spec(shape, seed).build().unwrap(), LossModelSpec::LinearSquared { dim: DIM }).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
