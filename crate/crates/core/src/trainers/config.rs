use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{NeuralConfig, SimplexWeights};

/// Starting point of each round's inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// The currently deployed parameters.
    Previous,
    /// The parameters deployed `b` rounds before the target round (the initial ones early on).
    WindowBack,
    /// The initial parameters.
    Fresh,
}

/// Pre-specified generator for meta gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Forecast {
    /// The target round's own gradient (uses data not yet revealed to the learner).
    Oracle,
    /// `grad r_{t-k}`.
    Lag { k: usize },
    /// A fixed combination `sum_i a_i grad r_{t-i}`.
    Fixed { phi: SimplexWeights },
}

/// Step size for the exponentiated-gradient meta update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetaRate {
    /// `c * sqrt(ln b / (T M^4))` with `M` the running max of observed gradient norms.
    Schedule { c: f64 },
    /// A constant; zero freezes the weights.
    Fixed { eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuralVariant {
    /// Descend on the forecast `m` itself.
    Plain,
    /// Descend on `(m + sum_{i<w} grad r_{t-i}) / w`.
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralSettings {
    pub net: NeuralConfig,
    pub eta_phi: f64,
    /// Meta steps per round.
    pub steps: usize,
    /// Inner iterations between trajectory snapshots.
    pub stride: usize,
    pub variant: NeuralVariant,
    pub seed: u64,
}

impl Default for NeuralSettings {
    fn default() -> Self {
        Self {
            net: NeuralConfig::default(),
            eta_phi: 0.05,
            steps: 20,
            stride: 4,
            variant: NeuralVariant::Smoothed,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlgorithmKind {
    /// Batch update on the average of the last `b` gradients (`b = 1` is incremental update).
    Bu,
    Mgd { forecast: Forecast },
    FgdLinear { rate: MetaRate },
    FgdNeural { settings: NeuralSettings },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: AlgorithmKind,
    /// Training window.
    pub b: usize,
    /// Evaluation window of the local regret.
    pub w: usize,
    /// Stop the inner loop once the direction norm falls below this.
    pub delta: f64,
    pub eta: f64,
    pub max_inner_iters: usize,
    pub warm_start: WarmStart,
    /// Run a fixed number of mini-batch steps that visits every example once.
    pub one_pass: bool,
    pub mini_batch: usize,
}

impl TrainerConfig {
    fn with(algorithm: AlgorithmKind, b: usize) -> Self {
        Self {
            algorithm,
            b,
            w: 1,
            delta: 1e-3,
            eta: 0.1,
            max_inner_iters: 10_000,
            warm_start: WarmStart::WindowBack,
            one_pass: true,
            mini_batch: 256,
        }
    }

    pub fn iu() -> Self {
        Self::with(AlgorithmKind::Bu, 1)
    }

    pub fn bu(b: usize) -> Self {
        Self::with(AlgorithmKind::Bu, b)
    }

    /// Meta gradient descent; `b` only sets the one-pass step count.
    pub fn mgd(forecast: Forecast, b: usize) -> Self {
        Self::with(AlgorithmKind::Mgd { forecast }, b)
    }

    pub fn fgd_linear(b: usize) -> Self {
        Self::with(
            AlgorithmKind::FgdLinear {
                rate: MetaRate::Schedule { c: 1.0 },
            },
            b,
        )
    }

    pub fn fgd_neural(b: usize, settings: NeuralSettings) -> Self {
        Self::with(AlgorithmKind::FgdNeural { settings }, b)
    }

    pub fn window(mut self, w: usize) -> Self {
        self.w = w;
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn max_inner_iters(mut self, n: usize) -> Self {
        self.max_inner_iters = n;
        self
    }

    pub fn warm_start(mut self, ws: WarmStart) -> Self {
        self.warm_start = ws;
        self
    }

    /// Threshold stopping on full-batch directions.
    pub fn threshold(mut self) -> Self {
        self.one_pass = false;
        self
    }

    pub fn one_pass(mut self, mini_batch: usize) -> Self {
        self.one_pass = true;
        self.mini_batch = mini_batch;
        self
    }

    pub fn meta_rate(mut self, rate: MetaRate) -> Self {
        if let AlgorithmKind::FgdLinear { rate: r } = &mut self.algorithm {
            *r = rate;
        }
        self
    }

    pub fn label(&self) -> String {
        match &self.algorithm {
            AlgorithmKind::Bu if self.b == 1 => "iu".into(),
            AlgorithmKind::Bu => format!("bu-{}", self.b),
            AlgorithmKind::Mgd { forecast: Forecast::Oracle } => "mgd-oracle".into(),
            AlgorithmKind::Mgd { forecast: Forecast::Lag { k } } => format!("mgd-lag-{k}"),
            AlgorithmKind::Mgd { .. } => "mgd-fixed".into(),
            AlgorithmKind::FgdLinear { .. } => format!("fgd-linear-{}", self.b),
            AlgorithmKind::FgdNeural { .. } => format!("fgd-neural-{}", self.b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.b < 1 {
            errs.push("b must be >= 1".to_string());
        }
        if self.w < 1 {
            errs.push("w must be >= 1".into());
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            errs.push("delta must be >= 0".into());
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            errs.push("eta must be > 0".into());
        }
        if self.max_inner_iters < 1 {
            errs.push("max_inner_iters must be >= 1".into());
        }
        if self.one_pass && self.mini_batch < 1 {
            errs.push("mini_batch must be >= 1".into());
        }
        match &self.algorithm {
            AlgorithmKind::Mgd {
                forecast: Forecast::Lag { k },
            } if *k < 1 => errs.push("lagged forecast needs k >= 1".into()),
            AlgorithmKind::FgdLinear { rate } => match *rate {
                MetaRate::Schedule { c } if !(c > 0.0) || !c.is_finite() => {
                    errs.push("meta rate constant must be > 0".into())
                }
                MetaRate::Fixed { eta } if !(eta >= 0.0) || !eta.is_finite() => {
                    errs.push("eta_phi must be >= 0".into())
                }
                _ => {}
            },
            AlgorithmKind::FgdNeural { settings } => {
                if let Err(e) = settings.net.validate() {
                    errs.push(e.to_string());
                }
                if !(settings.eta_phi >= 0.0) || !settings.eta_phi.is_finite() {
                    errs.push("eta_phi must be >= 0".into());
                }
                if settings.stride < 1 {
                    errs.push("stride must be >= 1".into());
                }
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}
