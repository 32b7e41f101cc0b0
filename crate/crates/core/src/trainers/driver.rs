use serde::{Deserialize, Serialize};

use super::config::{AlgorithmKind, Forecast, MetaRate, NeuralVariant, TrainerConfig, WarmStart};
use super::generator::{ForecastValue, RoundGenerator};
use super::inner::{inner_descent, one_pass_steps, InnerResult, Schedule, Termination};
use crate::error::{Error, Result};
use crate::generators::{
    eg_update, lag_gradients, meta_loss_and_grad, LagWindow, MetaQuadratic, NeuralMfgg, SimplexWeights,
    TrajectoryBuffer,
};
use crate::linalg;
use crate::metrics::{desk_auc, EvalRecord, LedgerHeader, MetaRecord, NeuralRecord, RegretLedger, RoundRecord};
use crate::models::ParamVector;
use crate::stream::{GradientSource, History, SourceKind, StreamEvent, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub rounds: usize,
    /// Seeds the model's initial parameters.
    pub init_seed: u64,
    /// Record per-iteration traces (needs the next round's data, so only for analysis).
    pub trace: bool,
    /// Checkpoint every this many rounds; 0 disables.
    pub checkpoint_every: usize,
}

impl RunOptions {
    pub fn new(rounds: usize) -> Self {
        Self {
            rounds,
            init_seed: 0,
            trace: false,
            checkpoint_every: 0,
        }
    }

    pub fn init_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn checkpoint_every(mut self, every: usize) -> Self {
        self.checkpoint_every = every;
        self
    }
}

/// How `theta_t` was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub t: usize,
    pub theta: ParamVector,
    pub inner_iters: usize,
    pub termination: Termination,
    /// Norm of the training direction at `theta_t`.
    pub terminal_norm: f64,
    pub snapshots: usize,
}

/// One inner iterate while training `theta_round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub iter: usize,
    /// `||grad r_round(theta)||^2`
    pub grad_sq_norm: f64,
    pub forecast_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NeuralMfgg>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outcomes: Vec<RoundOutcome>,
    pub ledger: RegretLedger,
    /// `phi_1, .., phi_{T+1}` for the linear generator; empty otherwise.
    pub phi_trajectory: Vec<SimplexWeights>,
    pub checkpoints: Vec<Checkpoint>,
    pub traces: Vec<TracePoint>,
    pub events: Vec<StreamEvent>,
    pub notices: Vec<String>,
}

impl RunOutput {
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.outcomes.iter().map(|o| o.theta.to_vec()).collect()
    }
}

enum Pipeline {
    Bu,
    Mgd(Forecast),
    Linear {
        rate: MetaRate,
        phi: SimplexWeights,
        m_bound: f64,
    },
    Neural {
        eta_phi: f64,
        steps: usize,
        variant: NeuralVariant,
        net: Box<NeuralMfgg>,
        buffer: TrajectoryBuffer,
    },
}

impl Pipeline {
    fn new(config: &TrainerConfig, input_dim: usize) -> Result<Self> {
        Ok(match &config.algorithm {
            AlgorithmKind::Bu => Pipeline::Bu,
            AlgorithmKind::Mgd { forecast } => {
                if let Forecast::Fixed { phi } = forecast {
                    if phi.len() != config.b {
                        return Err(Error::Config(format!(
                            "fixed forecast has {} weights but b = {}",
                            phi.len(),
                            config.b
                        )));
                    }
                }
                Pipeline::Mgd(forecast.clone())
            }
            AlgorithmKind::FgdLinear { rate } => Pipeline::Linear {
                rate: *rate,
                phi: SimplexWeights::uniform(config.b),
                m_bound: 0.0,
            },
            AlgorithmKind::FgdNeural { settings } => Pipeline::Neural {
                eta_phi: settings.eta_phi,
                steps: settings.steps,
                variant: settings.variant,
                net: Box::new(NeuralMfgg::new(settings.net.clone(), config.b, input_dim, settings.seed)?),
                buffer: TrajectoryBuffer::new(settings.stride)?,
            },
        })
    }

    fn generator(&self, config: &TrainerConfig, target: usize, hist: &History<'_>) -> Result<RoundGenerator> {
        let smoothed = |forecast| RoundGenerator::Smoothed { w: config.w, forecast };
        Ok(match self {
            Pipeline::Bu => RoundGenerator::Average { b: config.b },
            Pipeline::Mgd(Forecast::Oracle) => smoothed(ForecastValue::Oracle),
            Pipeline::Mgd(Forecast::Lag { k }) => smoothed(ForecastValue::Lag(*k)),
            Pipeline::Mgd(Forecast::Fixed { phi }) => smoothed(ForecastValue::Linear(phi.to_vec())),
            _ if target <= config.b => RoundGenerator::Average { b: 1 },
            Pipeline::Linear { phi, .. } => smoothed(ForecastValue::Linear(phi.to_vec())),
            Pipeline::Neural { net, variant, .. } => {
                let window = LagWindow::collect(hist, target, config.b)?;
                let a = net.coefficients(&net.summaries(&window)?)?;
                let w = match variant {
                    NeuralVariant::Plain => 1,
                    NeuralVariant::Smoothed => config.w,
                };
                RoundGenerator::Smoothed {
                    w,
                    forecast: ForecastValue::Linear(a.to_vec()),
                }
            }
        })
    }

    /// Meta update after round `t` is revealed.
    fn observe(
        &mut self,
        config: &TrainerConfig,
        rounds: usize,
        t: usize,
        theta: &[f64],
        hist: &History<'_>,
        notices: &mut Vec<String>,
    ) -> Result<(Option<MetaRecord>, Option<NeuralRecord>)> {
        match self {
            Pipeline::Linear { rate, phi, m_bound } => {
                let target = hist.grad(t as i64, theta)?;
                let lags = lag_gradients(t, config.b, theta, |s, th| hist.grad(s, th))?;
                let (h, grad_h) = meta_loss_and_grad(phi, &lags, &target)?;
                for g in lags.iter().chain(std::iter::once(&target)) {
                    *m_bound = m_bound.max(linalg::norm(g));
                }
                let eta_phi = match *rate {
                    MetaRate::Fixed { eta } => eta,
                    MetaRate::Schedule { c } if config.b > 1 && *m_bound > 0.0 => {
                        c * ((config.b as f64).ln() / (rounds as f64 * m_bound.powi(4))).sqrt()
                    }
                    MetaRate::Schedule { .. } => 0.0,
                };
                let record = MetaRecord {
                    phi: phi.to_vec(),
                    h,
                    grad_h: grad_h.clone(),
                    eta_phi,
                    m_bound: *m_bound,
                    quadratic: MetaQuadratic::new(&lags, &target),
                };
                if eta_phi > 0.0 {
                    *phi = eg_update(phi, &grad_h, eta_phi)?;
                }
                Ok((Some(record), None))
            }
            Pipeline::Neural {
                eta_phi,
                steps,
                net,
                buffer,
                ..
            } => {
                if buffer.is_empty() {
                    notices.push(format!("round {t}: trajectory buffer empty, meta update skipped"));
                    return Ok((
                        None,
                        Some(NeuralRecord {
                            loss_before: None,
                            loss_after: None,
                            steps: 0,
                            buffer_len: 0,
                            skipped: true,
                        }),
                    ));
                }
                let objective = buffer.meta_objective(config.b, t, |s, th| hist.grad(s, th))?;
                let window = LagWindow::collect(hist, t, config.b)?;
                let summaries = net.summaries(&window)?;
                let mut before = None;
                for _ in 0..*steps {
                    let loss = net.train_step(&objective, &summaries, *eta_phi)?;
                    before.get_or_insert(loss);
                }
                let after = net.loss_and_grad(&objective, &summaries)?.0;
                Ok((
                    None,
                    Some(NeuralRecord {
                        loss_before: Some(before.unwrap_or(after)),
                        loss_after: Some(after),
                        steps: *steps,
                        buffer_len: buffer.len(),
                        skipped: false,
                    }),
                ))
            }
            _ => Ok((None, None)),
        }
    }
}

fn source_label(kind: SourceKind) -> String {
    match kind {
        SourceKind::Empirical => "empirical".into(),
        SourceKind::Population => "population".into(),
        SourceKind::MonteCarlo(_) => "monte-carlo".into(),
    }
}

/// `sum_i c_i grad r_{t-i}(theta)` from `grads[i] = grad r_{t-i}(theta)`.
fn apply_coeffs(coeffs: &[f64], grads: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; grads[0].len()];
    for (c, g) in coeffs.iter().zip(grads) {
        if *c != 0.0 {
            linalg::axpy(*c, g, &mut m);
        }
    }
    m
}

struct Measured {
    grad_u_sq: f64,
    train_u_sq: f64,
    grad_r_sq: f64,
    generator_error_sq: f64,
    forecast_error: Option<f64>,
}

/// Ledger quantities at `theta_t`, measured with the run's own gradient source.
fn measure(source: &dyn GradientSource, t: usize, theta: &[f64], w: usize, coeffs: &[f64]) -> Result<Measured> {
    let depth = w.max(coeffs.len().saturating_sub(1));
    let grads = (0..=depth)
        .map(|i| source.grad(t as i64 - i as i64, theta))
        .collect::<Result<Vec<_>>>()?;
    let u = crate::generators::average(&grads[..w])?;
    let u_prev = crate::generators::average(&grads[1..=w])?;
    let m = apply_coeffs(coeffs, &grads);
    let grad_r_sq = linalg::norm_sq(&grads[0]);
    let generator_error_sq = linalg::dist_sq(&grads[0], &m);
    Ok(Measured {
        grad_u_sq: linalg::norm_sq(&u),
        train_u_sq: linalg::norm_sq(&u_prev),
        grad_r_sq,
        generator_error_sq,
        forecast_error: (grad_r_sq > 0.0).then(|| generator_error_sq / grad_r_sq),
    })
}

fn evaluate(hist: &History<'_>, t: usize, theta: &[f64]) -> Result<EvalRecord> {
    let batch = hist.evaluation_batch(t)?;
    let model = hist.model();
    let loss = model.loss(theta, &batch)?;
    let auc = match hist.lookahead().scenario().task() {
        Task::Classification => {
            let scores: Vec<f64> = batch.rows().map(|(x, _)| model.predict(theta, x)).collect();
            desk_auc(&scores, batch.labels()).ok()
        }
        Task::Regression => None,
    };
    Ok(EvalRecord { loss, auc })
}

/// Runs any pipeline for `options.rounds` rounds.
///
/// Round `t`: the deployed `theta_t` is scored on `D_t`, `D_t` is revealed, the ledger records
/// `theta_t`, the generator takes its meta step, and the inner loop fits `theta_{t+1}`.
pub fn run(config: &TrainerConfig, source: &dyn GradientSource, options: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    if options.rounds < 1 {
        return Err(Error::Config("T must be >= 1".into()));
    }
    let model = source.model();
    model.validate()?;
    let rounds = options.rounds;
    let hist = History::new(source);
    let mut pipeline = Pipeline::new(config, source.scenario().dim())?;
    let init = model.init_params(options.init_seed).into_inner();
    let schedule = if config.one_pass {
        Schedule::FixedSteps(one_pass_steps(config.b, source.scenario().samples(), config.mini_batch))
    } else {
        Schedule::Threshold {
            delta: config.delta,
            max_iters: config.max_inner_iters,
        }
    };

    let mut ledger = RegretLedger::new(LedgerHeader {
        scenario: String::new(),
        algorithm: config.label(),
        b: config.b,
        w: config.w,
        delta: config.delta,
        eta: config.eta,
        one_pass: config.one_pass,
        gradients: source_label(source.kind()),
        model: model.name().into(),
        seed: source.scenario().seed(),
        rounds,
    });
    let mut outcomes: Vec<RoundOutcome> = Vec::with_capacity(rounds);
    let mut phi_trajectory = Vec::new();
    let mut checkpoints = Vec::new();
    let mut traces = Vec::new();
    let mut notices = Vec::new();
    if let Pipeline::Linear { phi, .. } = &pipeline {
        phi_trajectory.push(phi.clone());
    }

    // Fits theta_target; traces and the neural buffer only for targets >= 2.
    let fit = |target: usize,
                   pipeline: &mut Pipeline,
                   outcomes: &[RoundOutcome],
                   traces: &mut Vec<TracePoint>|
     -> Result<(InnerResult, RoundGenerator, usize)> {
        let gen = pipeline.generator(config, target, &hist)?;
        let back = match config.warm_start {
            WarmStart::Previous => 1,
            WarmStart::WindowBack => config.b,
            WarmStart::Fresh => usize::MAX,
        };
        let start = target
            .checked_sub(back)
            .filter(|&r| r >= 1)
            .map_or_else(|| init.clone(), |r| outcomes[r - 1].theta.to_vec());
        let coeffs = gen.implied_forecast(config.w);
        let record_trace = options.trace && target >= 2;
        let mut buffer = match pipeline {
            Pipeline::Neural { buffer, .. } if target >= 2 => {
                buffer.clear();
                Some(buffer)
            }
            _ => None,
        };
        let lookahead = hist.lookahead();
        let result = inner_descent(
            target,
            start,
            |theta, part| gen.direction(target, theta, part, &hist),
            config.eta,
            schedule,
            |iter, theta| {
                if let Some(buf) = buffer.as_deref_mut() {
                    buf.offer(iter, theta);
                }
                if record_trace && iter >= 1 {
                    let depth = coeffs.len().max(1);
                    let grads = (0..depth)
                        .map(|i| lookahead.grad(target as i64 - i as i64, theta))
                        .collect::<Result<Vec<_>>>()?;
                    let g2 = linalg::norm_sq(&grads[0]);
                    let err = linalg::dist_sq(&grads[0], &apply_coeffs(&coeffs, &grads));
                    traces.push(TracePoint {
                        round: target,
                        iter,
                        grad_sq_norm: g2,
                        forecast_error: (g2 > 0.0).then(|| err / g2),
                    });
                }
                Ok(())
            },
        )?;
        let mut snaps = 0;
        if let Some(buf) = buffer {
            if buf.last().map(|p| p.as_slice()) != Some(&result.theta[..]) {
                buf.push(&result.theta);
            }
            snaps = buf.len();
        }
        Ok((result, gen, snaps))
    };

    let (mut pending, mut pending_gen, mut pending_snaps) = fit(1, &mut pipeline, &outcomes, &mut traces)?;
    for t in 1..=rounds {
        let theta_t = pending.theta.clone();
        let eval = evaluate(&hist, t, &theta_t)?;
        hist.reveal(t)?;
        let coeffs = pending_gen.implied_forecast(config.w);
        let m = measure(source, t, &theta_t, config.w, &coeffs)?;
        let (meta, neural) = pipeline.observe(config, rounds, t, &theta_t, &hist, &mut notices)?;
        ledger.push(RoundRecord {
            t,
            theta: theta_t.clone(),
            grad_u_sq: m.grad_u_sq,
            train_u_sq: m.train_u_sq,
            grad_r_sq: m.grad_r_sq,
            direction_sq: linalg::norm_sq(&pending.terminal),
            termination: pending.termination,
            inner_iters: pending.iters,
            generator: coeffs,
            generator_error_sq: m.generator_error_sq,
            forecast_error: m.forecast_error,
            meta,
            neural,
            eval: Some(eval),
        })?;
        outcomes.push(RoundOutcome {
            t,
            theta: ParamVector::new(theta_t.clone())?,
            inner_iters: pending.iters,
            termination: pending.termination,
            terminal_norm: linalg::norm(&pending.terminal),
            snapshots: pending_snaps,
        });
        if let Pipeline::Linear { phi, .. } = &pipeline {
            phi_trajectory.push(phi.clone());
        }
        if options.checkpoint_every > 0 && (t % options.checkpoint_every == 0 || t == rounds) {
            checkpoints.push(Checkpoint {
                t,
                theta: theta_t,
                phi: match &pipeline {
                    Pipeline::Linear { phi, .. } => Some(phi.to_vec()),
                    _ => None,
                },
                net: match &pipeline {
                    Pipeline::Neural { net, .. } => Some((**net).clone()),
                    _ => None,
                },
            });
        }
        if t < rounds || options.trace {
            (pending, pending_gen, pending_snaps) = fit(t + 1, &mut pipeline, &outcomes, &mut traces)?;
        }
    }

    Ok(RunOutput {
        outcomes,
        ledger,
        phi_trajectory,
        checkpoints,
        traces,
        events: hist.events(),
        notices,
    })
}

fn expect(config: &TrainerConfig, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Misuse(format!("{what} called with a {} configuration", config.label())))
    }
}

/// Batch update (incremental update when `b = 1`).
pub fn run_bu(config: &TrainerConfig, source: &dyn GradientSource, options: &RunOptions) -> Result<RunOutput> {
    expect(config, matches!(config.algorithm, AlgorithmKind::Bu), "run_bu")?;
    run(config, source, options)
}

/// Meta gradient descent with the configured pre-specified forecast.
pub fn run_mgd(config: &TrainerConfig, source: &dyn GradientSource, options: &RunOptions) -> Result<RunOutput> {
    expect(config, matches!(config.algorithm, AlgorithmKind::Mgd { .. }), "run_mgd")?;
    run(config, source, options)
}

pub fn run_fgd_linear(config: &TrainerConfig, source: &dyn GradientSource, options: &RunOptions) -> Result<RunOutput> {
    expect(config, matches!(config.algorithm, AlgorithmKind::FgdLinear { .. }), "run_fgd_linear")?;
    run(config, source, options)
}

pub fn run_fgd_neural(config: &TrainerConfig, source: &dyn GradientSource, options: &RunOptions) -> Result<RunOutput> {
    expect(config, matches!(config.algorithm, AlgorithmKind::FgdNeural { .. }), "run_fgd_neural")?;
    run(config, source, options)
}
