use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stream::MiniBatchPart;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Direction norm fell below the threshold.
    Threshold,
    /// Iteration cap reached first; no stationarity guarantee.
    IterationCap,
    /// One-pass mode ran its fixed number of steps.
    FixedSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Threshold { delta: f64, max_iters: usize },
    /// `steps` mini-batch steps; step `k` uses part `k` of `steps`.
    FixedSteps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub theta: Vec<f64>,
    pub iters: usize,
    pub termination: Termination,
    /// Full-batch direction at the final iterate.
    pub terminal: Vec<f64>,
}

/// Gradient descent on `direction` from `theta0`.
///
/// `on_iterate(i, theta)` sees the starting point (`i = 0`) and the iterate after every step.
pub fn inner_descent(
    round: usize,
    theta0: Vec<f64>,
    mut direction: impl FnMut(&[f64], Option<MiniBatchPart>) -> Result<Vec<f64>>,
    eta: f64,
    schedule: Schedule,
    mut on_iterate: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<InnerResult> {
    if !(eta > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {eta}")));
    }
    let mut theta = theta0;
    on_iterate(0, &theta)?;
    match schedule {
        Schedule::Threshold { delta, max_iters } => {
            if !(delta >= 0.0) {
                return Err(Error::Config(format!("delta must be >= 0, got {delta}")));
            }
            let mut iters = 0;
            loop {
                let d = direction(&theta, None)?;
                if !linalg::all_finite(&d) {
                    return Err(Error::Divergence { round, iter: iters });
                }
                let termination = if linalg::norm(&d) < delta {
                    Some(Termination::Threshold)
                } else if iters >= max_iters {
                    Some(Termination::IterationCap)
                } else {
                    None
                };
                if let Some(termination) = termination {
                    return Ok(InnerResult {
                        theta,
                        iters,
                        termination,
                        terminal: d,
                    });
                }
                linalg::axpy(-eta, &d, &mut theta);
                iters += 1;
                if !linalg::all_finite(&theta) {
                    return Err(Error::Divergence { round, iter: iters });
                }
                on_iterate(iters, &theta)?;
            }
        }
        Schedule::FixedSteps(steps) => {
            for k in 0..steps {
                let d = direction(
                    &theta,
                    Some(MiniBatchPart {
                        index: k,
                        count: steps,
                    }),
                )?;
                linalg::axpy(-eta, &d, &mut theta);
                if !linalg::all_finite(&theta) {
                    return Err(Error::Divergence { round, iter: k + 1 });
                }
                on_iterate(k + 1, &theta)?;
            }
            let terminal = direction(&theta, None)?;
            Ok(InnerResult {
                theta,
                iters: steps,
                termination: Termination::FixedSteps,
                terminal,
            })
        }
    }
}

/// Mini-batch steps that touch each of the `b * n` window examples once.
pub fn one_pass_steps(b: usize, n: usize, mini_batch: usize) -> usize {
    (b * n).div_ceil(mini_batch)
}
