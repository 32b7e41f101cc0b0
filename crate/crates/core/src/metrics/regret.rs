use serde::{Deserialize, Serialize};

use super::ledger::RegretLedger;
use crate::error::{Error, Result};
use crate::generators::average;
use crate::linalg;
use crate::stream::{GradientSource, ProbeSet};
use crate::trainers::Termination;

/// Average `w`-local regret `(1/T) sum_t ||grad u_{w,t}(theta_t)||^2` over the ledger.
///
/// The ledger stores the norms for its own `w` and for `w = 1`; other windows need
/// [`recompute_local_regret`].
pub fn local_regret(ledger: &RegretLedger, w: usize) -> Result<f64> {
    ledger.check_complete(ledger.header().rounds)?;
    let pick: fn(&super::RoundRecord) -> f64 = if w == ledger.header().w {
        |r| r.grad_u_sq
    } else if w == 1 {
        |r| r.grad_r_sq
    } else {
        return Err(Error::Misuse(format!(
            "ledger stores w = {} and w = 1, asked for w = {w}",
            ledger.header().w
        )));
    };
    Ok(ledger.rounds().iter().map(pick).sum::<f64>() / ledger.len() as f64)
}

/// Local regret recomputed from the stored parameters.
pub fn recompute_local_regret(ledger: &RegretLedger, source: &dyn GradientSource, w: usize) -> Result<f64> {
    if w < 1 {
        return Err(Error::Config("w must be >= 1".into()));
    }
    ledger.check_complete(ledger.header().rounds)?;
    let mut total = 0.0;
    for r in ledger.rounds() {
        let grads = (0..w)
            .map(|i| source.grad(r.t as i64 - i as i64, &r.theta))
            .collect::<Result<Vec<_>>>()?;
        total += linalg::norm_sq(&average(&grads)?);
    }
    Ok(total / ledger.len() as f64)
}

/// `(1/T) sum_{t=1}^T max_{theta in probe} ||grad r_t(theta) - m(theta; t)||^2` where the
/// forecast for round `t` is `sum_i coeffs(t)[i] grad r_{t-i}`.
fn probe_average(
    source: &dyn GradientSource,
    probe: &ProbeSet,
    rounds: usize,
    mut coeffs: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<f64> {
    if probe.is_empty() {
        return Err(Error::EmptyProbe);
    }
    if rounds < 1 {
        return Err(Error::Config("T must be >= 1".into()));
    }
    let mut total = 0.0;
    for t in 1..=rounds {
        let c = coeffs(t)?;
        let mut best = 0.0f64;
        for theta in probe.points() {
            let g0 = source.grad(t as i64, theta)?;
            let mut m = vec![0.0; g0.len()];
            for (i, ci) in c.iter().enumerate() {
                if *ci != 0.0 {
                    let gi = if i == 0 {
                        g0.clone()
                    } else {
                        source.grad(t as i64 - i as i64, theta)?
                    };
                    linalg::axpy(*ci, &gi, &mut m);
                }
            }
            best = best.max(linalg::norm_sq(&linalg::sub(&g0, &m)));
        }
        total += best;
    }
    Ok(total / rounds as f64)
}

/// Gradient variation `V_w(T)` with the supremum over parameters replaced by a max over the
/// probe set, so the value is a lower bound on the true one.
pub fn gradient_variation(source: &dyn GradientSource, probe: &ProbeSet, w: usize, rounds: usize) -> Result<f64> {
    if w < 1 {
        return Err(Error::Config("w must be >= 1".into()));
    }
    let mut lag = vec![0.0; w + 1];
    lag[w] = 1.0;
    probe_average(source, probe, rounds, |_| Ok(lag.clone()))
}

/// Generator error `Q(T; m)` on the probe set; `generators[t-1]` holds round `t`'s lag
/// coefficients as stored in the ledger.
pub fn generator_error(
    generators: &[Vec<f64>],
    source: &dyn GradientSource,
    probe: &ProbeSet,
    rounds: usize,
) -> Result<f64> {
    if generators.len() < rounds {
        return Err(Error::IncompleteLedger {
            expected: generators.len() + 1,
            found: 0,
        });
    }
    probe_average(source, probe, rounds, |t| Ok(generators[t - 1].clone()))
}

/// The generator coefficients of every ledger round.
pub fn ledger_generators(ledger: &RegretLedger) -> Vec<Vec<f64>> {
    ledger.rounds().iter().map(|r| r.generator.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the bound is violated.
    pub slack: f64,
    pub optimization_term: f64,
    pub generalization_term: f64,
    /// The bound holds for trivial reasons (e.g. an infinite right-hand side).
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl BoundReport {
    fn new(name: &str, lhs: f64, optimization_term: f64, generalization_term: f64) -> Self {
        let rhs = optimization_term + generalization_term;
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
            optimization_term,
            generalization_term,
            degenerate: !rhs.is_finite(),
            warnings: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

fn capped_rounds(ledger: &RegretLedger) -> usize {
    ledger
        .rounds()
        .iter()
        .filter(|r| r.termination != Termination::Threshold)
        .count()
}

/// Local regret of batch update against `2 delta^2 + (2/w^2) V_w` and against the tighter
/// `2 mean_t ||grad u_{w,t-1}(theta_t)||^2 + (2/w^2) V_w`. Returns `(loose, tight)`.
pub fn bound_check_prop1(ledger: &RegretLedger, v_w: f64, delta: f64) -> Result<(BoundReport, BoundReport)> {
    let h = ledger.header();
    if !(h.algorithm == "iu" || h.algorithm.starts_with("bu-")) || h.b != h.w {
        return Err(Error::Misuse(format!(
            "decomposition applies to batch update with b = w, got {} (b = {}, w = {})",
            h.algorithm, h.b, h.w
        )));
    }
    let w = h.w as f64;
    let lhs = local_regret(ledger, h.w)?;
    let gen = 2.0 * v_w / (w * w);
    let train = ledger.rounds().iter().map(|r| r.train_u_sq).sum::<f64>() / ledger.len() as f64;
    let mut loose = BoundReport::new("prop1", lhs, 2.0 * delta * delta, gen);
    let tight = BoundReport::new("prop1-tight", lhs, 2.0 * train, gen);
    let capped = capped_rounds(ledger);
    if capped > 0 {
        loose
            .warnings
            .push(format!("{capped} rounds stopped without reaching delta; the loose form has no guarantee"));
    }
    Ok((loose, tight))
}

/// `R_w(T) <= 2 delta^2 + (2/w^2) Q(T; m)` for a smoothed-generator run.
pub fn bound_check_thm1(ledger: &RegretLedger, q: f64, delta: f64) -> Result<BoundReport> {
    let w = ledger.header().w as f64;
    let lhs = local_regret(ledger, ledger.header().w)?;
    let mut r = BoundReport::new("thm1", lhs, 2.0 * delta * delta, 2.0 * q / (w * w));
    let capped = capped_rounds(ledger);
    if capped > 0 {
        r.warnings
            .push(format!("{capped} rounds stopped without reaching delta; the bound has no guarantee"));
    }
    Ok(r)
}

/// Rounds that stopped on the threshold yet break
/// `||grad u_{w,t}||^2 <= 2 delta^2 + (2/w^2) ||grad r_t - m||^2` (up to a relative `tol`).
pub fn per_round_violations(ledger: &RegretLedger, tol: f64) -> Vec<usize> {
    let h = ledger.header();
    let w = h.w as f64;
    ledger
        .rounds()
        .iter()
        .filter(|r| r.termination == Termination::Threshold)
        .filter(|r| {
            let rhs = 2.0 * h.delta * h.delta + 2.0 / (w * w) * r.generator_error_sq;
            r.grad_u_sq > rhs * (1.0 + tol)
        })
        .map(|r| r.t)
        .collect()
}
