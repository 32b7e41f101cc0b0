use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::MetaQuadratic;
use crate::trainers::Termination;

/// Run configuration echoed at the top of every ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    /// Scenario label; empty outside an experiment matrix.
    #[serde(default)]
    pub scenario: String,
    pub algorithm: String,
    pub b: usize,
    pub w: usize,
    pub delta: f64,
    pub eta: f64,
    pub one_pass: bool,
    /// `population`, `empirical` or `monte-carlo`.
    pub gradients: String,
    pub model: String,
    pub seed: u64,
    pub rounds: usize,
}

/// Linear generator state at one round: `h_t` around `phi_t` and the step that produced `phi_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub phi: Vec<f64>,
    pub h: f64,
    pub grad_h: Vec<f64>,
    pub eta_phi: f64,
    /// Running max of observed gradient norms.
    pub m_bound: f64,
    pub quadratic: MetaQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralRecord {
    /// Meta loss on the buffer before the first and after the last step; absent when skipped.
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    pub steps: usize,
    pub buffer_len: usize,
    pub skipped: bool,
}

/// Score of the deployed model on the round's data, taken before training sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Mean loss: squared error for regression, log loss for classification.
    pub loss: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub theta: Vec<f64>,
    /// `||grad u_{w,t}(theta_t)||^2`
    pub grad_u_sq: f64,
    /// `||grad u_{w,t-1}(theta_t)||^2`
    pub train_u_sq: f64,
    /// `||grad r_t(theta_t)||^2`
    pub grad_r_sq: f64,
    /// Squared norm of the training direction at `theta_t` when its inner loop stopped.
    pub direction_sq: f64,
    pub termination: Termination,
    pub inner_iters: usize,
    /// Lag coefficients of the generator for this round; index `i` weights `grad r_{t-i}`.
    pub generator: Vec<f64>,
    /// `||grad r_t(theta_t) - m(theta_t; t)||^2`
    pub generator_error_sq: f64,
    /// Generator error normalized by `||grad r_t(theta_t)||^2`; absent when that is zero.
    pub forecast_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neural: Option<NeuralRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum LedgerLine {
    Header(LedgerHeader),
    Round(Box<RoundRecord>),
}

/// Per-round records of one run, contiguous from round 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    header: LedgerHeader,
    rounds: Vec<RoundRecord>,
}

impl RegretLedger {
    pub fn new(header: LedgerHeader) -> Self {
        Self {
            header,
            rounds: Vec::new(),
        }
    }

    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        let expected = self.rounds.len() + 1;
        if record.t != expected {
            return Err(Error::IncompleteLedger {
                expected,
                found: record.t,
            });
        }
        let norms = [
            record.grad_u_sq,
            record.train_u_sq,
            record.grad_r_sq,
            record.direction_sq,
            record.generator_error_sq,
        ];
        if norms.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Numeric(format!("ledger norms at round {}", record.t)));
        }
        self.rounds.push(record);
        Ok(())
    }

    pub fn header(&self) -> &LedgerHeader {
        &self.header
    }

    pub fn set_scenario(&mut self, name: &str) {
        self.header.scenario = name.to_string();
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Errors unless rounds `1..=rounds` are all present.
    pub fn check_complete(&self, rounds: usize) -> Result<()> {
        if self.rounds.len() < rounds {
            return Err(Error::IncompleteLedger {
                expected: self.rounds.len() + 1,
                found: 0,
            });
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if r.t != i + 1 {
                return Err(Error::IncompleteLedger {
                    expected: i + 1,
                    found: r.t,
                });
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &LedgerLine::Header(self.header.clone()))?;
        out.write_all(b"\n")?;
        for r in &self.rounds {
            serde_json::to_writer(&mut out, &LedgerLine::Round(Box::new(r.clone())))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut ledger: Option<RegretLedger> = None;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match (serde_json::from_str::<LedgerLine>(&line)?, ledger.as_mut()) {
                (LedgerLine::Header(h), None) => ledger = Some(RegretLedger::new(h)),
                (LedgerLine::Round(r), Some(l)) => l.push(*r)?,
                (LedgerLine::Header(_), Some(_)) => {
                    return Err(Error::Misuse("ledger has more than one header".into()))
                }
                (LedgerLine::Round(_), None) => {
                    return Err(Error::Misuse("ledger rounds precede the header".into()))
                }
            }
        }
        ledger.ok_or_else(|| Error::Misuse("ledger has no header".into()))
    }
}
