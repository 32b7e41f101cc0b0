use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::artifacts::{csv_text, emit_plot_data, fmt_f, fmt_opt, write_atomic};
use super::config::{AlgorithmEntry, ExperimentConfig, GradientKind, ScenarioEntry};
use crate::error::{Error, Result};
use crate::metrics::{
    bound_check_prop1, bound_check_thm1, bound_check_thm2, bound_check_thm2_tight, generator_error,
    gradient_variation, ledger_generators, local_regret, meta_summary, per_round_violations, simplex_oracle,
    BoundReport, RegretLedger,
};
use crate::models::ParamVector;
use crate::stream::{build_probe_set, EmpiricalSource, GradientSource, PopulationSource, ProbeConfig, Task};
use crate::trainers::{run, RunOptions, RunOutput, Termination};

/// Per-seed outcome: metrics or the failure message.
type SeedResult = (u64, std::result::Result<CellMetrics, String>);

/// Relative tolerance for floating-point rounding in the per-round inequality.
pub const ROUNDING_TOL: f64 = 1e-9;

/// Seed-level summary of one ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub r_w: f64,
    pub r_1: f64,
    /// Mean normalized forecast error over the last tenth of the rounds.
    pub final_forecast_error: Option<f64>,
    /// Mean next-round loss of the deployed models (MSE or log loss).
    pub eval_loss: Option<f64>,
    pub auc: Option<f64>,
}

pub fn cell_metrics(ledger: &RegretLedger) -> Result<CellMetrics> {
    let w = ledger.header().w;
    let rounds = ledger.rounds();
    let tail = rounds.len().div_ceil(10).max(1);
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    Ok(CellMetrics {
        r_w: local_regret(ledger, w)?,
        r_1: local_regret(ledger, 1)?,
        final_forecast_error: mean(rounds[rounds.len() - tail..].iter().filter_map(|r| r.forecast_error).collect()),
        eval_loss: mean(rounds.iter().filter_map(|r| r.eval.as_ref().map(|e| e.loss)).collect()),
        auc: mean(rounds.iter().filter_map(|r| r.eval.as_ref().and_then(|e| e.auc)).collect()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub report: BoundReport,
}

impl BoundRow {
    pub fn status(&self) -> &'static str {
        if self.report.degenerate {
            "degenerate"
        } else if self.report.holds() {
            "ok"
        } else {
            "violated"
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub result: std::result::Result<CellMetrics, String>,
    pub bounds: Vec<BoundRow>,
    pub notices: Vec<String>,
}

/// Mean and sample standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn opt_mean_std(xs: Vec<Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    (!v.is_empty()).then(|| mean_std(&v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: String,
    pub algorithm: String,
    pub w: usize,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub r_w: Option<(f64, f64)>,
    pub r_1: Option<(f64, f64)>,
    pub forecast_error: Option<(f64, f64)>,
    /// `mse` or `logloss`.
    pub loss_name: &'static str,
    pub eval_loss: Option<(f64, f64)>,
    pub auc: Option<(f64, f64)>,
    pub diagnostic: String,
}

impl ComparisonRow {
    pub fn aggregate(
        scenario: &str,
        algorithm: &str,
        w: usize,
        task: Task,
        cells: &[SeedResult],
    ) -> Self {
        let ok: Vec<&CellMetrics> = cells.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
        let failed: Vec<String> = cells
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| format!("seed {s}: {e}")))
            .collect();
        let pick = |f: fn(&CellMetrics) -> Option<f64>| opt_mean_std(ok.iter().map(|m| f(m)).collect());
        Self {
            scenario: scenario.into(),
            algorithm: algorithm.into(),
            w,
            seeds_ok: ok.len(),
            seeds_failed: failed.len(),
            r_w: pick(|m| Some(m.r_w)),
            r_1: pick(|m| Some(m.r_1)),
            forecast_error: pick(|m| m.final_forecast_error),
            loss_name: match task {
                Task::Regression => "mse",
                Task::Classification => "logloss",
            },
            eval_loss: pick(|m| m.eval_loss),
            auc: pick(|m| m.auc),
            diagnostic: failed.join("; "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub bounds: Vec<BoundRow>,
}

impl ComparisonTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.seeds_failed > 0)
    }

    pub fn any_violation(&self) -> bool {
        self.bounds.iter().any(|b| b.status() == "violated")
    }

    pub fn row(&self, scenario: &str, algorithm: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> Result<String> {
        let pair = |x: Option<(f64, f64)>| [fmt_opt(x.map(|p| p.0)), fmt_opt(x.map(|p| p.1))];
        csv_text(
            &[
                "scenario",
                "algorithm",
                "w",
                "seeds_ok",
                "seeds_failed",
                "rw_mean",
                "rw_std",
                "r1_mean",
                "r1_std",
                "forecast_error_mean",
                "forecast_error_std",
                "loss",
                "loss_mean",
                "loss_std",
                "auc_mean",
                "auc_std",
                "diagnostic",
            ],
            self.rows.iter().map(|r| {
                let mut v = vec![
                    r.scenario.clone(),
                    r.algorithm.clone(),
                    r.w.to_string(),
                    r.seeds_ok.to_string(),
                    r.seeds_failed.to_string(),
                ];
                v.extend(pair(r.r_w));
                v.extend(pair(r.r_1));
                v.extend(pair(r.forecast_error));
                v.push(r.loss_name.into());
                v.extend(pair(r.eval_loss));
                v.extend(pair(r.auc));
                v.push(r.diagnostic.clone());
                v
            }),
        )
    }

    pub fn bounds_csv(&self) -> Result<String> {
        csv_text(
            &[
                "scenario",
                "algorithm",
                "seed",
                "bound",
                "lhs",
                "rhs",
                "slack",
                "optimization_term",
                "generalization_term",
                "status",
                "warnings",
            ],
            self.bounds.iter().map(|b| {
                vec![
                    b.scenario.clone(),
                    b.algorithm.clone(),
                    b.seed.to_string(),
                    b.report.name.clone(),
                    fmt_f(b.report.lhs),
                    fmt_f(b.report.rhs),
                    fmt_f(b.report.slack),
                    fmt_f(b.report.optimization_term),
                    fmt_f(b.report.generalization_term),
                    b.status().into(),
                    b.report.warnings.join("; "),
                ]
            }),
        )
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let pm = |x: Option<(f64, f64)>| x.map_or("-".to_string(), |(m, s)| format!("{m:.4e} ± {s:.1e}"));
        let mut out = format!(
            "{:<18} {:<16} {:>24} {:>24} {:>24} {:>24} {:>20}\n",
            "scenario", "algorithm", "R_w", "R_1", "forecast err", "next-round loss", "AUC"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:<16} {:>24} {:>24} {:>24} {:>24} {:>20}{}\n",
                r.scenario,
                r.algorithm,
                pm(r.r_w),
                pm(r.r_1),
                pm(r.forecast_error),
                pm(r.eval_loss),
                pm(r.auc),
                if r.seeds_failed > 0 {
                    format!("  FAILED: {}", r.diagnostic)
                } else {
                    String::new()
                }
            ));
        }
        let violated: Vec<&BoundRow> = self.bounds.iter().filter(|b| b.status() == "violated").collect();
        out.push_str(&format!(
            "{} bound checks, {} violated\n",
            self.bounds.len(),
            violated.len()
        ));
        for b in violated {
            out.push_str(&format!(
                "  {} / {} / seed {}: {} slack {}\n",
                b.scenario, b.algorithm, b.seed, b.report.name, b.report.slack
            ));
        }
        out
    }
}

pub fn make_source(entry: &ScenarioEntry, seed: u64) -> Result<Box<dyn GradientSource>> {
    let scenario = entry.spec.clone().seed(seed).build()?;
    let model = entry.model;
    Ok(match entry.gradients {
        GradientKind::Population => Box::new(PopulationSource::exact(scenario, model)?),
        GradientKind::Empirical => Box::new(EmpiricalSource::new(scenario, model)?),
        GradientKind::MonteCarlo(n) => Box::new(PopulationSource::monte_carlo(scenario, model, n)?),
    })
}

/// Bound checks that apply to a run. Checks stated with `delta` are evaluated only when every
/// round stopped on the threshold.
pub fn run_bounds(
    output: &RunOutput,
    source: &dyn GradientSource,
    probe: &ProbeConfig,
    probe_visited: bool,
) -> Result<Vec<BoundReport>> {
    let ledger = &output.ledger;
    let h = ledger.header();
    let mut reports = Vec::new();
    let violations = per_round_violations(ledger, ROUNDING_TOL);
    reports.push(BoundReport {
        name: "per-round".into(),
        lhs: violations.len() as f64,
        rhs: 0.0,
        slack: -(violations.len() as f64),
        optimization_term: 0.0,
        generalization_term: 0.0,
        degenerate: false,
        warnings: violations.iter().take(5).map(|t| format!("round {t}")).collect(),
    });
    let all_threshold = ledger.rounds().iter().all(|r| r.termination == Termination::Threshold);
    let visited: Vec<ParamVector> = if probe_visited {
        output.outcomes.iter().map(|o| o.theta.clone()).collect()
    } else {
        Vec::new()
    };
    let probe_set = build_probe_set(probe, source.model().param_dim(), &visited)?;
    let is_bu = h.algorithm == "iu" || h.algorithm.starts_with("bu-");
    if is_bu && h.b == h.w {
        let v = gradient_variation(source, &probe_set, h.w, h.rounds)?;
        let (loose, tight) = bound_check_prop1(ledger, v, h.delta)?;
        reports.push(tight);
        if all_threshold {
            reports.push(loose);
        }
    }
    if all_threshold {
        let q = generator_error(&ledger_generators(ledger), source, &probe_set, h.rounds)?;
        reports.push(bound_check_thm1(ledger, q, h.delta)?);
    }
    if h.algorithm.starts_with("fgd-linear-") {
        let s = meta_summary(ledger)?;
        let oracle = simplex_oracle(&s.total, 100_000, 0);
        let mut r = bound_check_thm2(ledger, &oracle.phi, s.eta_final, h.b, s.m_final)?;
        r.warnings.extend(oracle.warnings.iter().cloned());
        reports.push(r);
        reports.push(bound_check_thm2_tight(ledger, &oracle.phi, s.eta_final)?);
    }
    Ok(reports)
}

fn cell_id(scenario: &str, algorithm: &str, seed: u64) -> String {
    format!("{scenario}__{algorithm}__seed{seed}")
}

fn metrics_csv(ledger: &RegretLedger) -> Result<String> {
    let mut rows = Vec::new();
    for r in ledger.rounds() {
        let t = r.t.to_string();
        let mut push = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                rows.push(vec![t.clone(), name.to_string(), fmt_f(v)]);
            }
        };
        push("grad_u_sq", Some(r.grad_u_sq));
        push("grad_r_sq", Some(r.grad_r_sq));
        push("train_u_sq", Some(r.train_u_sq));
        push("generator_error_sq", Some(r.generator_error_sq));
        push("forecast_error", r.forecast_error);
        push("inner_iters", Some(r.inner_iters as f64));
        push("eval_loss", r.eval.as_ref().map(|e| e.loss));
        push("auc", r.eval.as_ref().and_then(|e| e.auc));
        push("h", r.meta.as_ref().map(|m| m.h));
        push("eta_phi", r.meta.as_ref().map(|m| m.eta_phi));
    }
    csv_text(&["t", "metric", "value"], rows)
}

struct CellJob<'a> {
    scenario: &'a ScenarioEntry,
    algorithm: &'a AlgorithmEntry,
    seed: u64,
}

fn run_cell(config: &ExperimentConfig, job: &CellJob<'_>, trace: bool, out: &Path) -> CellResult {
    let mut bounds = Vec::new();
    let mut notices = Vec::new();
    let result = (|| -> Result<CellMetrics> {
        let source = make_source(job.scenario, job.seed)?;
        let options = RunOptions::new(config.rounds)
            .init_seed(job.seed)
            .trace(trace || config.emit.plots)
            .checkpoint_every(if config.emit.checkpoints {
                config.checkpoint_every.max(1)
            } else {
                0
            });
        let mut output = run(&job.algorithm.config, source.as_ref(), &options)?;
        output.ledger.set_scenario(&job.scenario.name);
        let id = cell_id(&job.scenario.name, &job.algorithm.name, job.seed);
        notices.extend(output.notices.iter().map(|n| format!("{id}: {n}")));
        if config.emit.ledgers {
            let mut buf = Vec::new();
            output.ledger.write_jsonl(&mut buf)?;
            write_atomic(&out.join("ledgers").join(format!("{id}.jsonl")), &buf)?;
            write_atomic(&out.join("metrics").join(format!("{id}.csv")), metrics_csv(&output.ledger)?.as_bytes())?;
        }
        if config.emit.checkpoints {
            let mut buf = Vec::new();
            for c in &output.checkpoints {
                serde_json::to_writer(&mut buf, c)?;
                buf.push(b'\n');
            }
            write_atomic(&out.join("checkpoints").join(format!("{id}.jsonl")), &buf)?;
        }
        if options.trace {
            match emit_plot_data(&output.traces) {
                Ok((grad, forecast)) => {
                    write_atomic(&out.join("plots").join(format!("{id}.grad.csv")), grad.as_bytes())?;
                    write_atomic(&out.join("plots").join(format!("{id}.forecast.csv")), forecast.as_bytes())?;
                }
                Err(Error::NoTraces) => notices.push(format!("{id}: no per-iteration traces recorded")),
                Err(e) => return Err(e),
            }
        }
        if config.emit.bounds {
            for report in run_bounds(&output, source.as_ref(), &config.probe, config.probe_visited)? {
                bounds.push(BoundRow {
                    scenario: job.scenario.name.clone(),
                    algorithm: job.algorithm.name.clone(),
                    seed: job.seed,
                    report,
                });
            }
        }
        cell_metrics(&output.ledger)
    })();
    CellResult {
        scenario: job.scenario.name.clone(),
        algorithm: job.algorithm.name.clone(),
        seed: job.seed,
        result: result.map_err(|e| e.to_string()),
        bounds,
        notices,
    }
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub table: ComparisonTable,
    pub cells: Vec<CellResult>,
    pub output: PathBuf,
    /// Matrix-level notices; per-cell ones live on the cells.
    pub notices: Vec<String>,
}

impl MatrixOutcome {
    /// Zero iff every cell succeeded and no enabled bound check has negative slack.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.table.any_failed() || self.table.any_violation())
    }
}

/// Runs every (scenario, algorithm, seed) cell and writes the table, bound reports and
/// per-cell artifacts under the output directory.
pub fn run_matrix(config: &ExperimentConfig, trace: bool) -> Result<MatrixOutcome> {
    let out = config.output.clone();
    std::fs::create_dir_all(&out)?;
    let jobs: Vec<CellJob<'_>> = config
        .scenarios
        .iter()
        .flat_map(|s| {
            config.algorithms.iter().flat_map(move |a| {
                config.seeds.iter().map(move |&seed| CellJob {
                    scenario: s,
                    algorithm: a,
                    seed,
                })
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cells: Vec<CellResult> = pool.install(|| jobs.par_iter().map(|j| run_cell(config, j, trace, &out)).collect());

    let mut rows = Vec::new();
    for s in &config.scenarios {
        for a in &config.algorithms {
            let group: Vec<SeedResult> = cells
                .iter()
                .filter(|c| c.scenario == s.name && c.algorithm == a.name)
                .map(|c| (c.seed, c.result.clone()))
                .collect();
            rows.push(ComparisonRow::aggregate(&s.name, &a.name, a.config.w, s.spec.task, &group));
        }
    }
    let table = ComparisonTable {
        rows,
        bounds: cells.iter().flat_map(|c| c.bounds.iter().cloned()).collect(),
    };
    write_atomic(&out.join("table.csv"), table.to_csv()?.as_bytes())?;
    if config.emit.bounds {
        write_atomic(&out.join("bounds.csv"), table.bounds_csv()?.as_bytes())?;
    }
    let notices = config
        .scenarios
        .iter()
        .filter(|s| s.spec.task == Task::Regression)
        .map(|s| format!("{}: regression task, AUC skipped", s.name))
        .collect();
    Ok(MatrixOutcome {
        table,
        cells,
        output: out,
        notices,
    })
}

/// Rebuilds the comparison table from the ledgers in `dir` (or `dir/ledgers`).
pub fn report(dir: &Path) -> Result<ComparisonTable> {
    let ledger_dir = if dir.join("ledgers").is_dir() {
        dir.join("ledgers")
    } else {
        dir.to_path_buf()
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&ledger_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no ledgers (*.jsonl) in {}", ledger_dir.display())));
    }
    let mut groups: Vec<(String, String, usize, Task, Vec<SeedResult>)> =
        Vec::new();
    for p in paths {
        let ledger = RegretLedger::read_jsonl(std::io::BufReader::new(std::fs::File::open(&p)?))?;
        let h = ledger.header().clone();
        let task = if ledger.rounds().iter().any(|r| r.eval.as_ref().is_some_and(|e| e.auc.is_some())) {
            Task::Classification
        } else {
            Task::Regression
        };
        let metrics = cell_metrics(&ledger).map_err(|e| e.to_string());
        match groups.iter_mut().find(|g| g.0 == h.scenario && g.1 == h.algorithm) {
            Some(g) => g.4.push((h.seed, metrics)),
            None => groups.push((h.scenario.clone(), h.algorithm.clone(), h.w, task, vec![(h.seed, metrics)])),
        }
    }
    let mut rows: Vec<ComparisonRow> = groups
        .iter_mut()
        .map(|(s, a, w, task, cells)| {
            cells.sort_by_key(|c| c.0);
            ComparisonRow::aggregate(s, a, *w, *task, cells)
        })
        .collect();
    rows.sort_by(|x, y| (&x.scenario, &x.algorithm).cmp(&(&y.scenario, &y.algorithm)));
    Ok(ComparisonTable {
        rows,
        bounds: Vec::new(),
    })
}
