use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::generators::NeuralConfig;
use crate::models::{Activation, LossModelSpec};
use crate::stream::{DriftKind, ProbeConfig, ScenarioSpec, Task};
use crate::trainers::{
    AlgorithmKind, Forecast, MetaRate, NeuralSettings, NeuralVariant, TrainerConfig, WarmStart,
};

pub const ALGORITHM_NAMES: &str = "iu, bu-<b>, mgd-oracle, mgd-lag-<k>, fgd-linear-<b>, fgd-neural-<b>";

/// Which gradient oracle a scenario's runs use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    Population,
    Empirical,
    MonteCarlo(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub name: String,
    /// Seed is replaced per cell.
    pub spec: ScenarioSpec,
    pub model: LossModelSpec,
    pub gradients: GradientKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmEntry {
    pub name: String,
    pub config: TrainerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub ledgers: bool,
    pub checkpoints: bool,
    pub bounds: bool,
    pub plots: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            ledgers: true,
            checkpoints: false,
            bounds: true,
            plots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub output: PathBuf,
    pub emit: EmitFlags,
    pub probe: ProbeConfig,
    /// Include every deployed parameter of a run in its probe set.
    pub probe_visited: bool,
    pub checkpoint_every: usize,
    pub scenarios: Vec<ScenarioEntry>,
    pub algorithms: Vec<AlgorithmEntry>,
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> std::result::Result<ExperimentConfig, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    parse_config(&text)
}

/// Parses config text, reporting every violation found.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Vec<String>> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("syntax: {e}")])?;
    let mut p = Parser { errors: Vec::new() };
    let cfg = p.experiment(&table);
    if p.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(p.errors)
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        validate_config(path).map_err(|errs| Error::Config(errs.join("\n")))
    }
}

struct Parser {
    errors: Vec<String>,
}

impl Parser {
    fn err(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{field}: {msg}"));
    }

    fn unknown_keys(&mut self, path: &str, t: &Table, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&join(path, k), format!("unknown key; allowed: {}", allowed.join(", ")));
            }
        }
    }

    fn int(&mut self, t: &Table, path: &str, key: &str, default: i64) -> i64 {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) => *i,
            Some(v) => {
                self.err(&join(path, key), format!("expected an integer, got {}", v.type_str()));
                default
            }
        }
    }

    fn count(&mut self, t: &Table, path: &str, key: &str, default: usize, min: usize) -> usize {
        let v = self.int(t, path, key, default as i64);
        if v < min as i64 {
            self.err(&join(path, key), format!("must be >= {min}"));
            return default;
        }
        v as usize
    }

    fn float(&mut self, t: &Table, path: &str, key: &str, default: f64) -> f64 {
        match t.get(key) {
            None => default,
            Some(Value::Float(x)) if x.is_finite() => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(v) => {
                self.err(&join(path, key), format!("expected a finite number, got {v}"));
                default
            }
        }
    }

    fn opt_float(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        t.contains_key(key).then(|| self.float(t, path, key, 0.0))
    }

    fn boolean(&mut self, t: &Table, path: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.err(&join(path, key), format!("expected true or false, got {}", v.type_str()));
                default
            }
        }
    }

    fn string(&mut self, t: &Table, path: &str, key: &str) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.err(&join(path, key), format!("expected a string, got {}", v.type_str()));
                None
            }
        }
    }

    fn floats(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let arr = match t.get(key)? {
            Value::Array(a) => a,
            v => {
                self.err(&join(path, key), format!("expected an array, got {}", v.type_str()));
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for v in arr {
            match v {
                Value::Float(x) if x.is_finite() => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.err(&join(path, key), "entries must be finite numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn experiment(&mut self, t: &Table) -> ExperimentConfig {
        self.unknown_keys(
            "",
            t,
            &[
                "rounds",
                "seeds",
                "workers",
                "output",
                "emit",
                "probe",
                "checkpoint_every",
                "scenario",
                "algorithm",
            ],
        );
        let rounds = match self.int(t, "", "rounds", 200) {
            r if r < 1 => {
                self.err("rounds", "T must be >= 1");
                1
            }
            r => r as usize,
        };
        let seeds = match t.get("seeds") {
            None => vec![1, 2, 3],
            Some(Value::Array(a)) => {
                let s: Vec<u64> = a
                    .iter()
                    .filter_map(|v| v.as_integer().filter(|i| *i >= 0).map(|i| i as u64))
                    .collect();
                if s.len() != a.len() {
                    self.err("seeds", "entries must be nonnegative integers");
                }
                if a.is_empty() {
                    self.err("seeds", "must not be empty");
                }
                s
            }
            Some(v) => {
                self.err("seeds", format!("expected an array, got {}", v.type_str()));
                vec![]
            }
        };
        let workers = self.count(t, "", "workers", 1, 1);
        let output = PathBuf::from(self.string(t, "", "output").unwrap_or_else(|| "fgd-out".into()));
        let checkpoint_every = self.count(t, "", "checkpoint_every", 0, 0);

        let mut emit = EmitFlags::default();
        if let Some(e) = self.subtable(t, "emit") {
            self.unknown_keys("emit", e, &["ledgers", "checkpoints", "bounds", "plots"]);
            emit = EmitFlags {
                ledgers: self.boolean(e, "emit", "ledgers", emit.ledgers),
                checkpoints: self.boolean(e, "emit", "checkpoints", emit.checkpoints),
                bounds: self.boolean(e, "emit", "bounds", emit.bounds),
                plots: self.boolean(e, "emit", "plots", emit.plots),
            };
        }
        let mut probe = ProbeConfig {
            count: 16,
            ..ProbeConfig::default()
        };
        let mut probe_visited = true;
        if let Some(pt) = self.subtable(t, "probe") {
            self.unknown_keys("probe", pt, &["lower", "upper", "count", "seed", "visited"]);
            probe.lower = self.float(pt, "probe", "lower", probe.lower);
            probe.upper = self.float(pt, "probe", "upper", probe.upper);
            probe.count = self.count(pt, "probe", "count", probe.count, 0);
            probe.seed = self.int(pt, "probe", "seed", 0).max(0) as u64;
            probe_visited = self.boolean(pt, "probe", "visited", true);
            if !(probe.lower < probe.upper) {
                self.err("probe.lower", "must be below probe.upper");
            }
        }

        let scenarios = self.entries(t, "scenario", Self::scenario);
        let algorithms = self.entries(t, "algorithm", Self::algorithm);
        for (kind, names) in [
            ("scenario", scenarios.iter().map(|s| s.name.as_str()).collect::<Vec<_>>()),
            ("algorithm", algorithms.iter().map(|a| a.name.as_str()).collect()),
        ] {
            for (i, n) in names.iter().enumerate() {
                if names[..i].contains(n) {
                    self.err(&format!("{kind}[{i}].name"), format!("duplicate name {n:?}"));
                }
            }
        }

        ExperimentConfig {
            rounds,
            seeds,
            workers,
            output,
            emit,
            probe,
            probe_visited,
            checkpoint_every,
            scenarios,
            algorithms,
        }
    }

    fn subtable<'t>(&mut self, t: &'t Table, key: &str) -> Option<&'t Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(s)) => Some(s),
            Some(v) => {
                self.err(key, format!("expected a table, got {}", v.type_str()));
                None
            }
        }
    }

    fn entries<T>(&mut self, t: &Table, key: &str, f: fn(&mut Self, &Table, &str) -> Option<T>) -> Vec<T> {
        let arr = match t.get(key) {
            Some(Value::Array(a)) => a,
            Some(v) => {
                self.err(key, format!("expected [[{key}]] entries, got {}", v.type_str()));
                return vec![];
            }
            None => {
                self.err(key, format!("at least one [[{key}]] entry is required"));
                return vec![];
            }
        };
        if arr.is_empty() {
            self.err(key, format!("at least one [[{key}]] entry is required"));
        }
        let mut out = Vec::new();
        for (i, v) in arr.iter().enumerate() {
            let path = format!("{key}[{i}]");
            match v {
                Value::Table(e) => {
                    if let Some(x) = f(self, e, &path) {
                        out.push(x);
                    }
                }
                _ => self.err(&path, "expected a table"),
            }
        }
        out
    }

    fn scenario(&mut self, t: &Table, path: &str) -> Option<ScenarioEntry> {
        self.unknown_keys(
            path,
            t,
            &[
                "name",
                "kind",
                "period",
                "angle_step",
                "velocity",
                "segment_len",
                "jump_scale",
                "step_scale",
                "dim",
                "samples",
                "noise",
                "task",
                "concept",
                "mean",
                "covariance",
                "model",
                "hidden",
                "activation",
                "gradients",
                "mc_budget",
            ],
        );
        let errors_before = self.errors.len();
        let name = self.string(t, path, "name").unwrap_or_default();
        if name.is_empty() {
            self.err(&join(path, "name"), "required");
        }
        let dim = self.count(t, path, "dim", 16, 1);
        let kind = self.string(t, path, "kind").unwrap_or_else(|| "stationary".into());
        let drift = match kind.as_str() {
            "stationary" => DriftKind::stationary(),
            "periodic-rotation" => {
                let period = self.count(t, path, "period", 3, 1);
                let angle = self.float(t, path, "angle_step", std::f64::consts::TAU / period as f64);
                DriftKind::PeriodicRotation {
                    period,
                    angle_step: angle,
                }
            }
            "linear-drift" => {
                let v = self.floats(t, path, "velocity").unwrap_or_else(|| {
                    let mut v = vec![0.0; dim];
                    v[0] = 0.01;
                    v
                });
                DriftKind::LinearDrift { velocity: v }
            }
            "piecewise-stationary" => DriftKind::PiecewiseStationary {
                segment_len: self.count(t, path, "segment_len", 50, 1),
                jump_scale: self.float(t, path, "jump_scale", 0.5),
            },
            "random-walk" => DriftKind::RandomWalk {
                step_scale: self.float(t, path, "step_scale", 0.05),
            },
            other => {
                self.err(
                    &join(path, "kind"),
                    format!(
                        "unknown drift {other:?}; allowed: stationary, periodic-rotation, linear-drift, piecewise-stationary, random-walk"
                    ),
                );
                DriftKind::stationary()
            }
        };
        let task = match self.string(t, path, "task").as_deref() {
            None | Some("regression") => Task::Regression,
            Some("classification") => Task::Classification,
            Some(other) => {
                self.err(
                    &join(path, "task"),
                    format!("unknown task {other:?}; allowed: regression, classification"),
                );
                Task::Regression
            }
        };
        let mut spec = ScenarioSpec::new(drift, dim)
            .task(task)
            .samples(self.count(t, path, "samples", 1024, 1));
        if let Some(noise) = self.opt_float(t, path, "noise") {
            spec = spec.noise(noise);
        }
        if let Some(c) = self.floats(t, path, "concept") {
            spec = spec.concept(c);
        }
        if let Some(m) = self.floats(t, path, "mean") {
            spec = spec.mean(m);
        }
        if let Some(c) = self.floats(t, path, "covariance") {
            spec = spec.covariance(c);
        }
        if let Err(e) = spec.clone().build() {
            self.err(path, e);
        }

        let default_model = match task {
            Task::Regression => "linear-squared",
            Task::Classification => "logistic",
        };
        let model = match self.string(t, path, "model").as_deref().unwrap_or(default_model) {
            "linear-squared" => LossModelSpec::LinearSquared { dim },
            "logistic" => LossModelSpec::Logistic { dim },
            "mlp" => {
                let activation = match self.string(t, path, "activation").as_deref() {
                    None | Some("tanh") => Activation::Tanh,
                    Some("softplus") => Activation::Softplus,
                    Some(other) => {
                        self.err(
                            &join(path, "activation"),
                            format!("unknown activation {other:?}; allowed: tanh, softplus"),
                        );
                        Activation::Tanh
                    }
                };
                LossModelSpec::Mlp {
                    dim,
                    hidden: self.count(t, path, "hidden", 16, 1),
                    activation,
                }
            }
            other => {
                self.err(
                    &join(path, "model"),
                    format!("unknown model {other:?}; allowed: linear-squared, logistic, mlp"),
                );
                LossModelSpec::LinearSquared { dim }
            }
        };
        let closed_form = matches!(model, LossModelSpec::LinearSquared { .. }) && task == Task::Regression;
        let gradients = match self.string(t, path, "gradients").as_deref() {
            None if closed_form => GradientKind::Population,
            None => GradientKind::Empirical,
            Some("population") if closed_form => GradientKind::Population,
            Some("population") => {
                self.err(
                    &join(path, "gradients"),
                    "closed-form population gradients need a linear-squared regression model; use empirical or monte-carlo",
                );
                GradientKind::Empirical
            }
            Some("empirical") => GradientKind::Empirical,
            Some("monte-carlo") => GradientKind::MonteCarlo(self.count(t, path, "mc_budget", 100_000, 1)),
            Some(other) => {
                self.err(
                    &join(path, "gradients"),
                    format!("unknown gradient oracle {other:?}; allowed: population, empirical, monte-carlo"),
                );
                GradientKind::Empirical
            }
        };
        (self.errors.len() == errors_before).then_some(ScenarioEntry {
            name,
            spec,
            model,
            gradients,
        })
    }

    fn algorithm(&mut self, t: &Table, path: &str) -> Option<AlgorithmEntry> {
        self.unknown_keys(
            path,
            t,
            &[
                "name",
                "w",
                "delta",
                "eta",
                "max_inner_iters",
                "warm_start",
                "one_pass",
                "mini_batch",
                "eta_phi",
                "meta_c",
                "steps",
                "stride",
                "variant",
                "attn_dim",
                "meta_hidden",
                "summary_scale",
                "net_seed",
            ],
        );
        let errors_before = self.errors.len();
        let name = self.string(t, path, "name").unwrap_or_default();
        let name_path = join(path, "name");
        let num = |prefix: &str| name.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok()).filter(|&b| b >= 1);
        let mut config = if name == "iu" {
            TrainerConfig::iu()
        } else if name == "mgd-oracle" {
            TrainerConfig::mgd(Forecast::Oracle, 1)
        } else if let Some(b) = num("bu-") {
            TrainerConfig::bu(b)
        } else if let Some(k) = num("mgd-lag-") {
            TrainerConfig::mgd(Forecast::Lag { k }, 1)
        } else if let Some(b) = num("fgd-linear-") {
            TrainerConfig::fgd_linear(b)
        } else if let Some(b) = num("fgd-neural-") {
            TrainerConfig::fgd_neural(b, NeuralSettings::default())
        } else {
            self.err(&name_path, format!("unknown algorithm {name:?}; allowed: {ALGORITHM_NAMES}"));
            return None;
        };
        config.w = self.count(t, path, "w", 1, 1);
        config.delta = self.float(t, path, "delta", config.delta);
        config.eta = self.float(t, path, "eta", config.eta);
        config.max_inner_iters = self.count(t, path, "max_inner_iters", config.max_inner_iters, 1);
        config.one_pass = self.boolean(t, path, "one_pass", config.one_pass);
        config.mini_batch = self.count(t, path, "mini_batch", config.mini_batch, 1);
        config.warm_start = match self.string(t, path, "warm_start").as_deref() {
            None | Some("window-back") => WarmStart::WindowBack,
            Some("previous") => WarmStart::Previous,
            Some("fresh") => WarmStart::Fresh,
            Some(other) => {
                self.err(
                    &join(path, "warm_start"),
                    format!("unknown warm start {other:?}; allowed: previous, window-back, fresh"),
                );
                WarmStart::WindowBack
            }
        };
        if config.delta < 0.0 {
            self.err(&join(path, "delta"), "must be >= 0");
        }
        if !(config.eta > 0.0) {
            self.err(&join(path, "eta"), "must be > 0");
        }
        let eta_phi = self.opt_float(t, path, "eta_phi");
        if eta_phi.is_some_and(|e| e < 0.0) {
            self.err(&join(path, "eta_phi"), "must be >= 0");
        }
        match &mut config.algorithm {
            AlgorithmKind::FgdLinear { rate } => {
                *rate = match eta_phi {
                    Some(eta) => MetaRate::Fixed { eta },
                    None => {
                        let c = self.float(t, path, "meta_c", 1.0);
                        if !(c > 0.0) {
                            self.err(&join(path, "meta_c"), "must be > 0");
                        }
                        MetaRate::Schedule { c }
                    }
                };
            }
            AlgorithmKind::FgdNeural { settings } => {
                let d = NeuralSettings::default();
                let dn = NeuralConfig::default();
                *settings = NeuralSettings {
                    net: NeuralConfig {
                        attn_dim: self.count(t, path, "attn_dim", dn.attn_dim, 1),
                        hidden: self.count(t, path, "meta_hidden", dn.hidden, 1),
                        summary_scale: self.float(t, path, "summary_scale", dn.summary_scale),
                        init_scale: dn.init_scale,
                    },
                    eta_phi: eta_phi.unwrap_or(d.eta_phi),
                    steps: self.count(t, path, "steps", d.steps, 0),
                    stride: self.count(t, path, "stride", d.stride, 1),
                    variant: match self.string(t, path, "variant").as_deref() {
                        None | Some("smoothed") => NeuralVariant::Smoothed,
                        Some("plain") => NeuralVariant::Plain,
                        Some(other) => {
                            self.err(
                                &join(path, "variant"),
                                format!("unknown variant {other:?}; allowed: plain, smoothed"),
                            );
                            NeuralVariant::Smoothed
                        }
                    },
                    seed: self.int(t, path, "net_seed", d.seed as i64).max(0) as u64,
                };
            }
            _ => {
                for key in ["eta_phi", "meta_c", "steps", "stride", "variant", "attn_dim", "meta_hidden", "summary_scale", "net_seed"] {
                    if t.contains_key(key) {
                        self.err(&join(path, key), format!("not used by {name}"));
                    }
                }
            }
        }
        if self.errors.len() == errors_before {
            if let Err(e) = config.validate() {
                self.err(path, e);
            }
        }
        (self.errors.len() == errors_before).then_some(AlgorithmEntry { name, config })
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
rounds = 5
[[scenario]]
name = "s"
[[algorithm]]
name = "iu"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.rounds, 5);
        assert_eq!(c.scenarios[0].spec.dim, 16);
        assert_eq!(c.scenarios[0].gradients, GradientKind::Population);
        assert_eq!(c.algorithms[0].config, TrainerConfig::iu());
    }

    #[test]
    fn every_violation_is_reported() {
        let text = r#"
rounds = 0
colour = 1
[[scenario]]
name = "s"
kind = "sideways"
[[algorithm]]
name = "sgd"
[[algorithm]]
name = "bu-2"
eta = -1.0
"#;
        let errs = parse_config(text).unwrap_err();
        let all = errs.join("\n");
        assert!(all.contains("rounds: T must be >= 1"), "{all}");
        assert!(all.contains("colour: unknown key"));
        assert!(all.contains("scenario[0].kind: unknown drift"));
        assert!(all.contains("algorithm[0].name: unknown algorithm \"sgd\"; allowed: iu, bu-<b>"));
        assert!(all.contains("algorithm[1].eta: must be > 0"));
    }

    #[test]
    fn neural_and_linear_options() {
        let text = r#"
[[scenario]]
name = "s"
kind = "periodic-rotation"
period = 3
[[algorithm]]
name = "fgd-linear-5"
eta_phi = 0.0
[[algorithm]]
name = "fgd-neural-3"
steps = 5
variant = "plain"
"#;
        let c = parse_config(text).unwrap();
        assert!(matches!(
            c.algorithms[0].config.algorithm,
            AlgorithmKind::FgdLinear {
                rate: MetaRate::Fixed { eta } } if eta == 0.0
        ));
        match &c.algorithms[1].config.algorithm {
            AlgorithmKind::FgdNeural { settings } => {
                assert_eq!(settings.steps, 5);
                assert_eq!(settings.variant, NeuralVariant::Plain);
            }
            _ => panic!(),
        }
    }
}
