//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{rel_err, source, Shape, SHAPES};
use fgd_sim::experiment::{parse_config, run_matrix, validate_config, ROUNDING_TOL};
use fgd_sim::generators::{
    average, eg_update, smoothed_generator, MetaQuadratic, NeuralConfig, NeuralMfgg, SimplexWeights,
};
use fgd_sim::metrics::{
    bound_check_prop1, bound_check_thm2, desk_auc, gradient_variation, local_regret, meta_summary,
    per_round_violations, simplex_oracle, RegretLedger,
};
use fgd_sim::models::{finite_diff_grad, Activation, LossModelSpec, ParamVector};
use fgd_sim::stream::{build_probe_set, DomainBatch, GradientSource, ProbeConfig};
use fgd_sim::trainers::{run, Forecast, RunOptions, RunOutput, Termination, TrainerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ETA: f64 = 0.25;

const GRAD_REL_TOL: f64 = 1e-6;
const NEURAL_REL_TOL: f64 = 1e-4;
const GRAD_CHECK_SECONDS: f64 = 10.0;
const EG_L1_TOL: f64 = 1e-3;
const EG_SHIFT_TOL: f64 = 1e-12;
const ORACLE_SPEEDUP: f64 = 2.0;
const EXCESS_RATIO: f64 = 0.7;
const LAG_MASS: f64 = 0.9;
const IDENTITY_TOL: f64 = 1e-12;
const SUITE_SECONDS: f64 = 300.0;

type Verdict = Result<String, String>;

/// Ledgers of every run in the suite, for the per-round inequality.
#[derive(Default)]
struct Collected {
    ledgers: Vec<(String, RegretLedger)>,
}

impl Collected {
    fn run(&mut self, label: &str, config: &TrainerConfig, src: &dyn GradientSource, rounds: usize, seed: u64) -> RunOutput {
        let out = run(config, src, &RunOptions::new(rounds).init_seed(seed)).unwrap();
        self.ledgers.push((format!("{label} seed {seed}"), out.ledger.clone()));
        out
    }
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let models = [
        LossModelSpec::LinearSquared { dim: 5 },
        LossModelSpec::Logistic { dim: 5 },
        LossModelSpec::Mlp {
            dim: 4,
            hidden: 6,
            activation: Activation::Tanh,
        },
        LossModelSpec::Mlp {
            dim: 4,
            hidden: 6,
            activation: Activation::Softplus,
        },
    ];
    let mut worst = 0.0f64;
    for model in models {
        let dim = model.input_dim();
        for k in 0..100 {
            let theta = gauss(&mut rng, model.param_dim());
            let n = 16;
            let features = gauss(&mut rng, n * dim);
            let labels: Vec<f64> = match model {
                LossModelSpec::Logistic { .. } => (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect(),
                _ => gauss(&mut rng, n),
            };
            let batch = DomainBatch::new(k + 1, dim, features, labels).unwrap();
            let analytic = model.grad(&theta, &batch).unwrap();
            let numeric = finite_diff_grad(&model, &theta, &batch, 1e-5).unwrap();
            let e = rel_err(&analytic, &numeric);
            worst = worst.max(e);
            ensure(e <= GRAD_REL_TOL, || format!("{} instance {k}: relative error {e:.3e}", model.name()))?;
        }
    }

    let mut worst_neural = 0.0f64;
    for k in 0..20 {
        let b = 2 + k % 3;
        let input_dim = 4;
        let mut net = NeuralMfgg::new(NeuralConfig::default(), b, input_dim, k as u64).unwrap();
        let weights: Vec<f64> = gauss(&mut rng, net.weights().len()).iter().map(|x| 0.5 * x).collect();
        net.set_weights(weights.clone()).unwrap();
        let summaries: Vec<Vec<f64>> = (0..b).map(|_| gauss(&mut rng, input_dim)).collect();
        let lags: Vec<Vec<f64>> = (0..b).map(|_| gauss(&mut rng, 6)).collect();
        let objective = MetaQuadratic::new(&lags, &gauss(&mut rng, 6));
        let (_, analytic) = net.loss_and_grad(&objective, &summaries).unwrap();
        let h = 1e-5;
        let mut numeric = Vec::with_capacity(weights.len());
        let mut probe = net.clone();
        for i in 0..weights.len() {
            let mut wv = weights.clone();
            wv[i] += h;
            probe.set_weights(wv.clone()).unwrap();
            let up = probe.loss_and_grad(&objective, &summaries).unwrap().0;
            wv[i] -= 2.0 * h;
            probe.set_weights(wv).unwrap();
            let down = probe.loss_and_grad(&objective, &summaries).unwrap().0;
            numeric.push((up - down) / (2.0 * h));
        }
        let e = rel_err(&analytic, &numeric);
        worst_neural = worst_neural.max(e);
        ensure(e <= NEURAL_REL_TOL, || format!("neural instance {k}: relative error {e:.3e}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < GRAD_CHECK_SECONDS, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "worst model rel err {worst:.2e}, worst neural rel err {worst_neural:.2e}, {secs:.2}s"
    ))
}

/// `<g, a> + KL(a || phi) / eta`, the objective the exponentiated step minimizes.
fn eg_objective(a: &[f64], phi: &[f64], g: &[f64], eta: f64) -> f64 {
    let kl: f64 = a
        .iter()
        .zip(phi)
        .map(|(&x, &p)| if x > 0.0 { x * (x / p).ln() } else { 0.0 })
        .sum();
    a.iter().zip(g).map(|(x, y)| x * y).sum::<f64>() + kl / eta
}

/// Grid argmin over the simplex: one uniform level of ~10^4 points, then a ~10^4-point
/// refinement around the best coarse point (b = 3).
fn grid_argmin(phi: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    let argmin = |points: &mut dyn Iterator<Item = Vec<f64>>| {
        points
            .filter(|a| a.iter().all(|&x| x >= 0.0))
            .map(|a| (eg_objective(&a, phi, g, eta), a))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .expect("grid is non-empty")
            .1
    };
    match phi.len() {
        2 => argmin(&mut (0..=10_000).map(|i| {
            let x = i as f64 / 10_000.0;
            vec![x, 1.0 - x]
        })),
        3 => {
            let n = 140;
            let c = argmin(&mut (0..=n).flat_map(|i| {
                (0..=n - i).map(move |j| {
                    let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                    vec![x, y, 1.0 - x - y]
                })
            }));
            let step = 2.5e-4;
            argmin(&mut (-50i32..=50).flat_map(|i| {
                let c = c.clone();
                (-50i32..=50).map(move |j| {
                    let x = c[0] + i as f64 * step;
                    let y = c[1] + j as f64 * step;
                    vec![x, y, 1.0 - x - y]
                })
            }))
        }
        _ => unreachable!(),
    }
}

fn eg_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut instances: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![(vec![0.5, 0.5], vec![0.0, 3f64.ln()], 1.0)];
    while instances.len() < 50 {
        let b = 2 + instances.len() % 2;
        let raw: Vec<f64> = (0..b).map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let phi: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let g: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta = rng.random_range(0.2..2.0);
        instances.push((phi, g, eta));
    }
    let mut worst = 0.0f64;
    let mut worst_shift = 0.0f64;
    for (k, (phi, g, eta)) in instances.iter().enumerate() {
        let p = SimplexWeights::new(phi.clone()).unwrap();
        let closed = eg_update(&p, g, *eta).unwrap();
        let grid = grid_argmin(phi, g, *eta);
        let l1: f64 = closed.iter().zip(&grid).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.max(l1);
        ensure(l1 <= EG_L1_TOL, || format!("instance {k}: l1 distance to grid argmin {l1:.3e}"))?;
        let c = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = g.iter().map(|x| x + c).collect();
        let again = eg_update(&p, &shifted, *eta).unwrap();
        let d = closed.iter().zip(again.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_shift = worst_shift.max(d);
        ensure(d <= EG_SHIFT_TOL, || format!("instance {k}: shift by {c} moved phi by {d:.3e}"))?;
    }
    let fixture = eg_update(&SimplexWeights::uniform(2), &[0.0, 3f64.ln()], 1.0).unwrap();
    ensure((fixture[0] - 0.75).abs() < 1e-12, || format!("fixture gave {:?}", fixture.as_slice()))?;
    Ok(format!("50 instances, worst l1 {worst:.2e}, worst shift change {worst_shift:.1e}"))
}

fn per_round_inequality(collected: &Collected) -> Verdict {
    let mut threshold_rounds = 0;
    let mut bad = Vec::new();
    for (label, ledger) in &collected.ledgers {
        threshold_rounds += ledger
            .rounds()
            .iter()
            .filter(|r| r.termination == Termination::Threshold)
            .count();
        let v = per_round_violations(ledger, ROUNDING_TOL);
        if !v.is_empty() {
            bad.push(format!("{label}: rounds {v:?}"));
        }
    }
    ensure(threshold_rounds > 0, || "no threshold-terminated rounds".into())?;
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!(
        "{} runs, {threshold_rounds} threshold-terminated rounds, 0 violations",
        collected.ledgers.len()
    ))
}

fn batch_update_bound(collected: &mut Collected) -> Verdict {
    let rounds = 200;
    let mut min_slack = f64::INFINITY;
    let mut checks = 0;
    for shape in SHAPES {
        for b in 1..=3 {
            for seed in SEEDS {
                let src = source(shape, seed);
                let cfg = TrainerConfig::bu(b).window(b).threshold().eta(ETA);
                let label = format!("{} bu-{b}", shape.name());
                let out = collected.run(&label, &cfg, &src, rounds, seed);
                let capped = out.ledger.rounds().iter().filter(|r| r.termination != Termination::Threshold).count();
                ensure(capped == 0, || format!("{label} seed {seed}: {capped} rounds missed the threshold"))?;
                let visited: Vec<ParamVector> = out.outcomes.iter().map(|o| o.theta.clone()).collect();
                let probe = ProbeConfig {
                    count: 16,
                    seed,
                    ..ProbeConfig::default()
                };
                let probe_set = build_probe_set(&probe, src.model().param_dim(), &visited).unwrap();
                let v = gradient_variation(&src, &probe_set, b, rounds).unwrap();
                let (loose, _) = bound_check_prop1(&out.ledger, v, cfg.delta).unwrap();
                ensure(loose.holds(), || {
                    format!("{label} seed {seed}: R_w {} > bound {}", loose.lhs, loose.rhs)
                })?;
                min_slack = min_slack.min(loose.slack);
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} runs, 0 violations, min slack {min_slack:.3e}"))
}

fn ideal_update(collected: &mut Collected) -> Verdict {
    let mut worst = 0.0f64;
    let mut delta_sq = 0.0;
    for shape in SHAPES {
        for w in 1..=2 {
            for seed in SEEDS {
                let src = source(shape, seed);
                let cfg = TrainerConfig::mgd(Forecast::Oracle, w).window(w).threshold().eta(ETA);
                let label = format!("{} mgd-oracle w={w}", shape.name());
                let out = collected.run(&label, &cfg, &src, 200, seed);
                let r = local_regret(&out.ledger, w).unwrap();
                delta_sq = cfg.delta * cfg.delta;
                worst = worst.max(r);
                ensure(r <= delta_sq, || format!("{label} seed {seed}: R_w {r:.3e} > delta^2 {delta_sq:.1e}"))?;
            }
        }
    }
    let mut worst_ratio = f64::INFINITY;
    for seed in SEEDS {
        let src = source(Shape::Periodic3, seed);
        let lag = collected.run(
            "periodic-3 mgd-lag-3",
            &TrainerConfig::mgd(Forecast::Lag { k: 3 }, 1).threshold().eta(ETA),
            &src,
            400,
            seed,
        );
        let bu = collected.run("periodic-3 iu", &TrainerConfig::iu().threshold().eta(ETA), &src, 400, seed);
        let (r_lag, r_bu) = (local_regret(&lag.ledger, 1).unwrap(), local_regret(&bu.ledger, 1).unwrap());
        worst_ratio = worst_ratio.min(r_bu / r_lag);
        ensure(ORACLE_SPEEDUP * r_lag <= r_bu, || {
            format!("seed {seed}: lag-3 R_1 {r_lag:.3e} vs BU-1 R_1 {r_bu:.3e}")
        })?;
    }
    Ok(format!(
        "oracle max R_w {worst:.3e} <= delta^2 {delta_sq:.0e}; lag-3 beats BU-1 by >= {worst_ratio:.1}x"
    ))
}

/// `(sum_t h_t(phi_t) - h_t(phi*), bound report holds)` for one FGD-linear run.
fn eg_regret(out: &RunOutput, b: usize) -> Result<f64, String> {
    let s = meta_summary(&out.ledger).unwrap();
    let oracle = simplex_oracle(&s.total, 100_000, 0);
    let report = bound_check_thm2(&out.ledger, &oracle.phi, s.eta_final, b, s.m_final).unwrap();
    if !report.holds() || report.degenerate {
        return Err(format!(
            "T={}: meta regret {} exceeds {} (degenerate {})",
            s.rounds, report.lhs, report.rhs, report.degenerate
        ));
    }
    Ok(report.lhs)
}

fn meta_regret(collected: &mut Collected) -> Verdict {
    let b = 5;
    let cfg = TrainerConfig::fgd_linear(b).threshold().eta(ETA);
    let mut ratios = Vec::new();
    let (mut short_sum, mut long_sum) = (0.0, 0.0);
    for seed in SEEDS {
        let src = source(Shape::Periodic3, seed);
        let short = collected.run("periodic-3 fgd-linear-5", &cfg, &src, 400, seed);
        let long = collected.run("periodic-3 fgd-linear-5", &cfg, &src, 1600, seed);
        let a = eg_regret(&short, b).map_err(|e| format!("seed {seed} {e}"))? / 400.0;
        let c = eg_regret(&long, b).map_err(|e| format!("seed {seed} {e}"))? / 1600.0;
        short_sum += a;
        long_sum += c;
        ratios.push(c / a);
    }
    let ratio = long_sum / short_sum;
    let per_seed: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    ensure(ratio <= EXCESS_RATIO, || {
        format!("average excess ratio T=1600/T=400 is {ratio:.3} (per seed {per_seed:?})")
    })?;
    Ok(format!(
        "bound holds on 10 runs; average excess ratio {ratio:.3} <= {EXCESS_RATIO} (per seed {})",
        per_seed.join(", ")
    ))
}

fn forecasting_wins(collected: &mut Collected) -> Verdict {
    let rounds = 400;
    let mut r = [0.0f64; 3];
    let mut min_mass = f64::INFINITY;
    for seed in SEEDS {
        let src = source(Shape::Periodic3, seed);
        let fgd = collected.run("periodic-3 fgd-linear-5", &TrainerConfig::fgd_linear(5).threshold().eta(ETA), &src, rounds, seed);
        let phi = fgd.phi_trajectory.last().expect("linear runs record phi");
        min_mass = min_mass.min(phi[2]);
        ensure(phi[2] >= LAG_MASS, || format!("seed {seed}: final phi {:?}", phi.as_slice()))?;
        r[0] += local_regret(&fgd.ledger, 1).unwrap() / SEEDS.len() as f64;
        for (b, slot) in r.iter_mut().enumerate().skip(1) {
            let bu = collected.run(
                &format!("periodic-3 bu-{b}"),
                &TrainerConfig::bu(b).threshold().eta(ETA),
                &src,
                rounds,
                seed,
            );
            *slot += local_regret(&bu.ledger, 1).unwrap() / SEEDS.len() as f64;
        }
    }
    ensure(r[0] < r[1] && r[0] < r[2], || {
        format!("mean R_1: fgd {:.3e}, bu-1 {:.3e}, bu-2 {:.3e}", r[0], r[1], r[2])
    })?;
    Ok(format!(
        "min lag-3 mass {min_mass:.3}; mean R_1 fgd {:.3e} < bu-2 {:.3e}, bu-1 {:.3e}",
        r[0], r[2], r[1]
    ))
}

fn smoothing_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let w = rng.random_range(1..=6);
        let d = rng.random_range(1..=10);
        let m = gauss(&mut rng, d);
        let current = gauss(&mut rng, d);
        let recent: Vec<Vec<f64>> = (1..w).map(|_| gauss(&mut rng, d)).collect();
        let m_bar = smoothed_generator(&m, &recent, w).unwrap();
        let mut window = vec![current.clone()];
        window.extend(recent.iter().cloned());
        let grad_u = average(&window).unwrap();
        for i in 0..d {
            let lhs = m_bar[i] - grad_u[i];
            let rhs = (m[i] - current[i]) / w as f64;
            let e = (lhs - rhs).abs();
            worst = worst.max(e);
            ensure(e <= IDENTITY_TOL, || format!("configuration {k} (w={w}, d={d}): sides differ by {e:.3e}"))?;
        }
    }
    Ok(format!("100 configurations, max difference {worst:.1e}"))
}

fn reduction_web(collected: &mut Collected) -> Verdict {
    let rounds = 100;
    let mut compared = 0;
    for shape in [Shape::Periodic3, Shape::LinearDrift] {
        for seed in [1, 2, 3] {
            let src = source(shape, seed);
            for threshold in [false, true] {
                let mode = |c: TrainerConfig| if threshold { c.threshold().eta(ETA) } else { c.eta(ETA) };
                let label = |s: &str| format!("{} {s} threshold={threshold}", shape.name());
                let iu = collected.run(&label("iu"), &mode(TrainerConfig::iu()), &src, rounds, seed).thetas();
                let bu1 = collected.run(&label("bu-1"), &mode(TrainerConfig::bu(1)), &src, rounds, seed).thetas();
                let fgd1 = collected
                    .run(&label("fgd-linear-1"), &mode(TrainerConfig::fgd_linear(1)), &src, rounds, seed)
                    .thetas();
                ensure(iu == bu1 && iu == fgd1, || format!("{} seed {seed}: IU, BU-1 and FGD-linear-1 differ", label("")))?;
                compared += 2;
                for w in 2..=3 {
                    let bu = collected
                        .run(&label(&format!("bu-{w}")), &mode(TrainerConfig::bu(w).window(w)), &src, rounds, seed)
                        .thetas();
                    let mgd = collected
                        .run(
                            &label(&format!("mgd-lag-{w} w={w}")),
                            &mode(TrainerConfig::mgd(Forecast::Lag { k: w }, w).window(w)),
                            &src,
                            rounds,
                            seed,
                        )
                        .thetas();
                    ensure(bu == mgd, || format!("{} seed {seed}: BU-{w} and MGD lag {w} differ", label("")))?;
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} theta sequences bit-identical"))
}

const MATRIX: &str = r#"
rounds = 60
seeds = [1, 2]
workers = 3

[emit]
plots = true
checkpoints = true

[[scenario]]
name = "periodic-3"
kind = "periodic-rotation"
period = 3
dim = 6

[[scenario]]
name = "drift-clf"
kind = "linear-drift"
task = "classification"
dim = 4
samples = 128

[[algorithm]]
name = "bu-2"
w = 2
eta = 0.25

[[algorithm]]
name = "fgd-linear-3"
eta = 0.25
"#;

fn dir_contents(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism_and_plumbing() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (k, workers) in [1usize, 3].into_iter().enumerate() {
        let mut cfg = parse_config(MATRIX).unwrap();
        cfg.workers = workers;
        cfg.output = tmp.path().join(format!("run{k}"));
        let outcome = run_matrix(&cfg, false).unwrap();
        ensure(!outcome.table.any_failed(), || format!("cells failed: {}", outcome.table.summary()))?;
        outputs.push(dir_contents(&cfg.output));
    }
    let csvs = outputs[0].iter().filter(|(n, _)| n.ends_with(".csv")).count();
    ensure(csvs > 0, || "no CSV output".into())?;
    ensure(outputs[0] == outputs[1], || {
        let names = |o: &[(String, Vec<u8>)]| o.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
        let diff: Vec<&String> = outputs[0]
            .iter()
            .zip(&outputs[1])
            .filter(|(a, b)| a != b)
            .map(|(a, _)| &a.0)
            .collect();
        format!("outputs differ: {diff:?} ({:?} vs {:?} files)", names(&outputs[0]).len(), names(&outputs[1]).len())
    })?;

    let auc = desk_auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
    ensure(auc == 0.75, || format!("desk_auc fixture gave {auc}"))?;

    let base = "[[scenario]]\nname = \"s\"\n[[algorithm]]\nname = \"iu\"\n";
    let invalid: Vec<(String, &str)> = vec![
        (format!("rounds = 0\n{base}"), "rounds"),
        (format!("workers = 0\n{base}"), "workers"),
        (format!("seeds = []\n{base}"), "seeds"),
        (format!("colour = 1\n{base}"), "colour"),
        ("[[scenario]]\nname = \"s\"\n".into(), "algorithm"),
        ("[[algorithm]]\nname = \"iu\"\n".into(), "scenario"),
        ("[[scenario]]\nname = \"s\"\n[[algorithm]]\nname = \"sgd\"\n".into(), "algorithm[0].name"),
        ("[[scenario]]\nname = \"s\"\nkind = \"sideways\"\n[[algorithm]]\nname = \"iu\"\n".into(), "scenario[0].kind"),
        ("[[scenario]]\nname = \"s\"\ndim = 0\n[[algorithm]]\nname = \"iu\"\n".into(), "scenario[0].dim"),
        ("[[scenario]]\nname = \"s\"\n[[algorithm]]\nname = \"bu-2\"\neta = -1.0\n".into(), "algorithm[0].eta"),
        ("[[scenario]]\nname = \"s\"\n[[algorithm]]\nname = \"bu-2\"\ndelta = -0.5\n".into(), "algorithm[0].delta"),
        (format!("[probe]\nlower = 1.0\nupper = 0.0\n{base}"), "probe.lower"),
    ];
    for (k, (text, field)) in invalid.iter().enumerate() {
        let path = tmp.path().join(format!("bad{k}.toml"));
        std::fs::write(&path, text).unwrap();
        match validate_config(&path) {
            Ok(_) => return Err(format!("config {k} accepted; expected an error on {field}")),
            Err(errs) => ensure(errs.iter().any(|e| e.starts_with(&format!("{field}:"))), || {
                format!("config {k}: no error names {field}: {errs:?}")
            })?,
        }
    }
    Ok(format!(
        "{} files byte-identical across runs; desk_auc fixture 0.75; {} invalid configs rejected by field",
        outputs[0].len(),
        invalid.len()
    ))
}

fn main() {
    let start = Instant::now();
    let mut collected = Collected::default();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut check = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        results.push((n, name, verdict));
    };
    check(1, "gradient correctness", &mut gradient_correctness);
    check(2, "exponentiated-gradient exactness", &mut eg_exactness);
    check(4, "batch-update regret bound", &mut || batch_update_bound(&mut collected));
    check(5, "ideal update and lag oracle", &mut || ideal_update(&mut collected));
    check(6, "meta regret bound and rate", &mut || meta_regret(&mut collected));
    check(7, "forecasting beats batch updates", &mut || forecasting_wins(&mut collected));
    check(8, "smoothing identity", &mut smoothing_identity);
    check(9, "reduction web", &mut || reduction_web(&mut collected));
    check(10, "determinism and plumbing", &mut determinism_and_plumbing);
    check(3, "per-round inequality", &mut || per_round_inequality(&collected));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    let secs = start.elapsed().as_secs_f64();
    if secs < SUITE_SECONDS {
        println!("suite runtime {secs:.1}s");
    } else {
        failed += 1;
        println!("suite runtime {secs:.1}s: FAIL (limit {SUITE_SECONDS}s)");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
