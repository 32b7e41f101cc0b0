use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::ledger::RegretLedger;
use super::regret::BoundReport;
use crate::error::{Error, Result};
use crate::generators::MetaQuadratic;
use crate::linalg;

/// Meta-learning quantities collected from a linear-generator ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSummary {
    /// `sum_t h_t(phi_t)`
    pub sum_h: f64,
    /// `sum_t h_t` as one quadratic.
    pub total: MetaQuadratic,
    /// `sum_t ||grad h_t(phi_t)||_inf^2`
    pub grad_inf_sq: f64,
    /// Meta step size and gradient bound at the last round.
    pub eta_final: f64,
    pub m_final: f64,
    pub rounds: usize,
}

pub fn meta_summary(ledger: &RegretLedger) -> Result<MetaSummary> {
    let b = ledger.header().b;
    let mut s = MetaSummary {
        sum_h: 0.0,
        total: MetaQuadratic::zeros(b),
        grad_inf_sq: 0.0,
        eta_final: 0.0,
        m_final: 0.0,
        rounds: ledger.len(),
    };
    for r in ledger.rounds() {
        let m = r
            .meta
            .as_ref()
            .ok_or_else(|| Error::Misuse(format!("round {} has no linear generator record", r.t)))?;
        s.sum_h += m.h;
        s.total.add(&m.quadratic);
        s.grad_inf_sq += linalg::max_abs(&m.grad_h).powi(2);
        s.eta_final = m.eta_phi;
        s.m_final = m.m_bound;
    }
    if s.rounds == 0 {
        return Err(Error::IncompleteLedger { expected: 1, found: 0 });
    }
    Ok(s)
}

/// Meta regret against `phi_star` versus `ln b / eta + 32 eta M^4 T`.
///
/// The two right-hand terms land in `optimization_term` (divergence part) and
/// `generalization_term` (gradient part). `eta = 0` gives an infinite, degenerate bound.
pub fn bound_check_thm2(ledger: &RegretLedger, phi_star: &[f64], eta: f64, b: usize, m: f64) -> Result<BoundReport> {
    let s = meta_summary(ledger)?;
    if phi_star.len() != b || s.total.dim() != b {
        return Err(Error::Shape {
            context: "meta comparator",
            expected: s.total.dim(),
            got: phi_star.len(),
        });
    }
    let lhs = s.sum_h - comparator_sum(ledger, phi_star);
    Ok(eg_report("eg-regret", lhs, b, eta, 32.0 * eta * m.powi(4) * s.rounds as f64))
}

/// Same regret against the sharper `ln b / eta + (eta / 2) sum_t ||grad h_t||_inf^2`.
pub fn bound_check_thm2_tight(ledger: &RegretLedger, phi_star: &[f64], eta: f64) -> Result<BoundReport> {
    let s = meta_summary(ledger)?;
    let b = s.total.dim();
    let lhs = s.sum_h - comparator_sum(ledger, phi_star);
    Ok(eg_report("eg-regret-tight", lhs, b, eta, 0.5 * eta * s.grad_inf_sq))
}

fn comparator_sum(ledger: &RegretLedger, phi: &[f64]) -> f64 {
    ledger
        .rounds()
        .iter()
        .filter_map(|r| r.meta.as_ref())
        .map(|m| m.quadratic.value(phi))
        .sum()
}

fn eg_report(name: &str, lhs: f64, b: usize, eta: f64, grad_term: f64) -> BoundReport {
    let div = if eta > 0.0 { (b as f64).ln() / eta } else { f64::INFINITY };
    let grad_term = if eta > 0.0 { grad_term } else { 0.0 };
    let rhs = div + grad_term;
    BoundReport {
        name: name.into(),
        lhs,
        rhs,
        slack: rhs - lhs,
        optimization_term: div,
        generalization_term: grad_term,
        degenerate: !rhs.is_finite(),
        warnings: Vec::new(),
    }
}

/// Minimizer of a convex quadratic over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptimum {
    pub phi: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe gap `<grad f(phi), phi> - min_i grad_i f(phi)`, an upper bound on
    /// `f(phi) - min f`.
    pub gap: f64,
    pub certified: bool,
    pub warnings: Vec<String>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    let p: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|x| x / s).collect()
}

fn fw_gap(q: &MetaQuadratic, phi: &[f64]) -> f64 {
    let g = q.gradient(phi);
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    (linalg::dot(&g, phi) - min).max(0.0)
}

/// Points of the simplex grid with spacing `1/steps`.
fn grid_points(b: usize, steps: usize, mut visit: impl FnMut(&[f64])) {
    fn rec(k: usize, left: usize, steps: usize, buf: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
        if k + 1 == buf.len() {
            buf[k] = left as f64 / steps as f64;
            visit(buf);
            return;
        }
        for i in 0..=left {
            buf[k] = i as f64 / steps as f64;
            rec(k + 1, left - i, steps, buf, visit);
        }
    }
    let mut buf = vec![0.0; b];
    rec(0, steps, steps, &mut buf, &mut visit);
}

/// Brute-force minimizer of `q` over the simplex: a 0.01 grid for `b <= 3`, otherwise `draws`
/// uniform random points plus the vertices and barycenter; the best point is then polished by
/// projected gradient descent and certified by its Frank-Wolfe gap.
pub fn simplex_oracle(q: &MetaQuadratic, draws: usize, seed: u64) -> SimplexOptimum {
    let b = q.dim();
    let mut best = vec![1.0 / b as f64; b];
    let mut best_v = q.value(&best);
    let mut consider = |p: &[f64]| {
        let v = q.value(p);
        if v < best_v {
            best_v = v;
            best.copy_from_slice(p);
        }
    };
    if b <= 3 {
        grid_points(b, 100, &mut consider);
    } else {
        for i in 0..b {
            let mut e = vec![0.0; b];
            e[i] = 1.0;
            consider(&e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; b];
        for _ in 0..draws {
            for x in p.iter_mut() {
                *x = Exp1.sample(&mut rng);
            }
            let s: f64 = p.iter().sum();
            linalg::scale(1.0 / s, &mut p);
            consider(&p);
        }
    }
    let trace: f64 = (0..b).map(|i| q.gram[i * b + i]).sum();
    let mut phi = best;
    if trace > 0.0 {
        let step = 1.0 / (2.0 * trace);
        for _ in 0..50_000 {
            let g = q.gradient(&phi);
            let moved: Vec<f64> = phi.iter().zip(&g).map(|(p, gi)| p - step * gi).collect();
            let next = project_simplex(&moved);
            let change = linalg::dist_sq(&next, &phi);
            phi = next;
            if change < 1e-30 {
                break;
            }
        }
    }
    let value = q.value(&phi);
    let gap = fw_gap(q, &phi);
    let certified = gap <= 1e-9 * (1.0 + value.abs());
    let mut warnings = Vec::new();
    if !certified {
        warnings.push(format!(
            "simplex optimum not certified: Frank-Wolfe gap {gap:e} at value {value:e}"
        ));
    }
    SimplexOptimum {
        phi,
        value,
        gap,
        certified,
        warnings,
    }
}
