use std::cell::{Cell, RefCell};
use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use super::batch::DomainBatch;
use super::scenario::{next_domain, DriftScenario, Moments, Task};
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::LossModelSpec;

/// Gradient of the population risk of round `round`.
///
/// Linear-squared regression has the closed form `2 (S_t theta - c_t)` from the scenario
/// moments. Other combinations need a Monte-Carlo `budget` and are estimated on an
/// independent sample of that size.
pub fn population_gradient(
    scenario: &DriftScenario,
    round: usize,
    model: &LossModelSpec,
    theta: &[f64],
    budget: Option<usize>,
) -> Result<Vec<f64>> {
    if let (LossModelSpec::LinearSquared { .. }, Task::Regression) = (model, scenario.task()) {
        crate::error::check_len("population gradient", scenario.dim(), theta.len())?;
        let m = scenario.moments(round)?;
        return Ok(moment_gradient(&m, theta));
    }
    match budget {
        Some(n) => model.grad(theta, &scenario.monte_carlo_sample(round, n)?),
        None => Err(Error::UnsupportedOracle(format!(
            "{} model on a {:?} scenario",
            model.name(),
            scenario.task()
        ))),
    }
}

fn moment_gradient(m: &Moments, theta: &[f64]) -> Vec<f64> {
    let d = theta.len();
    let mut g = linalg::mat_vec(&m.second, d, theta);
    for (gi, ci) in g.iter_mut().zip(&m.cross) {
        *gi = 2.0 * (*gi - ci);
    }
    g
}

fn moment_loss(m: &Moments, theta: &[f64]) -> f64 {
    let d = theta.len();
    let s_theta = linalg::mat_vec(&m.second, d, theta);
    let s_beta = linalg::mat_vec(&m.second, d, &m.concept);
    linalg::dot(theta, &s_theta) - 2.0 * linalg::dot(theta, &m.cross)
        + linalg::dot(&m.concept, &s_beta)
        + m.noise_var
}

/// Selects one of `count` disjoint mini-batches of a round's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiniBatchPart {
    pub index: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Gradients of the empirical risk on the sampled round batches.
    Empirical,
    /// Closed-form population gradients.
    Population,
    /// Population gradients estimated on an independent sample of the given size.
    MonteCarlo(usize),
}

/// Per-round risks `r_s`. Rounds `s <= 0` have zero risk and zero gradient.
pub trait GradientSource {
    fn model(&self) -> &LossModelSpec;
    fn scenario(&self) -> &DriftScenario;
    fn kind(&self) -> SourceKind;
    fn grad(&self, round: i64, theta: &[f64]) -> Result<Vec<f64>>;
    fn loss(&self, round: i64, theta: &[f64]) -> Result<f64>;
    /// The sampled batch of a round (always the stream's own data, whatever the gradient kind).
    fn batch(&self, round: usize) -> Result<Rc<DomainBatch>>;

    /// Mini-batch gradient; sources without a notion of sampling return the full gradient.
    fn grad_part(&self, round: i64, theta: &[f64], part: Option<MiniBatchPart>) -> Result<Vec<f64>> {
        let _ = part;
        self.grad(round, theta)
    }
}

/// Small most-recently-used cache of regenerated batches.
#[derive(Debug)]
struct BatchCache {
    capacity: usize,
    entries: RefCell<VecDeque<Rc<DomainBatch>>>,
}

impl BatchCache {
    fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: RefCell::new(VecDeque::new()),
        }
    }

    fn get(&self, round: usize, make: impl FnOnce() -> Result<DomainBatch>) -> Result<Rc<DomainBatch>> {
        let mut entries = self.entries.borrow_mut();
        if let Some(pos) = entries.iter().position(|b| b.round() == round) {
            let b = entries.remove(pos).unwrap();
            entries.push_front(b.clone());
            return Ok(b);
        }
        let b = Rc::new(make()?);
        entries.push_front(b.clone());
        entries.truncate(self.capacity);
        Ok(b)
    }
}

const DEFAULT_CACHE: usize = 24;

/// Risks measured on the regenerated stream batches.
#[derive(Debug)]
pub struct EmpiricalSource {
    scenario: DriftScenario,
    model: LossModelSpec,
    cache: BatchCache,
}

impl EmpiricalSource {
    pub fn new(scenario: DriftScenario, model: LossModelSpec) -> Result<Self> {
        model.validate()?;
        crate::error::check_len("model input dimension", scenario.dim(), model.input_dim())?;
        Ok(Self {
            scenario,
            model,
            cache: BatchCache::new(DEFAULT_CACHE),
        })
    }
}

impl GradientSource for EmpiricalSource {
    fn model(&self) -> &LossModelSpec {
        &self.model
    }

    fn scenario(&self) -> &DriftScenario {
        &self.scenario
    }

    fn kind(&self) -> SourceKind {
        SourceKind::Empirical
    }

    fn grad(&self, round: i64, theta: &[f64]) -> Result<Vec<f64>> {
        if round <= 0 {
            return Ok(vec![0.0; theta.len()]);
        }
        self.model.grad(theta, &*self.batch(round as usize)?)
    }

    fn grad_part(&self, round: i64, theta: &[f64], part: Option<MiniBatchPart>) -> Result<Vec<f64>> {
        match part {
            Some(p) if round > 0 => {
                let batch = self.batch(round as usize)?;
                let slice = batch.part(p.index, p.count, self.scenario.seed())?;
                self.model.grad(theta, &slice)
            }
            _ => self.grad(round, theta),
        }
    }

    fn loss(&self, round: i64, theta: &[f64]) -> Result<f64> {
        if round <= 0 {
            return Ok(0.0);
        }
        self.model.loss(theta, &*self.batch(round as usize)?)
    }

    fn batch(&self, round: usize) -> Result<Rc<DomainBatch>> {
        self.cache.get(round, || next_domain(&self.scenario, round))
    }
}

/// Risks of the data distributions themselves: closed form where available,
/// otherwise estimated on an independent Monte-Carlo sample per round.
#[derive(Debug)]
pub struct PopulationSource {
    scenario: DriftScenario,
    model: LossModelSpec,
    budget: Option<usize>,
    moments: RefCell<HashMap<usize, Rc<Moments>>>,
    mc_cache: BatchCache,
    batches: BatchCache,
}

impl PopulationSource {
    /// Exact population risks; fails unless the model is linear-squared on a regression scenario.
    pub fn exact(scenario: DriftScenario, model: LossModelSpec) -> Result<Self> {
        if !matches!(model, LossModelSpec::LinearSquared { .. }) || scenario.task() != Task::Regression {
            return Err(Error::UnsupportedOracle(format!(
                "{} model on a {:?} scenario",
                model.name(),
                scenario.task()
            )));
        }
        Self::build(scenario, model, None)
    }

    /// Population risks estimated with `budget` fresh samples per round.
    pub fn monte_carlo(scenario: DriftScenario, model: LossModelSpec, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Config("Monte-Carlo budget must be >= 1".into()));
        }
        Self::build(scenario, model, Some(budget))
    }

    fn build(scenario: DriftScenario, model: LossModelSpec, budget: Option<usize>) -> Result<Self> {
        model.validate()?;
        crate::error::check_len("model input dimension", scenario.dim(), model.input_dim())?;
        Ok(Self {
            scenario,
            model,
            budget,
            moments: RefCell::new(HashMap::new()),
            mc_cache: BatchCache::new(DEFAULT_CACHE),
            batches: BatchCache::new(DEFAULT_CACHE),
        })
    }

    fn round_moments(&self, round: usize) -> Result<Rc<Moments>> {
        if let Some(m) = self.moments.borrow().get(&round) {
            return Ok(m.clone());
        }
        let m = Rc::new(self.scenario.moments(round)?);
        self.moments.borrow_mut().insert(round, m.clone());
        Ok(m)
    }

    fn mc_batch(&self, round: usize, budget: usize) -> Result<Rc<DomainBatch>> {
        self.mc_cache
            .get(round, || self.scenario.monte_carlo_sample(round, budget))
    }
}

impl GradientSource for PopulationSource {
    fn model(&self) -> &LossModelSpec {
        &self.model
    }

    fn scenario(&self) -> &DriftScenario {
        &self.scenario
    }

    fn kind(&self) -> SourceKind {
        match self.budget {
            None => SourceKind::Population,
            Some(n) => SourceKind::MonteCarlo(n),
        }
    }

    fn grad(&self, round: i64, theta: &[f64]) -> Result<Vec<f64>> {
        if round <= 0 {
            return Ok(vec![0.0; theta.len()]);
        }
        match self.budget {
            None => {
                crate::error::check_len("population gradient", self.model.param_dim(), theta.len())?;
                Ok(moment_gradient(&*self.round_moments(round as usize)?, theta))
            }
            Some(n) => self.model.grad(theta, &*self.mc_batch(round as usize, n)?),
        }
    }

    fn loss(&self, round: i64, theta: &[f64]) -> Result<f64> {
        if round <= 0 {
            return Ok(0.0);
        }
        match self.budget {
            None => {
                crate::error::check_len("population loss", self.model.param_dim(), theta.len())?;
                Ok(moment_loss(&*self.round_moments(round as usize)?, theta))
            }
            Some(n) => self.model.loss(theta, &*self.mc_batch(round as usize, n)?),
        }
    }

    fn batch(&self, round: usize) -> Result<Rc<DomainBatch>> {
        self.batches.get(round, || next_domain(&self.scenario, round))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamEvent {
    /// The deployed model was scored on the round's data.
    Evaluated(usize),
    /// The round's data was handed to the trainer.
    Revealed(usize),
}

/// Causal view of a source: trainer-side access is limited to revealed rounds.
pub struct History<'a> {
    source: &'a dyn GradientSource,
    horizon: Cell<usize>,
    events: RefCell<Vec<StreamEvent>>,
}

impl<'a> History<'a> {
    pub fn new(source: &'a dyn GradientSource) -> Self {
        Self {
            source,
            horizon: Cell::new(0),
            events: RefCell::new(Vec::new()),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon.get()
    }

    pub fn model(&self) -> &LossModelSpec {
        self.source.model()
    }

    fn guard(&self, round: i64) -> Result<()> {
        if round > self.horizon.get() as i64 {
            return Err(Error::Causality {
                requested: round as usize,
                horizon: self.horizon.get(),
            });
        }
        Ok(())
    }

    pub fn grad(&self, round: i64, theta: &[f64]) -> Result<Vec<f64>> {
        self.guard(round)?;
        self.source.grad(round, theta)
    }

    pub fn grad_part(&self, round: i64, theta: &[f64], part: Option<MiniBatchPart>) -> Result<Vec<f64>> {
        self.guard(round)?;
        self.source.grad_part(round, theta, part)
    }

    pub fn loss(&self, round: i64, theta: &[f64]) -> Result<f64> {
        self.guard(round)?;
        self.source.loss(round, theta)
    }

    pub fn batch(&self, round: usize) -> Result<Rc<DomainBatch>> {
        self.guard(round as i64)?;
        self.source.batch(round)
    }

    /// Data of the next, not yet revealed round, for scoring the deployed model.
    pub fn evaluation_batch(&self, round: usize) -> Result<Rc<DomainBatch>> {
        if round != self.horizon.get() + 1 {
            return Err(Error::Misuse(format!(
                "evaluation of round {round} with horizon {}",
                self.horizon.get()
            )));
        }
        self.events.borrow_mut().push(StreamEvent::Evaluated(round));
        self.source.batch(round)
    }

    pub fn reveal(&self, round: usize) -> Result<()> {
        if round != self.horizon.get() + 1 {
            return Err(Error::Misuse(format!(
                "rounds must be revealed in order; next is {}, got {round}",
                self.horizon.get() + 1
            )));
        }
        self.horizon.set(round);
        self.events.borrow_mut().push(StreamEvent::Revealed(round));
        Ok(())
    }

    /// Unrestricted access, for exogenous generators (the ideal-update oracle) and post-hoc measurement.
    pub fn lookahead(&self) -> &'a dyn GradientSource {
        self.source
    }

    pub fn events(&self) -> Vec<StreamEvent> {
        self.events.borrow().clone()
    }
}
