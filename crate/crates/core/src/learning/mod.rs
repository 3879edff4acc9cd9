//! Adaptive search that learns target popularity and per-object orders from
//! the oracle's own answers.

mod counter;
mod order;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use counter::{CounterMode, TargetCounter, DEFAULT_EMA_ALPHA};
pub use order::{OrderStore, Partition, StoreSnapshot};

use crate::distribution::{Demand, Distribution};
use crate::error::{domain, Error, Result};
use crate::metric::{MetricSpace, ObjectId};
use crate::oracle::{OracleConfig, SimulatedOracle};
use crate::policy::{PolicyKind, SelectionPolicy};
use crate::search::{default_cap, greedy_content_search, Step};
use crate::seed::SeedStream;

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Counters plus one order store per object.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedState {
    counter: TargetCounter,
    stores: Vec<OrderStore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub n: usize,
    pub counter: TargetCounter,
    pub stores: Vec<StoreSnapshot>,
}

impl LearnedState {
    pub fn new(n: usize, mode: CounterMode) -> Result<Self> {
        if n < 2 {
            return Err(domain("learning needs at least two objects"));
        }
        let stores = (0..n).map(|x| OrderStore::new(n, ObjectId::new(x))).collect::<Result<_>>()?;
        Ok(LearnedState { counter: TargetCounter::new(n, mode)?, stores })
    }

    pub fn len(&self) -> usize {
        self.stores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stores.is_empty()
    }

    pub fn counter(&self) -> &TargetCounter {
        &self.counter
    }

    pub fn store(&self, x: ObjectId) -> &OrderStore {
        &self.stores[x.index()]
    }

    /// Completed searches so far.
    pub fn tau(&self) -> u64 {
        self.counter.tau()
    }

    /// Applies a finished search: counts `target` and records `winner ≼ loser`
    /// for every answer in `history` that does not involve the target.
    /// Returns the number of constraints recorded.
    pub fn complete(&mut self, target: ObjectId, history: &[Step]) -> Result<usize> {
        if target.index() >= self.len() {
            return Err(Error::InvalidId { id: target, n: self.len() });
        }
        for step in history {
            let valid = step.winner == step.current || step.winner == step.proposed;
            if !valid || step.current == step.proposed {
                return Err(domain("history entry has a winner outside its pair"));
            }
        }
        self.counter.record(target)?;
        let store = &mut self.stores[target.index()];
        let mut recorded = 0;
        for step in history {
            let loser = if step.winner == step.current { step.proposed } else { step.current };
            if step.winner != target && loser != target {
                store.add(step.winner, loser)?;
                recorded += 1;
            }
        }
        Ok(recorded)
    }

    pub fn policy(&self, epsilon: f64) -> Result<LearnedPolicy<'_>> {
        LearnedPolicy::new(self, epsilon)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            n: self.len(),
            counter: self.counter.clone(),
            stores: self.stores.iter().map(OrderStore::snapshot).collect(),
        }
    }

    pub fn restore(snap: &StateSnapshot) -> Result<Self> {
        if snap.counter.len() != snap.n || snap.stores.len() != snap.n {
            return Err(Error::Format("snapshot sizes disagree".into()));
        }
        let stores = snap
            .stores
            .iter()
            .enumerate()
            .map(|(x, s)| {
                if s.reference.index() != x {
                    return Err(Error::Format(format!("store {x} has reference {}", s.reference)));
                }
                OrderStore::restore(snap.n, s)
            })
            .collect::<Result<_>>()?;
        Ok(LearnedState { counter: snap.counter.clone(), stores })
    }
}

/// `ℓ̂_x(w) = (μ̂(w)/r̂_x(w))(1−ε)/Ẑ_x + ε/(n−1)`, evaluated against a fixed
/// estimate of `μ`. Falls back to uniform when `Ẑ_x = 0`.
pub struct LearnedPolicy<'a> {
    state: &'a LearnedState,
    epsilon: f64,
    mu_hat: Option<Vec<f64>>,
}

impl<'a> LearnedPolicy<'a> {
    pub fn new(state: &'a LearnedState, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(domain(format!("epsilon must lie in (0,1], got {epsilon}")));
        }
        Ok(LearnedPolicy { state, epsilon, mu_hat: state.counter.estimate() })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `μ̂(w)/r̂_x(w)` for each `w ≠ x`, indexed by object, and their sum `Ẑ_x`.
    pub fn rank_weights(&self, x: ObjectId) -> (Vec<f64>, f64) {
        let n = self.state.len();
        let mut weights = vec![0.0; n];
        let Some(mu) = &self.mu_hat else { return (weights, 0.0) };
        let mut prefix = 0.0;
        let mut z = 0.0;
        for class in self.state.store(x).partition().classes() {
            prefix += class.iter().map(|w| mu[w.index()]).sum::<f64>();
            for w in class {
                let m = mu[w.index()];
                if m > 0.0 {
                    weights[w.index()] = m / prefix;
                    z += m / prefix;
                }
            }
        }
        (weights, z)
    }

    /// Estimated rank `r̂_x(w)`: mass of every class up to and including `w`'s.
    pub fn estimated_rank(&self, x: ObjectId, w: ObjectId) -> Result<f64> {
        let store = self.state.store(x);
        let position = store
            .partition()
            .position(w)
            .ok_or_else(|| domain(format!("{w} is the reference object")))?;
        let Some(mu) = &self.mu_hat else { return Ok(0.0) };
        Ok(store.partition().classes()[..=position].iter().flatten().map(|y| mu[y.index()]).sum())
    }

    fn check(&self, x: ObjectId) -> Result<()> {
        if x.index() >= self.state.len() {
            return Err(Error::InvalidId { id: x, n: self.state.len() });
        }
        Ok(())
    }
}

fn uniform_other(n: usize, x: ObjectId, rng: &mut dyn RngCore) -> ObjectId {
    let k = rng.random_range(0..n - 1);
    ObjectId::new(if k >= x.index() { k + 1 } else { k })
}

impl SelectionPolicy for LearnedPolicy<'_> {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Learned
    }

    fn propose(&self, current: ObjectId, rng: &mut dyn RngCore) -> Result<ObjectId> {
        self.check(current)?;
        let n = self.state.len();
        let explore = rng.random::<f64>() < self.epsilon;
        let (weights, z) = self.rank_weights(current);
        if explore || z <= 0.0 {
            return Ok(uniform_other(n, current, rng));
        }
        let mut u = rng.random::<f64>() * z;
        let mut last = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last = Some(i);
                if u < w {
                    return Ok(ObjectId::new(i));
                }
                u -= w;
            }
        }
        Ok(ObjectId::new(last.expect("positive normalizer implies a positive weight")))
    }

    fn distribution(&self, current: ObjectId) -> Result<Distribution> {
        self.check(current)?;
        let n = self.state.len();
        let (weights, z) = self.rank_weights(current);
        let floor = self.epsilon / (n - 1) as f64;
        let entries = (0..n).filter(|&w| w != current.index()).map(|w| {
            let p = if z > 0.0 { weights[w] * (1.0 - self.epsilon) / z + floor } else { 1.0 / (n - 1) as f64 };
            (ObjectId::new(w), p)
        });
        Distribution::new(entries)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub epsilon: f64,
    pub timeslots: u64,
    pub oracle: OracleConfig,
    pub seed: u64,
    #[serde(default)]
    pub counter: CounterMode,
    /// Per-search query cap; defaults to `50·n·(1 + H_max(μ))`.
    #[serde(default)]
    pub cap: Option<u64>,
}

impl AdaptiveConfig {
    pub fn new(epsilon: f64, timeslots: u64, seed: u64) -> Self {
        AdaptiveConfig { epsilon, timeslots, oracle: OracleConfig::default(), seed, counter: CounterMode::Raw, cap: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveTrace {
    /// Timeslot index of the first entry in `costs`.
    pub start: u64,
    pub costs: Vec<u64>,
    pub cap_exceeded: u64,
}

impl AdaptiveTrace {
    /// Mean cost over the last `fraction` of the run.
    pub fn trailing_mean(&self, fraction: f64) -> f64 {
        let k = ((self.costs.len() as f64 * fraction).ceil() as usize).clamp(1, self.costs.len().max(1));
        let tail = &self.costs[self.costs.len().saturating_sub(k)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().sum::<u64>() as f64 / tail.len() as f64
    }

    /// Means over consecutive windows of `width` slots.
    pub fn window_means(&self, width: usize) -> Vec<f64> {
        self.costs
            .chunks(width.max(1))
            .map(|c| c.iter().sum::<u64>() as f64 / c.len() as f64)
            .collect()
    }
}

/// Runs `config.timeslots` searches, continuing from `state`. Slot `τ` draws
/// its target from `μ`, a uniform source, proposals and tie-breaks from seed
/// sub-streams indexed by `τ`, so resuming from a snapshot reproduces the
/// uninterrupted run.
pub fn run_adaptive(space: &MetricSpace, demand: &Demand, config: &AdaptiveConfig, state: &mut LearnedState) -> Result<AdaptiveTrace> {
    let n = space.len();
    if state.len() != n {
        return Err(domain("learned state does not match the space"));
    }
    if !demand.is_fully_supported(n) || demand.extent() > n {
        return Err(Error::Precondition("adaptive runs need λ(u,v) > 0 for every ordered pair".into()));
    }
    config.oracle.validate()?;
    LearnedPolicy::new(state, config.epsilon)?;
    let mu = demand.target_distribution();
    let cap = config.cap.unwrap_or_else(|| default_cap(n, &mu));
    let targets = mu.sampler();
    let seeds = SeedStream::new(config.seed);
    let mut trace = AdaptiveTrace { start: state.tau(), costs: Vec::with_capacity(config.timeslots as usize), cap_exceeded: 0 };
    for _ in 0..config.timeslots {
        let slot = state.tau();
        let mut rng = seeds.rng("adaptive", slot);
        let t = targets.sample(&mut rng);
        let s = ObjectId::new(rng.random_range(0..n));
        let mut oracle = SimulatedOracle::new(&config.oracle.with_seed(seeds.seed("oracle", slot)), space, t)?;
        let out = {
            let policy = LearnedPolicy::new(state, config.epsilon)?;
            greedy_content_search(&policy, &mut oracle, s, cap, &mut rng, None)?
        };
        if !out.found() {
            trace.cap_exceeded += 1;
        }
        trace.costs.push(out.cost);
        state.complete(t, &out.history)?;
    }
    Ok(trace)
}

/// Fraction of strictly ordered pairs `u ≺_x v` that the store for `x` places
/// in strictly increasing class order, as `(correct, total)`.
pub fn order_accuracy(space: &MetricSpace, store: &OrderStore) -> (u64, u64) {
    use std::cmp::Ordering::Less;
    let x = store.reference();
    let p = store.partition();
    let (mut correct, mut total) = (0, 0);
    for u in space.ids().filter(|&u| u != x) {
        for v in space.ids().filter(|&v| v != x) {
            if space.cmp_to(x, u, v) == Less {
                total += 1;
                if p.position(u) < p.position(v) {
                    correct += 1;
                }
            }
        }
    }
    (correct, total)
}
