//! Greedy content search driven by a selection policy and an oracle, plus
//! Monte-Carlo estimation of its expected cost under a demand.

use std::collections::BTreeMap;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{Demand, Distribution};
use crate::error::{domain, Result};
use crate::metric::{MetricSpace, ObjectId};
use crate::oracle::{Oracle, OracleConfig, SimulatedOracle};
use crate::policy::SelectionPolicy;
use crate::rank::RankTable;
use crate::seed::SeedStream;
use crate::stats::Welford;

/// One comparison: the oracle saw `current` and `proposed` and picked `winner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub current: ObjectId,
    pub proposed: ObjectId,
    pub winner: ObjectId,
}

/// One proximity query over the current object and a batch of proposals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Batch {
    pub current: ObjectId,
    pub proposals: Vec<ObjectId>,
    pub winner: ObjectId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Found,
    CapExceeded,
    /// The policy can never propose the target.
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome<S = Step> {
    /// Proposals (or proposal batches) shown to the oracle, including the final one.
    pub cost: u64,
    /// Oracle answers in order; the final proposal of a found search is not an answer.
    pub history: Vec<S>,
    /// Queries spent while the current object sat in each phase.
    pub phase_counts: BTreeMap<u32, u64>,
    pub termination: Termination,
}

impl<S> SearchOutcome<S> {
    fn empty(termination: Termination) -> Self {
        SearchOutcome { cost: 0, history: Vec::new(), phase_counts: BTreeMap::new(), termination }
    }

    pub fn found(&self) -> bool {
        self.termination == Termination::Found
    }
}

/// Maps the current object to its phase; only instrumentation sees the target.
pub type PhaseMeter<'a> = &'a dyn Fn(ObjectId) -> Option<u32>;

/// Default query cap `50·n·(1 + H_max(μ))`.
pub fn default_cap(n: usize, mu: &Distribution) -> u64 {
    (50.0 * n as f64 * (1.0 + mu.max_entropy())).ceil() as u64
}

/// Runs the propose-and-compare loop from `source` until the oracle
/// recognises a proposal as its target or `cap` proposals have been made.
pub fn greedy_content_search(
    policy: &dyn SelectionPolicy,
    oracle: &mut dyn Oracle,
    source: ObjectId,
    cap: u64,
    rng: &mut dyn RngCore,
    meter: Option<PhaseMeter>,
) -> Result<SearchOutcome> {
    if oracle.is_target(source) {
        return Ok(SearchOutcome::empty(Termination::Found));
    }
    let mut out = SearchOutcome::empty(Termination::CapExceeded);
    let mut current = source;
    while out.cost < cap {
        let proposed = policy.propose(current, rng)?;
        out.cost += 1;
        if let Some(j) = meter.and_then(|m| m(current)) {
            *out.phase_counts.entry(j).or_default() += 1;
        }
        if oracle.is_target(proposed) {
            out.termination = Termination::Found;
            break;
        }
        let winner = oracle.compare(current, proposed).winner;
        out.history.push(Step { current, proposed, winner });
        current = winner;
    }
    Ok(out)
}

/// Like [`greedy_content_search`] but each query shows the oracle the current
/// object together with `width` independent proposals.
pub fn proximity_search(
    policy: &dyn SelectionPolicy,
    oracle: &mut dyn Oracle,
    width: usize,
    source: ObjectId,
    cap: u64,
    rng: &mut dyn RngCore,
    meter: Option<PhaseMeter>,
) -> Result<SearchOutcome<Batch>> {
    if width < 2 {
        return Err(domain(format!("proximity width must be at least 2, got {width}")));
    }
    if oracle.is_target(source) {
        return Ok(SearchOutcome::empty(Termination::Found));
    }
    let mut out = SearchOutcome::empty(Termination::CapExceeded);
    let mut current = source;
    let mut set = Vec::with_capacity(width + 1);
    while out.cost < cap {
        set.clear();
        set.push(current);
        for _ in 0..width {
            set.push(policy.propose(current, rng)?);
        }
        out.cost += 1;
        if let Some(j) = meter.and_then(|m| m(current)) {
            *out.phase_counts.entry(j).or_default() += 1;
        }
        if set[1..].iter().any(|&w| oracle.is_target(w)) {
            out.termination = Termination::Found;
            break;
        }
        let winner = oracle.closest(&set)?;
        out.history.push(Batch { current, proposals: set[1..].to_vec(), winner });
        current = winner;
    }
    Ok(out)
}

/// Monte-Carlo settings for [`expected_search_cost`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Trials {
    pub trials: u64,
    pub seed: u64,
    pub cap: u64,
    /// Proposals per query; 1 is plain comparison search.
    pub width: usize,
}

impl Trials {
    pub fn new(trials: u64, seed: u64, cap: u64) -> Self {
        Trials { trials, seed, cap, width: 1 }
    }

    pub fn with_width(self, width: usize) -> Self {
        Trials { width, ..self }
    }
}

/// Aggregated cost over non-trivial, accepted trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub trials: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Mean over every accepted trial, counting `s = t` pairs at cost 0.
    pub mean_with_trivial: f64,
    pub stderr_with_trivial: f64,
    /// Included in the mean at the cap value.
    pub cap_exceeded: u64,
    /// Targets the policy can never propose; excluded from the mean.
    pub rejected: u64,
    /// `s = t` pairs; excluded from the mean.
    pub trivial: u64,
    pub phase_means: BTreeMap<u32, f64>,
}

pub(crate) struct TrialResult {
    pub(crate) cost: u64,
    pub(crate) termination: Termination,
    pub(crate) trivial: bool,
    pub(crate) phases: BTreeMap<u32, u64>,
}

impl CostEstimate {
    pub(crate) fn aggregate(results: Vec<TrialResult>) -> Self {
        let mut all = Welford::new();
        let mut main = Welford::new();
        let mut est = CostEstimate {
            trials: results.len() as u64,
            mean: 0.0,
            stderr: 0.0,
            mean_with_trivial: 0.0,
            stderr_with_trivial: 0.0,
            cap_exceeded: 0,
            rejected: 0,
            trivial: 0,
            phase_means: BTreeMap::new(),
        };
        let mut phase_sums: BTreeMap<u32, u64> = BTreeMap::new();
        for r in results {
            if r.termination == Termination::Rejected {
                est.rejected += 1;
                continue;
            }
            all.push(r.cost as f64);
            if r.trivial {
                est.trivial += 1;
                continue;
            }
            if r.termination == Termination::CapExceeded {
                est.cap_exceeded += 1;
            }
            main.push(r.cost as f64);
            for (j, x) in r.phases {
                *phase_sums.entry(j).or_default() += x;
            }
        }
        est.mean = main.mean();
        est.stderr = main.stderr();
        est.mean_with_trivial = all.mean();
        est.stderr_with_trivial = all.stderr();
        let counted = main.count().max(1) as f64;
        est.phase_means = phase_sums.into_iter().map(|(j, x)| (j, x as f64 / counted)).collect();
        est
    }
}

/// Runs one simulated search from `s` to `t`, rejecting targets the policy
/// cannot reach.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    policy: &dyn SelectionPolicy,
    space: &MetricSpace,
    oracle: &OracleConfig,
    s: ObjectId,
    t: ObjectId,
    trials: &Trials,
    rng: &mut dyn RngCore,
    ranks: Option<&RankTable>,
) -> Result<SearchOutcome<Batch>> {
    space.check(s)?;
    let mut sim = SimulatedOracle::new(oracle, space, t)?;
    if s != t && !policy.can_propose(t) {
        return Ok(SearchOutcome::empty(Termination::Rejected));
    }
    let phase = |x: ObjectId| ranks.and_then(|r| r.phase(t, x));
    let meter: Option<PhaseMeter> = ranks.map(|_| &phase as PhaseMeter);
    if trials.width <= 1 {
        let out = greedy_content_search(policy, &mut sim, s, trials.cap, rng, meter)?;
        Ok(SearchOutcome {
            cost: out.cost,
            history: out
                .history
                .into_iter()
                .map(|st| Batch { current: st.current, proposals: vec![st.proposed], winner: st.winner })
                .collect(),
            phase_counts: out.phase_counts,
            termination: out.termination,
        })
    } else {
        proximity_search(policy, &mut sim, trials.width, s, trials.cap, rng, meter)
    }
}

/// Estimates `E[C]` over `(s,t) ~ λ`. Trial `i` draws its pair, proposals and
/// tie-breaks from sub-streams `demand/i`, `policy/i` and `oracle/i` of the
/// master seed, so results do not depend on thread scheduling.
pub fn expected_search_cost(
    policy: &dyn SelectionPolicy,
    space: &MetricSpace,
    oracle: &OracleConfig,
    demand: &Demand,
    trials: &Trials,
    ranks: Option<&RankTable>,
) -> Result<CostEstimate> {
    if trials.trials == 0 {
        return Err(domain("at least one trial is required"));
    }
    oracle.validate()?;
    let seeds = SeedStream::new(trials.seed);
    let sampler = demand.sampler();
    let results = (0..trials.trials)
        .into_par_iter()
        .map(|i| {
            let (s, t) = sampler.sample(&mut seeds.rng("demand", i));
            let cfg = oracle.with_seed(seeds.seed("oracle", i));
            let out = simulate(policy, space, &cfg, s, t, trials, &mut seeds.rng("policy", i), ranks)?;
            Ok(TrialResult { cost: out.cost, termination: out.termination, trivial: s == t, phases: out.phase_counts })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostEstimate::aggregate(results))
}
