//! Navigable graphs: local edges with guaranteed progress plus one random
//! shortcut per node, and greedy forwarding over them.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Demand;
use crate::error::{domain, Error, Result};
use crate::metric::{MetricSpace, Norm, ObjectId};
use crate::oracle::{Oracle, OracleConfig, SimulatedOracle};
use crate::policy::{RankPolicy, SelectionPolicy};
use crate::search::{CostEstimate, SearchOutcome, Termination, TrialResult};
use crate::seed::{SeedStream, SimRng};
use crate::stats::Welford;

const EXHAUSTIVE_LIMIT: usize = 4096;
const SAMPLED_PAIRS: usize = 1 << 20;

/// Rectangular lattice with Manhattan distance. Ids enumerate points with the
/// first coordinate varying fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sides: Vec<usize>,
    #[serde(default = "default_radius")]
    pub radius: u32,
}

fn default_radius() -> u32 {
    1
}

impl GridSpec {
    pub fn new(sides: Vec<usize>) -> Self {
        GridSpec { sides, radius: 1 }
    }

    pub fn square(side: usize, dims: usize) -> Self {
        GridSpec::new(vec![side; dims])
    }

    pub fn with_radius(self, radius: u32) -> Self {
        GridSpec { radius, ..self }
    }

    pub fn len(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sides.is_empty() || self.sides.iter().any(|&s| s < 2) {
            return Err(domain(format!("grid sides must all be at least 2, got {:?}", self.sides)));
        }
        if self.radius < 1 {
            return Err(domain("locality radius must be at least 1"));
        }
        Ok(())
    }

    pub fn coordinates(&self, id: usize) -> Vec<i64> {
        let mut rest = id;
        self.sides
            .iter()
            .map(|&s| {
                let c = rest % s;
                rest /= s;
                c as i64
            })
            .collect()
    }

    pub fn id_of(&self, coords: &[i64]) -> Option<ObjectId> {
        let mut id = 0usize;
        let mut stride = 1usize;
        for (&c, &s) in coords.iter().zip(&self.sides) {
            if c < 0 || c as usize >= s {
                return None;
            }
            id += c as usize * stride;
            stride *= s;
        }
        Some(ObjectId::new(id))
    }
}

/// Lattice space and its local edges (all pairs within the locality radius).
pub fn grid_space(spec: &GridSpec) -> Result<(MetricSpace, Vec<Vec<ObjectId>>)> {
    spec.validate()?;
    let n = spec.len();
    let points: Vec<Vec<f64>> =
        (0..n).map(|i| spec.coordinates(i).into_iter().map(|c| c as f64).collect()).collect();
    let space = MetricSpace::from_points(points, Norm::Manhattan)?;
    let offsets = lattice_ball(spec.sides.len(), spec.radius as i64);
    let local = (0..n)
        .map(|i| {
            let base = spec.coordinates(i);
            let mut adj: Vec<ObjectId> = offsets
                .iter()
                .filter_map(|o| spec.id_of(&base.iter().zip(o).map(|(b, d)| b + d).collect::<Vec<_>>()))
                .collect();
            adj.sort();
            adj
        })
        .collect();
    Ok((space, local))
}

/// Non-zero integer offsets with L1 norm at most `r`.
fn lattice_ball(dims: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                let used: i64 = prefix.iter().map(|c| c.abs()).sum();
                (-(r - used)..=(r - used)).map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out.retain(|o| o.iter().any(|&c| c != 0));
    out
}

/// Local edges joining every pair at distance at most `r`, for arbitrary spaces.
pub fn local_edges_within(space: &MetricSpace, r: f64) -> Vec<Vec<ObjectId>> {
    space
        .ids()
        .map(|x| space.ids().filter(|&y| y != x && space.within(x, y, r)).collect())
        .collect()
}

/// Checks that from every `x` some neighbour is strictly closer to every
/// other `t`. Returns the first violating `(x, t)`.
pub fn validate_local_edges(space: &MetricSpace, local: &[Vec<ObjectId>]) -> std::result::Result<(), (ObjectId, ObjectId)> {
    use std::cmp::Ordering::Less;
    let n = space.len();
    let progress = |x: ObjectId, t: ObjectId| {
        x == t || local[x.index()].iter().any(|&u| space.cmp_to(t, u, x) == Less)
    };
    let violation = if n <= EXHAUSTIVE_LIMIT {
        (0..n * n).into_par_iter().find_first(|&k| {
            let (x, t) = (ObjectId::new(k / n), ObjectId::new(k % n));
            !progress(x, t)
        })
        .map(|k| (ObjectId::new(k / n), ObjectId::new(k % n)))
    } else {
        let mut rng = SimRng::seed_from_u64(0x10ca1);
        (0..SAMPLED_PAIRS)
            .map(|_| (ObjectId::new(rng.random_range(0..n)), ObjectId::new(rng.random_range(0..n))))
            .find(|&(x, t)| !progress(x, t))
    };
    violation.map_or(Ok(()), Err)
}

/// One sampled shortcut per node from the rank-proportional distribution;
/// nodes with no candidate get none.
pub fn sample_shortcuts(policy: &RankPolicy, rng: &mut dyn RngCore) -> Result<Vec<Option<ObjectId>>> {
    policy.space().ids().map(|x| draw_shortcut(policy, x, rng)).collect()
}

fn draw_shortcut(policy: &RankPolicy, x: ObjectId, rng: &mut dyn RngCore) -> Result<Option<ObjectId>> {
    match policy.propose(x, rng) {
        Ok(y) => Ok(Some(y)),
        Err(Error::NoCandidates(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct NavGraph {
    space: std::sync::Arc<MetricSpace>,
    local: Vec<Vec<ObjectId>>,
    shortcuts: Vec<Option<ObjectId>>,
}

impl NavGraph {
    pub fn new(
        space: std::sync::Arc<MetricSpace>,
        local: Vec<Vec<ObjectId>>,
        shortcuts: Vec<Option<ObjectId>>,
    ) -> Result<Self> {
        if local.len() != space.len() || shortcuts.len() != space.len() {
            return Err(domain("edge lists must have one entry per object"));
        }
        for &y in local.iter().flatten().chain(shortcuts.iter().flatten()) {
            space.check(y)?;
        }
        Ok(NavGraph { space, local, shortcuts })
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn local(&self, x: ObjectId) -> &[ObjectId] {
        &self.local[x.index()]
    }

    pub fn shortcut(&self, x: ObjectId) -> Option<ObjectId> {
        self.shortcuts[x.index()]
    }

    /// Whether no shortcut duplicates a local edge or loops back to its node.
    pub fn is_disjoint(&self) -> bool {
        self.space.ids().all(|x| match self.shortcut(x) {
            Some(y) => y != x && self.local(x).binary_search(&y).is_err(),
            None => true,
        })
    }

    /// One line per node: `node <id> local <a,b,...> shortcut <id|->`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for x in self.space.ids() {
            let local: Vec<String> = self.local(x).iter().map(|y| y.0.to_string()).collect();
            let short = self.shortcut(x).map_or("-".to_string(), |y| y.0.to_string());
            writeln!(out, "node {} local {} shortcut {}", x.0, local.join(","), short).unwrap();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Hop {
    pub from: ObjectId,
    pub to: ObjectId,
}

/// Forwards from `source` to whichever neighbour the oracle deems closest,
/// running a pairwise tournament over local neighbours (ascending id) and
/// then the shortcut. `shortcut_of` is consulted at most once per visited node.
pub fn forward_with(
    local: &[Vec<ObjectId>],
    mut shortcut_of: impl FnMut(ObjectId) -> Result<Option<ObjectId>>,
    oracle: &mut dyn Oracle,
    source: ObjectId,
    cap: u64,
) -> Result<SearchOutcome<Hop>> {
    let mut out = SearchOutcome { cost: 0, history: Vec::new(), phase_counts: Default::default(), termination: Termination::CapExceeded };
    let mut current = source;
    while !oracle.is_target(current) {
        if out.cost >= cap {
            return Ok(out);
        }
        let mut candidates = local[current.index()].clone();
        if let Some(y) = shortcut_of(current)? {
            if y != current && !candidates.contains(&y) {
                candidates.push(y);
            }
        }
        let next = oracle.closest(&candidates).map_err(|_| Error::NoCandidates(current))?;
        out.history.push(Hop { from: current, to: next });
        out.cost += 1;
        current = next;
    }
    out.termination = Termination::Found;
    Ok(out)
}

pub fn greedy_forward(graph: &NavGraph, oracle: &mut dyn Oracle, source: ObjectId, cap: u64) -> Result<SearchOutcome<Hop>> {
    graph.space.check(source)?;
    forward_with(&graph.local, |x| Ok(graph.shortcut(x)), oracle, source, cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutMode {
    /// Fresh shortcuts for every trial.
    #[default]
    Resample,
    /// One shortcut set shared by all trials.
    Frozen,
    /// Local edges only.
    Disabled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardingEstimate {
    #[serde(flatten)]
    pub cost: CostEstimate,
    /// Mean `d(s,t)` over the same non-trivial pairs.
    pub mean_distance: f64,
}

/// Estimates mean hop count over `(s,t) ~ λ`. In resample mode each trial's
/// shortcuts are drawn lazily from sub-stream `shortcuts/i`; since forwarding
/// never revisits a node this matches drawing the whole edge set up front.
#[allow(clippy::too_many_arguments)]
pub fn expected_forwarding_cost(
    policy: &RankPolicy,
    local: &[Vec<ObjectId>],
    oracle: &OracleConfig,
    demand: &Demand,
    trials: u64,
    seed: u64,
    mode: ShortcutMode,
    cap: u64,
) -> Result<ForwardingEstimate> {
    if trials == 0 {
        return Err(domain("at least one trial is required"));
    }
    oracle.validate()?;
    let space = policy.space().as_ref();
    if local.len() != space.len() {
        return Err(domain("local edge list does not match the space"));
    }
    let seeds = SeedStream::new(seed);
    let frozen = match mode {
        ShortcutMode::Frozen => Some(sample_shortcuts(policy, &mut seeds.rng("shortcuts", 0))?),
        ShortcutMode::Resample | ShortcutMode::Disabled => None,
    };
    let sampler = demand.sampler();
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (s, t) = sampler.sample(&mut seeds.rng("demand", i));
            space.check(s)?;
            let mut sim = SimulatedOracle::new(&oracle.with_seed(seeds.seed("oracle", i)), space, t)?;
            let out = match &frozen {
                Some(edges) => forward_with(local, |x| Ok(edges[x.index()]), &mut sim, s, cap)?,
                None if mode == ShortcutMode::Disabled => forward_with(local, |_| Ok(None), &mut sim, s, cap)?,
                None => {
                    let mut rng = seeds.rng("shortcuts", i);
                    forward_with(local, |x| draw_shortcut(policy, x, &mut rng), &mut sim, s, cap)?
                }
            };
            Ok((
                TrialResult { cost: out.cost, termination: out.termination, trivial: s == t, phases: Default::default() },
                space.dist(s, t),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let distance: Welford = results.iter().filter(|(r, _)| !r.trivial).map(|(_, d)| *d).collect();
    Ok(ForwardingEstimate {
        cost: CostEstimate::aggregate(results.into_iter().map(|(r, _)| r).collect()),
        mean_distance: distance.mean(),
    })
}
