//! The experiment subcommands. Each builds its instance from the config,
//! computes the bound from the instance, and returns one record.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use cmpsearch::instances::{self, HierarchicalSpec};
use cmpsearch::learning::{order_accuracy, run_adaptive, AdaptiveConfig, StateSnapshot};
use cmpsearch::policy::{disorder_constant, normalizer};
use cmpsearch::search::{default_cap, expected_search_cost};
use cmpsearch::smallworld::{expected_forwarding_cost, validate_local_edges, ShortcutMode};
use cmpsearch::{
    ball_mass, doubling_constant, Distribution, LearnedState, MetricSpace, NonMetricPolicy, OracleConfig, PolicyKind,
    RankPolicy, RankTable, SeedStream, SelectionPolicy, Trials, UniformPolicy,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Instance, InstanceSpec};
use crate::record::{AdaptiveSummary, BoundCheck, BoundKind, Check, Quantities, ResultRecord};

/// Rank tables above this size are not built; phase means are then omitted.
const RANK_TABLE_LIMIT: usize = 2048;
/// Order accuracy is only measured up to this many objects.
const ACCURACY_LIMIT: usize = 512;
/// Largest instance the brute-force doubling cross-check runs on.
const CROSS_CHECK_LIMIT: usize = 512;

/// `6c³·H·H_max`.
pub fn rank_policy_bound(c: f64, entropy: f64, max_entropy: f64) -> f64 {
    6.0 * c.powi(3) * entropy * max_entropy
}

/// `7·D·log2²|T|`.
pub fn nonmetric_bound(disorder: f64, targets: usize) -> f64 {
    let l = (targets as f64).log2();
    7.0 * disorder * l * l
}

fn quantities(inst: &Instance, mu: &Distribution, doubling: bool, disorder: bool) -> Result<Quantities> {
    let targets = mu.support().len();
    Ok(Quantities {
        doubling_constant: if doubling { Some(doubling_constant(mu, &inst.space)?) } else { None },
        entropy: mu.entropy(),
        max_entropy: mu.max_entropy(),
        disorder_constant: if disorder && targets >= 2 { Some(disorder_constant(&inst.space, &mu.ids().collect::<Vec<_>>())?) } else { None },
        targets,
    })
}

fn oracle(cfg: &ExperimentConfig) -> OracleConfig {
    OracleConfig::new(cfg.tie_policy, 0)
}

/// Monte-Carlo search cost under the configured policy.
pub fn search(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let inst = cfg.instance.build(cfg.seed)?;
    let n = inst.space.len();
    let mu = inst.demand.target_distribution();
    let nonmetric = cfg.policy == PolicyKind::NonmetricRank;
    let q = quantities(&inst, &mu, !nonmetric, nonmetric)?;
    let cap = cfg.cap.unwrap_or_else(|| default_cap(n, &mu));
    let trials = Trials::new(cfg.trials, cfg.seed, cap).with_width(cfg.width);
    let table = if n <= RANK_TABLE_LIMIT { Some(RankTable::new(inst.space.clone(), mu.clone())?) } else { None };
    let learned;
    let policy: Box<dyn SelectionPolicy + '_> = match cfg.policy {
        PolicyKind::ExactRank => Box::new(RankPolicy::new(inst.space.clone(), mu.clone())?),
        PolicyKind::Uniform => Box::new(UniformPolicy::new(n)),
        PolicyKind::NonmetricRank => Box::new(NonMetricPolicy::new(inst.space.clone(), mu.ids())?),
        PolicyKind::Learned => {
            learned = LearnedState::new(n, cfg.counter)?;
            Box::new(learned.policy(cfg.epsilon)?)
        }
    };
    let estimate = expected_search_cost(policy.as_ref(), &inst.space, &oracle(cfg), &inst.demand, &trials, table.as_ref())?;
    let bound = match cfg.policy {
        PolicyKind::ExactRank => {
            let value = rank_policy_bound(q.doubling_constant.expect("computed"), q.entropy, q.max_entropy);
            let kind = if cfg.width == 1 { BoundKind::RankPolicy } else { BoundKind::Proximity };
            Some(BoundCheck::upper(kind, value / cfg.width as f64, estimate.mean))
        }
        PolicyKind::NonmetricRank if cfg.width == 1 => {
            q.disorder_constant.map(|d| BoundCheck::upper(BoundKind::Nonmetric, nonmetric_bound(d, q.targets), estimate.mean))
        }
        _ => None,
    };
    let mut record = ResultRecord::new("search", Some(cfg.clone()), n, q);
    if let (Some(spec), PolicyKind::ExactRank, 1) = (inst.hierarchical, cfg.policy, cfg.width) {
        record.lower_bound = Some(instances::verify_lower_bound_instance(&spec, cfg.trials, cfg.seed)?);
    }
    record.estimate = Some(estimate);
    record.bound = bound;
    Ok(record)
}

/// Greedy forwarding on a lattice with rank-proportional shortcuts.
pub fn forward(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let inst = cfg.instance.build(cfg.seed)?;
    let Some(local) = &inst.local else { bail!("forwarding needs a grid instance") };
    let n = inst.space.len();
    let mu = inst.demand.target_distribution();
    let q = quantities(&inst, &mu, true, false)?;
    let cap = cfg.cap.unwrap_or_else(|| default_cap(n, &mu));
    let policy = RankPolicy::new(inst.space.clone(), mu)?;
    let est = expected_forwarding_cost(&policy, local, &oracle(cfg), &inst.demand, cfg.trials, cfg.seed, cfg.shortcuts, cap)?;
    let mut record = ResultRecord::new("forward", Some(cfg.clone()), n, q);
    if cfg.shortcuts != ShortcutMode::Disabled {
        let q = &record.quantities;
        let value = rank_policy_bound(q.doubling_constant.expect("computed"), q.entropy, q.max_entropy);
        record.bound = Some(BoundCheck::upper(BoundKind::Forwarding, value, est.cost.mean));
    }
    record.checks.push(Check {
        name: "within_distance".into(),
        passed: est.cost.mean <= est.mean_distance + 1e-9,
        detail: format!("mean hops {:.4}, mean distance {:.4}", est.cost.mean, est.mean_distance),
    });
    record.mean_distance = Some(est.mean_distance);
    record.estimate = Some(est.cost);
    Ok(record)
}

/// Files read and written around an adaptive run.
#[derive(Clone, Debug, Default)]
pub struct LearnFiles {
    pub state_in: Option<PathBuf>,
    pub state_out: Option<PathBuf>,
    /// CSV of `timeslot,cost`.
    pub trace: Option<PathBuf>,
}

/// Adaptive run of the learned policy over `timeslots` searches.
pub fn learn(cfg: &ExperimentConfig, files: &LearnFiles) -> Result<ResultRecord> {
    cfg.validate()?;
    let inst = cfg.instance.build(cfg.seed)?;
    let n = inst.space.len();
    let mu = inst.demand.target_distribution();
    let q = quantities(&inst, &mu, true, false)?;
    let mut state = match &files.state_in {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let snap: StateSnapshot = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            LearnedState::restore(&snap)?
        }
        None => LearnedState::new(n, cfg.counter)?,
    };
    let adaptive = AdaptiveConfig { oracle: oracle(cfg), counter: cfg.counter, cap: cfg.cap, ..AdaptiveConfig::new(cfg.epsilon, cfg.timeslots, cfg.seed) };
    let trace = run_adaptive(&inst.space, &inst.demand, &adaptive, &mut state)?;
    if let Some(path) = &files.trace {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(out, "timeslot,cost")?;
        for (i, c) in trace.costs.iter().enumerate() {
            writeln!(out, "{},{c}", trace.start + i as u64)?;
        }
        out.flush()?;
    }
    if let Some(path) = &files.state_out {
        std::fs::write(path, serde_json::to_vec(&state.snapshot())?).with_context(|| format!("writing {}", path.display()))?;
    }
    let min_order_accuracy = (n <= ACCURACY_LIMIT).then(|| {
        inst.space
            .ids()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&x| match order_accuracy(&inst.space, state.store(x)) {
                (_, 0) => 1.0,
                (ok, total) => ok as f64 / total as f64,
            })
            .reduce(|| 1.0, f64::min)
    });
    let window = (trace.costs.len() / 10).max(1);
    let summary = AdaptiveSummary {
        start: trace.start,
        timeslots: trace.costs.len() as u64,
        trailing_mean: trace.trailing_mean(0.1),
        window_means: trace.window_means(window),
        cap_exceeded: trace.cap_exceeded,
        min_order_accuracy,
    };
    let mut record = ResultRecord::new("learn", Some(cfg.clone()), n, q);
    if cfg.epsilon < 1.0 {
        let q = &record.quantities;
        let value = rank_policy_bound(q.doubling_constant.expect("computed"), q.entropy, q.max_entropy) / (1.0 - cfg.epsilon);
        record.bound = Some(BoundCheck::upper(BoundKind::Learned, value, summary.trailing_mean));
    }
    record.adaptive = Some(summary);
    Ok(record)
}

/// Exact structural checks on one instance.
pub fn verify(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let inst = cfg.instance.build(cfg.seed)?;
    let n = inst.space.len();
    let mu = inst.demand.target_distribution();
    let nonmetric = matches!(cfg.instance, InstanceSpec::Dissimilarity { .. });
    let q = quantities(&inst, &mu, !nonmetric, nonmetric)?;
    let mut checks = Vec::new();
    if !nonmetric {
        let (name, result) = match inst.hierarchical {
            Some(_) => ("ultrametric", inst.space.validate_ultrametric()),
            None => ("metric", inst.space.validate_metric()),
        };
        checks.push(Check { name: name.into(), passed: result.is_ok(), detail: result.err().map(|v| format!("{v:?}")).unwrap_or_default() });
    }
    if let Some(local) = &inst.local {
        let result = validate_local_edges(&inst.space, local);
        checks.push(Check {
            name: "local_edges".into(),
            passed: result.is_ok(),
            detail: result.err().map(|(x, t)| format!("no local progress from {} toward {}", x.0, t.0)).unwrap_or_default(),
        });
    }
    if !nonmetric {
        checks.push(normalizer_check(&inst.space, &mu)?);
        if let Some(c) = q.doubling_constant {
            checks.push(if n <= CROSS_CHECK_LIMIT {
                let naive = naive_doubling(&inst.space, &mu)?;
                Check {
                    name: "doubling_cross_check".into(),
                    passed: (naive - c).abs() <= 1e-9 * c,
                    detail: format!("critical radii {c}, naive {naive}"),
                }
            } else {
                Check { name: "doubling_cross_check".into(), passed: true, detail: format!("skipped above {CROSS_CHECK_LIMIT} objects") }
            });
        }
    }
    let mut record = ResultRecord::new("verify", Some(cfg.clone()), n, q);
    record.checks = checks;
    Ok(record)
}

/// `Z_x ≤ 1 + ln(1/μ(x*)) ≤ 3·H_max` for every `x`, where `x*` is the heaviest
/// of the targets nearest to `x`.
pub fn normalizer_check(space: &MetricSpace, mu: &Distribution) -> Result<Check> {
    let h_max = mu.max_entropy();
    let worst = space
        .ids()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&x| -> cmpsearch::Result<Option<String>> {
            if mu.support().len() == 1 && mu.contains(x) {
                return Ok(None);
            }
            let z = normalizer(mu, space, x)?;
            let near = mu.ids().map(|y| space.dist(x, y)).fold(f64::INFINITY, f64::min);
            let heaviest = mu.support().iter().filter(|p| space.dist(x, p.0) == near).map(|p| p.1).fold(0.0, f64::max);
            let middle = 1.0 + (1.0 / heaviest).ln();
            Ok((z > middle + 1e-9 || middle > 3.0 * h_max + 1e-9)
                .then(|| format!("x = {}: Z = {z}, 1 + ln(1/mu(x*)) = {middle}, 3 H_max = {}", x.0, 3.0 * h_max)))
        })
        .collect::<cmpsearch::Result<Vec<_>>>()?;
    let failure = worst.into_iter().flatten().next();
    Ok(Check { name: "normalizer_bound".into(), passed: failure.is_none(), detail: failure.unwrap_or_default() })
}

/// Doubling constant by direct summation at every radius `d(x,y)` and `d(x,y)/2`.
fn naive_doubling(space: &MetricSpace, mu: &Distribution) -> Result<f64> {
    let mut worst = 1.0f64;
    for &(x, _) in mu.support() {
        for y in space.ids() {
            let d = space.dist(x, y);
            for r in [d, d / 2.0] {
                worst = worst.max(ball_mass(mu, space, x, 2.0 * r)? / ball_mass(mu, space, x, r)?);
            }
        }
    }
    Ok(worst)
}

/// Normalizer bound over `count` random instances with `n ≤ 256` and Zipf
/// skew in `[0, 1.5]`.
pub fn verify_sweep(count: u64, seed: u64) -> Result<ResultRecord> {
    use rand::Rng;
    let seeds = SeedStream::new(seed);
    let failures: Vec<Check> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Option<Check>> {
            let mut rng = seeds.rng("sweep", i);
            let n = rng.random_range(2..=256);
            let dims = rng.random_range(1..=3);
            let skew = rng.random_range(0.0..=1.5);
            let (space, demand) = instances::random_instance(n, dims, skew, seeds.seed("sweep-instance", i))?;
            let check = normalizer_check(&space, &demand.target_distribution())?;
            Ok((!check.passed).then(|| Check { name: format!("instance {i} (n={n}, dims={dims}, skew={skew:.3})"), ..check }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut record = ResultRecord::new("verify", None, 0, Quantities::default());
    record.checks = vec![Check {
        name: "normalizer_sweep".into(),
        passed: failures.is_empty(),
        detail: format!("{count} instances, {} failed", failures.len()),
    }];
    record.checks.extend(failures);
    Ok(record)
}

/// Structural checks and the search-cost lower bound on a hierarchical instance.
pub fn lowerbound(branching: usize, depth: usize, trials: u64, seed: u64) -> Result<ResultRecord> {
    ensure!(trials >= 1, "trials must be at least 1");
    let spec = HierarchicalSpec::new(branching, depth);
    let report = instances::verify_lower_bound_instance(&spec, trials, seed)?;
    let q = Quantities {
        doubling_constant: Some(report.doubling_constant),
        entropy: report.entropy,
        max_entropy: report.entropy,
        disorder_constant: None,
        targets: (branching as f64).powi(depth as i32) as usize,
    };
    let mut record = ResultRecord::new("lowerbound", None, q.targets, q);
    record.bound = Some(BoundCheck {
        kind: BoundKind::HierarchicalLower,
        value: report.cost_bound,
        observed: report.estimate.mean_with_trivial,
        satisfied: report.bound_respected,
    });
    record.lower_bound = Some(report);
    Ok(record)
}
