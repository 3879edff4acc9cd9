//! Result records: one JSON object per run, plus a short human summary.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use cmpsearch::instances::LowerBoundReport;
use cmpsearch::CostEstimate;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Instance quantities the bounds are built from.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Quantities {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubling_constant: Option<f64>,
    /// Entropy of the target marginal, in bits.
    pub entropy: f64,
    pub max_entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disorder_constant: Option<f64>,
    pub targets: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `6c³·H·H_max` for the rank-proportional policy.
    RankPolicy,
    /// `6c³·H·H_max / p` with `p` proposals per query.
    Proximity,
    /// `6c³·H·H_max` hops for greedy forwarding with one shortcut per node.
    Forwarding,
    /// `7·D·log2²|T|` without a metric.
    Nonmetric,
    /// Trailing mean of the learned policy against `6c³·H·H_max / (1−ε)`.
    Learned,
    /// `K(D−1)/2` from below on the hierarchical instance.
    HierarchicalLower,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub kind: BoundKind,
    pub value: f64,
    pub observed: f64,
    pub satisfied: bool,
}

impl BoundCheck {
    pub fn upper(kind: BoundKind, value: f64, observed: f64) -> Self {
        BoundCheck { kind, value, observed, satisfied: observed <= value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveSummary {
    pub start: u64,
    pub timeslots: u64,
    /// Mean over the last 10% of timeslots.
    pub trailing_mean: f64,
    /// Mean of each tenth of the run.
    pub window_means: Vec<f64>,
    pub cap_exceeded: u64,
    /// Lowest fraction of strictly ordered pairs a single store gets right.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_order_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub n: usize,
    pub quantities: Quantities,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<CostEstimate>,
    /// Mean `d(s,t)` over non-trivial pairs, for forwarding runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ResultRecord {
    pub fn new(command: &str, config: Option<ExperimentConfig>, n: usize, quantities: Quantities) -> Self {
        ResultRecord {
            command: command.into(),
            config,
            n,
            quantities,
            estimate: None,
            mean_distance: None,
            adaptive: None,
            lower_bound: None,
            checks: Vec::new(),
            bound: None,
            wall_time_s: None,
        }
    }

    /// False when a bound or check failed.
    pub fn passed(&self) -> bool {
        self.bound.as_ref().is_none_or(|b| b.satisfied)
            && self.checks.iter().all(|c| c.passed)
            && self.lower_bound.as_ref().is_none_or(|l| l.bound_respected && l.doubling_matches && l.entropy_matches)
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Appends the record to `path`, or prints it to stdout.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        let line = self.to_json_line()?;
        match path {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .with_context(|| format!("opening {}", path.display()))?;
                writeln!(f, "{line}")?;
            }
            None => println!("{line}"),
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![("command".into(), self.command.clone()), ("n".into(), self.n.to_string())];
        let q = &self.quantities;
        if let Some(c) = q.doubling_constant {
            rows.push(("doubling constant".into(), fmt(c)));
        }
        rows.push(("entropy (bits)".into(), fmt(q.entropy)));
        rows.push(("max entropy (bits)".into(), fmt(q.max_entropy)));
        if let Some(d) = q.disorder_constant {
            rows.push(("disorder constant".into(), fmt(d)));
        }
        if let Some(e) = &self.estimate {
            rows.push(("mean cost".into(), format!("{} ± {}", fmt(e.mean), fmt(e.stderr))));
            rows.push(("trials".into(), e.trials.to_string()));
            if e.cap_exceeded > 0 {
                rows.push(("cap exceeded".into(), e.cap_exceeded.to_string()));
            }
        }
        if let Some(d) = self.mean_distance {
            rows.push(("mean distance".into(), fmt(d)));
        }
        if let Some(a) = &self.adaptive {
            rows.push(("trailing mean".into(), fmt(a.trailing_mean)));
            if let Some(acc) = a.min_order_accuracy {
                rows.push(("min order accuracy".into(), fmt(acc)));
            }
        }
        if let Some(l) = &self.lower_bound {
            rows.push(("lower bound K(D-1)/2".into(), fmt(l.cost_bound)));
            rows.push(("mean incl. s=t".into(), format!("{} ± {}", fmt(l.estimate.mean_with_trivial), fmt(l.estimate.stderr_with_trivial))));
        }
        for c in &self.checks {
            let mark = if c.passed { "ok" } else { "FAILED" };
            let detail = if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) };
            rows.push((format!("check {}", c.name), format!("{mark}{detail}")));
        }
        if let Some(b) = &self.bound {
            let verdict = if b.satisfied { "satisfied" } else { "VIOLATED" };
            rows.push((format!("bound {:?}", b.kind), format!("{} vs {} {verdict}", fmt(b.observed), fmt(b.value))));
        }
        if let Some(t) = self.wall_time_s {
            rows.push(("wall time (s)".into(), format!("{t:.3}")));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}
