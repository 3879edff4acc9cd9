//! Instance generators: lines, random point clouds with Zipf demand, and the
//! hierarchical lower-bound space.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{Demand, Distribution};
use crate::error::{domain, Error, Result};
use crate::metric::{doubling_constant, MetricSpace, Norm, ObjectId};
use crate::oracle::OracleConfig;
use crate::policy::RankPolicy;
use crate::search::{default_cap, expected_search_cost, CostEstimate, Trials};
use crate::seed::SeedStream;

/// Largest instance the generators build unless the caller raises the guard.
pub const SIZE_GUARD: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchicalSpec {
    pub branching: usize,
    pub depth: usize,
}

impl HierarchicalSpec {
    pub fn new(branching: usize, depth: usize) -> Self {
        HierarchicalSpec { branching, depth }
    }

    pub fn size(&self) -> u128 {
        (self.branching as u128).checked_pow(self.depth as u32).unwrap_or(u128::MAX)
    }

    /// `K(D−1)/2`, the lower bound on expected cost for any policy.
    pub fn cost_lower_bound(&self) -> f64 {
        self.depth as f64 * (self.branching as f64 - 1.0) / 2.0
    }
}

/// `{1..D}^K` with the hierarchical ultrametric and uniform `μ`.
pub fn build_hierarchical_space(spec: &HierarchicalSpec, guard: usize) -> Result<(MetricSpace, Distribution)> {
    if spec.branching < 2 || spec.depth < 1 {
        return Err(domain("hierarchical instance needs D >= 2 and K >= 1"));
    }
    if spec.size() > guard as u128 {
        return Err(Error::SizeGuard { requested: spec.size(), limit: guard });
    }
    let space = MetricSpace::hierarchical(spec.branching, spec.depth)?;
    let mu = Distribution::uniform(space.ids())?;
    Ok((space, mu))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub spec: HierarchicalSpec,
    pub doubling_constant: f64,
    pub entropy: f64,
    pub expected_entropy: f64,
    /// `K(D−1)/2`.
    pub cost_bound: f64,
    /// `H(c−1)/(2 log2 c)` evaluated with the computed `c` and `H`.
    pub entropy_bound: f64,
    pub estimate: CostEstimate,
    pub doubling_matches: bool,
    pub entropy_matches: bool,
    /// Mean (counting `s = t` at zero) is at least the bound minus three standard errors.
    pub bound_respected: bool,
}

/// Exact structural checks plus a Monte-Carlo cost estimate of the
/// rank-proportional policy under uniform demand.
pub fn verify_lower_bound_instance(spec: &HierarchicalSpec, trials: u64, seed: u64) -> Result<LowerBoundReport> {
    let (space, mu) = build_hierarchical_space(spec, SIZE_GUARD)?;
    let space = Arc::new(space);
    let c = doubling_constant(&mu, &space)?;
    let h = mu.entropy();
    let expected_entropy = spec.depth as f64 * (spec.branching as f64).log2();
    let policy = RankPolicy::new(space.clone(), mu.clone())?;
    let demand = Demand::product(mu.clone(), mu.clone());
    let cap = default_cap(space.len(), &mu);
    let estimate = expected_search_cost(&policy, &space, &OracleConfig::default(), &demand, &Trials::new(trials, seed, cap), None)?;
    let cost_bound = spec.cost_lower_bound();
    let entropy_bound = if c > 1.0 { h * (c - 1.0) / (2.0 * c.log2()) } else { 0.0 };
    Ok(LowerBoundReport {
        spec: *spec,
        doubling_constant: c,
        entropy: h,
        expected_entropy,
        cost_bound,
        entropy_bound,
        doubling_matches: c == spec.branching as f64,
        entropy_matches: (h - expected_entropy).abs() <= 1e-9,
        bound_respected: estimate.mean_with_trivial >= cost_bound - 3.0 * estimate.stderr_with_trivial,
        estimate,
    })
}

/// Points on a line with uniform demand.
pub fn line(coords: &[f64]) -> Result<(MetricSpace, Demand)> {
    let space = MetricSpace::from_points(coords.iter().map(|&c| vec![c]).collect(), Norm::Manhattan)?;
    let demand = Demand::uniform(space.len())?;
    Ok((space, demand))
}

/// Zipf weights `1/k^s` for `k = 1..=n`.
pub fn zipf_weights(n: usize, skew: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-skew)).collect()
}

/// `n` points uniform in the unit cube (Euclidean), a target marginal that is
/// Zipf with exponent `skew` over a random ranking of the objects, and a
/// uniform, independent source. Every ordered pair has positive demand.
pub fn random_instance(n: usize, dims: usize, skew: f64, seed: u64) -> Result<(MetricSpace, Demand)> {
    if n < 2 || dims < 1 {
        return Err(domain("random instances need n >= 2 and at least one dimension"));
    }
    if n > SIZE_GUARD {
        return Err(Error::SizeGuard { requested: n as u128, limit: SIZE_GUARD });
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(domain(format!("Zipf exponent must be a non-negative real, got {skew}")));
    }
    let seeds = SeedStream::new(seed);
    let mut rng = seeds.rng("instance", 0);
    let points = (0..n).map(|_| (0..dims).map(|_| rng.random::<f64>()).collect()).collect();
    let space = MetricSpace::from_points(points, Norm::Euclidean)?;
    let mut order: Vec<ObjectId> = space.ids().collect();
    order.shuffle(&mut seeds.rng("instance", 1));
    let mu = Distribution::from_weights(order.into_iter().zip(zipf_weights(n, skew)))?;
    let nu = Distribution::uniform(space.ids())?;
    Ok((space, Demand::product(nu, mu)))
}

/// Families of symmetric dissimilarities that break the triangle inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Dissimilarity {
    /// Independent uniform entries in `[0.01, 1)`.
    Random,
    /// Euclidean distances in the unit square, each scaled by a uniform factor in `[1, 1 + stretch)`.
    Distorted { stretch: f64 },
    /// Squared Euclidean distances in the unit square.
    SquaredEuclidean,
}

/// A non-metric instance of `n` objects with uniform demand over all pairs.
#[allow(clippy::needless_range_loop)]
pub fn dissimilarity_instance(family: Dissimilarity, n: usize, seed: u64) -> Result<(MetricSpace, Demand)> {
    if n < 2 {
        return Err(domain("dissimilarity instances need n >= 2"));
    }
    if n > 4096 {
        return Err(Error::SizeGuard { requested: n as u128, limit: 4096 });
    }
    let mut rng = SeedStream::new(seed).rng("instance", 0);
    let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    let sq = |i: usize, j: usize| (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = match family {
                Dissimilarity::Random => rng.random_range(0.01..1.0),
                Dissimilarity::Distorted { stretch } if stretch >= 0.0 => sq(i, j).sqrt() * (1.0 + stretch * rng.random::<f64>()),
                Dissimilarity::Distorted { stretch } => return Err(domain(format!("stretch must be non-negative, got {stretch}"))),
                Dissimilarity::SquaredEuclidean => sq(i, j),
            };
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    let space = MetricSpace::from_matrix(rows)?;
    Ok((space, Demand::uniform(n)?))
}
