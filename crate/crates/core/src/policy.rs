//! Memoryless selection policies: given the current object, a distribution
//! over the object to propose next.

use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, Sampler};
use crate::error::{domain, Error, Result};
use crate::metric::{BallProfile, MetricSpace, ObjectId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ExactRank,
    Learned,
    NonmetricRank,
    Uniform,
}

pub trait SelectionPolicy: Sync {
    fn kind(&self) -> PolicyKind;

    /// Draws the next proposal while the search sits at `current`.
    fn propose(&self, current: ObjectId, rng: &mut dyn RngCore) -> Result<ObjectId>;

    /// Full proposal distribution at `current`.
    fn distribution(&self, current: ObjectId) -> Result<Distribution>;

    /// Whether `object` can ever be proposed; searches for other targets are rejected.
    fn can_propose(&self, _object: ObjectId) -> bool {
        true
    }
}

/// Unnormalized shortcut weights `μ(y)/r_x(y)` for `y ∈ supp(μ) \ {x}`.
fn shortcut_weights(mu: &Distribution, space: &MetricSpace, x: ObjectId) -> Vec<(ObjectId, f64)> {
    let profile = BallProfile::new(mu, space, x);
    mu.support()
        .iter()
        .filter(|(y, _)| *y != x)
        .map(|&(y, p)| (y, p / profile.mass(space, space.dist(x, y))))
        .collect()
}

/// `ℓ_x(y) ∝ μ(y)/r_x(y)` over `supp(μ) \ {x}`. Used both to propose objects
/// in content search and to draw shortcut edges.
pub fn shortcut_distribution(mu: &Distribution, space: &MetricSpace, x: ObjectId) -> Result<Distribution> {
    space.check(x)?;
    let weights = shortcut_weights(mu, space, x);
    if weights.is_empty() {
        return Err(Error::NoCandidates(x));
    }
    Distribution::from_weights(weights)
}

/// `Z_x = Σ_{y ∈ T \ {x}} μ(y)/r_x(y)`.
pub fn normalizer(mu: &Distribution, space: &MetricSpace, x: ObjectId) -> Result<f64> {
    space.check(x)?;
    let weights = shortcut_weights(mu, space, x);
    if weights.is_empty() {
        return Err(Error::NoCandidates(x));
    }
    Ok(weights.iter().map(|(_, w)| w).sum())
}

/// Rank-proportional policy: proposes from `ℓ_x` with per-object samplers
/// built on first visit.
pub struct RankPolicy {
    space: Arc<MetricSpace>,
    mu: Distribution,
    samplers: Vec<OnceLock<Option<Sampler>>>,
}

impl RankPolicy {
    pub fn new(space: Arc<MetricSpace>, mu: Distribution) -> Result<Self> {
        for id in mu.ids() {
            space.check(id)?;
        }
        let samplers = (0..space.len()).map(|_| OnceLock::new()).collect();
        Ok(RankPolicy { space, mu, samplers })
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    pub fn mu(&self) -> &Distribution {
        &self.mu
    }

    fn sampler(&self, x: ObjectId) -> Result<&Sampler> {
        self.space.check(x)?;
        self.samplers[x.index()]
            .get_or_init(|| {
                let weights = shortcut_weights(&self.mu, &self.space, x);
                (!weights.is_empty()).then(|| Sampler::new(weights))
            })
            .as_ref()
            .ok_or(Error::NoCandidates(x))
    }
}

impl SelectionPolicy for RankPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::ExactRank
    }

    fn propose(&self, current: ObjectId, rng: &mut dyn RngCore) -> Result<ObjectId> {
        Ok(self.sampler(current)?.sample(rng))
    }

    fn distribution(&self, current: ObjectId) -> Result<Distribution> {
        shortcut_distribution(&self.mu, &self.space, current)
    }

    fn can_propose(&self, object: ObjectId) -> bool {
        self.mu.contains(object)
    }
}

/// Uniform over every object other than the current one.
pub struct UniformPolicy {
    n: usize,
}

impl UniformPolicy {
    pub fn new(n: usize) -> Self {
        UniformPolicy { n }
    }
}

impl SelectionPolicy for UniformPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Uniform
    }

    fn propose(&self, current: ObjectId, rng: &mut dyn RngCore) -> Result<ObjectId> {
        if self.n < 2 {
            return Err(Error::NoCandidates(current));
        }
        let k = rng.random_range(0..self.n - 1);
        Ok(ObjectId::new(if k >= current.index() { k + 1 } else { k }))
    }

    fn distribution(&self, current: ObjectId) -> Result<Distribution> {
        if self.n < 2 {
            return Err(Error::NoCandidates(current));
        }
        Distribution::uniform((0..self.n).map(ObjectId::new).filter(|&w| w != current))
    }
}

/// `r_x(y) = |{z ∈ T : z ≼_x y}|`, counting every target at least as close as `y`.
pub fn nonmetric_rank(space: &MetricSpace, targets: &[ObjectId], x: ObjectId, y: ObjectId) -> Result<usize> {
    space.check(x)?;
    if !targets.contains(&y) {
        return Err(domain(format!("{y} is not in the target set")));
    }
    let mut count = 0;
    for class in space.tie_classes_from(x, targets) {
        count += class.len();
        if class.contains(&y) {
            return Ok(count);
        }
    }
    unreachable!("y is a member of targets")
}

/// Counting ranks of every member of `targets` as seen from `x`; tied
/// objects share the largest rank of their class.
fn counting_ranks(space: &MetricSpace, targets: &[ObjectId], x: ObjectId) -> Vec<(ObjectId, usize)> {
    let mut out = Vec::with_capacity(targets.len());
    let mut count = 0;
    for class in space.tie_classes_from(x, targets) {
        count += class.len();
        out.extend(class.into_iter().map(|y| (y, count)));
    }
    out
}

/// Smallest `D` with `r_x(y) ≤ D·(r_z(y) + r_z(x))` over all `x, y, z ∈ T`.
pub fn disorder_constant(space: &MetricSpace, targets: &[ObjectId]) -> Result<f64> {
    if targets.len() < 2 {
        return Err(domain("disorder constant needs at least two targets"));
    }
    for &t in targets {
        space.check(t)?;
    }
    let k = targets.len();
    let position = |id: ObjectId| targets.iter().position(|&t| t == id).expect("member");
    // ranks[a][b] = r_{T[a]}(T[b])
    let mut ranks = vec![0.0; k * k];
    for (a, &x) in targets.iter().enumerate() {
        for (y, r) in counting_ranks(space, targets, x) {
            ranks[a * k + position(y)] = r as f64;
        }
    }
    let mut worst = 0.0f64;
    for x in 0..k {
        for y in 0..k {
            let rxy = ranks[x * k + y];
            for z in 0..k {
                worst = worst.max(rxy / (ranks[z * k + y] + ranks[z * k + x]));
            }
        }
    }
    Ok(worst)
}

/// Policy proposing `w ∈ T \ {x}` with probability `∝ 1/r_x(w)` using only
/// the order of targets around `x`.
pub struct NonMetricPolicy {
    space: Arc<MetricSpace>,
    targets: Vec<ObjectId>,
    samplers: Vec<OnceLock<Option<Sampler>>>,
}

impl NonMetricPolicy {
    pub fn new(space: Arc<MetricSpace>, targets: impl IntoIterator<Item = ObjectId>) -> Result<Self> {
        let mut targets: Vec<ObjectId> = targets.into_iter().collect();
        targets.sort();
        targets.dedup();
        for &t in &targets {
            space.check(t)?;
        }
        let samplers = (0..space.len()).map(|_| OnceLock::new()).collect();
        Ok(NonMetricPolicy { space, targets, samplers })
    }

    pub fn targets(&self) -> &[ObjectId] {
        &self.targets
    }

    /// Harmonic weights `1/r_x(w)`; ranks are taken within `T \ {x}`.
    pub fn weights(&self, x: ObjectId) -> Vec<(ObjectId, f64)> {
        let others: Vec<ObjectId> = self.targets.iter().copied().filter(|&t| t != x).collect();
        let mut weights: Vec<_> = counting_ranks(&self.space, &others, x)
            .into_iter()
            .map(|(w, r)| (w, 1.0 / r as f64))
            .collect();
        weights.sort_by_key(|(w, _)| *w);
        weights
    }

    fn sampler(&self, x: ObjectId) -> Result<&Sampler> {
        self.space.check(x)?;
        self.samplers[x.index()]
            .get_or_init(|| {
                let weights = self.weights(x);
                (!weights.is_empty()).then(|| Sampler::new(weights))
            })
            .as_ref()
            .ok_or(Error::NoCandidates(x))
    }
}

impl SelectionPolicy for NonMetricPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::NonmetricRank
    }

    fn propose(&self, current: ObjectId, rng: &mut dyn RngCore) -> Result<ObjectId> {
        Ok(self.sampler(current)?.sample(rng))
    }

    fn distribution(&self, current: ObjectId) -> Result<Distribution> {
        self.space.check(current)?;
        let weights = self.weights(current);
        if weights.is_empty() {
            return Err(Error::NoCandidates(current));
        }
        Distribution::from_weights(weights)
    }

    fn can_propose(&self, object: ObjectId) -> bool {
        self.targets.binary_search(&object).is_ok()
    }
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Norm;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    const A: ObjectId = ObjectId(0);
    const B: ObjectId = ObjectId(1);
    const C: ObjectId = ObjectId(2);

    fn line() -> Arc<MetricSpace> {
        Arc::new(MetricSpace::from_points(vec![vec![0.0], vec![1.0], vec![3.0]], Norm::Manhattan).unwrap())
    }

    #[test]
    fn shortcut_distribution_on_line() {
        let s = line();
        let mu = Distribution::uniform(s.ids()).unwrap();
        let l = shortcut_distribution(&mu, &s, A).unwrap();
        assert!((l.mass(B) - 0.6).abs() < 1e-12);
        assert!((l.mass(C) - 0.4).abs() < 1e-12);
        assert_eq!(l.mass(A), 0.0);
        assert!((normalizer(&mu, &s, A).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_space() {
        let s = Arc::new(MetricSpace::from_points(vec![vec![0.0], vec![1.0]], Norm::Manhattan).unwrap());
        let mu = Distribution::uniform(s.ids()).unwrap();
        assert_eq!(shortcut_distribution(&mu, &s, A).unwrap(), Distribution::point(B));
        // r_u(v) = 1 since the ball around u at radius 1 holds all mass.
        assert_eq!(normalizer(&mu, &s, A).unwrap(), 0.5);
        let lone = Distribution::point(A);
        assert!(matches!(shortcut_distribution(&lone, &s, A), Err(Error::NoCandidates(_))));
    }

    #[test]
    fn rank_policy_respects_support() {
        let s = line();
        let mu = Distribution::from_weights([(B, 1.0), (C, 1.0)]).unwrap();
        let policy = RankPolicy::new(s, mu).unwrap();
        assert!(!policy.can_propose(A));
        let mut rng = SimRng::seed_from_u64(3);
        for _ in 0..200 {
            let w = policy.propose(B, &mut rng).unwrap();
            assert_eq!(w, C);
        }
    }

    #[test]
    fn uniform_policy_skips_current() {
        let p = UniformPolicy::new(5);
        let mut rng = SimRng::seed_from_u64(9);
        let mut seen = [0usize; 5];
        for _ in 0..5000 {
            seen[p.propose(ObjectId(2), &mut rng).unwrap().index()] += 1;
        }
        assert_eq!(seen[2], 0);
        assert!(seen.iter().enumerate().all(|(i, &c)| i == 2 || c > 1000));
    }

    #[test]
    fn counting_ranks_on_line() {
        let s = line();
        let t = [A, B, C];
        assert_eq!(nonmetric_rank(&s, &t, A, A).unwrap(), 1);
        assert_eq!(nonmetric_rank(&s, &t, A, B).unwrap(), 2);
        assert_eq!(nonmetric_rank(&s, &t, A, C).unwrap(), 3);
        assert!(nonmetric_rank(&s, &[A, B], A, C).is_err());
    }

    #[test]
    fn tied_targets_share_the_larger_rank() {
        // x at 0, two targets at ±1
        let s = MetricSpace::from_points(vec![vec![0.0], vec![-1.0], vec![1.0]], Norm::Manhattan).unwrap();
        let t = [B, C];
        assert_eq!(nonmetric_rank(&s, &t, A, B).unwrap(), 2);
        assert_eq!(nonmetric_rank(&s, &t, A, C).unwrap(), 2);
    }

    #[test]
    fn disorder_constant_brute_force() {
        let s = line();
        // Brute force over all 27 triples, written out independently.
        let r = |x: usize, y: usize| -> f64 {
            let pos = [0.0f64, 1.0, 3.0];
            (0..3).filter(|&z| (pos[z] - pos[x]).abs() <= (pos[y] - pos[x]).abs()).count() as f64
        };
        let mut expected = 0.0f64;
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    expected = expected.max(r(x, y) / (r(z, y) + r(z, x)));
                }
            }
        }
        assert_eq!(expected, 1.0);
        assert_eq!(disorder_constant(&s, &[A, B, C]).unwrap(), expected);
        assert!(disorder_constant(&s, &[A]).is_err());
        // A single pair: r_x(y) = 2, r_y(y) = 1, r_y(x) = 2 gives 2/3.
        assert!((disorder_constant(&s, &[A, C]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nonmetric_policy_weights() {
        let s = Arc::new(
            MetricSpace::from_points(vec![vec![0.0], vec![1.0], vec![3.0], vec![7.0]], Norm::Manhattan).unwrap(),
        );
        let policy = NonMetricPolicy::new(s.clone(), [B, C, ObjectId(3)]).unwrap();
        // x = a is outside T: ranks 1, 2, 3.
        let d = policy.distribution(A).unwrap();
        assert!((d.mass(B) - 6.0 / 11.0).abs() < 1e-12);
        assert!((d.mass(C) - 3.0 / 11.0).abs() < 1e-12);
        assert!((d.mass(ObjectId(3)) - 2.0 / 11.0).abs() < 1e-12);
        // x = b is in T: ranks recomputed over {c, d}.
        let z: f64 = policy.weights(B).iter().map(|w| w.1).sum();
        assert!((z - harmonic(2)).abs() < 1e-12);
        let single = NonMetricPolicy::new(s, [A, B]).unwrap();
        assert_eq!(single.distribution(A).unwrap(), Distribution::point(B));
    }
}
