//! Structural checks against brute-force oracles: doubling constants, balls,
//! ranks, normalizers and query caps.

use std::sync::Arc;

use cmpsearch::policy::{harmonic, normalizer};
use cmpsearch::search::{default_cap, expected_search_cost};
use cmpsearch::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Distinct cells of an `side^dims` integer lattice under L1, with integer
/// weights (possibly zero) whose total is a power of two and whose smallest
/// positive weight is 1, so every probability is exactly representable.
fn lattice_instance(rng: &mut SimRng, n: usize, side: i64, dims: usize) -> (MetricSpace, Vec<u64>) {
    let cells = (side as usize).pow(dims as u32);
    let mut ids: Vec<usize> = (0..cells).collect();
    ids.shuffle(rng);
    let points: Vec<Vec<f64>> = ids[..n]
        .iter()
        .map(|&c| (0..dims).map(|k| ((c / (side as usize).pow(k as u32)) % side as usize) as f64).collect())
        .collect();
    let space = MetricSpace::from_points(points, Norm::Manhattan).unwrap();
    let mut w: Vec<u64> = (0..n).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(1..=6) }).collect();
    w[1] = 1;
    let total: u64 = w.iter().sum();
    w[0] += total.next_power_of_two() - total;
    (space, w)
}

fn distribution(w: &[u64]) -> Distribution {
    Distribution::from_weights(w.iter().enumerate().filter(|p| *p.1 > 0).map(|(i, &x)| (ObjectId::new(i), x as f64))).unwrap()
}

fn ball(space: &MetricSpace, w: &[u64], x: usize, r: f64) -> u64 {
    (0..w.len()).filter(|&y| space.dist(ObjectId::new(x), ObjectId::new(y)) <= r).map(|y| w[y]).sum()
}

#[test]
fn doubling_constant_matches_dense_sweep() {
    let mut rng = SimRng::seed_from_u64(2024);
    for case in 0..50 {
        let (side, dims) = if case % 2 == 0 { (8, 2) } else { (4, 3) };
        let n = rng.random_range(2..=64);
        let (space, w) = lattice_instance(&mut rng, n, side, dims);
        // Distances are integers at most 14, so jumps happen on multiples of 1/2.
        let mut sweep = 1.0f64;
        for x in (0..n).filter(|&x| w[x] > 0) {
            for k in 0..=1000 {
                let r = k as f64 / 64.0;
                let ratio = ball(&space, &w, x, 2.0 * r) as f64 / ball(&space, &w, x, r) as f64;
                sweep = sweep.max(ratio);
            }
        }
        assert_eq!(doubling_constant(&distribution(&w), &space).unwrap(), sweep, "case {case}");
    }
}

#[test]
fn ball_mass_is_monotone_and_right_continuous() {
    let mut rng = SimRng::seed_from_u64(7);
    for _ in 0..20 {
        let (space, w) = lattice_instance(&mut rng, 40, 8, 2);
        let mu = distribution(&w);
        let total: u64 = w.iter().sum();
        for x in space.ids() {
            let mut radii: Vec<f64> = space.ids().map(|y| space.dist(x, y)).collect();
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            let mut last = 0.0;
            for &d in &radii {
                let at = ball_mass(&mu, &space, x, d).unwrap();
                assert_eq!(at, ball(&space, &w, x.index(), d) as f64 / total as f64);
                assert!(at >= last);
                assert_eq!(ball_mass(&mu, &space, x, d + 1e-3).unwrap(), at);
                if d > 0.0 {
                    assert!(ball_mass(&mu, &space, x, d - 1e-3).unwrap() <= at);
                }
                last = at;
            }
        }
    }
}

#[test]
fn ranks_follow_distance_order() {
    let mut rng = SimRng::seed_from_u64(11);
    for n in [2usize, 17, 64, 128] {
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0..10) as f64, rng.random::<f64>()]).collect();
        let space = Arc::new(MetricSpace::from_points(points, Norm::Euclidean).unwrap());
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let mu = Distribution::from_weights(weights.iter().enumerate().map(|(i, &w)| (ObjectId::new(i), w))).unwrap();
        let dense = mu.dense(n);
        let table = RankTable::new(space.clone(), mu.clone()).unwrap();
        for x in space.ids() {
            let brute: Vec<f64> = space
                .ids()
                .map(|y| space.ids().filter(|&z| space.dist(x, z) <= space.dist(x, y)).map(|z| dense[z.index()]).sum())
                .collect();
            for y in space.ids() {
                assert!((table.rank(x, y) - brute[y.index()]).abs() < 1e-12);
                for z in space.ids() {
                    if space.dist(x, y) <= space.dist(x, z) {
                        assert!(table.rank(x, y) <= table.rank(x, z));
                    }
                }
            }
            assert!((table.rank(x, x) - dense[x.index()]).abs() < 1e-12);
        }
    }
}

/// `Σ_{y ∈ T, y ≠ x} μ(y) / μ(B_x(d(x,y)))` by direct summation.
fn brute_normalizer(space: &MetricSpace, mu: &[f64], x: ObjectId) -> f64 {
    space
        .ids()
        .filter(|&y| y != x && mu[y.index()] > 0.0)
        .map(|y| {
            let d = space.dist(x, y);
            mu[y.index()] / space.ids().filter(|&z| space.dist(x, z) <= d).map(|z| mu[z.index()]).sum::<f64>()
        })
        .sum()
}

/// Largest mass among the targets nearest to `x`.
fn nearest_target_mass(space: &MetricSpace, mu: &[f64], x: ObjectId) -> f64 {
    let targets: Vec<ObjectId> = space.ids().filter(|y| mu[y.index()] > 0.0).collect();
    let near = targets.iter().map(|&y| space.dist(x, y)).fold(f64::INFINITY, f64::min);
    targets.iter().filter(|&&y| space.dist(x, y) == near).map(|y| mu[y.index()]).fold(0.0, f64::max)
}

#[test]
fn normalizer_bound_sweep() {
    let mut rng = SimRng::seed_from_u64(4);
    for case in 0..150u64 {
        let n = rng.random_range(2..=256);
        let skew = rng.random_range(0.0..=1.5);
        let (space, demand) = instances::random_instance(n, 1 + case as usize % 3, skew, case).unwrap();
        let mut mu = demand.target_distribution();
        if case % 2 == 1 && n > 2 {
            // Drop part of the support so that some x lie outside T.
            let keep: Vec<_> = mu.support().iter().copied().filter(|p| p.0.index() % 3 != 0).collect();
            mu = Distribution::from_weights(keep).unwrap();
        }
        let dense = mu.dense(n);
        let h_max = mu.max_entropy();
        for x in space.ids() {
            let z = brute_normalizer(&space, &dense, x);
            let lib = normalizer(&mu, &space, x).unwrap();
            assert!((lib - z).abs() <= 1e-9 * z.max(1.0), "case {case}: {lib} vs {z}");
            let bound = 1.0 + (1.0 / nearest_target_mass(&space, &dense, x)).ln();
            assert!(z <= bound + 1e-9, "case {case} x {x}: {z} > {bound}");
            assert!(bound <= 3.0 * h_max + 1e-9, "case {case}: {bound} > 3·{h_max}");
        }
    }
}

#[test]
fn nonmetric_normalizer_is_harmonic() {
    let mut rng = SimRng::seed_from_u64(8);
    for case in 0..100 {
        let n = rng.random_range(3..40);
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let space = Arc::new(MetricSpace::from_points(points, Norm::Euclidean).unwrap());
        let mut targets: Vec<ObjectId> = space.ids().filter(|_| rng.random_bool(0.6)).collect();
        if targets.len() < 2 {
            targets = vec![ObjectId(0), ObjectId(1)];
        }
        let policy = NonMetricPolicy::new(space.clone(), targets.clone()).unwrap();
        for x in space.ids() {
            let sum: f64 = policy.weights(x).iter().map(|p| p.1).sum();
            let expected = harmonic(targets.len() - usize::from(targets.contains(&x)));
            assert!((sum - expected).abs() < 1e-12, "case {case} x {x}: {sum} vs {expected}");
        }
    }
    // Ties can only shrink the sum.
    let (line, _) = instances::line(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
    let policy = NonMetricPolicy::new(Arc::new(line), (0..5).map(ObjectId)).unwrap();
    let sum: f64 = policy.weights(ObjectId(2)).iter().map(|p| p.1).sum();
    assert!((sum - 1.5).abs() < 1e-12 && sum < harmonic(4));
}

#[test]
fn searches_terminate_within_cap() {
    let (space, demand) = instances::random_instance(256, 2, 1.0, 3).unwrap();
    let space = Arc::new(space);
    let mu = demand.target_distribution();
    let cap = default_cap(space.len(), &mu);
    let oracle = OracleConfig::default();
    let exact = RankPolicy::new(space.clone(), mu.clone()).unwrap();
    let est = expected_search_cost(&exact, &space, &oracle, &demand, &Trials::new(100_000, 1, cap), None).unwrap();
    assert!(est.cap_exceeded as f64 <= 1e-3 * est.trials as f64, "{est:?}");
    let uniform = UniformPolicy::new(space.len());
    let est = expected_search_cost(&uniform, &space, &oracle, &demand, &Trials::new(20_000, 2, cap), None).unwrap();
    assert!(est.cap_exceeded as f64 <= 1e-3 * est.trials as f64, "{est:?}");
}

fn points_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, bool)> {
    (1usize..4).prop_flat_map(|dims| (prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dims), 2..30), any::<bool>()))
}

proptest! {
    #[test]
    fn point_spaces_are_metric((points, euclid) in points_strategy()) {
        let norm = if euclid { Norm::Euclidean } else { Norm::Manhattan };
        let space = MetricSpace::from_points(points, norm).unwrap();
        prop_assert!(space.validate_metric().is_ok());
        for x in space.ids() {
            prop_assert_eq!(space.dist(x, x), 0.0);
            for y in space.ids() {
                prop_assert_eq!(space.dist(x, y), space.dist(y, x));
            }
        }
    }

    #[test]
    fn exact_policy_is_a_distribution(n in 2usize..40, seed in any::<u64>()) {
        let (space, demand) = instances::random_instance(n, 2, 1.0, seed).unwrap();
        let policy = RankPolicy::new(Arc::new(space), demand.target_distribution()).unwrap();
        for x in (0..n).map(ObjectId::new) {
            let d = policy.distribution(x).unwrap();
            prop_assert!(!d.contains(x));
            prop_assert!((d.support().iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_is_bounded(weights in prop::collection::vec(0.01f64..10.0, 1..50)) {
        let mu = Distribution::from_weights(weights.iter().enumerate().map(|(i, &w)| (ObjectId::new(i), w))).unwrap();
        prop_assert!(mu.entropy() >= -1e-12);
        prop_assert!(mu.entropy() <= (weights.len() as f64).log2() + 1e-9);
        prop_assert!(mu.entropy() <= mu.max_entropy() + 1e-9);
    }
}
