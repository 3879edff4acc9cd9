//! Shortcut sampling statistics and greedy forwarding on lattices.

use std::sync::Arc;

use cmpsearch::smallworld::{grid_space, greedy_forward, sample_shortcuts};
use cmpsearch::*;
use proptest::prelude::*;
use rand::SeedableRng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn line_policy() -> RankPolicy {
    let (space, _) = instances::line(&[0.0, 1.0, 3.0]).unwrap();
    let space = Arc::new(space);
    let mu = Distribution::uniform(space.ids()).unwrap();
    RankPolicy::new(space, mu).unwrap()
}

#[test]
fn shortcut_frequencies_match_rank_weights() {
    let policy = line_policy();
    let mut rng = SimRng::seed_from_u64(1);
    let draws = 100_000;
    let mut counts = [[0u32; 3]; 3];
    for _ in 0..draws {
        for (x, y) in sample_shortcuts(&policy, &mut rng).unwrap().into_iter().enumerate() {
            counts[x][y.unwrap().index()] += 1;
        }
    }
    // From 0: 1 has rank 2/3 and 3 has rank 1, so weights (1/2, 1/3) normalize to (0.6, 0.4).
    // From 1: both others at distance ≤ 2 give ranks 2/3 and 1, so again (0.6, 0.4).
    // From 3: ranks 2/3 (for 1) and 1 (for 0).
    let expected = [[0.0, 0.6, 0.4], [0.6, 0.0, 0.4], [0.4, 0.6, 0.0]];
    for x in 0..3 {
        for y in 0..3 {
            let p = expected[x][y];
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[x][y] as f64 - draws as f64 * p).abs() <= 4.0 * sigma.max(1e-9), "{x}->{y}: {}", counts[x][y]);
        }
    }
}

#[test]
fn shortcuts_of_distinct_nodes_are_independent() {
    let policy = line_policy();
    let mut rng = SimRng::seed_from_u64(2);
    let draws = 100_000;
    // Contingency table of (shortcut of node 0, shortcut of node 2).
    let mut table = [[0f64; 2]; 2];
    for _ in 0..draws {
        let s = sample_shortcuts(&policy, &mut rng).unwrap();
        let a = usize::from(s[0] == Some(ObjectId(2)));
        let b = usize::from(s[2] == Some(ObjectId(0)));
        table[a][b] += 1.0;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut chi2 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let e = rows[a] * cols[b] / draws as f64;
            chi2 += (table[a][b] - e).powi(2) / e;
        }
    }
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[test]
fn rank_grows_like_distance_to_the_dimension() {
    for (side, dims, lo, hi) in [(1025usize, 1usize, 4i64, 256i64), (64, 2, 4, 24), (40, 3, 6, 18)] {
        let spec = GridSpec::square(side, dims);
        let (space, _) = grid_space(&spec).unwrap();
        let mu = Distribution::uniform(space.ids()).unwrap();
        let center = vec![side as i64 / 2; dims];
        let x = spec.id_of(&center).unwrap();
        let (mut ld, mut lr) = (Vec::new(), Vec::new());
        for d in lo..=hi {
            let mut far = center.clone();
            far[0] += d;
            let y = spec.id_of(&far).unwrap();
            ld.push((d as f64).ln());
            lr.push(rank(&mu, &space, x, y).unwrap().ln());
        }
        let k = slope(&ld, &lr);
        assert!((k - dims as f64).abs() <= 0.2, "dims {dims}: slope {k}");
    }
}

#[test]
fn shortcut_lengths_decay_like_inverse_power() {
    let spec = GridSpec::square(64, 2);
    let (space, _) = grid_space(&spec).unwrap();
    let space = Arc::new(space);
    let mu = Distribution::uniform(space.ids()).unwrap();
    let policy = RankPolicy::new(space.clone(), mu).unwrap();
    let x = spec.id_of(&[32, 32]).unwrap();
    let mut rng = SimRng::seed_from_u64(3);
    let mut hits = vec![0f64; 129];
    let mut shell = vec![0f64; 129];
    for y in space.ids() {
        shell[space.dist(x, y) as usize] += 1.0;
    }
    for _ in 0..1_000_000 {
        let y = policy.propose(x, &mut rng).unwrap();
        hits[space.dist(x, y) as usize] += 1.0;
    }
    let (mut ld, mut lp) = (Vec::new(), Vec::new());
    for d in 4..=24 {
        ld.push((d as f64).ln());
        lp.push((hits[d] / shell[d]).ln());
    }
    let k = slope(&ld, &lp);
    assert!((k + 2.0).abs() <= 0.3, "slope {k}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn local_only_forwarding_walks_manhattan_paths(w in 2usize..9, h in 2usize..9, s in any::<u32>(), t in any::<u32>(), seed in any::<u64>()) {
        let spec = GridSpec::new(vec![w, h]);
        let (space, local) = grid_space(&spec).unwrap();
        let n = space.len() as u32;
        let (s, t) = (ObjectId(s % n), ObjectId(t % n));
        let space = Arc::new(space);
        let graph = NavGraph::new(space.clone(), local, vec![None; n as usize]).unwrap();
        let mut oracle = SimulatedOracle::new(&OracleConfig::default().with_seed(seed), &space, t).unwrap();
        let out = greedy_forward(&graph, &mut oracle, s, 1000).unwrap();
        prop_assert!(out.found());
        prop_assert_eq!(out.cost as f64, space.dist(s, t));
    }
}
