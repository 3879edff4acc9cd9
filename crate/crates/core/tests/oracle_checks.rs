//! Independent oracles for search costs and oracle behaviour.

use std::sync::Arc;

use cmpsearch::search::{expected_search_cost, Trials};
use cmpsearch::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Rank-proportional proposal matrix computed from first principles:
/// `p[x][y] ∝ μ(y) / μ({z : d(x,z) ≤ d(x,y)})` for `y ≠ x`.
fn proposal_matrix(d: &[Vec<f64>], mu: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    (0..n)
        .map(|x| {
            let mut row: Vec<f64> = (0..n)
                .map(|y| {
                    if y == x || mu[y] == 0.0 {
                        return 0.0;
                    }
                    let ball: f64 = (0..n).filter(|&z| d[x][z] <= d[x][y]).map(|z| mu[z]).sum();
                    mu[y] / ball
                })
                .collect();
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= z);
            row
        })
        .collect()
}

/// Expected number of proposals to reach `t` from every start, for the
/// greedy loop with fair coin ties, by Gauss-Seidel on the absorbing chain.
fn expected_costs(d: &[Vec<f64>], p: &[Vec<f64>], t: usize) -> Vec<f64> {
    let n = d.len();
    let mut e = vec![0.0; n];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for x in (0..n).filter(|&x| x != t) {
            let mut v = 1.0;
            for y in (0..n).filter(|&y| y != t && y != x) {
                let next = if d[y][t] < d[x][t] {
                    e[y]
                } else if d[y][t] > d[x][t] {
                    e[x]
                } else {
                    0.5 * (e[x] + e[y])
                };
                v += p[x][y] * next;
            }
            // Solve for the self-loop implied by staying at x.
            let stay: f64 = (0..n)
                .filter(|&y| y != t && y != x)
                .map(|y| {
                    if d[y][t] > d[x][t] {
                        p[x][y]
                    } else if d[y][t] == d[x][t] {
                        0.5 * p[x][y]
                    } else {
                        0.0
                    }
                })
                .sum();
            let v = (v - stay * e[x]) / (1.0 - stay);
            delta = delta.max((v - e[x]).abs());
            e[x] = v;
        }
        if delta < 1e-13 {
            break;
        }
    }
    e
}

fn matrix(space: &MetricSpace) -> Vec<Vec<f64>> {
    space.ids().map(|x| space.ids().map(|y| space.dist(x, y)).collect()).collect()
}

#[test]
fn line_markov_chain_value() {
    let d = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]];
    let p = proposal_matrix(&d, &[1.0 / 3.0; 3]);
    assert!((p[0][1] - 0.6).abs() < 1e-12 && (p[0][2] - 0.4).abs() < 1e-12);
    let e = expected_costs(&d, &p, 2);
    assert!((e[0] - 2.5).abs() < 1e-12, "{}", e[0]);
}

#[test]
fn line_monte_carlo_matches_chain() {
    let (space, _) = instances::line(&[0.0, 1.0, 3.0]).unwrap();
    let space = Arc::new(space);
    let mu = Distribution::uniform(space.ids()).unwrap();
    let policy = RankPolicy::new(space.clone(), mu).unwrap();
    let demand = Demand::from_weights([(ObjectId(0), ObjectId(2), 1.0)]).unwrap();
    let est = expected_search_cost(&policy, &space, &OracleConfig::default(), &demand, &Trials::new(100_000, 8, 10_000), None).unwrap();
    assert!((est.mean - 2.5).abs() <= 3.0 * est.stderr, "{} ± {}", est.mean, est.stderr);
}

#[test]
fn random_spaces_match_chain() {
    let mut rng = SimRng::seed_from_u64(31);
    for case in 0..6 {
        let n = 5 + case % 3;
        // Distinct cells of a small lattice produce plenty of ties.
        let mut cells: Vec<Vec<f64>> = (0..12).map(|c| vec![(c % 4) as f64, (c / 4) as f64]).collect();
        cells.shuffle(&mut rng);
        cells.truncate(n);
        let space = Arc::new(MetricSpace::from_points(cells, Norm::Manhattan).unwrap());
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(1..5) as f64).collect();
        let mu = Distribution::from_weights(weights.iter().enumerate().map(|(i, &w)| (ObjectId::new(i), w))).unwrap();
        let d = matrix(&space);
        let p = proposal_matrix(&d, &mu.dense(n));
        let (s, t) = (ObjectId(0), ObjectId::new(n - 1));
        let exact = expected_costs(&d, &p, t.index())[s.index()];
        let policy = RankPolicy::new(space.clone(), mu).unwrap();
        let demand = Demand::from_weights([(s, t, 1.0)]).unwrap();
        let est = expected_search_cost(&policy, &space, &OracleConfig::default(), &demand, &Trials::new(40_000, case as u64, 100_000), None)
            .unwrap();
        assert!((est.mean - exact).abs() <= 4.0 * est.stderr, "case {case}: {} vs {exact}", est.mean);
    }
}

#[test]
fn probabilistic_ties_are_fair() {
    let space = MetricSpace::from_points(vec![vec![-1.0], vec![1.0], vec![0.0]], Norm::Manhattan).unwrap();
    let mut oracle = SimulatedOracle::new(&OracleConfig::default().with_seed(5), &space, ObjectId(2)).unwrap();
    let trials = 100_000u32;
    let first = (0..trials).filter(|_| oracle.compare(ObjectId(0), ObjectId(1)).winner == ObjectId(0)).count() as f64;
    let sigma = (trials as f64 * 0.25).sqrt();
    assert!((first - trials as f64 / 2.0).abs() <= 3.0 * sigma, "{first}");
    assert_eq!(oracle.queries(), trials as u64);
}

#[test]
fn two_element_proximity_is_comparison() {
    let mut rng = SimRng::seed_from_u64(77);
    let pts: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(0..5) as f64, rng.random_range(0..5) as f64]).collect();
    let space = MetricSpace::from_points(pts, Norm::Manhattan).unwrap();
    for k in 0..1000u64 {
        let (x, y, t) = (
            ObjectId(rng.random_range(0..40)),
            ObjectId(rng.random_range(0..40)),
            ObjectId(rng.random_range(0..40)),
        );
        let cfg = OracleConfig::default().with_seed(k);
        let mut a = SimulatedOracle::new(&cfg, &space, t).unwrap();
        let mut b = SimulatedOracle::new(&cfg, &space, t).unwrap();
        assert_eq!(a.closest(&[x, y]).unwrap(), b.compare(x, y).winner);
    }
}

#[test]
fn proximity_returns_a_minimizer() {
    let mut rng = SimRng::seed_from_u64(78);
    let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0..4) as f64]).collect();
    let space = MetricSpace::from_points(pts, Norm::Manhattan).unwrap();
    for k in 0..2000u64 {
        let t = ObjectId(rng.random_range(0..30));
        let set: Vec<ObjectId> = (0..rng.random_range(1..7)).map(|_| ObjectId(rng.random_range(0..30))).collect();
        let mut o = SimulatedOracle::new(&OracleConfig::default().with_seed(k), &space, t).unwrap();
        let w = o.closest(&set).unwrap();
        let best = set.iter().map(|&a| space.dist(a, t)).fold(f64::INFINITY, f64::min);
        assert!(set.contains(&w) && space.dist(w, t) == best);
    }
}

#[test]
fn fixed_seeds_reproduce_answers() {
    let space = MetricSpace::from_points((0..10).map(|i| vec![(i % 3) as f64]).collect(), Norm::Manhattan).unwrap();
    let run = || {
        let mut o = SimulatedOracle::new(&OracleConfig::default().with_seed(99), &space, ObjectId(4)).unwrap();
        (0..200).map(|k| o.compare(ObjectId(k % 10), ObjectId((k * 7 + 3) % 10)).winner).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
