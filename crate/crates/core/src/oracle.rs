//! Comparison and proximity oracles.
//!
//! Search code only ever sees the [`Oracle`] trait: it can ask which of two
//! objects is closer to the hidden target, and whether a presented object is
//! the target. The target itself is never exposed.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::metric::{MetricSpace, ObjectId};
use crate::seed::SimRng;

/// How an oracle answers when both objects are equally close to the target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TiePolicy {
    /// The first-listed object wins with probability `p_first`.
    Probabilistic { p_first: f64 },
    /// The object with the smaller id wins.
    DeterministicLowerId,
}

impl Default for TiePolicy {
    fn default() -> Self {
        TiePolicy::Probabilistic { p_first: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub tie_policy: TiePolicy,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(tie_policy: TiePolicy, seed: u64) -> Self {
        OracleConfig { tie_policy, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.tie_policy {
            TiePolicy::Probabilistic { p_first } if !(p_first > 0.0 && p_first < 1.0) => {
                Err(domain(format!("tie probability must lie in (0,1), got {p_first}")))
            }
            _ => Ok(()),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        OracleConfig { seed, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleAnswer {
    pub winner: ObjectId,
    pub was_tie: bool,
}

pub trait Oracle {
    /// Returns whichever of `x`, `y` is closer to the target.
    fn compare(&mut self, x: ObjectId, y: ObjectId) -> OracleAnswer;

    /// Whether a presented object is the target itself.
    fn is_target(&self, object: ObjectId) -> bool;

    /// Closest member of `candidates`. The default runs a left-to-right
    /// tournament of pairwise comparisons, so a two-element set behaves exactly
    /// like [`Oracle::compare`].
    fn closest(&mut self, candidates: &[ObjectId]) -> Result<ObjectId> {
        let (&first, rest) = candidates
            .split_first()
            .ok_or_else(|| domain("proximity oracle needs a non-empty candidate set"))?;
        Ok(rest.iter().fold(first, |best, &c| self.compare(best, c).winner))
    }
}

/// Answers from the true metric, breaking ties per [`TiePolicy`] with its own
/// RNG stream. One instance per search; not meant for concurrent use.
#[derive(Clone, Debug)]
pub struct SimulatedOracle<'a> {
    space: &'a MetricSpace,
    target: ObjectId,
    tie_policy: TiePolicy,
    rng: SimRng,
    queries: u64,
}

impl<'a> SimulatedOracle<'a> {
    pub fn new(config: &OracleConfig, space: &'a MetricSpace, target: ObjectId) -> Result<Self> {
        config.validate()?;
        space.check(target)?;
        Ok(SimulatedOracle {
            space,
            target,
            tie_policy: config.tie_policy,
            rng: SimRng::seed_from_u64(config.seed),
            queries: 0,
        })
    }

    /// Number of comparisons answered so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl Oracle for SimulatedOracle<'_> {
    fn compare(&mut self, x: ObjectId, y: ObjectId) -> OracleAnswer {
        use std::cmp::Ordering::*;
        self.queries += 1;
        match self.space.cmp_to(self.target, x, y) {
            Less => OracleAnswer { winner: x, was_tie: false },
            Greater => OracleAnswer { winner: y, was_tie: false },
            Equal => {
                let winner = match self.tie_policy {
                    TiePolicy::Probabilistic { p_first } => {
                        if self.rng.random_bool(p_first) {
                            x
                        } else {
                            y
                        }
                    }
                    TiePolicy::DeterministicLowerId => x.min(y),
                };
                OracleAnswer { winner, was_tie: x != y }
            }
        }
    }

    fn is_target(&self, object: ObjectId) -> bool {
        object == self.target
    }
}

/// Adapts external answer sources (a person, a remote service) to [`Oracle`].
pub struct CallbackOracle<C, T> {
    choose: C,
    recognise: T,
}

impl<C, T> CallbackOracle<C, T>
where
    C: FnMut(ObjectId, ObjectId) -> ObjectId,
    T: Fn(ObjectId) -> bool,
{
    pub fn new(choose: C, recognise: T) -> Self {
        CallbackOracle { choose, recognise }
    }
}

impl<C, T> Oracle for CallbackOracle<C, T>
where
    C: FnMut(ObjectId, ObjectId) -> ObjectId,
    T: Fn(ObjectId) -> bool,
{
    fn compare(&mut self, x: ObjectId, y: ObjectId) -> OracleAnswer {
        let winner = (self.choose)(x, y);
        assert!(winner == x || winner == y, "callback oracle returned a non-candidate");
        OracleAnswer { winner, was_tie: false }
    }

    fn is_target(&self, object: ObjectId) -> bool {
        (self.recognise)(object)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Norm;

    fn line() -> MetricSpace {
        MetricSpace::from_points(vec![vec![0.0], vec![1.0], vec![3.0]], Norm::Manhattan).unwrap()
    }

    #[test]
    fn answers_follow_distances() {
        let s = line();
        let cfg = OracleConfig::default();
        let mut o = SimulatedOracle::new(&cfg, &s, ObjectId(2)).unwrap();
        assert_eq!(o.compare(ObjectId(0), ObjectId(1)).winner, ObjectId(1));
        assert_eq!(o.compare(ObjectId(2), ObjectId(0)).winner, ObjectId(2));
        assert_eq!(o.closest(&[ObjectId(0)]).unwrap(), ObjectId(0));
        assert_eq!(o.closest(&[ObjectId(0), ObjectId(1)]).unwrap(), ObjectId(1));
        assert!(o.closest(&[]).is_err());
        assert!(o.is_target(ObjectId(2)) && !o.is_target(ObjectId(1)));
    }

    #[test]
    fn exhaustive_consistency() {
        let s = line();
        for t in s.ids() {
            let mut o = SimulatedOracle::new(&OracleConfig::default(), &s, t).unwrap();
            for x in s.ids() {
                for y in s.ids() {
                    let w = o.compare(x, y).winner;
                    let other = if w == x { y } else { x };
                    assert!(s.dist(w, t) <= s.dist(other, t));
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_tie_probability() {
        let s = line();
        for p in [0.0, 1.0, 1.5] {
            let cfg = OracleConfig::new(TiePolicy::Probabilistic { p_first: p }, 1);
            assert!(SimulatedOracle::new(&cfg, &s, ObjectId(0)).is_err());
        }
    }

    #[test]
    fn deterministic_ties_prefer_lower_id() {
        let s = MetricSpace::from_points(vec![vec![-1.0], vec![1.0], vec![0.0]], Norm::Manhattan).unwrap();
        let cfg = OracleConfig::new(TiePolicy::DeterministicLowerId, 0);
        let mut o = SimulatedOracle::new(&cfg, &s, ObjectId(2)).unwrap();
        let ans = o.compare(ObjectId(1), ObjectId(0));
        assert_eq!(ans, OracleAnswer { winner: ObjectId(0), was_tie: true });
    }
}
