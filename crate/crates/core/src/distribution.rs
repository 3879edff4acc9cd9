//! Probability distributions over objects and demand over (source, target) pairs.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::RngCore;

use crate::error::{domain, Result};
use crate::metric::ObjectId;

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability distribution with finite, strictly positive support.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    support: Vec<(ObjectId, f64)>,
}

impl Distribution {
    /// Builds from explicit probabilities; zero entries are dropped and the
    /// remainder must sum to one.
    pub fn new(entries: impl IntoIterator<Item = (ObjectId, f64)>) -> Result<Self> {
        let support = collect_positive(entries)?;
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Distribution { support })
    }

    /// Builds from non-negative weights, normalizing them to sum to one.
    pub fn from_weights(entries: impl IntoIterator<Item = (ObjectId, f64)>) -> Result<Self> {
        let mut support = collect_positive(entries)?;
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        for (_, p) in &mut support {
            *p /= total;
        }
        Ok(Distribution { support })
    }

    pub fn uniform(ids: impl IntoIterator<Item = ObjectId>) -> Result<Self> {
        Self::from_weights(ids.into_iter().map(|id| (id, 1.0)))
    }

    pub fn point(id: ObjectId) -> Self {
        Distribution { support: vec![(id, 1.0)] }
    }

    /// Support entries sorted by object id.
    pub fn support(&self) -> &[(ObjectId, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.support.iter().map(|(id, _)| *id)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.mass(id) > 0.0
    }

    pub fn mass(&self, id: ObjectId) -> f64 {
        self.support
            .binary_search_by_key(&id, |(x, _)| *x)
            .map_or(0.0, |i| self.support[i].1)
    }

    /// Dense vector of masses indexed by object id.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(id, p) in &self.support {
            out[id.index()] = p;
        }
        out
    }

    /// `H(σ) = Σ σ(x) log2(1/σ(x))`, in bits.
    pub fn entropy(&self) -> f64 {
        self.support.iter().map(|(_, p)| -p * p.log2()).sum::<f64>().max(0.0)
    }

    /// `H_max(σ) = max log2(1/σ(x))` over the support, in bits.
    pub fn max_entropy(&self) -> f64 {
        self.support.iter().map(|(_, p)| -p.log2()).fold(0.0, f64::max)
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self.support.iter().copied())
    }
}

fn collect_positive(entries: impl IntoIterator<Item = (ObjectId, f64)>) -> Result<Vec<(ObjectId, f64)>> {
    let mut merged: BTreeMap<ObjectId, f64> = BTreeMap::new();
    for (id, w) in entries {
        if !w.is_finite() || w < 0.0 {
            return Err(domain(format!("weight {w} for {id} is not a non-negative real")));
        }
        *merged.entry(id).or_default() += w;
    }
    let support: Vec<_> = merged.into_iter().filter(|(_, w)| *w > 0.0).collect();
    if support.is_empty() {
        return Err(domain("distribution has empty support"));
    }
    Ok(support)
}

/// Draws objects in proportion to fixed weights.
#[derive(Clone, Debug)]
pub struct Sampler {
    ids: Vec<ObjectId>,
    index: WeightedIndex<f64>,
}

impl Sampler {
    /// Panics if no weight is positive.
    pub fn new(entries: impl IntoIterator<Item = (ObjectId, f64)>) -> Self {
        let (ids, weights): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index = WeightedIndex::new(weights).expect("sampler needs a positive total weight");
        Sampler { ids, index }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> ObjectId {
        self.ids[self.index.sample(rng)]
    }
}

/// Joint distribution `λ` over ordered (source, target) pairs.
#[derive(Clone, Debug, PartialEq)]
pub enum Demand {
    /// Sparse list of pairs with positive probability, sorted by (source, target).
    Pairs(Vec<(ObjectId, ObjectId, f64)>),
    /// Source and target drawn independently.
    Product { source: Distribution, target: Distribution },
}

impl Demand {
    /// Normalizes arbitrary non-negative pair weights.
    pub fn from_weights(entries: impl IntoIterator<Item = (ObjectId, ObjectId, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<(ObjectId, ObjectId), f64> = BTreeMap::new();
        for (s, t, w) in entries {
            if !w.is_finite() || w < 0.0 {
                return Err(domain(format!("demand weight {w} for ({s},{t}) is not a non-negative real")));
            }
            *merged.entry((s, t)).or_default() += w;
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(domain("demand has no positive weight"));
        }
        Ok(Demand::Pairs(
            merged
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|((s, t), w)| (s, t, w / total))
                .collect(),
        ))
    }

    pub fn product(source: Distribution, target: Distribution) -> Self {
        Demand::Product { source, target }
    }

    /// Uniform over all `n²` ordered pairs.
    pub fn uniform(n: usize) -> Result<Self> {
        let all = || Distribution::uniform((0..n).map(ObjectId::new));
        Ok(Demand::product(all()?, all()?))
    }

    pub fn probability(&self, s: ObjectId, t: ObjectId) -> f64 {
        match self {
            Demand::Pairs(pairs) => pairs
                .binary_search_by(|(a, b, _)| (*a, *b).cmp(&(s, t)))
                .map_or(0.0, |i| pairs[i].2),
            Demand::Product { source, target } => source.mass(s) * target.mass(t),
        }
    }

    /// Row and column marginals `(ν, μ)`.
    pub fn marginals(&self) -> (Distribution, Distribution) {
        match self {
            Demand::Product { source, target } => (source.clone(), target.clone()),
            Demand::Pairs(pairs) => {
                let mut nu: BTreeMap<ObjectId, f64> = BTreeMap::new();
                let mut mu: BTreeMap<ObjectId, f64> = BTreeMap::new();
                for &(s, t, p) in pairs {
                    *nu.entry(s).or_default() += p;
                    *mu.entry(t).or_default() += p;
                }
                (
                    Distribution::from_weights(nu).expect("demand has positive mass"),
                    Distribution::from_weights(mu).expect("demand has positive mass"),
                )
            }
        }
    }

    pub fn target_distribution(&self) -> Distribution {
        match self {
            Demand::Product { target, .. } => target.clone(),
            Demand::Pairs(_) => self.marginals().1,
        }
    }

    /// `λ(u,v) > 0` for every ordered pair over `n` objects.
    pub fn is_fully_supported(&self, n: usize) -> bool {
        match self {
            Demand::Product { source, target } => source.len() == n && target.len() == n,
            Demand::Pairs(pairs) => pairs.len() == n * n,
        }
    }

    /// Largest object id referenced, plus one.
    pub fn extent(&self) -> usize {
        match self {
            Demand::Pairs(pairs) => pairs.iter().map(|(s, t, _)| s.index().max(t.index()) + 1).max().unwrap_or(0),
            Demand::Product { source, target } => source.ids().chain(target.ids()).map(|i| i.index() + 1).max().unwrap_or(0),
        }
    }

    pub fn sampler(&self) -> DemandSampler {
        match self {
            Demand::Pairs(pairs) => DemandSampler::Pairs {
                pairs: pairs.iter().map(|&(s, t, _)| (s, t)).collect(),
                index: WeightedIndex::new(pairs.iter().map(|p| p.2)).expect("demand has positive mass"),
            },
            Demand::Product { source, target } => DemandSampler::Product {
                source: source.sampler(),
                target: target.sampler(),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub enum DemandSampler {
    Pairs { pairs: Vec<(ObjectId, ObjectId)>, index: WeightedIndex<f64> },
    Product { source: Sampler, target: Sampler },
}

impl DemandSampler {
    pub fn sample(&self, rng: &mut dyn RngCore) -> (ObjectId, ObjectId) {
        match self {
            DemandSampler::Pairs { pairs, index } => pairs[index.sample(rng)],
            DemandSampler::Product { source, target } => {
                let s = source.sample(rng);
                (s, target.sample(rng))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> impl Iterator<Item = ObjectId> {
        (0..n).map(ObjectId::new)
    }

    #[test]
    fn entropies() {
        let u4 = Distribution::uniform(ids(4)).unwrap();
        assert!((u4.entropy() - 2.0).abs() < 1e-15);
        assert!((u4.max_entropy() - 2.0).abs() < 1e-15);
        let p = Distribution::point(ObjectId(3));
        assert_eq!(p.entropy(), 0.0);
        assert_eq!(p.max_entropy(), 0.0);
        let skew = Distribution::new([(ObjectId(0), 0.5), (ObjectId(1), 0.25), (ObjectId(2), 0.25)]).unwrap();
        assert_eq!(skew.entropy(), 1.5);
        assert_eq!(skew.max_entropy(), 2.0);
        let u7 = Distribution::uniform(ids(7)).unwrap();
        assert!((u7.max_entropy() - 7f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(Distribution::new([(ObjectId(0), 0.5)]).is_err());
        assert!(Distribution::new(Vec::new()).is_err());
        assert!(Distribution::from_weights([(ObjectId(0), -1.0)]).is_err());
    }

    #[test]
    fn marginals_of_pairs() {
        let (a, b, c) = (ObjectId(0), ObjectId(1), ObjectId(2));
        let lambda = Demand::from_weights([(a, b, 0.5), (b, c, 0.25), (a, c, 0.25)]).unwrap();
        let (nu, mu) = lambda.marginals();
        assert_eq!(nu.support(), &[(a, 0.75), (b, 0.25)]);
        assert_eq!(mu.support(), &[(b, 0.5), (c, 0.5)]);

        let single = Demand::from_weights([(a, b, 3.0)]).unwrap();
        let (nu, mu) = single.marginals();
        assert_eq!(nu, Distribution::point(a));
        assert_eq!(mu, Distribution::point(b));
    }

    #[test]
    fn uniform_demand_has_uniform_marginals() {
        let all: Vec<_> = ids(4).flat_map(|s| ids(4).map(move |t| (s, t, 1.0))).collect();
        let lambda = Demand::from_weights(all).unwrap();
        assert!(lambda.is_fully_supported(4));
        let (nu, mu) = lambda.marginals();
        for x in ids(4) {
            assert!((nu.mass(x) - 0.25).abs() < 1e-15);
            assert!((mu.mass(x) - 0.25).abs() < 1e-15);
        }
        assert!(Demand::uniform(4).unwrap().is_fully_supported(4));
    }

    proptest! {
        #[test]
        fn entropy_ordering(weights in proptest::collection::vec(0.0f64..10.0, 1..64)) {
            prop_assume!(weights.iter().any(|w| *w > 0.0));
            let n = weights.len();
            let d = Distribution::from_weights(weights.into_iter().enumerate().map(|(i, w)| (ObjectId::new(i), w))).unwrap();
            let total: f64 = d.support().iter().map(|p| p.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(d.entropy() <= d.max_entropy() + 1e-12);
            prop_assert!(d.max_entropy() >= (d.len() as f64).log2() - 1e-12);
            prop_assert!(d.entropy() <= (n as f64).log2() + 1e-12);
        }

        #[test]
        fn marginals_sum_to_one(triples in proptest::collection::vec((0u32..8, 0u32..8, 0.01f64..5.0), 1..40)) {
            let lambda = Demand::from_weights(triples.into_iter().map(|(s, t, w)| (ObjectId(s), ObjectId(t), w))).unwrap();
            let (nu, mu) = lambda.marginals();
            let sn: f64 = nu.support().iter().map(|p| p.1).sum();
            let sm: f64 = mu.support().iter().map(|p| p.1).sum();
            prop_assert!((sn - 1.0).abs() < 1e-9 && (sm - 1.0).abs() < 1e-9);
        }
    }
}
