//! Finite metric spaces and the distance-derived structure used by search:
//! the preorders `x ≼_z y`, closed balls, ranks and doubling constants.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{domain, Error, Result};

/// Relative tolerance used for distance ties in floating-point geometries.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Spaces up to this size are checked exhaustively by the validators.
const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 512;
const SAMPLED_TRIPLES: usize = 1 << 20;

/// Dense index of an object in a [`MetricSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn new(index: usize) -> Self {
        ObjectId(u32::try_from(index).expect("object index exceeds u32"))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl From<usize> for ObjectId {
    fn from(index: usize) -> Self {
        ObjectId::new(index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Manhattan,
    Euclidean,
}

#[derive(Clone, Debug)]
pub enum Geometry {
    /// Row-major coordinate vectors of a common dimension.
    Points { dim: usize, coords: Vec<f64>, norm: Norm },
    /// Explicit symmetric `n × n` matrix.
    Matrix { distances: Vec<f64> },
    /// `{1..D}^K` tuples; objects at first difference in coordinate `j` (1-based)
    /// lie at distance `2^(K-j+1)`.
    Hierarchical { branching: usize, depth: usize },
}

/// Outcome of asking which of two objects is closer to a third.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closer {
    First,
    Second,
    Tie,
}

/// A finite set of objects embedded in a metric space.
#[derive(Clone, Debug)]
pub struct MetricSpace {
    n: usize,
    geometry: Geometry,
    tolerance: f64,
}

/// First violating triple (or pair) found by a metric validator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricViolation {
    pub x: ObjectId,
    pub y: ObjectId,
    pub z: ObjectId,
}

impl MetricSpace {
    /// Point cloud. Integer coordinates under the Manhattan norm give
    /// integer distances and are compared exactly.
    pub fn from_points(points: Vec<Vec<f64>>, norm: Norm) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(domain("a space needs at least one object"));
        }
        let dim = points[0].len();
        let mut coords = Vec::with_capacity(n * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(domain(format!("object {i} has {} coordinates, expected {dim}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(domain(format!("object {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        let integral = norm == Norm::Manhattan && coords.iter().all(|c| c.fract() == 0.0);
        Ok(MetricSpace {
            n,
            geometry: Geometry::Points { dim, coords, norm },
            tolerance: if integral { 0.0 } else { DEFAULT_TOLERANCE },
        })
    }

    /// Explicit distance matrix. Symmetry, zero diagonal and non-negativity are
    /// enforced here; the triangle inequality is checked by [`validate_metric`].
    ///
    /// [`validate_metric`]: MetricSpace::validate_metric
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(domain("a space needs at least one object"));
        }
        let mut distances = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(domain(format!("distance row {i} has {} entries, expected {n}", row.len())));
            }
            distances.extend_from_slice(row);
        }
        for i in 0..n {
            if distances[i * n + i] != 0.0 {
                return Err(domain(format!("d({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = distances[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(domain(format!("d({i},{j}) = {d} is not a non-negative real")));
                }
                if d != distances[j * n + i] {
                    return Err(domain(format!("distance matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        let integral = distances.iter().all(|d| d.fract() == 0.0);
        Ok(MetricSpace {
            n,
            geometry: Geometry::Matrix { distances },
            tolerance: if integral { 0.0 } else { DEFAULT_TOLERANCE },
        })
    }

    /// Ultrametric space over `{1..D}^K`. Callers are responsible for size
    /// guarding; see [`crate::instances::build_hierarchical_space`].
    pub fn hierarchical(branching: usize, depth: usize) -> Result<Self> {
        if branching < 2 || depth < 1 {
            return Err(domain("hierarchical space needs D >= 2 and K >= 1"));
        }
        let n = (branching as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if n > u32::MAX as u128 || depth >= 1000 {
            return Err(domain("hierarchical space too large"));
        }
        Ok(MetricSpace {
            n: n as usize,
            geometry: Geometry::Hierarchical { branching, depth },
            tolerance: 0.0,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        assert!(tolerance >= 0.0 && tolerance.is_finite());
        self.tolerance = tolerance;
        self
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.n).map(ObjectId::new)
    }

    pub fn check(&self, id: ObjectId) -> Result<()> {
        if id.index() < self.n {
            Ok(())
        } else {
            Err(Error::InvalidId { id, n: self.n })
        }
    }

    pub fn coordinates(&self, id: ObjectId) -> Option<&[f64]> {
        match &self.geometry {
            Geometry::Points { dim, coords, .. } => {
                let i = id.index();
                coords.get(i * dim..(i + 1) * dim)
            }
            _ => None,
        }
    }

    /// Base-`D` digits (values `1..=D`, most significant first) of a
    /// hierarchical object.
    pub fn hierarchical_digits(&self, id: ObjectId) -> Option<Vec<usize>> {
        match self.geometry {
            Geometry::Hierarchical { branching, depth } => {
                let mut digits = vec![0; depth];
                let mut rest = id.index();
                for slot in digits.iter_mut().rev() {
                    *slot = rest % branching + 1;
                    rest /= branching;
                }
                Some(digits)
            }
            _ => None,
        }
    }

    pub fn distance(&self, x: ObjectId, y: ObjectId) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dist(x, y))
    }

    /// Unchecked distance; ids must be in range.
    #[inline]
    pub fn dist(&self, x: ObjectId, y: ObjectId) -> f64 {
        let (i, j) = (x.index(), y.index());
        match &self.geometry {
            Geometry::Points { dim, coords, norm } => {
                let a = &coords[i * dim..(i + 1) * dim];
                let b = &coords[j * dim..(j + 1) * dim];
                match norm {
                    Norm::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
                    Norm::Euclidean => a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt(),
                }
            }
            Geometry::Matrix { distances } => distances[i * self.n + j],
            &Geometry::Hierarchical { branching, depth } => {
                if i == j {
                    return 0.0;
                }
                // Most significant digit first: find the first differing position.
                let mut scale = self.n / branching;
                for pos in 1..=depth {
                    if (i / scale) % branching != (j / scale) % branching {
                        return f64::powi(2.0, (depth - pos + 1) as i32);
                    }
                    scale /= branching.max(1);
                }
                unreachable!("distinct ids must differ in some digit")
            }
        }
    }

    /// Absolute slack admitted when comparing a distance against `r`.
    #[inline]
    pub fn slack(&self, r: f64) -> f64 {
        self.tolerance * r.max(1.0)
    }

    /// Total preorder `≼_z`: compares `d(x,z)` with `d(y,z)`, equal within tolerance.
    #[inline]
    pub fn cmp_to(&self, z: ObjectId, x: ObjectId, y: ObjectId) -> Ordering {
        let dx = self.dist(x, z);
        let dy = self.dist(y, z);
        if (dx - dy).abs() <= self.slack(dx) {
            Ordering::Equal
        } else if dx < dy {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    /// Which of `x`, `y` is closer to `z`.
    pub fn closer(&self, x: ObjectId, y: ObjectId, z: ObjectId) -> Result<Closer> {
        self.check(x)?;
        self.check(y)?;
        self.check(z)?;
        Ok(match self.cmp_to(z, x, y) {
            Ordering::Less => Closer::First,
            Ordering::Greater => Closer::Second,
            Ordering::Equal => Closer::Tie,
        })
    }

    /// Splits `ids` into `≼_z` equivalence classes, nearest class first.
    pub fn tie_classes_from(&self, z: ObjectId, ids: &[ObjectId]) -> Vec<Vec<ObjectId>> {
        let mut keyed: Vec<(f64, ObjectId)> = ids.iter().map(|&y| (self.dist(z, y), y)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut classes: Vec<Vec<ObjectId>> = Vec::new();
        let mut leader = 0.0;
        for (d, y) in keyed {
            match classes.last_mut() {
                Some(class) if d - leader <= self.slack(leader) => class.push(y),
                _ => {
                    classes.push(vec![y]);
                    leader = d;
                }
            }
        }
        classes
    }

    /// `d(x,y) ≤ r` up to the tie tolerance.
    #[inline]
    pub fn within(&self, x: ObjectId, y: ObjectId, r: f64) -> bool {
        self.dist(x, y) <= r + self.slack(r)
    }

    /// Checks symmetry, identity and the triangle inequality; exhaustive for
    /// small spaces and sampled (seeded) for larger ones.
    pub fn validate_metric(&self) -> std::result::Result<(), MetricViolation> {
        self.validate_with(|s, x, y, z| {
            let lhs = s.dist(x, z);
            let rhs = s.dist(x, y) + s.dist(y, z);
            lhs <= rhs + s.slack(rhs).max(1e-12 * rhs)
        })
    }

    /// Checks `d(x,z) ≤ max(d(x,y), d(y,z))` on top of the metric axioms.
    pub fn validate_ultrametric(&self) -> std::result::Result<(), MetricViolation> {
        self.validate_metric()?;
        self.validate_with(|s, x, y, z| s.dist(x, z) <= s.dist(x, y).max(s.dist(y, z)))
    }

    fn validate_with<F>(&self, ok: F) -> std::result::Result<(), MetricViolation>
    where
        F: Fn(&Self, ObjectId, ObjectId, ObjectId) -> bool + Sync,
    {
        let n = self.n;
        for x in self.ids() {
            if self.dist(x, x) != 0.0 {
                return Err(MetricViolation { x, y: x, z: x });
            }
        }
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            let first = (0..n).into_par_iter().find_map_first(|i| {
                let x = ObjectId::new(i);
                for y in self.ids() {
                    let dxy = self.dist(x, y);
                    if dxy < 0.0 || dxy != self.dist(y, x) {
                        return Some(MetricViolation { x, y, z: y });
                    }
                    for z in self.ids() {
                        if !ok(self, x, y, z) {
                            return Some(MetricViolation { x, y, z });
                        }
                    }
                }
                None
            });
            return first.map_or(Ok(()), Err);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_7e57);
        for _ in 0..SAMPLED_TRIPLES {
            let x = ObjectId::new(rng.random_range(0..n));
            let y = ObjectId::new(rng.random_range(0..n));
            let z = ObjectId::new(rng.random_range(0..n));
            let dxy = self.dist(x, y);
            if dxy < 0.0 || dxy != self.dist(y, x) || !ok(self, x, y, z) {
                return Err(MetricViolation { x, y, z });
            }
        }
        Ok(())
    }
}

/// `σ(B_x(r))`: mass of the closed ball of radius `r` around `x`.
pub fn ball_mass(sigma: &Distribution, space: &MetricSpace, x: ObjectId, r: f64) -> Result<f64> {
    space.check(x)?;
    if r.is_nan() || r < 0.0 {
        return Err(domain(format!("ball radius must be non-negative, got {r}")));
    }
    Ok(sigma
        .support()
        .iter()
        .filter(|(y, _)| space.within(x, *y, r))
        .map(|(_, p)| p)
        .sum())
}

/// `r_x(y) = μ(B_x(d(x,y)))`.
pub fn rank(mu: &Distribution, space: &MetricSpace, x: ObjectId, y: ObjectId) -> Result<f64> {
    let d = space.distance(x, y)?;
    ball_mass(mu, space, x, d)
}

/// Sorted distances from one center to the support of a distribution, with
/// cumulative masses; answers ball-mass queries by binary search.
pub(crate) struct BallProfile {
    distances: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BallProfile {
    pub(crate) fn new(sigma: &Distribution, space: &MetricSpace, x: ObjectId) -> Self {
        Self::scaled(sigma, space, x, 1.0)
    }

    /// Profile of `scale·σ`.
    pub(crate) fn scaled(sigma: &Distribution, space: &MetricSpace, x: ObjectId, scale: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> =
            sigma.support().iter().map(|&(y, p)| (space.dist(x, y), p * scale)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let (distances, cumulative) = pairs
            .into_iter()
            .map(|(d, p)| {
                acc += p;
                (d, acc)
            })
            .unzip();
        BallProfile { distances, cumulative }
    }

    pub(crate) fn mass(&self, space: &MetricSpace, r: f64) -> f64 {
        let limit = r + space.slack(r);
        let k = self.distances.partition_point(|&d| d <= limit);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

/// Smallest `c` with `σ(B_x(2r)) ≤ c·σ(B_x(r))` for every `x` in the support
/// and every `r ≥ 0`.
///
/// Both ball masses are right-continuous step functions of `r` that jump only
/// at `r = d` or `r = d/2` for distances `d` from `x`, so evaluating the ratio
/// at those critical radii is exact. Masses are rescaled so the lightest
/// object weighs 1, which keeps uniform and dyadic ratios free of rounding.
pub fn doubling_constant(sigma: &Distribution, space: &MetricSpace) -> Result<f64> {
    for (x, _) in sigma.support() {
        space.check(*x)?;
    }
    let scale = 1.0 / sigma.support().iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let worst = sigma
        .support()
        .par_iter()
        .map(|&(x, _)| {
            let profile = BallProfile::scaled(sigma, space, x, scale);
            let mut radii: Vec<f64> = space.ids().map(|y| space.dist(x, y)).collect();
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            let mut worst = 1.0f64;
            for &d in &radii {
                for r in [d, d / 2.0] {
                    let inner = profile.mass(space, r);
                    let outer = profile.mass(space, 2.0 * r);
                    worst = worst.max(outer / inner);
                }
            }
            worst
        })
        .reduce(|| 1.0, f64::max);
    Ok(worst)
}
