//! Lazily materialised rank rows `r_x(·)` for a fixed target distribution.

use std::sync::{Arc, OnceLock};

use crate::distribution::Distribution;
use crate::error::Result;
use crate::metric::{BallProfile, MetricSpace, ObjectId};

/// Caches `r_x(y) = μ(B_x(d(x,y)))` one row per center `x`, built on first use.
/// Safe to share across threads.
pub struct RankTable {
    space: Arc<MetricSpace>,
    mu: Distribution,
    rows: Vec<OnceLock<Box<[f64]>>>,
}

impl RankTable {
    pub fn new(space: Arc<MetricSpace>, mu: Distribution) -> Result<Self> {
        for id in mu.ids() {
            space.check(id)?;
        }
        let rows = (0..space.len()).map(|_| OnceLock::new()).collect();
        Ok(RankTable { space, mu, rows })
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    pub fn mu(&self) -> &Distribution {
        &self.mu
    }

    /// `r_x(y)` for every object `y`.
    pub fn row(&self, x: ObjectId) -> &[f64] {
        self.rows[x.index()].get_or_init(|| {
            let profile = BallProfile::new(&self.mu, &self.space, x);
            self.space
                .ids()
                .map(|y| profile.mass(&self.space, self.space.dist(x, y)))
                .collect()
        })
    }

    pub fn rank(&self, x: ObjectId, y: ObjectId) -> f64 {
        self.row(x)[y.index()]
    }

    /// Phase index `max(0, floor(log2(r_t(x)/μ(t))))` of `current` relative to `target`.
    pub fn phase(&self, target: ObjectId, current: ObjectId) -> Option<u32> {
        let mu_t = self.mu.mass(target);
        if mu_t <= 0.0 {
            return None;
        }
        let ratio = self.rank(target, current) / mu_t;
        Some(ratio.log2().floor().max(0.0) as u32)
    }
}
