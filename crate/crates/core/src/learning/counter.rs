use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::metric::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CounterMode {
    #[default]
    Raw,
    /// Exponentially weighted moving average with weight `alpha` on the newest slot.
    Ema { alpha: f64 },
}

pub const DEFAULT_EMA_ALPHA: f64 = 0.001;

/// Per-object target frequencies `μ̂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCounter {
    mode: CounterMode,
    counts: Vec<u64>,
    tau: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ema: Vec<f64>,
}

impl TargetCounter {
    pub fn new(n: usize, mode: CounterMode) -> Result<Self> {
        let ema = match mode {
            CounterMode::Raw => Vec::new(),
            CounterMode::Ema { alpha } if alpha > 0.0 && alpha <= 1.0 => vec![0.0; n],
            CounterMode::Ema { alpha } => return Err(domain(format!("EMA weight must lie in (0,1], got {alpha}"))),
        };
        Ok(TargetCounter { mode, counts: vec![0; n], tau: 0, ema })
    }

    pub fn raw(n: usize) -> Self {
        TargetCounter::new(n, CounterMode::Raw).expect("raw counters are always valid")
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn mode(&self) -> CounterMode {
        self.mode
    }

    /// Completed timeslots.
    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn count(&self, x: ObjectId) -> u64 {
        self.counts[x.index()]
    }

    pub fn record(&mut self, t: ObjectId) -> Result<()> {
        if t.index() >= self.counts.len() {
            return Err(crate::Error::InvalidId { id: t, n: self.counts.len() });
        }
        self.counts[t.index()] += 1;
        self.tau += 1;
        if let CounterMode::Ema { alpha } = self.mode {
            for e in &mut self.ema {
                *e *= 1.0 - alpha;
            }
            self.ema[t.index()] += alpha;
        }
        Ok(())
    }

    /// Dense `μ̂`, or `None` before the first observation.
    pub fn estimate(&self) -> Option<Vec<f64>> {
        if self.tau == 0 {
            return None;
        }
        Some(match self.mode {
            CounterMode::Raw => self.counts.iter().map(|&c| c as f64 / self.tau as f64).collect(),
            CounterMode::Ema { .. } => {
                let total: f64 = self.ema.iter().sum();
                self.ema.iter().map(|e| e / total).collect()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_frequencies() {
        let mut c = TargetCounter::raw(3);
        assert_eq!(c.estimate(), None);
        for t in [0, 0, 1] {
            c.record(ObjectId(t)).unwrap();
        }
        let mu = c.estimate().unwrap();
        assert!((mu[0] - 2.0 / 3.0).abs() < 1e-15 && (mu[1] - 1.0 / 3.0).abs() < 1e-15 && mu[2] == 0.0);
        assert_eq!(c.counts.iter().sum::<u64>(), c.tau());
        assert!(c.record(ObjectId(3)).is_err());
    }

    #[test]
    fn ema_tracks_recent_targets() {
        let mut c = TargetCounter::new(2, CounterMode::Ema { alpha: 0.1 }).unwrap();
        for _ in 0..200 {
            c.record(ObjectId(0)).unwrap();
        }
        for _ in 0..200 {
            c.record(ObjectId(1)).unwrap();
        }
        let mu = c.estimate().unwrap();
        assert!(mu[1] > 0.99);
        assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(TargetCounter::new(2, CounterMode::Ema { alpha: 0.0 }).is_err());
    }
}
