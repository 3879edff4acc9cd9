//! Comparison-oracle content search and one-shortcut navigable graphs under
//! heterogeneous demand.

pub mod dataset;
pub mod distribution;
pub mod error;
pub mod instances;
pub mod learning;
pub mod metric;
pub mod oracle;
pub mod policy;
pub mod rank;
pub mod search;
pub mod seed;
pub mod smallworld;
pub mod stats;

pub use dataset::Dataset;
pub use distribution::{Demand, Distribution, Sampler};
pub use error::{Error, Result};
pub use learning::{LearnedPolicy, LearnedState, OrderStore, TargetCounter};
pub use metric::{ball_mass, doubling_constant, rank, Closer, MetricSpace, Norm, ObjectId};
pub use oracle::{Oracle, OracleAnswer, OracleConfig, SimulatedOracle, TiePolicy};
pub use policy::{NonMetricPolicy, PolicyKind, RankPolicy, SelectionPolicy, UniformPolicy};
pub use rank::RankTable;
pub use search::{CostEstimate, SearchOutcome, Step, Termination, Trials};
pub use seed::{SeedStream, SimRng};
pub use smallworld::{GridSpec, NavGraph};
pub use stats::Welford;
