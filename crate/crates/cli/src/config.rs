//! Experiment configuration: a TOML file, command-line flags layered on top,
//! and the instance it describes.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use cmpsearch::instances::{self, Dissimilarity, HierarchicalSpec, SIZE_GUARD};
use cmpsearch::learning::CounterMode;
use cmpsearch::smallworld::{grid_space, ShortcutMode};
use cmpsearch::{Dataset, Demand, GridSpec, MetricSpace, ObjectId, PolicyKind, TiePolicy};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissimilarityFamily {
    Random,
    Distorted,
    SquaredEuclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Lattice with local edges to every node within L1 distance `radius`.
    /// `drop_edges` removes local edges in both directions.
    Grid {
        sides: Vec<usize>,
        #[serde(default = "default_radius")]
        radius: u32,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        drop_edges: Vec<(u32, u32)>,
    },
    Line {
        coordinates: Vec<f64>,
    },
    Hierarchical {
        branching: usize,
        depth: usize,
    },
    /// Points in the unit cube, Zipf target popularity, uniform sources.
    Random {
        n: usize,
        dims: usize,
        skew: f64,
    },
    Dissimilarity {
        family: DissimilarityFamily,
        n: usize,
        #[serde(default = "default_stretch")]
        stretch: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_radius() -> u32 {
    1
}

fn default_stretch() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    /// Master seed; every random choice derives from it.
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub tie_policy: TiePolicy,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Proposals per query; above 1 uses the proximity oracle.
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default = "default_timeslots")]
    pub timeslots: u64,
    #[serde(default)]
    pub shortcuts: ShortcutMode,
    #[serde(default)]
    pub counter: CounterMode,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

fn default_policy() -> PolicyKind {
    PolicyKind::ExactRank
}

fn default_trials() -> u64 {
    1_000
}

fn default_epsilon() -> f64 {
    cmpsearch::learning::DEFAULT_EPSILON
}

fn default_width() -> usize {
    1
}

fn default_timeslots() -> u64 {
    10_000
}

impl ExperimentConfig {
    /// Defaults for everything but the instance and seed.
    pub fn new(instance: InstanceSpec, seed: u64) -> Self {
        ExperimentConfig {
            instance,
            seed,
            policy: default_policy(),
            tie_policy: TiePolicy::default(),
            trials: default_trials(),
            epsilon: default_epsilon(),
            width: default_width(),
            cap: None,
            timeslots: default_timeslots(),
            shortcuts: ShortcutMode::default(),
            counter: CounterMode::default(),
            output: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(self.width >= 1, "width must be at least 1");
        ensure!(self.epsilon > 0.0 && self.epsilon <= 1.0, "epsilon must lie in (0,1], got {}", self.epsilon);
        if let InstanceSpec::File { path } = &self.instance {
            ensure!(path.exists(), "dataset file {} does not exist", path.display());
        }
        Ok(())
    }
}

/// A built instance: geometry, demand, and local edges when it is a lattice.
pub struct Instance {
    pub space: Arc<MetricSpace>,
    pub demand: Demand,
    pub local: Option<Vec<Vec<ObjectId>>>,
    pub hierarchical: Option<HierarchicalSpec>,
}

impl InstanceSpec {
    pub fn build(&self, seed: u64) -> Result<Instance> {
        let plain = |space: MetricSpace, demand: Demand| Instance { space: Arc::new(space), demand, local: None, hierarchical: None };
        Ok(match self {
            InstanceSpec::Grid { sides, radius, drop_edges } => {
                let spec = GridSpec::new(sides.clone()).with_radius(*radius);
                ensure!(spec.len() <= SIZE_GUARD, "grid of {} nodes exceeds the size guard", spec.len());
                let (space, mut local) = grid_space(&spec)?;
                for &(a, b) in drop_edges {
                    ensure!((a as usize) < space.len() && (b as usize) < space.len(), "dropped edge ({a},{b}) is out of range");
                    local[a as usize].retain(|&y| y.0 != b);
                    local[b as usize].retain(|&y| y.0 != a);
                }
                let demand = Demand::uniform(space.len())?;
                Instance { space: Arc::new(space), demand, local: Some(local), hierarchical: None }
            }
            InstanceSpec::Line { coordinates } => {
                let (space, demand) = instances::line(coordinates)?;
                plain(space, demand)
            }
            InstanceSpec::Hierarchical { branching, depth } => {
                let spec = HierarchicalSpec::new(*branching, *depth);
                let (space, mu) = instances::build_hierarchical_space(&spec, SIZE_GUARD)?;
                let demand = Demand::product(mu.clone(), mu);
                Instance { space: Arc::new(space), demand, local: None, hierarchical: Some(spec) }
            }
            InstanceSpec::Random { n, dims, skew } => {
                let (space, demand) = instances::random_instance(*n, *dims, *skew, seed)?;
                plain(space, demand)
            }
            InstanceSpec::Dissimilarity { family, n, stretch } => {
                let family = match family {
                    DissimilarityFamily::Random => Dissimilarity::Random,
                    DissimilarityFamily::Distorted => Dissimilarity::Distorted { stretch: *stretch },
                    DissimilarityFamily::SquaredEuclidean => Dissimilarity::SquaredEuclidean,
                };
                let (space, demand) = instances::dissimilarity_instance(family, *n, seed)?;
                plain(space, demand)
            }
            InstanceSpec::File { path } => {
                let ds = Dataset::load(path).with_context(|| format!("loading {}", path.display()))?;
                Instance { space: ds.space, demand: ds.demand, local: None, hierarchical: None }
            }
        })
    }

    /// Parses `32x32`, `8x8x8` style grid sizes.
    pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
        text.split('x').map(|s| s.trim().parse::<usize>().with_context(|| format!("bad grid size {text:?}"))).collect()
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',').map(|s| s.trim().parse::<T>().with_context(|| format!("bad list item {s:?}"))).collect()
}

/// Instance given on the command line as `kind:args`, for example
/// `grid:32x32`, `line:0,1,3`, `hierarchical:4,5`, `random:200,2,1.0`,
/// `dissimilarity:distorted,40` or `file:data.json`.
pub fn parse_instance(text: &str) -> Result<InstanceSpec> {
    let (kind, args) = text.split_once(':').unwrap_or((text, ""));
    Ok(match kind {
        "grid" => InstanceSpec::Grid { sides: InstanceSpec::parse_grid(args)?, radius: 1, drop_edges: Vec::new() },
        "line" => InstanceSpec::Line { coordinates: parse_list(args)? },
        "hierarchical" => match parse_list::<usize>(args)?[..] {
            [branching, depth] => InstanceSpec::Hierarchical { branching, depth },
            _ => bail!("hierarchical instances take branching,depth"),
        },
        "random" => {
            let parts: Vec<&str> = args.split(',').collect();
            ensure!(parts.len() == 3, "random instances take n,dims,skew");
            InstanceSpec::Random { n: parts[0].trim().parse()?, dims: parts[1].trim().parse()?, skew: parts[2].trim().parse()? }
        }
        "dissimilarity" => {
            let (family, n) = args.split_once(',').context("dissimilarity instances take family,n")?;
            let family = serde_json::from_value(serde_json::Value::String(family.trim().to_string()))
                .with_context(|| format!("unknown dissimilarity family {family:?}"))?;
            InstanceSpec::Dissimilarity { family, n: n.trim().parse()?, stretch: default_stretch() }
        }
        "file" => InstanceSpec::File { path: args.into() },
        _ => bail!("unknown instance kind {kind:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 7
            trials = 100
            [instance]
            kind = "grid"
            sides = [4, 4]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.policy, PolicyKind::ExactRank);
        assert_eq!(cfg.instance, InstanceSpec::Grid { sides: vec![4, 4], radius: 1, drop_edges: vec![] });
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("[instance]\nkind = \"line\"\ncoordinates = [0.0, 1.0]").is_err());
        assert!(ExperimentConfig::from_toml("seed = 1\ntrials = 0\n[instance]\nkind = \"line\"\ncoordinates = [0.0, 1.0]").is_err());
        assert!(ExperimentConfig::from_toml("seed = 1\nbogus = 2\n[instance]\nkind = \"line\"\ncoordinates = [0.0, 1.0]").is_err());
        assert!(ExperimentConfig::from_toml("seed = 1\n[instance]\nkind = \"file\"\npath = \"/nonexistent.json\"").is_err());
    }

    #[test]
    fn instance_flags() {
        assert_eq!(parse_instance("grid:32x32").unwrap(), InstanceSpec::Grid { sides: vec![32, 32], radius: 1, drop_edges: vec![] });
        assert_eq!(parse_instance("hierarchical:4,5").unwrap(), InstanceSpec::Hierarchical { branching: 4, depth: 5 });
        assert_eq!(parse_instance("line:0,1,3").unwrap(), InstanceSpec::Line { coordinates: vec![0.0, 1.0, 3.0] });
        assert!(matches!(
            parse_instance("dissimilarity:squared_euclidean,60").unwrap(),
            InstanceSpec::Dissimilarity { family: DissimilarityFamily::SquaredEuclidean, n: 60, .. }
        ));
        assert!(parse_instance("torus:3").is_err());
        assert!(parse_instance("random:1,2").is_err());
    }
}
