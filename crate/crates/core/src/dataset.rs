//! JSON dataset files: geometry, optional display payloads and demand.
//!
//! ```json
//! {
//!   "name": "line",
//!   "geometry": { "kind": "points", "metric": "manhattan", "coordinates": [[0], [1], [3]] },
//!   "display": [{ "kind": "point", "payload": "0" }, ...],
//!   "demand": { "kind": "pairs", "pairs": [[0, 2, 1.0]] }
//! }
//! ```
//!
//! `geometry.kind` is one of `points`, `matrix` (`distances`) or
//! `hierarchical` (`branching`, `depth`). `demand.kind` is `uniform`,
//! `pairs` or `product` (`source`, `target` weight vectors); weights are
//! normalized on load and `demand` defaults to uniform.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{Demand, Distribution};
use crate::error::{Error, Result};
use crate::metric::{Geometry, MetricSpace, Norm, ObjectId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometrySpec {
    Points { metric: Norm, coordinates: Vec<Vec<f64>> },
    Matrix { distances: Vec<Vec<f64>> },
    Hierarchical { branching: usize, depth: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayKind {
    Color,
    Point,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Display {
    pub kind: DisplayKind,
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandSpec {
    Uniform,
    Pairs { pairs: Vec<(ObjectId, ObjectId, f64)> },
    Product { source: Vec<f64>, target: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub name: String,
    pub geometry: GeometrySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<Vec<Display>>,
    #[serde(default = "uniform_demand")]
    pub demand: DemandSpec,
}

fn uniform_demand() -> DemandSpec {
    DemandSpec::Uniform
}

/// A loaded dataset: validated space, demand and display payloads.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub space: Arc<MetricSpace>,
    pub demand: Demand,
    pub display: Option<Vec<Display>>,
}

fn dense(weights: &[f64]) -> Result<Distribution> {
    Distribution::from_weights(weights.iter().enumerate().map(|(i, &w)| (ObjectId::new(i), w)))
}

impl DatasetFile {
    pub fn build(&self) -> Result<Dataset> {
        let space = match &self.geometry {
            GeometrySpec::Points { metric, coordinates } => MetricSpace::from_points(coordinates.clone(), *metric)?,
            GeometrySpec::Matrix { distances } => MetricSpace::from_matrix(distances.clone())?,
            GeometrySpec::Hierarchical { branching, depth } => {
                let spec = crate::instances::HierarchicalSpec::new(*branching, *depth);
                crate::instances::build_hierarchical_space(&spec, crate::instances::SIZE_GUARD)?.0
            }
        };
        let n = space.len();
        if let Some(display) = &self.display {
            if display.len() != n {
                return Err(Error::Format(format!("{} display entries for {n} objects", display.len())));
            }
        }
        let demand = match &self.demand {
            DemandSpec::Uniform => Demand::uniform(n)?,
            DemandSpec::Pairs { pairs } => Demand::from_weights(pairs.iter().copied())?,
            DemandSpec::Product { source, target } => {
                if source.len() != n || target.len() != n {
                    return Err(Error::Format("product demand needs one weight per object".into()));
                }
                Demand::product(dense(source)?, dense(target)?)
            }
        };
        if demand.extent() > n {
            return Err(Error::Format(format!("demand references object {} of {n}", demand.extent() - 1)));
        }
        Ok(Dataset { name: self.name.clone(), space: Arc::new(space), demand, display: self.display.clone() })
    }
}

impl Dataset {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<DatasetFile>(text)?.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// File form of this dataset. Product demands are written densely.
    pub fn to_file(&self) -> DatasetFile {
        let n = self.space.len();
        let geometry = match self.space.geometry() {
            Geometry::Points { dim, coords, norm } => GeometrySpec::Points {
                metric: *norm,
                coordinates: coords.chunks(*dim).map(<[f64]>::to_vec).collect(),
            },
            Geometry::Matrix { distances } => GeometrySpec::Matrix { distances: distances.chunks(n).map(<[f64]>::to_vec).collect() },
            Geometry::Hierarchical { branching, depth } => GeometrySpec::Hierarchical { branching: *branching, depth: *depth },
        };
        let demand = match &self.demand {
            Demand::Pairs(pairs) => DemandSpec::Pairs { pairs: pairs.clone() },
            Demand::Product { source, target } => DemandSpec::Product { source: source.dense(n), target: target.dense(n) },
        };
        DatasetFile { name: self.name.clone(), geometry, display: self.display.clone(), demand }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("dataset serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"{
            "name": "line",
            "geometry": { "kind": "points", "metric": "manhattan", "coordinates": [[0], [1], [3]] },
            "demand": { "kind": "pairs", "pairs": [[0, 2, 2.0], [1, 2, 2.0]] }
        }"#;
        let d = Dataset::from_json(text).unwrap();
        assert_eq!(d.space.dist(ObjectId(0), ObjectId(2)), 3.0);
        assert_eq!(d.demand.probability(ObjectId(0), ObjectId(2)), 0.5);
        let again = Dataset::from_json(&d.to_json()).unwrap();
        assert_eq!(again.to_json(), d.to_json());
    }

    #[test]
    fn defaults_and_errors() {
        let d = Dataset::from_json(r#"{"name":"h","geometry":{"kind":"hierarchical","branching":2,"depth":3}}"#).unwrap();
        assert_eq!(d.space.len(), 8);
        assert!(d.demand.is_fully_supported(8));
        let bad = r#"{"name":"m","geometry":{"kind":"matrix","distances":[[0,1],[2,0]]}}"#;
        assert!(Dataset::from_json(bad).is_err());
        let out_of_range = r#"{"name":"p","geometry":{"kind":"points","metric":"euclidean","coordinates":[[0],[1]]},
            "demand":{"kind":"pairs","pairs":[[0,5,1]]}}"#;
        assert!(matches!(Dataset::from_json(out_of_range), Err(Error::Format(_))));
        let display = r##"{"name":"c","geometry":{"kind":"points","metric":"euclidean","coordinates":[[0],[1]]},
            "display":[{"kind":"color","payload":"#ff0000"}]}"##;
        assert!(matches!(Dataset::from_json(display), Err(Error::Format(_))));
    }
}
