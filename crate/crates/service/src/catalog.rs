//! Datasets offered to sessions: two bundled sets plus any JSON dataset files
//! found in a directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use cmpsearch::dataset::{Display, DisplayKind};
use cmpsearch::learning::CounterMode;
use cmpsearch::{Dataset, Demand, LearnedState, MetricSpace, Norm, ObjectId, RankPolicy};
use serde::Serialize;

/// One dataset with its exact policy and its shared learned state.
pub struct Entry {
    pub id: String,
    pub dataset: Dataset,
    pub exact: RankPolicy,
    pub learned: RwLock<LearnedState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub id: String,
    pub name: String,
    pub size: usize,
    pub display_kind: DisplayKind,
}

impl Entry {
    pub fn new(id: impl Into<String>, dataset: Dataset) -> cmpsearch::Result<Self> {
        let mu = dataset.demand.target_distribution();
        let exact = RankPolicy::new(dataset.space.clone(), mu)?;
        let learned = RwLock::new(LearnedState::new(dataset.space.len(), CounterMode::Raw)?);
        Ok(Entry { id: id.into(), dataset, exact, learned })
    }

    pub fn len(&self) -> usize {
        self.dataset.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn info(&self) -> DatasetInfo {
        let display_kind = self.dataset.display.as_ref().and_then(|d| d.first()).map_or(DisplayKind::Point, |d| d.kind);
        DatasetInfo { id: self.id.clone(), name: self.dataset.name.clone(), size: self.len(), display_kind }
    }

    /// Display payload of an object; objects without one show their coordinates or id.
    pub fn display(&self, x: ObjectId) -> Display {
        if let Some(d) = self.dataset.display.as_ref().and_then(|d| d.get(x.index())) {
            return d.clone();
        }
        let payload = match self.dataset.space.coordinates(x) {
            Some(c) => c.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            None => x.0.to_string(),
        };
        Display { kind: DisplayKind::Point, payload }
    }
}

#[derive(Default)]
pub struct Catalog {
    entries: BTreeMap<String, Arc<Entry>>,
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog::default()
    }

    /// The color-swatch and point-grid datasets.
    pub fn bundled() -> Self {
        let mut c = Catalog::empty();
        c.insert(Entry::new("colors", color_swatches()).expect("bundled colors are valid"));
        c.insert(Entry::new("points", point_grid(12)).expect("bundled points are valid"));
        c
    }

    /// Adds every `*.json` dataset in `dir`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> cmpsearch::Result<()> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            self.insert(Entry::new(id, Dataset::load(&path)?)?);
        }
        Ok(())
    }

    pub fn insert(&mut self, entry: Entry) {
        self.entries.insert(entry.id.clone(), Arc::new(entry));
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Entry>> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Arc<Entry>> {
        self.entries.values()
    }

    pub fn list(&self) -> Vec<DatasetInfo> {
        self.entries.values().map(|e| e.info()).collect()
    }
}

/// sRGB channel in `[0,255]` to CIELAB under D65.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = |c: u8| {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let [r, g, b] = rgb.map(lin);
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let f = |t: f64| if t > 216.0 / 24389.0 { t.cbrt() } else { (24389.0 / 27.0 * t + 16.0) / 116.0 };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// 216 web-safe colors embedded in CIELAB with the Euclidean metric.
pub fn color_swatches() -> Dataset {
    let levels = [0u8, 51, 102, 153, 204, 255];
    let mut coords = Vec::new();
    let mut display = Vec::new();
    for &r in &levels {
        for &g in &levels {
            for &b in &levels {
                coords.push(srgb_to_lab([r, g, b]).to_vec());
                display.push(Display { kind: DisplayKind::Color, payload: format!("#{r:02x}{g:02x}{b:02x}") });
            }
        }
    }
    let space = MetricSpace::from_points(coords, Norm::Euclidean).expect("finite coordinates");
    let n = space.len();
    Dataset { name: "Color swatches".into(), space: Arc::new(space), demand: Demand::uniform(n).expect("n > 0"), display: Some(display) }
}

/// `side × side` lattice points under the Manhattan metric.
pub fn point_grid(side: usize) -> Dataset {
    let coords: Vec<Vec<f64>> = (0..side * side).map(|i| vec![(i % side) as f64, (i / side) as f64]).collect();
    let display = coords
        .iter()
        .map(|c| Display { kind: DisplayKind::Point, payload: format!("{},{}", c[0], c[1]) })
        .collect();
    let space = MetricSpace::from_points(coords, Norm::Manhattan).expect("finite coordinates");
    let n = space.len();
    Dataset { name: format!("{side}x{side} points"), space: Arc::new(space), demand: Demand::uniform(n).expect("n > 0"), display: Some(display) }
}
