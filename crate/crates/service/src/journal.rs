//! Append-only log of completed sessions plus periodic snapshots of the
//! learned state. Booting reloads the snapshot and replays later events.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cmpsearch::learning::StateSnapshot;
use cmpsearch::{Error, LearnedState, ObjectId, Result, Step};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// A finished session as written to the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub seq: u64,
    pub dataset_id: String,
    pub target: ObjectId,
    pub history: Vec<Step>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    /// Sequence number of the last event folded into `datasets`.
    pub seq: u64,
    pub datasets: BTreeMap<String, StateSnapshot>,
}

pub struct Journal {
    dir: PathBuf,
    log: File,
    seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
}

/// Folds one completion into the learned state of its dataset.
pub fn apply(catalog: &Catalog, event: &Completion) -> Result<()> {
    let entry = catalog
        .get(&event.dataset_id)
        .ok_or_else(|| Error::Format(format!("event {} names unknown dataset {}", event.seq, event.dataset_id)))?;
    let mut state = entry.learned.write().unwrap_or_else(|e| e.into_inner());
    state.complete(event.target, &event.history)?;
    Ok(())
}

fn read_events(path: &Path) -> Result<Vec<Completion>> {
    let Ok(file) = File::open(path) else { return Ok(Vec::new()) };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (k, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            // A torn final line is what an interrupted append leaves behind.
            Err(_) if k + 1 == lines.len() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(events)
}

impl Journal {
    /// Restores every dataset's learned state from `dir` and opens the log for appending.
    pub fn open(dir: impl Into<PathBuf>, catalog: &Catalog, snapshot_every: u64) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let snapshot: SnapshotFile = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => SnapshotFile::default(),
            Err(e) => return Err(e.into()),
        };
        for (id, snap) in &snapshot.datasets {
            let entry = catalog.get(id).ok_or_else(|| Error::Format(format!("snapshot names unknown dataset {id}")))?;
            *entry.learned.write().unwrap_or_else(|e| e.into_inner()) = LearnedState::restore(snap)?;
        }
        let mut seq = snapshot.seq;
        let mut since_snapshot = 0;
        for event in read_events(&dir.join(EVENTS_FILE))? {
            if event.seq > snapshot.seq {
                apply(catalog, &event)?;
                since_snapshot += 1;
            }
            seq = seq.max(event.seq);
        }
        let log = OpenOptions::new().create(true).append(true).open(dir.join(EVENTS_FILE))?;
        Ok(Journal { dir, log, seq, snapshot_every, since_snapshot })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Sequence number the next event will carry.
    pub fn next_seq(&self) -> u64 {
        self.seq + 1
    }

    /// Appends an already-applied completion, snapshotting when due.
    pub fn record(&mut self, event: &Completion, catalog: &Catalog) -> Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.sync_data()?;
        self.seq = event.seq;
        self.since_snapshot += 1;
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.snapshot(catalog)?;
        }
        Ok(())
    }

    /// Writes the current learned state atomically.
    pub fn snapshot(&mut self, catalog: &Catalog) -> Result<()> {
        let datasets = catalog
            .entries()
            .map(|e| (e.id.clone(), e.learned.read().unwrap_or_else(|p| p.into_inner()).snapshot()))
            .collect();
        let file = SnapshotFile { seq: self.seq, datasets };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&file)?)?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
