use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use cmpsearch::{Error, LearnedPolicy, ObjectId, Result, SelectionPolicy, SimRng, Step, UniformPolicy};
use serde::{Deserialize, Serialize};

use crate::catalog::Entry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Found,
    Abandoned,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Rank-proportional proposals under the dataset's known demand.
    Exact,
    /// Proposals from the learned state shared by all sessions on the dataset.
    #[default]
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Current,
    Proposed,
}

/// One search driven by a person. `history` holds every answered pair and,
/// once found, the final pair, so its length is the session cost.
pub struct Session {
    pub id: String,
    pub entry: Arc<Entry>,
    pub mode: PolicyMode,
    pub epsilon: f64,
    pub current: ObjectId,
    pub proposed: ObjectId,
    pub history: Vec<Step>,
    pub shown: BTreeSet<ObjectId>,
    pub status: Status,
    pub target: Option<ObjectId>,
    rng: SimRng,
    touched: Instant,
}

impl Session {
    /// Starts at a uniformly drawn source with a first proposal.
    pub fn start(id: String, entry: Arc<Entry>, mode: PolicyMode, epsilon: f64, mut rng: SimRng) -> Result<Self> {
        use rand::Rng;
        let n = entry.len();
        let current = ObjectId::new(rng.random_range(0..n));
        let mut s = Session {
            id,
            entry,
            mode,
            epsilon,
            current,
            proposed: current,
            history: Vec::new(),
            shown: BTreeSet::from([current]),
            status: Status::Active,
            target: None,
            rng,
            touched: Instant::now(),
        };
        s.draw()?;
        Ok(s)
    }

    fn draw(&mut self) -> Result<()> {
        let proposed = match self.mode {
            PolicyMode::Exact => match self.entry.exact.propose(self.current, &mut self.rng) {
                Err(Error::NoCandidates(_)) => UniformPolicy::new(self.entry.len()).propose(self.current, &mut self.rng)?,
                other => other?,
            },
            PolicyMode::Learned => {
                let state = self.entry.learned.read().unwrap_or_else(|e| e.into_inner());
                LearnedPolicy::new(&state, self.epsilon)?.propose(self.current, &mut self.rng)?
            }
        };
        self.proposed = proposed;
        self.shown.insert(proposed);
        Ok(())
    }

    pub fn cost(&self) -> u64 {
        self.history.len() as u64
    }

    /// Marks an idle active session abandoned; returns whether it was.
    pub fn expire(&mut self, timeout: std::time::Duration) -> bool {
        if self.status == Status::Active && self.touched.elapsed() > timeout {
            self.status = Status::Abandoned;
            return true;
        }
        false
    }

    pub fn answer(&mut self, choice: Choice) -> Result<()> {
        let winner = match choice {
            Choice::Current => self.current,
            Choice::Proposed => self.proposed,
        };
        self.history.push(Step { current: self.current, proposed: self.proposed, winner });
        self.current = winner;
        self.touched = Instant::now();
        self.draw()
    }

    /// Ends the search at `object`, which must have been shown. Returns the
    /// history to fold into the learned state.
    pub fn finish(&mut self, object: ObjectId) -> std::result::Result<&[Step], String> {
        if !self.shown.contains(&object) {
            return Err(format!("object {} was never shown in this session", object.0));
        }
        if object == self.current || object == self.proposed {
            self.history.push(Step { current: self.current, proposed: self.proposed, winner: object });
        }
        self.status = Status::Found;
        self.target = Some(object);
        self.touched = Instant::now();
        Ok(&self.history)
    }
}
