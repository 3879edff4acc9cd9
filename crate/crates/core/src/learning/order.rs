use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::metric::ObjectId;

/// Ordered partition of every object except the reference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    classes: Vec<Vec<ObjectId>>,
    position: Vec<usize>,
}

impl Partition {
    pub fn classes(&self) -> &[Vec<ObjectId>] {
        &self.classes
    }

    /// Index of the class holding `x`; `None` for the reference object.
    pub fn position(&self, x: ObjectId) -> Option<usize> {
        self.position.get(x.index()).copied().filter(|&p| p != usize::MAX)
    }
}

/// Learned order of all objects by similarity to one reference object,
/// kept as a DAG over equivalence classes. Each class is named by its
/// smallest member.
#[derive(Debug)]
pub struct OrderStore {
    reference: ObjectId,
    class_of: Vec<usize>,
    members: Vec<Vec<ObjectId>>,
    succ: Vec<BTreeSet<usize>>,
    pred: Vec<BTreeSet<usize>>,
    partition: OnceLock<Partition>,
}

impl Clone for OrderStore {
    fn clone(&self) -> Self {
        OrderStore {
            reference: self.reference,
            class_of: self.class_of.clone(),
            members: self.members.clone(),
            succ: self.succ.clone(),
            pred: self.pred.clone(),
            partition: OnceLock::new(),
        }
    }
}

impl PartialEq for OrderStore {
    fn eq(&self, other: &Self) -> bool {
        self.reference == other.reference && self.class_of == other.class_of && self.succ == other.succ
    }
}

/// Canonical serialized form: non-singleton classes and edges between class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub reference: ObjectId,
    pub classes: Vec<Vec<ObjectId>>,
    pub edges: Vec<(ObjectId, ObjectId)>,
}

impl OrderStore {
    pub fn new(n: usize, reference: ObjectId) -> Result<Self> {
        if reference.index() >= n {
            return Err(Error::InvalidId { id: reference, n });
        }
        Ok(OrderStore {
            reference,
            class_of: (0..n).collect(),
            members: (0..n).map(|i| vec![ObjectId::new(i)]).collect(),
            succ: vec![BTreeSet::new(); n],
            pred: vec![BTreeSet::new(); n],
            partition: OnceLock::new(),
        })
    }

    pub fn reference(&self) -> ObjectId {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(BTreeSet::len).sum()
    }

    pub fn same_class(&self, u: ObjectId, v: ObjectId) -> bool {
        self.class_of[u.index()] == self.class_of[v.index()]
    }

    fn check(&self, x: ObjectId) -> Result<()> {
        if x.index() >= self.len() {
            return Err(Error::InvalidId { id: x, n: self.len() });
        }
        if x == self.reference {
            return Err(domain(format!("{x} is the reference object of this order")));
        }
        Ok(())
    }

    /// Records `u ≼ v`. A constraint closing a cycle merges every class on it.
    pub fn add(&mut self, u: ObjectId, v: ObjectId) -> Result<()> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(domain("an order constraint needs two distinct objects"));
        }
        let (a, b) = (self.class_of[u.index()], self.class_of[v.index()]);
        if a == b || self.succ[a].contains(&b) {
            return Ok(());
        }
        let from_b = self.reachable(b, |s, x| &s.succ[x]);
        if from_b[a] {
            let to_a = self.reachable(a, |s, x| &s.pred[x]);
            let cycle: Vec<usize> = (0..self.len()).filter(|&x| from_b[x] && to_a[x]).collect();
            self.collapse(&cycle);
        } else {
            self.succ[a].insert(b);
            self.pred[b].insert(a);
        }
        self.partition = OnceLock::new();
        Ok(())
    }

    fn reachable(&self, start: usize, next: impl Fn(&Self, usize) -> &BTreeSet<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(x) = stack.pop() {
            for &y in next(self, x) {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    }

    fn collapse(&mut self, classes: &[usize]) {
        let rep = classes[0];
        let inside: BTreeSet<usize> = classes.iter().copied().collect();
        let mut succ = BTreeSet::new();
        let mut pred = BTreeSet::new();
        for &c in classes {
            succ.extend(std::mem::take(&mut self.succ[c]).into_iter().filter(|x| !inside.contains(x)));
            pred.extend(std::mem::take(&mut self.pred[c]).into_iter().filter(|x| !inside.contains(x)));
            if c != rep {
                let moved = std::mem::take(&mut self.members[c]);
                for m in &moved {
                    self.class_of[m.index()] = rep;
                }
                self.members[rep].extend(moved);
            }
        }
        self.members[rep].sort();
        for &s in &succ {
            let p = &mut self.pred[s];
            p.retain(|x| !inside.contains(x));
            p.insert(rep);
        }
        for &p in &pred {
            let s = &mut self.succ[p];
            s.retain(|x| !inside.contains(x));
            s.insert(rep);
        }
        self.succ[rep] = succ;
        self.pred[rep] = pred;
    }

    /// Topological order of the classes, breaking ties by smallest member id.
    pub fn partition(&self) -> &Partition {
        self.partition.get_or_init(|| self.compute_partition())
    }

    fn compute_partition(&self) -> Partition {
        let n = self.len();
        let is_rep = |c: usize| self.class_of[c] == c && c != self.reference.index();
        let mut indegree: Vec<usize> = self.pred.iter().map(BTreeSet::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&c| is_rep(c) && indegree[c] == 0).map(Reverse).collect();
        let mut classes = Vec::new();
        let mut position = vec![usize::MAX; n];
        while let Some(Reverse(c)) = ready.pop() {
            for m in &self.members[c] {
                position[m.index()] = classes.len();
            }
            classes.push(self.members[c].clone());
            for &s in &self.succ[c] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(Reverse(s));
                }
            }
        }
        Partition { classes, position }
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let classes = self.members.iter().filter(|m| m.len() > 1).cloned().collect();
        let edges = self
            .succ
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (ObjectId::new(a), ObjectId::new(b))))
            .collect();
        StoreSnapshot { reference: self.reference, classes, edges }
    }

    pub fn restore(n: usize, snap: &StoreSnapshot) -> Result<Self> {
        let mut store = OrderStore::new(n, snap.reference)?;
        for class in &snap.classes {
            for &m in class {
                store.check(m)?;
            }
            let reps: Vec<usize> = class.iter().map(|m| m.index()).collect();
            let mut sorted = reps.clone();
            sorted.sort();
            store.collapse(&sorted);
        }
        for &(a, b) in &snap.edges {
            store.check(a)?;
            store.check(b)?;
            let (a, b) = (store.class_of[a.index()], store.class_of[b.index()]);
            if a == b {
                return Err(Error::Format("snapshot edge inside a class".into()));
            }
            store.succ[a].insert(b);
            store.pred[b].insert(a);
        }
        if store.partition().classes().iter().map(Vec::len).sum::<usize>() != n - 1 {
            return Err(Error::Format("snapshot edges contain a cycle".into()));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<ObjectId> {
        v.iter().map(|&i| ObjectId(i)).collect()
    }

    fn classes(s: &OrderStore) -> Vec<Vec<ObjectId>> {
        s.partition().classes().to_vec()
    }

    // Objects 1,2,3 play a,b,c; 0 is the reference.
    #[test]
    fn chain_and_collapse() {
        let mut s = OrderStore::new(4, ObjectId(0)).unwrap();
        assert_eq!(classes(&s), vec![ids(&[1]), ids(&[2]), ids(&[3])]);
        s.add(ObjectId(1), ObjectId(2)).unwrap();
        s.add(ObjectId(2), ObjectId(3)).unwrap();
        assert_eq!(classes(&s), vec![ids(&[1]), ids(&[2]), ids(&[3])]);
        s.add(ObjectId(3), ObjectId(1)).unwrap();
        assert_eq!(classes(&s), vec![ids(&[1, 2, 3])]);

        let mut s = OrderStore::new(4, ObjectId(0)).unwrap();
        s.add(ObjectId(1), ObjectId(2)).unwrap();
        s.add(ObjectId(2), ObjectId(1)).unwrap();
        assert_eq!(classes(&s), vec![ids(&[1, 2]), ids(&[3])]);
        assert!(s.add(ObjectId(0), ObjectId(1)).is_err());
        assert!(s.add(ObjectId(1), ObjectId(1)).is_err());
    }

    #[test]
    fn unconstrained_objects_interleave_by_id() {
        let mut s = OrderStore::new(5, ObjectId(2)).unwrap();
        s.add(ObjectId(4), ObjectId(0)).unwrap();
        assert_eq!(classes(&s), vec![ids(&[1]), ids(&[3]), ids(&[4]), ids(&[0])]);
        let p = s.partition();
        assert_eq!(p.position(ObjectId(2)), None);
        assert_eq!(p.position(ObjectId(0)), Some(3));
    }

    #[test]
    fn repeated_constraints_are_idempotent() {
        let mut s = OrderStore::new(4, ObjectId(0)).unwrap();
        s.add(ObjectId(1), ObjectId(2)).unwrap();
        let before = s.clone();
        s.add(ObjectId(1), ObjectId(2)).unwrap();
        assert_eq!(s, before);
        assert_eq!(s.edge_count(), 1);
    }

    fn respects(s: &OrderStore, constraints: &[(ObjectId, ObjectId)]) -> bool {
        let p = s.partition();
        constraints.iter().all(|&(u, v)| p.position(u) <= p.position(v))
    }

    proptest! {
        #[test]
        fn partition_respects_constraints(n in 2usize..12, raw in prop::collection::vec((0u32..12, 0u32..12), 0..60)) {
            let mut s = OrderStore::new(n, ObjectId(0)).unwrap();
            let mut added = Vec::new();
            for (u, v) in raw {
                let (u, v) = (ObjectId(u % n as u32), ObjectId(v % n as u32));
                if u == v || u.0 == 0 || v.0 == 0 {
                    prop_assert!(s.add(u, v).is_err());
                    continue;
                }
                s.add(u, v).unwrap();
                added.push((u, v));
                prop_assert!(respects(&s, &added));
            }
            let p = s.partition();
            let mut all: Vec<ObjectId> = p.classes().iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (1..n).map(ObjectId::new).collect::<Vec<_>>());
            let back = OrderStore::restore(n, &s.snapshot()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.partition(), s.partition());
        }
    }
}
