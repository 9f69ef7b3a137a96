//! The bounded table mapping agent ids to their parameters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::grid::{AgentId, NULL_AGENT};
use crate::mutators::MutatorConfig;

/// Parameters for one lineage: agent logic plus the mutator's own state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramEntry {
    pub logic: Vec<f64>,
    pub mutator_state: Vec<f64>,
}

impl ProgramEntry {
    pub fn new(logic: Vec<f64>, mutator: &MutatorConfig) -> Self {
        let mutator_state = mutator.initial_state(logic.len());
        Self {
            logic,
            mutator_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramStore {
    entries: BTreeMap<AgentId, ProgramEntry>,
    next_id: AgentId,
    capacity: usize,
}

impl ProgramStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            next_id: 1,
            capacity,
        }
    }

    /// A store holding `entry` under ids `1..=n`, matching blueprint seeds.
    pub fn with_seeds(capacity: usize, entry: &ProgramEntry, n: usize) -> Self {
        let mut store = Self::new(capacity);
        for _ in 0..n {
            store.entries.insert(store.next_id, entry.clone());
            store.next_id += 1;
        }
        store
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn get(&self, id: AgentId) -> Option<&ProgramEntry> {
        self.entries.get(&id)
    }

    pub fn insert(&mut self, id: AgentId, entry: ProgramEntry) {
        assert_ne!(id, NULL_AGENT, "id 0 is reserved");
        self.entries.insert(id, entry);
        self.next_id = self.next_id.max(id + 1);
    }

    /// Store `entry` under a fresh id, or return `None` when the table is full.
    pub fn mint(&mut self, entry: ProgramEntry) -> Option<AgentId> {
        if self.is_full() {
            return None;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.entries.insert(id, entry);
        Some(id)
    }

    /// Drop entries whose id no longer appears in the world.
    pub fn retain_live(&mut self, live: &BTreeSet<AgentId>) {
        self.entries.retain(|id, _| live.contains(id));
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, &ProgramEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mint_respects_capacity_and_gc() {
        let e = ProgramEntry::new(vec![1.0], &MutatorConfig::basic(0.1));
        let mut store = ProgramStore::with_seeds(3, &e, 1);
        assert_eq!(store.mint(e.clone()), Some(2));
        assert_eq!(store.mint(e.clone()), Some(3));
        assert_eq!(store.mint(e.clone()), None);
        store.retain_live(&[1, 3].into_iter().collect());
        assert_eq!(store.ids().collect::<Vec<_>>(), vec![1, 3]);
        // Ids are never reused.
        assert_eq!(store.mint(e), Some(4));
    }
}
