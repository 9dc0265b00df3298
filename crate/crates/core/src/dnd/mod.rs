//! Differentiable neural dictionary.
//!
//! One key–value memory per action. Reads take the `p` nearest keys to a
//! query, weight them with the inverse kernel `1 / (‖h − h_i‖² + δ)` and
//! return the normalised weighted sum of their values. Writes either nudge the
//! value of an (almost) identical key or append a new entry, evicting the
//! least recently accessed one at capacity. Gradients of the read flow back to
//! the query, the neighbour values and the neighbour keys.

mod kdtree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::squared_distance;
use kdtree::{KdTree, PointSource};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DndError {
    #[error("action {action} out of range ({actions} actions)")]
    BadAction { action: usize, actions: usize },
    #[error("memory for action {0} is empty")]
    EmptyMemory(usize),
    #[error("expected a key of length {expected}, got {actual}")]
    KeyDimMismatch { expected: usize, actual: usize },
    #[error("write target {0} is not finite")]
    NonFiniteTarget(f64),
    #[error("neighbour set is stale: memory {action} changed since the lookup")]
    StaleLookup { action: usize },
    #[error("entry {id} out of range for action {action} ({len} entries)")]
    BadEntry { action: usize, id: usize, len: usize },
    #[error("gradient arrays disagree in length")]
    GradientShape,
    #[error("key gradients supplied but key updates are disabled")]
    KeyUpdatesDisabled,
    #[error("invalid dictionary config: {0}")]
    Config(String),
    #[error("index audit failed for action {action}: {reason}")]
    IndexCorrupt { action: usize, reason: String },
    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DndConfig {
    /// Entries per action.
    pub capacity: usize,
    /// Neighbours per lookup.
    pub neighbors: usize,
    /// Kernel constant δ.
    pub delta: f64,
    /// Squared distance under which a write updates an existing key.
    pub match_tol: f64,
    /// Tabular write rate α for `v ← v + α (target − v)`.
    pub write_lr: f64,
    /// Whether gradient updates move keys.
    pub key_updates: bool,
    /// With key updates off, drop key gradients instead of rejecting them.
    pub ignore_disabled_key_grads: bool,
}

impl Default for DndConfig {
    fn default() -> Self {
        Self {
            capacity: 5_000,
            neighbors: 10,
            delta: 1e-3,
            match_tol: 1e-9,
            write_lr: 0.1,
            key_updates: true,
            ignore_disabled_key_grads: false,
        }
    }
}

impl DndConfig {
    pub fn validate(&self) -> Result<(), DndError> {
        if self.capacity == 0 {
            return Err(DndError::Config("capacity must be positive".into()));
        }
        if self.neighbors == 0 {
            return Err(DndError::Config("neighbors must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(DndError::Config("delta must be positive".into()));
        }
        if self.match_tol.is_nan() || self.match_tol < 0.0 {
            return Err(DndError::Config("match_tol must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.write_lr) {
            return Err(DndError::Config("write_lr must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DndEntry {
    pub key: Vec<f64>,
    pub value: f64,
    pub last_access: u64,
    pub insert_step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteOutcome {
    Updated,
    Appended,
    AppendedWithEviction,
}

/// Result of one read. `generation` ties it to the memory state it was
/// computed against.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupResult {
    pub action: usize,
    pub neighbor_ids: Vec<usize>,
    pub kernel_values: Vec<f64>,
    pub weights: Vec<f64>,
    pub q_value: f64,
    generation: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LookupGradients {
    pub query: Vec<f64>,
    pub values: Vec<f64>,
    pub keys: Vec<Vec<f64>>,
}

/// Inverse kernel `1 / (‖a − b‖² + δ)`.
#[inline]
pub fn kernel(a: &[f64], b: &[f64], delta: f64) -> f64 {
    1.0 / (squared_distance(a, b) + delta)
}

#[derive(Clone, Debug)]
struct Memory {
    entries: Vec<DndEntry>,
    index: KdTree,
    generation: u64,
}

impl PointSource for Vec<DndEntry> {
    fn key(&self, entry: usize) -> &[f64] {
        &self[entry].key
    }
    fn insert_step(&self, entry: usize) -> u64 {
        self[entry].insert_step
    }
}

impl Memory {
    fn new(key_dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            index: KdTree::new(key_dim),
            generation: 0,
        }
    }

    fn maybe_rebuild(&mut self) {
        // rebuild once churn passes a quarter of the store
        if self.index.churn() * 4 > self.entries.len() {
            self.index.rebuild(&self.entries, self.entries.len());
        }
    }

    fn nearest(&self, query: &[f64], p: usize) -> Vec<usize> {
        self.index
            .nearest(&self.entries, query, p)
            .into_iter()
            .map(|c| c.entry as usize)
            .collect()
    }

    fn replace_key(&mut self, id: usize, key: Vec<f64>) {
        self.index.remove(id);
        self.entries[id].key = key;
        self.index.insert(id, &self.entries[id].key);
    }
}

#[derive(Clone, Debug)]
pub struct DndStore {
    config: DndConfig,
    key_dim: usize,
    memories: Vec<Memory>,
    clock: u64,
}

impl DndStore {
    pub fn new(actions: usize, key_dim: usize, config: DndConfig) -> Result<Self, DndError> {
        config.validate()?;
        if key_dim == 0 || actions == 0 {
            return Err(DndError::Config("key_dim and action count must be positive".into()));
        }
        Ok(Self {
            config,
            key_dim,
            memories: (0..actions).map(|_| Memory::new(key_dim)).collect(),
            clock: 0,
        })
    }

    pub fn config(&self) -> &DndConfig {
        &self.config
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn actions(&self) -> usize {
        self.memories.len()
    }

    pub fn len(&self, action: usize) -> usize {
        self.memories.get(action).map_or(0, |m| m.entries.len())
    }

    pub fn is_empty(&self, action: usize) -> bool {
        self.len(action) == 0
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.memories.iter().map(|m| m.entries.len()).collect()
    }

    pub fn entries(&self, action: usize) -> &[DndEntry] {
        &self.memories[action].entries
    }

    fn memory(&self, action: usize) -> Result<&Memory, DndError> {
        self.memories.get(action).ok_or(DndError::BadAction {
            action,
            actions: self.memories.len(),
        })
    }

    fn memory_mut(&mut self, action: usize) -> Result<&mut Memory, DndError> {
        let actions = self.memories.len();
        self.memories
            .get_mut(action)
            .ok_or(DndError::BadAction { action, actions })
    }

    fn check_key(&self, key: &[f64]) -> Result<(), DndError> {
        if key.len() != self.key_dim {
            return Err(DndError::KeyDimMismatch {
                expected: self.key_dim,
                actual: key.len(),
            });
        }
        Ok(())
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Indices of the `min(p, |M_a|)` nearest entries, ascending by squared
    /// distance, ties broken by lower insert step.
    pub fn knn(&self, action: usize, query: &[f64]) -> Result<Vec<usize>, DndError> {
        self.check_key(query)?;
        let mem = self.memory(action)?;
        if mem.entries.is_empty() {
            return Err(DndError::EmptyMemory(action));
        }
        Ok(mem.nearest(query, self.config.neighbors))
    }

    /// Read-only lookup. Does not update access times.
    pub fn lookup(&self, action: usize, query: &[f64]) -> Result<LookupResult, DndError> {
        let neighbor_ids = self.knn(action, query)?;
        let mem = &self.memories[action];
        let kernel_values: Vec<f64> = neighbor_ids
            .iter()
            .map(|&i| kernel(query, &mem.entries[i].key, self.config.delta))
            .collect();
        let total: f64 = kernel_values.iter().sum();
        let weights: Vec<f64> = kernel_values.iter().map(|k| k / total).collect();
        let q_value = weights
            .iter()
            .zip(&neighbor_ids)
            .map(|(w, &i)| w * mem.entries[i].value)
            .sum();
        Ok(LookupResult {
            action,
            neighbor_ids,
            kernel_values,
            weights,
            q_value,
            generation: mem.generation,
        })
    }

    /// Lookup that also marks the neighbours as recently used.
    pub fn lookup_and_touch(&mut self, action: usize, query: &[f64]) -> Result<LookupResult, DndError> {
        let result = self.lookup(action, query)?;
        self.touch(action, &result.neighbor_ids)?;
        Ok(result)
    }

    pub fn touch(&mut self, action: usize, ids: &[usize]) -> Result<(), DndError> {
        let stamp = self.tick();
        let mem = self.memory_mut(action)?;
        for &id in ids {
            let len = mem.entries.len();
            mem.entries
                .get_mut(id)
                .ok_or(DndError::BadEntry { action, id, len })?
                .last_access = stamp;
        }
        Ok(())
    }

    /// Q estimate for every action; empty memories read as 0.
    pub fn q_values(&self, query: &[f64]) -> Result<Vec<f64>, DndError> {
        (0..self.actions())
            .map(|a| {
                if self.is_empty(a) {
                    Ok(0.0)
                } else {
                    self.lookup(a, query).map(|r| r.q_value)
                }
            })
            .collect()
    }

    /// Gradients of `upstream · Q_a(h′)` with the neighbour set held fixed.
    ///
    /// With `S = Σ k_j`, `∂Q/∂k_i = (v_i − Q) / S` and
    /// `∂k_i/∂h′ = −2 (h′ − h′_i) k_i²`; the key gradient is the negation of
    /// the query term.
    pub fn lookup_gradients(
        &self,
        lookup: &LookupResult,
        query: &[f64],
        upstream: f64,
    ) -> Result<LookupGradients, DndError> {
        self.check_key(query)?;
        let mem = self.memory(lookup.action)?;
        if mem.generation != lookup.generation {
            return Err(DndError::StaleLookup { action: lookup.action });
        }
        let total: f64 = lookup.kernel_values.iter().sum();
        let mut grad_query = vec![0.0; self.key_dim];
        let mut grad_keys = Vec::with_capacity(lookup.neighbor_ids.len());
        let mut grad_values = Vec::with_capacity(lookup.neighbor_ids.len());
        for ((&id, &k), &w) in lookup
            .neighbor_ids
            .iter()
            .zip(&lookup.kernel_values)
            .zip(&lookup.weights)
        {
            let entry = &mem.entries[id];
            grad_values.push(upstream * w);
            let coeff = upstream * (entry.value - lookup.q_value) / total * 2.0 * k * k;
            let mut gk = vec![0.0; self.key_dim];
            for ((gq, g), (h, hi)) in grad_query
                .iter_mut()
                .zip(gk.iter_mut())
                .zip(query.iter().zip(&entry.key))
            {
                let term = coeff * (h - hi);
                *gq -= term;
                *g = term;
            }
            grad_keys.push(gk);
        }
        Ok(LookupGradients {
            query: grad_query,
            values: grad_values,
            keys: grad_keys,
        })
    }

    pub fn write(&mut self, action: usize, key: &[f64], target: f64, step: u64) -> Result<WriteOutcome, DndError> {
        self.check_key(key)?;
        if !target.is_finite() {
            return Err(DndError::NonFiniteTarget(target));
        }
        let capacity = self.config.capacity;
        let match_tol = self.config.match_tol;
        let lr = self.config.write_lr;
        let stamp = self.tick();
        let mem = self.memory_mut(action)?;

        if let Some(&nearest) = mem.nearest(key, 1).first() {
            let entry = &mut mem.entries[nearest];
            if squared_distance(&entry.key, key) <= match_tol {
                entry.value += lr * (target - entry.value);
                entry.last_access = stamp;
                mem.generation += 1;
                return Ok(WriteOutcome::Updated);
            }
        }

        let fresh = DndEntry {
            key: key.to_vec(),
            value: target,
            last_access: stamp,
            insert_step: step,
        };
        let outcome = if mem.entries.len() >= capacity {
            let victim = mem
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(i, e)| (e.last_access, *i))
                .map(|(i, _)| i)
                .expect("capacity is positive");
            mem.index.remove(victim);
            mem.entries[victim] = fresh;
            mem.index.insert(victim, &mem.entries[victim].key);
            WriteOutcome::AppendedWithEviction
        } else {
            mem.entries.push(fresh);
            let id = mem.entries.len() - 1;
            mem.index.insert(id, &mem.entries[id].key);
            WriteOutcome::Appended
        };
        mem.generation += 1;
        mem.maybe_rebuild();
        Ok(outcome)
    }

    /// Gradient-descent step on neighbour values and (optionally) keys.
    pub fn apply_gradient_updates(
        &mut self,
        action: usize,
        neighbor_ids: &[usize],
        grad_values: &[f64],
        grad_keys: Option<&[Vec<f64>]>,
        lr: f64,
    ) -> Result<(), DndError> {
        if grad_values.len() != neighbor_ids.len() || grad_keys.is_some_and(|g| g.len() != neighbor_ids.len()) {
            return Err(DndError::GradientShape);
        }
        let key_grads = match grad_keys {
            Some(g) if self.config.key_updates => Some(g),
            Some(_) if self.config.ignore_disabled_key_grads => None,
            Some(_) => return Err(DndError::KeyUpdatesDisabled),
            None => None,
        };
        let key_dim = self.key_dim;
        let mem = self.memory_mut(action)?;
        let len = mem.entries.len();
        for &id in neighbor_ids {
            if id >= len {
                return Err(DndError::BadEntry { action, id, len });
            }
        }
        if let Some(g) = key_grads {
            if g.iter().any(|row| row.len() != key_dim) {
                return Err(DndError::GradientShape);
            }
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (&id, &g) in neighbor_ids.iter().zip(grad_values) {
            mem.entries[id].value -= lr * g;
        }
        if let Some(g) = key_grads {
            for (&id, grad) in neighbor_ids.iter().zip(g) {
                if grad.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let moved: Vec<f64> = mem.entries[id].key.iter().zip(grad).map(|(k, g)| k - lr * g).collect();
                mem.replace_key(id, moved);
            }
            mem.maybe_rebuild();
        }
        mem.generation += 1;
        Ok(())
    }

    /// Verifies that each action's kd-tree indexes exactly its entries.
    pub fn audit(&self) -> Result<(), DndError> {
        for (action, mem) in self.memories.iter().enumerate() {
            mem.index
                .audit(&mem.entries, mem.entries.len())
                .map_err(|reason| DndError::IndexCorrupt { action, reason })?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> DndSnapshot {
        DndSnapshot {
            version: SNAPSHOT_VERSION,
            key_dim: self.key_dim,
            config: self.config.clone(),
            clock: self.clock,
            memories: self
                .memories
                .iter()
                .map(|m| MemorySnapshot {
                    generation: m.generation,
                    entries: m.entries.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: DndSnapshot) -> Result<Self, DndError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(DndError::SnapshotVersion(snapshot.version));
        }
        let mut store = Self::new(snapshot.memories.len(), snapshot.key_dim, snapshot.config)?;
        store.clock = snapshot.clock;
        for (mem, snap) in store.memories.iter_mut().zip(snapshot.memories) {
            if let Some(e) = snap.entries.iter().find(|e| e.key.len() != snapshot.key_dim) {
                return Err(DndError::KeyDimMismatch {
                    expected: snapshot.key_dim,
                    actual: e.key.len(),
                });
            }
            mem.entries = snap.entries;
            mem.generation = snap.generation;
            mem.index.rebuild(&mem.entries, mem.entries.len());
        }
        Ok(store)
    }
}

/// Serialized dictionary state.
///
/// JSON layout: `{"version": 1, "key_dim": k, "config": {..}, "clock": n,
/// "memories": [{"generation": g, "entries": [{"key": [..], "value": v,
/// "last_access": t, "insert_step": s}, ..]}, ..]}`. The kd-tree is rebuilt
/// on load; lookups are exact so results do not depend on tree shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DndSnapshot {
    pub version: u32,
    pub key_dim: usize,
    pub config: DndConfig,
    pub clock: u64,
    pub memories: Vec<MemorySnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub generation: u64,
    pub entries: Vec<DndEntry>,
}

#[cfg(test)]
mod tests;
