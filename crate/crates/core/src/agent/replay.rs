use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStepTransition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<NStepTransition>,
    next: usize,
    pushed: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions ever appended, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: NStepTransition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// `batch` distinct transitions chosen uniformly.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&NStepTransition>, AgentError> {
        if self.items.len() < batch {
            return Err(AgentError::ReplayTooSmall {
                len: self.items.len(),
                needed: batch,
            });
        }
        Ok(index::sample(rng, self.items.len(), batch)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
