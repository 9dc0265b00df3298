//! Exact, incrementally maintained kd-tree over the keys of one action memory.
//!
//! One entry per node. Bulk construction splits at the median of the widest
//! axis. Inserts descend to a leaf and split on the next axis. Removal is a
//! tombstone: the node keeps its split plane so the subtree stays valid, but
//! is skipped in results. Moving a key is remove + insert. The owner decides
//! when the accumulated churn warrants a rebuild.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::math::squared_distance;

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    entry: u32,
    axis: u32,
    split: f64,
    left: u32,
    right: u32,
    alive: bool,
}

/// A search candidate, ordered by (distance, insert step, entry id).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Candidate {
    pub dist: f64,
    pub insert_step: u64,
    pub entry: u32,
}

impl Candidate {
    fn key(&self) -> (f64, u64, u32) {
        (self.dist, self.insert_step, self.entry)
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Read access to the points the tree indexes.
pub(crate) trait PointSource {
    fn key(&self, entry: usize) -> &[f64];
    fn insert_step(&self, entry: usize) -> u64;
}

#[derive(Clone, Debug, Default)]
pub(crate) struct KdTree {
    dim: usize,
    nodes: Vec<Node>,
    root: u32,
    /// entry id -> live node
    live: Vec<u32>,
    churn: usize,
}

impl KdTree {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            nodes: Vec::new(),
            root: NIL,
            live: Vec::new(),
            churn: 0,
        }
    }

    /// Inserts and moves since the last full build.
    pub fn churn(&self) -> usize {
        self.churn
    }

    pub fn rebuild<P: PointSource>(&mut self, points: &P, n_entries: usize) {
        self.nodes.clear();
        self.nodes.reserve(n_entries);
        self.live = vec![NIL; n_entries];
        self.churn = 0;
        let mut ids: Vec<u32> = (0..n_entries as u32).collect();
        self.root = self.build_range(points, &mut ids);
    }

    fn build_range<P: PointSource>(&mut self, points: &P, ids: &mut [u32]) -> u32 {
        if ids.is_empty() {
            return NIL;
        }
        let axis = self.widest_axis(points, ids);
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            points.key(a as usize)[axis]
                .total_cmp(&points.key(b as usize)[axis])
                .then(a.cmp(&b))
        });
        let entry = ids[mid];
        let split = points.key(entry as usize)[axis];
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            entry,
            axis: axis as u32,
            split,
            left: NIL,
            right: NIL,
            alive: true,
        });
        self.live[entry as usize] = idx;
        let (lo, rest) = ids.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_range(points, lo);
        let right = self.build_range(points, hi);
        let node = &mut self.nodes[idx as usize];
        node.left = left;
        node.right = right;
        idx
    }

    fn widest_axis<P: PointSource>(&self, points: &P, ids: &[u32]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..self.dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &id in ids {
                let v = points.key(id as usize)[axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }

    pub fn insert(&mut self, entry: usize, key: &[f64]) {
        if self.live.len() <= entry {
            self.live.resize(entry + 1, NIL);
        }
        debug_assert_eq!(self.live[entry], NIL, "entry already indexed");
        let idx = self.nodes.len() as u32;
        self.churn += 1;
        if self.root == NIL {
            self.nodes.push(Node {
                entry: entry as u32,
                axis: 0,
                split: key[0],
                left: NIL,
                right: NIL,
                alive: true,
            });
            self.root = idx;
            self.live[entry] = idx;
            return;
        }
        let mut cur = self.root;
        loop {
            let node = &self.nodes[cur as usize];
            let go_left = key[node.axis as usize] < node.split;
            let next = if go_left { node.left } else { node.right };
            if next == NIL {
                let axis = (node.axis as usize + 1) % self.dim;
                self.nodes.push(Node {
                    entry: entry as u32,
                    axis: axis as u32,
                    split: key[axis],
                    left: NIL,
                    right: NIL,
                    alive: true,
                });
                let parent = &mut self.nodes[cur as usize];
                if go_left {
                    parent.left = idx;
                } else {
                    parent.right = idx;
                }
                self.live[entry] = idx;
                return;
            }
            cur = next;
        }
    }

    pub fn remove(&mut self, entry: usize) {
        let idx = self.live[entry];
        debug_assert_ne!(idx, NIL, "entry not indexed");
        self.nodes[idx as usize].alive = false;
        self.live[entry] = NIL;
    }

    /// The `p` nearest live entries, ascending by (distance, insert step, id).
    pub fn nearest<P: PointSource>(&self, points: &P, query: &[f64], p: usize) -> Vec<Candidate> {
        if p == 0 || self.root == NIL {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(p + 1);
        // (node, lower bound on squared distance to anything in its subtree)
        let mut stack: Vec<(u32, f64)> = vec![(self.root, 0.0)];
        while let Some((idx, bound)) = stack.pop() {
            if heap.len() == p && bound > heap.peek().map_or(f64::INFINITY, |c| c.dist) {
                continue;
            }
            let node = &self.nodes[idx as usize];
            if node.alive {
                let e = node.entry as usize;
                let cand = Candidate {
                    dist: squared_distance(query, points.key(e)),
                    insert_step: points.insert_step(e),
                    entry: node.entry,
                };
                if heap.len() < p {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(cand);
                }
            }
            let diff = query[node.axis as usize] - node.split;
            let (near, far) = if diff < 0.0 {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            let far_bound = bound.max(diff * diff);
            if far != NIL {
                stack.push((far, far_bound));
            }
            if near != NIL {
                stack.push((near, bound));
            }
        }
        heap.into_sorted_vec()
    }

    /// Checks that every entry has exactly one live node holding its current
    /// key on the correct side of every ancestor split.
    pub fn audit<P: PointSource>(&self, points: &P, n_entries: usize) -> Result<(), String> {
        if self.live.len() < n_entries {
            return Err(format!("index tracks {} of {n_entries} entries", self.live.len()));
        }
        let mut seen = vec![false; n_entries];
        if self.root != NIL {
            // (node, per-axis [lo, hi) constraints)
            let mut stack = vec![(self.root, vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim])];
            while let Some((idx, bounds)) = stack.pop() {
                let node = &self.nodes[idx as usize];
                if node.alive {
                    let e = node.entry as usize;
                    if e >= n_entries {
                        return Err(format!("node {idx} points past the entry array"));
                    }
                    if seen[e] {
                        return Err(format!("entry {e} indexed twice"));
                    }
                    seen[e] = true;
                    if self.live[e] != idx {
                        return Err(format!("entry {e} live map disagrees with node {idx}"));
                    }
                    let key = points.key(e);
                    for (axis, (lo, hi)) in bounds.iter().enumerate() {
                        if key[axis] < *lo || key[axis] >= *hi && *hi != f64::INFINITY {
                            return Err(format!("entry {e} violates split bounds on axis {axis}"));
                        }
                    }
                }
                let axis = node.axis as usize;
                if node.left != NIL {
                    let mut b = bounds.clone();
                    b[axis].1 = b[axis].1.min(node.split);
                    // left holds strictly smaller coordinates, except that
                    // bulk builds may place ties on either side
                    b[axis].1 = next_up(b[axis].1);
                    stack.push((node.left, b));
                }
                if node.right != NIL {
                    let mut b = bounds.clone();
                    b[axis].0 = b[axis].0.max(node.split);
                    stack.push((node.right, b));
                }
            }
        }
        if let Some(e) = seen.iter().position(|s| !s) {
            return Err(format!("entry {e} missing from index"));
        }
        Ok(())
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_infinite() {
        x
    } else {
        x.next_up()
    }
}
