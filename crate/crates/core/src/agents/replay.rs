//! Experience replay with optional proportional prioritisation.
//!
//! Priorities live in a sum tree so sampling and updates cost `O(log n)`.
//! A transition with priority `p_i` is drawn with probability
//! `p_i^α / Σ_k p_k^α` and weighted by `(N · P(i))^{-β}` normalised by the
//! largest weight in the minibatch.

use neurocore::StreamRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_mask: Vec<bool>,
    pub done: bool,
}

/// Complete binary tree over `capacity` leaves; every inner node holds
/// the sum of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree needs a positive capacity");
        let leaves = capacity.next_power_of_two();
        Self {
            capacity,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn leaves(&self) -> usize {
        self.nodes.len() / 2
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves() + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(i < self.capacity, "sum tree index out of range");
        let mut k = self.leaves() + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`, for
    /// `0 <= mass < total`. Zero-priority leaves are never returned while
    /// any positive leaf exists.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves() {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        (k - self.leaves()).min(self.capacity - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    next: usize,
    prioritized: bool,
    alpha: f64,
    tree: SumTree,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, prioritized: bool, alpha: f64) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            prioritized,
            alpha,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Inserts with the largest priority seen so far, overwriting the
    /// oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        let slot = self.next;
        if self.items.len() < self.capacity() {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (slot + 1) % self.capacity();
    }

    /// Sampling probability of entry `i`.
    pub fn probability(&self, i: usize) -> f64 {
        if self.prioritized {
            self.tree.get(i) / self.tree.total()
        } else {
            1.0 / self.len() as f64
        }
    }

    /// Draws `n` indices with replacement. Uniform sampling returns unit
    /// weights.
    pub fn sample(&self, n: usize, beta: f64, rng: &mut StreamRng) -> Sample {
        assert!(!self.is_empty(), "cannot sample an empty buffer");
        let len = self.len();
        if !self.prioritized {
            return Sample {
                indices: (0..n).map(|_| rng.gen_range(0..len)).collect(),
                weights: vec![1.0; n],
            };
        }
        let total = self.tree.total();
        let segment = total / n as f64;
        let indices: Vec<usize> = (0..n)
            .map(|k| {
                let mass = segment * (k as f64 + rng.gen::<f64>());
                self.tree.find(mass.min(total * (1.0 - 1e-12))).min(len - 1)
            })
            .collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (len as f64 * self.probability(i)).powf(-beta))
            .collect();
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        Sample {
            indices,
            weights: raw.iter().map(|w| w / max).collect(),
        }
    }

    /// Sets the priority of entry `i` to `|td| + 1e-6`.
    pub fn update_priority(&mut self, i: usize, td: f64) {
        let p = td.abs() + 1e-6;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(i, p.powf(self.alpha));
    }
}
