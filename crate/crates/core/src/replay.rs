//! Uniform experience replay of n-step transitions and the episodic penalty
//! buffer that feeds the Lagrange multiplier.
//!
//! Rewards and penalties are aggregated separately so the shaped n-step
//! return `r_sum − λ·c_sum` can be formed at training time for any `λ`.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::error::ReplayError;

pub const DEFAULT_CAPACITY: usize = 50_000;
pub const LARGE_CAPACITY: usize = 1_000_000;
pub const DEFAULT_PENALTY_CAPACITY: usize = 100;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    /// `Σ_{k<n} γᵏ r_{t+k}`
    pub r_sum: f64,
    /// `Σ_{k<n} γᵏ c_{t+k}`
    pub c_sum: f64,
    /// `s_{t+n}`, or the terminal observation.
    pub s_next: Vec<f64>,
    /// `γⁿ`, or 0 when the episode ended inside the window.
    pub discount_prod: f64,
}

impl Transition {
    /// `r_sum − λ·c_sum`.
    pub fn shaped_reward(&self, lambda: f64) -> f64 {
        self.r_sum - lambda * self.c_sum
    }
}

/// Undiscounted mean penalty of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodePenalty(f64);

impl EpisodePenalty {
    pub fn new(value: f64) -> Result<Self, ReplayError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ReplayError::PenaltyRange(value));
        }
        Ok(Self(value))
    }

    pub fn from_counts(violations: usize, steps: usize) -> Result<Self, ReplayError> {
        if steps == 0 {
            return Self::new(0.0);
        }
        Self::new(violations as f64 / steps as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub train: Vec<Transition>,
    pub validate: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::Capacity);
        }
        Ok(Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity })
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

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// FIFO insert; evicts the oldest transition when full.
    pub fn push_transition(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Draws `n` distinct transitions uniformly; the first `⌈split·n⌉` form
    /// the training split and the rest the validation split.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        split_fraction: f64,
        rng: &mut R,
    ) -> Result<Batch, ReplayError> {
        if !(split_fraction > 0.0 && split_fraction < 1.0) {
            return Err(ReplayError::Split(split_fraction));
        }
        if n > self.items.len() || n == 0 {
            return Err(ReplayError::Insufficient { requested: n, available: self.items.len() });
        }
        let n_train = train_size(n, split_fraction);
        let picks = index::sample(rng, self.items.len(), n);
        let mut train = Vec::with_capacity(n_train);
        let mut validate = Vec::with_capacity(n - n_train);
        for (k, i) in picks.into_iter().enumerate() {
            let t = self.items[i].clone();
            if k < n_train {
                train.push(t);
            } else {
                validate.push(t);
            }
        }
        Ok(Batch { train, validate })
    }
}

/// `⌈split·n⌉`, clamped to `[1, n]`.
pub fn train_size(n: usize, split_fraction: f64) -> usize {
    ((split_fraction * n as f64).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone)]
pub struct PenaltyBuffer {
    values: VecDeque<f64>,
    capacity: usize,
}

impl PenaltyBuffer {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::Capacity);
        }
        Ok(Self { values: VecDeque::with_capacity(capacity), capacity })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn push_episode_penalty(&mut self, p: EpisodePenalty) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(p.value());
    }

    pub fn sample_penalty<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, ReplayError> {
        if self.values.is_empty() {
            return Err(ReplayError::EmptyPenalties);
        }
        Ok(self.values[rng.random_range(0..self.values.len())])
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }
}

/// Folds a stream of single steps into n-step transitions.
#[derive(Debug, Clone)]
pub struct NStepBuilder {
    n: usize,
    gamma: f64,
    window: VecDeque<(Vec<f64>, Vec<f64>, f64, f64)>,
}

impl NStepBuilder {
    pub fn new(n: usize, gamma: f64) -> Self {
        let n = n.max(1);
        Self { n, gamma, window: VecDeque::with_capacity(n) }
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    /// Records one step and returns every transition that became complete.
    /// On `done` the window is flushed with zero bootstrap discount.
    pub fn push(
        &mut self,
        s: &[f64],
        a: &[f64],
        reward: f64,
        penalty: f64,
        s_next: &[f64],
        done: bool,
    ) -> Vec<Transition> {
        self.window.push_back((s.to_vec(), a.to_vec(), reward, penalty));
        let mut out = Vec::new();
        if done {
            while !self.window.is_empty() {
                out.push(self.emit(s_next, 0.0));
                self.window.pop_front();
            }
        } else if self.window.len() == self.n {
            out.push(self.emit(s_next, self.gamma.powi(self.n as i32)));
            self.window.pop_front();
        }
        out
    }

    fn emit(&self, s_next: &[f64], discount_prod: f64) -> Transition {
        let (s, a, _, _) = &self.window[0];
        let mut r_sum = 0.0;
        let mut c_sum = 0.0;
        let mut g = 1.0;
        for (_, _, r, c) in &self.window {
            r_sum += g * r;
            c_sum += g * c;
            g *= self.gamma;
        }
        Transition { s: s.clone(), a: a.clone(), r_sum, c_sum, s_next: s_next.to_vec(), discount_prod }
    }
}
