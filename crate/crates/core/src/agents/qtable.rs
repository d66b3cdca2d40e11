use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear decay from `start` to `end` over the first `decay_episodes`
/// episodes, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Tabular action values with one-step max backups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    learning_rate: f64,
    q: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning rate {learning_rate} outside (0, 1]"
            )));
        }
        let len = n_states
            .checked_mul(n_actions)
            .ok_or_else(|| Error::capacity("Q-table", u128::MAX, usize::MAX as u128))?;
        Ok(QTable {
            n_states,
            n_actions,
            learning_rate,
            q: vec![0.0; len],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of stored action values.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Highest-valued action; ties go to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// ε-greedy choice. Always draws one uniform, plus an action index when
    /// exploring, so every agent consumes the stream identically.
    pub fn epsilon_greedy<R: Rng>(&self, s: usize, epsilon: f64, rng: &mut R) -> usize {
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.n_actions)
        } else {
            self.greedy(s)
        }
    }

    /// `Q(s,a) += α (r + γ max_a' Q(s',a') - Q(s,a))`; `next = None` marks a
    /// terminal transition.
    pub fn update(&mut self, s: usize, a: usize, reward: f64, next: Option<usize>, discount: f64) {
        let target = reward + next.map_or(0.0, |s2| discount * self.max_value(s2));
        let q = &mut self.q[s * self.n_actions + a];
        *q += self.learning_rate * (target - *q);
    }
}
