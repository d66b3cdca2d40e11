use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// `(s_{t+m}, r_{t+m}, a_t, s_{t+m+1})`: a decided action paired with the
/// transition in which it was executed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedTuple {
    pub state: usize,
    pub reward: f64,
    pub action: usize,
    pub next_state: usize,
    pub terminal: bool,
}

/// Holds decided actions until the transition that executes them arrives.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayShiftBuffer {
    delay: usize,
    /// `(state at decision time, decided action)`, oldest first.
    staging: VecDeque<(usize, usize)>,
}

impl ReplayShiftBuffer {
    pub fn new(delay: usize) -> Self {
        ReplayShiftBuffer {
            delay,
            staging: VecDeque::with_capacity(delay + 1),
        }
    }

    /// Drops staged actions at an episode boundary; they were never executed.
    pub fn reset(&mut self) {
        self.staging.clear();
    }

    pub fn staged(&self) -> usize {
        self.staging.len()
    }

    /// Stages the action decided in `decided_at` and returns the tuple for
    /// the action decided `m` steps ago, once one exists.
    pub fn record(
        &mut self,
        decided_at: usize,
        decided: usize,
        state: usize,
        reward: f64,
        next_state: usize,
        terminal: bool,
    ) -> Option<ShiftedTuple> {
        self.staging.push_back((decided_at, decided));
        if self.staging.len() <= self.delay {
            return None;
        }
        let (_, action) = self.staging.pop_front().expect("staging exceeds the delay");
        Some(ShiftedTuple {
            state,
            reward,
            action,
            next_state,
            terminal,
        })
    }
}
