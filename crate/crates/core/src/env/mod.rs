//! Reference environments and the step interface the agents run against.

mod maze;
mod two_state;

pub use maze::{MazeEnv, MazeGrid, MAZE_ACTIONS};
pub use two_state::{two_state_mdp, TwoStateEnv};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub reward: f64,
    /// The episode is over, either at a terminal state or at the step cap.
    pub done: bool,
    /// A terminal state was reached; the value of `next_state` is zero.
    pub terminal: bool,
}

/// Episodic tabular environment. Each instance owns its own random stream.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Starts a new episode and returns the initial state.
    fn reset(&mut self) -> usize;
    /// Executes `action`. Fails with an invalid-state error once the episode is done.
    fn step(&mut self, action: usize) -> Result<Step>;
    fn state(&self) -> usize;
    fn is_done(&self) -> bool;
}
