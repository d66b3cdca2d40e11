//! Planning and tabular learning for Markov decision processes whose actions
//! take effect `m` steps after they are decided.
//!
//! * [`mdp`]: tabular MDPs, policy classes, exact evaluation and policy iteration.
//! * [`augmentation`]: the state-augmented MDP over `S × A^m` and its solver.
//! * [`delayed`]: the delayed process itself, exact delayed values and policy-class search.
//! * [`env`]: the two-state example and seeded mazes.
//! * [`agents`]: Oblivious-Q, Augmented-Q and Delayed-Q.
//! * [`harness`]: experiment sweeps, result records and the verification battery.

pub mod agents;
pub mod augmentation;
pub mod delayed;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::Mdp;
