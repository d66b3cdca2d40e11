use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Environment, Step};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::rng::{substream, Stream};

/// The two-state MDP: whatever the action, the state switches with
/// probability `p`; reward 1 for `a_i` in `s_i` and 0 otherwise.
pub fn two_state_mdp(p: f64, discount: f64) -> Result<Mdp> {
    if !(0.5..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "switch probability {p} outside [0.5, 1]"
        )));
    }
    let q = 1.0 - p;
    #[rustfmt::skip]
    let kernel = [
        q, p,  q, p,
        p, q,  p, q,
    ];
    Mdp::from_dense(2, 2, &kernel, vec![1.0, 0.0, 0.0, 1.0], discount)
}

/// Sampling view of [`two_state_mdp`] with fixed-length episodes started
/// uniformly at random.
#[derive(Clone, Debug)]
pub struct TwoStateEnv {
    mdp: Mdp,
    p: f64,
    episode_len: usize,
    steps: usize,
    state: usize,
    rng: ChaCha8Rng,
}

impl TwoStateEnv {
    pub fn new(p: f64, discount: f64, episode_len: usize, seed: u64) -> Result<Self> {
        if episode_len == 0 {
            return Err(Error::invalid("episode length must be positive"));
        }
        Ok(TwoStateEnv {
            mdp: two_state_mdp(p, discount)?,
            p,
            episode_len,
            steps: episode_len,
            state: 0,
            rng: substream(seed, Stream::Noise),
        })
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn episode_len(&self) -> usize {
        self.episode_len
    }
}

impl Environment for TwoStateEnv {
    fn n_states(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self) -> usize {
        self.steps = 0;
        self.state = self.rng.gen_range(0..2);
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.is_done() {
            return Err(Error::InvalidState("step after the episode ended".into()));
        }
        self.mdp.check_action(action)?;
        let reward = self.mdp.reward(self.state, action);
        if self.rng.gen::<f64>() < self.p {
            self.state = 1 - self.state;
        }
        self.steps += 1;
        Ok(Step {
            next_state: self.state,
            reward,
            done: self.is_done(),
            terminal: false,
        })
    }

    fn state(&self) -> usize {
        self.state
    }

    fn is_done(&self) -> bool {
        self.steps >= self.episode_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_switch_probabilities() {
        let det = two_state_mdp(1.0, 0.5).unwrap();
        assert_eq!(det.prob(0, 0, 1), 1.0);
        assert_eq!(det.prob(1, 1, 0), 1.0);
        let flat = two_state_mdp(0.5, 0.5).unwrap();
        assert_eq!(flat.dense_kernel(), vec![0.5; 8]);
        assert!(two_state_mdp(0.4, 0.5).is_err());
        assert!(two_state_mdp(1.1, 0.5).is_err());
    }

    #[test]
    fn relabeling_symmetry() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        assert_eq!(mdp.prob(0, 1, 1), 0.8);
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(mdp.reward(s, a), mdp.reward(1 - s, 1 - a));
                for s2 in 0..2 {
                    assert_eq!(mdp.prob(s, a, s2), mdp.prob(1 - s, 1 - a, 1 - s2));
                }
            }
        }
    }

    #[test]
    fn episodes_have_fixed_length() {
        let mut env = TwoStateEnv::new(0.8, 0.5, 3, 1).unwrap();
        env.reset();
        assert!(!env.step(0).unwrap().done);
        assert!(!env.step(0).unwrap().done);
        assert!(env.step(0).unwrap().done);
        assert!(matches!(env.step(0), Err(Error::InvalidState(_))));
    }
}
