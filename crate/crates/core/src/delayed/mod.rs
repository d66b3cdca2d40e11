//! The execution-delay process itself, without state augmentation.
//!
//! The first `m` actions come from a fixed queue `ā_0, ..., ā_{m-1}`; from
//! then on the action executed at time `t` was decided at time `t - m`, so a
//! policy rule `d_k` maps `s_k` (or `h_k`) to the action executed at `k + m`.

mod markov;
mod search;
mod value;

pub use markov::{
    check_markovization, markov_marginals, markovize, nonmarkov_witness, Continuation,
    NonMarkovWitness,
};
pub use search::{
    best_markov_det, best_markov_det_with, best_stationary_det, best_stationary_det_with,
    SearchOutcome,
};
pub use value::{
    delayed_value_exact, delayed_value_exact_with, delayed_value_recursion, queue_prefix_value,
    DelayedValue,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_distribution, History, HistoryRandPolicy, Mdp};

/// Largest number of enumerated paths or policies a single call may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationBudget(pub u128);

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget(1 << 28)
    }
}

impl EnumerationBudget {
    fn check(&self, what: &str, base: u128, exponent: usize) -> Result<()> {
        let required = u32::try_from(exponent)
            .ok()
            .and_then(|e| base.checked_pow(e))
            .unwrap_or(u128::MAX);
        if required > self.0 {
            return Err(Error::capacity(what, required, self.0));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedProcessConfig {
    mdp: Mdp,
    delay: usize,
    initial_queue: Vec<usize>,
    initial_dist: Vec<f64>,
}

impl DelayedProcessConfig {
    /// `initial_queue[k]` is executed at time `k`.
    pub fn new(
        mdp: Mdp,
        delay: usize,
        initial_queue: Vec<usize>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if initial_queue.len() != delay {
            return Err(Error::invalid(format!(
                "initial queue holds {} actions, delay is {delay}",
                initial_queue.len()
            )));
        }
        for &a in &initial_queue {
            mdp.check_action(a)?;
        }
        check_distribution(&initial_dist, mdp.n_states(), "initial state distribution")?;
        Ok(DelayedProcessConfig {
            mdp,
            delay,
            initial_queue,
            initial_dist,
        })
    }

    /// Process started deterministically in `s0`.
    pub fn from_state(mdp: Mdp, initial_queue: Vec<usize>, s0: usize) -> Result<Self> {
        mdp.check_state(s0)?;
        let mut mu = vec![0.0; mdp.n_states()];
        mu[s0] = 1.0;
        let m = initial_queue.len();
        Self::new(mdp, m, initial_queue, mu)
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn initial_queue(&self) -> &[usize] {
        &self.initial_queue
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// The fixed queue as Dirac action distributions.
    pub fn action_queue(&self) -> ActionDistQueue {
        ActionDistQueue::deterministic(&self.initial_queue, self.mdp.n_actions())
    }
}

/// Queue of action distributions `μ_0, ..., μ_{m-1}`; `μ_k` governs the
/// action executed at time `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistQueue {
    dists: Vec<Vec<f64>>,
}

impl ActionDistQueue {
    pub fn new(dists: Vec<Vec<f64>>, n_actions: usize) -> Result<Self> {
        for (k, d) in dists.iter().enumerate() {
            check_distribution(d, n_actions, &format!("queued distribution {k}"))?;
        }
        Ok(ActionDistQueue { dists })
    }

    pub fn deterministic(queue: &[usize], n_actions: usize) -> Self {
        ActionDistQueue {
            dists: queue
                .iter()
                .map(|&a| crate::mdp::dirac(a, n_actions))
                .collect(),
        }
    }

    pub fn uniform(delay: usize, n_actions: usize) -> Self {
        ActionDistQueue {
            dists: vec![vec![1.0 / n_actions as f64; n_actions]; delay],
        }
    }

    pub fn delay(&self) -> usize {
        self.dists.len()
    }

    pub fn dists(&self) -> &[Vec<f64>] {
        &self.dists
    }

    fn validate(&self, mdp: &Mdp) -> Result<()> {
        for (k, d) in self.dists.iter().enumerate() {
            check_distribution(d, mdp.n_actions(), &format!("queued distribution {k}"))?;
        }
        Ok(())
    }
}

/// A history `s_0, a_0, ..., a_{t-1}, s_t` whose probability is requested.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathProbabilityQuery {
    pub history: History,
}

impl PathProbabilityQuery {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        Ok(PathProbabilityQuery {
            history: History::from_parts(states, actions)?,
        })
    }
}

/// Probability of observing the queried history under `policy`, where the
/// action at time `k >= m` is drawn from the rule applied to `h_{k-m}`.
pub fn path_probability(
    cfg: &DelayedProcessConfig,
    policy: &HistoryRandPolicy,
    query: &PathProbabilityQuery,
) -> Result<f64> {
    let mdp = &cfg.mdp;
    if policy.n_actions() != mdp.n_actions() {
        return Err(Error::invalid(
            "policy and MDP disagree on the action count",
        ));
    }
    let h = &query.history;
    for &s in h.states() {
        mdp.check_state(s)?;
    }
    for &a in h.actions() {
        mdp.check_action(a)?;
    }
    let m = cfg.delay;
    let mut prob = cfg.initial_dist[h.states()[0]];
    for k in 0..h.len() {
        if prob == 0.0 {
            return Ok(0.0);
        }
        let (s, a, s_next) = (h.states()[k], h.actions()[k], h.states()[k + 1]);
        let q = if k < m {
            if cfg.initial_queue[k] == a {
                1.0
            } else {
                0.0
            }
        } else {
            policy.dist(&h.prefix(k - m))?[a]
        };
        prob *= q * mdp.prob(s, a, s_next);
    }
    Ok(prob)
}

/// Optimal stationary return of the two-state MDP under delay `m`,
/// `(1 + (2p - 1)^m) / (2 (1 - γ))`.
pub fn two_state_analytic_return(p: f64, delay: usize, discount: f64) -> Result<f64> {
    if !(0.5..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "switch probability {p} outside [0.5, 1]"
        )));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(format!(
            "discount {discount} outside [0, 1)"
        )));
    }
    let exponent = i32::try_from(delay).unwrap_or(i32::MAX);
    Ok((1.0 + (2.0 * p - 1.0).powi(exponent)) / (2.0 * (1.0 - discount)))
}

/// `(action of state 0, action of state 1, ...)` for rule number `index`,
/// state 0 varying fastest.
pub(crate) fn decode_rule(mut index: usize, n_states: usize, n_actions: usize) -> Vec<usize> {
    (0..n_states)
        .map(|_| {
            let a = index % n_actions;
            index /= n_actions;
            a
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::two_state_mdp;
    use crate::mdp::StationaryDetPolicy;

    fn cfg(m: usize) -> DelayedProcessConfig {
        DelayedProcessConfig::new(
            two_state_mdp(0.8, 0.5).unwrap(),
            m,
            vec![0; m],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn queue_violation_has_zero_probability() {
        let pol = HistoryRandPolicy::from_stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = PathProbabilityQuery::new(vec![0, 1], vec![1]).unwrap();
        assert_eq!(path_probability(&cfg(1), &pol, &q).unwrap(), 0.0);
    }

    #[test]
    fn realized_deterministic_path() {
        let mdp = two_state_mdp(1.0, 0.5).unwrap();
        let c = DelayedProcessConfig::new(mdp, 0, vec![], vec![0.3, 0.7]).unwrap();
        let pol = HistoryRandPolicy::from_stationary(&StationaryDetPolicy::new(vec![1, 0]), 2);
        let q = PathProbabilityQuery::new(vec![1, 0, 1], vec![0, 1]).unwrap();
        assert_eq!(path_probability(&c, &pol, &q).unwrap(), 0.7);
    }

    #[test]
    fn switch_then_uniform_start() {
        let pol = HistoryRandPolicy::from_stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = PathProbabilityQuery::new(vec![0, 1], vec![0]).unwrap();
        assert!((path_probability(&cfg(1), &pol, &q).unwrap() - 0.8 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        assert!(DelayedProcessConfig::new(mdp.clone(), 2, vec![0], vec![0.5, 0.5]).is_err());
        assert!(DelayedProcessConfig::new(mdp.clone(), 1, vec![2], vec![0.5, 0.5]).is_err());
        assert!(DelayedProcessConfig::new(mdp, 1, vec![0], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn analytic_return_edges() {
        assert!((two_state_analytic_return(0.5, 3, 0.9).unwrap() - 5.0).abs() < 1e-12);
        assert!((two_state_analytic_return(1.0, 9, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(two_state_analytic_return(0.3, 1, 0.5).is_err());
    }

    #[test]
    fn rule_decoding() {
        assert_eq!(decode_rule(0, 2, 2), vec![0, 0]);
        assert_eq!(decode_rule(1, 2, 2), vec![1, 0]);
        assert_eq!(decode_rule(5, 3, 2), vec![1, 0, 1]);
    }
}
