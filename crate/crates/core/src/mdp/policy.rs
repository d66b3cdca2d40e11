use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_distribution, Mdp};
use crate::error::{Error, Result};

/// Stationary deterministic policy: one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StationaryDetPolicy {
    action_of: Vec<usize>,
}

impl StationaryDetPolicy {
    pub fn new(action_of: Vec<usize>) -> Self {
        StationaryDetPolicy { action_of }
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        StationaryDetPolicy {
            action_of: vec![action; n_states],
        }
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.action_of
    }

    pub fn len(&self) -> usize {
        self.action_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_of.is_empty()
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.action_of.len() != mdp.n_states() {
            return Err(Error::invalid(format!(
                "policy covers {} states, MDP has {}",
                self.action_of.len(),
                mdp.n_states()
            )));
        }
        for &a in &self.action_of {
            mdp.check_action(a)?;
        }
        Ok(())
    }
}

/// Non-stationary Markov deterministic policy `(d_0, d_1, ...)`.
///
/// Only finitely many rules are stored; rule `k` is `rules[k % len]`, so a
/// single rule is a stationary policy and `m` rules an `m`-periodic one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovDetPolicy {
    rules: Vec<Vec<usize>>,
}

impl MarkovDetPolicy {
    pub fn new(rules: Vec<Vec<usize>>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::invalid("a Markov policy needs at least one rule"));
        }
        let n = rules[0].len();
        if rules.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(
                "decision rules cover different state counts",
            ));
        }
        Ok(MarkovDetPolicy { rules })
    }

    #[inline]
    pub fn action(&self, k: usize, s: usize) -> usize {
        self.rules[k % self.rules.len()][s]
    }

    pub fn rules(&self) -> &[Vec<usize>] {
        &self.rules
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        for rule in &self.rules {
            StationaryDetPolicy::new(rule.clone()).validate(mdp)?;
        }
        Ok(())
    }

    pub fn to_randomized(&self, n_actions: usize) -> MarkovRandPolicy {
        let rules = self
            .rules
            .iter()
            .map(|rule| rule.iter().map(|&a| dirac(a, n_actions)).collect())
            .collect();
        MarkovRandPolicy { rules }
    }
}

impl From<&StationaryDetPolicy> for MarkovDetPolicy {
    fn from(p: &StationaryDetPolicy) -> Self {
        MarkovDetPolicy {
            rules: vec![p.action_of.clone()],
        }
    }
}

/// Non-stationary Markov randomized policy; `rules[k][s]` is the action
/// distribution of rule `k` at state `s`. Rules repeat cyclically like
/// [`MarkovDetPolicy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovRandPolicy {
    rules: Vec<Vec<Vec<f64>>>,
}

impl MarkovRandPolicy {
    pub fn new(rules: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::invalid("a Markov policy needs at least one rule"));
        }
        let n_states = rules[0].len();
        let n_actions = rules[0].first().map_or(0, Vec::len);
        for (k, rule) in rules.iter().enumerate() {
            if rule.len() != n_states {
                return Err(Error::invalid(
                    "decision rules cover different state counts",
                ));
            }
            for (s, dist) in rule.iter().enumerate() {
                check_distribution(dist, n_actions, &format!("rule {k} at state {s}"))?;
            }
        }
        Ok(MarkovRandPolicy { rules })
    }

    pub fn stationary(policy: &StationaryDetPolicy, n_actions: usize) -> Self {
        MarkovDetPolicy::from(policy).to_randomized(n_actions)
    }

    #[inline]
    pub fn dist(&self, k: usize, s: usize) -> &[f64] {
        &self.rules[k % self.rules.len()][s]
    }

    pub fn rules(&self) -> &[Vec<Vec<f64>>] {
        &self.rules
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rules[0].first().map_or(0, Vec::len)
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        if self.rules[0].len() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(Error::invalid(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.rules[0].len(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Alternating history `s_0, a_0, s_1, ..., a_{t-1}, s_t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct History {
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn start(s0: usize) -> Self {
        History {
            states: vec![s0],
            actions: Vec::new(),
        }
    }

    pub fn from_parts(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::invalid(format!(
                "history with {} states needs {} actions, got {}",
                states.len(),
                states.len().saturating_sub(1),
                actions.len()
            )));
        }
        Ok(History { states, actions })
    }

    /// Number of transitions `t`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("history always holds s_0")
    }

    pub fn push(&mut self, a: usize, s_next: usize) {
        self.actions.push(a);
        self.states.push(s_next);
    }

    pub fn pop(&mut self) {
        if self.actions.pop().is_some() {
            self.states.pop();
        }
    }

    /// The prefix `h_k`.
    pub fn prefix(&self, k: usize) -> History {
        History {
            states: self.states[..=k].to_vec(),
            actions: self.actions[..k].to_vec(),
        }
    }
}

type RuleFn = dyn Fn(&History) -> Vec<f64> + Send + Sync;

/// History-dependent randomized policy. The rule index is the history length,
/// so `d_t(h_t)` is `rule(h_t)`.
#[derive(Clone)]
pub struct HistoryRandPolicy {
    n_actions: usize,
    rule: Arc<RuleFn>,
}

impl HistoryRandPolicy {
    pub fn new<F>(n_actions: usize, rule: F) -> Self
    where
        F: Fn(&History) -> Vec<f64> + Send + Sync + 'static,
    {
        HistoryRandPolicy {
            n_actions,
            rule: Arc::new(rule),
        }
    }

    /// Views a Markov policy as history-dependent: `d_t(h_t) = d_t(s_t)`.
    pub fn from_markov(policy: &MarkovRandPolicy) -> Self {
        let policy = policy.clone();
        let n_actions = policy.n_actions();
        HistoryRandPolicy::new(n_actions, move |h| {
            policy.dist(h.len(), h.last_state()).to_vec()
        })
    }

    pub fn from_stationary(policy: &StationaryDetPolicy, n_actions: usize) -> Self {
        Self::from_markov(&MarkovRandPolicy::stationary(policy, n_actions))
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Action distribution `q_{d_t(h_t)}`, validated.
    pub fn dist(&self, history: &History) -> Result<Vec<f64>> {
        let q = (self.rule)(history);
        check_distribution(&q, self.n_actions, "history rule output")?;
        Ok(q)
    }
}

impl fmt::Debug for HistoryRandPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoryRandPolicy")
            .field("n_actions", &self.n_actions)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn zeros(n: usize) -> Self {
        ValueVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ValueVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Whether every entry lies in `[r_min/(1-γ), r_max/(1-γ)]` up to `tol`.
    pub fn within_reward_bounds(&self, mdp: &Mdp, tol: f64) -> bool {
        let scale = 1.0 / (1.0 - mdp.discount());
        let lo = mdp.reward_min() * scale - tol;
        let hi = mdp.reward_max() * scale + tol;
        self.0.iter().all(|&v| v >= lo && v <= hi)
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dirac(a: usize, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[a] = 1.0;
    d
}
