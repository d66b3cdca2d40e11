use std::collections::HashMap;

use serde::Serialize;

use super::{DelayedProcessConfig, EnumerationBudget};
use crate::error::{Error, Result};
use crate::mdp::{History, HistoryRandPolicy, MarkovRandPolicy, StationaryDetPolicy};

struct MarginalWalk<'a> {
    cfg: &'a DelayedProcessConfig,
    policy: &'a HistoryRandPolicy,
    last: usize,
    /// `out[k][s][a] = P(s_k = s, a_{k+m} = a)`.
    out: Vec<Vec<Vec<f64>>>,
}

impl MarginalWalk<'_> {
    fn walk(&mut self, h: &mut History, rules: &mut Vec<Vec<f64>>, prob: f64) -> Result<()> {
        let k = h.len();
        let s = h.last_state();
        let d = self.policy.dist(h)?;
        for (a, &q) in d.iter().enumerate() {
            self.out[k][s][a] += prob * q;
        }
        rules.push(d);
        if k < self.last {
            let m = self.cfg.delay();
            let mdp = self.cfg.mdp();
            let executed = if k < m {
                crate::mdp::dirac(self.cfg.initial_queue()[k], mdp.n_actions())
            } else {
                rules[k - m].clone()
            };
            for (a, &q) in executed.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let (succ, p) = mdp.successors(s, a);
                for (&s2, &ps) in succ.iter().zip(p) {
                    h.push(a, s2);
                    self.walk(h, rules, prob * q * ps)?;
                    h.pop();
                }
            }
        }
        rules.pop();
        Ok(())
    }
}

/// `P(s_k = s, a_{k+m} = a | s_0)` for `k = 0..=T-m`, indexed `[k][s][a]`,
/// by enumerating every history from `s0`.
pub fn markov_marginals(
    cfg: &DelayedProcessConfig,
    policy: &HistoryRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mdp = cfg.mdp();
    mdp.check_state(s0)?;
    if policy.n_actions() != mdp.n_actions() {
        return Err(Error::invalid(
            "policy and MDP disagree on the action count",
        ));
    }
    let m = cfg.delay();
    if horizon < m {
        return Err(Error::invalid(format!(
            "horizon {horizon} shorter than the delay {m}"
        )));
    }
    let last = horizon - m;
    EnumerationBudget::default().check(
        "history enumeration",
        (mdp.n_states() * mdp.n_actions()) as u128,
        last,
    )?;
    let mut walk = MarginalWalk {
        cfg,
        policy,
        last,
        out: vec![vec![vec![0.0; mdp.n_actions()]; mdp.n_states()]; last + 1],
    };
    walk.walk(&mut History::start(s0), &mut Vec::new(), 1.0)?;
    Ok(walk.out)
}

/// Markov policy with `d'_k(s)(a) = P(a_{k+m} = a | s_k = s, s_0)` for
/// `k = 0..=T-m`. States the process cannot reach at time `k` get the
/// uniform distribution.
pub fn markovize(
    cfg: &DelayedProcessConfig,
    policy: &HistoryRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<MarkovRandPolicy> {
    let n_actions = cfg.mdp().n_actions();
    let rules = markov_marginals(cfg, policy, s0, horizon)?
        .into_iter()
        .map(|per_state| {
            per_state
                .into_iter()
                .map(|joint| {
                    let mass: f64 = joint.iter().sum();
                    if mass > 0.0 {
                        joint.into_iter().map(|x| x / mass).collect()
                    } else {
                        vec![1.0 / n_actions as f64; n_actions]
                    }
                })
                .collect()
        })
        .collect();
    MarkovRandPolicy::new(rules)
}

/// Largest gap between the state/delayed-action marginals of `original` and
/// those of `markov` over `k = 0..=T-m`.
pub fn check_markovization(
    cfg: &DelayedProcessConfig,
    original: &HistoryRandPolicy,
    markov: &MarkovRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<f64> {
    let a = markov_marginals(cfg, original, s0, horizon)?;
    let b = markov_marginals(cfg, &HistoryRandPolicy::from_markov(markov), s0, horizon)?;
    let gap = a
        .iter()
        .flatten()
        .flatten()
        .zip(b.iter().flatten().flatten())
        .fold(0.0, |g, (x, y)| f64::max(g, (x - y).abs()));
    Ok(gap)
}

/// Law of `(r_t, s_{t+1})` given a history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Continuation {
    pub reward: f64,
    pub next_state: Vec<f64>,
}

impl Continuation {
    fn differs(&self, other: &Continuation) -> bool {
        (self.reward - other.reward).abs() > 1e-12
            || self
                .next_state
                .iter()
                .zip(&other.next_state)
                .any(|(a, b)| (a - b).abs() > 1e-12)
    }
}

/// Two reachable histories of equal length ending in the same state whose
/// next reward and next state have different laws.
#[derive(Clone, Debug, PartialEq)]
pub struct NonMarkovWitness {
    pub first: History,
    pub second: History,
    pub first_continuation: Continuation,
    pub second_continuation: Continuation,
}

struct WitnessSearch<'a> {
    cfg: &'a DelayedProcessConfig,
    policy: &'a StationaryDetPolicy,
    horizon: usize,
    seen: HashMap<(usize, usize), (History, Continuation)>,
}

impl WitnessSearch<'_> {
    fn walk(&mut self, h: &mut History) -> Option<NonMarkovWitness> {
        let mdp = self.cfg.mdp();
        let t = h.len();
        let s = h.last_state();
        let m = self.cfg.delay();
        let a = if t < m {
            self.cfg.initial_queue()[t]
        } else {
            self.policy.action(h.states()[t - m])
        };
        let mut next_state = vec![0.0; mdp.n_states()];
        let (succ, prob) = mdp.successors(s, a);
        for (&s2, &p) in succ.iter().zip(prob) {
            next_state[s2] = p;
        }
        let cont = Continuation {
            reward: mdp.reward(s, a),
            next_state,
        };
        match self.seen.get(&(t, s)) {
            Some((other, c)) if c.differs(&cont) => {
                return Some(NonMarkovWitness {
                    first: other.clone(),
                    second: h.clone(),
                    first_continuation: c.clone(),
                    second_continuation: cont,
                });
            }
            Some(_) => {}
            None => {
                self.seen.insert((t, s), (h.clone(), cont));
            }
        }
        if t + 1 < self.horizon {
            for &s2 in succ {
                h.push(a, s2);
                let found = self.walk(h);
                h.pop();
                if found.is_some() {
                    return found;
                }
            }
        }
        None
    }
}

/// Searches reachable histories of length below `horizon` for a pair that
/// agrees on the current state but not on the law of `(r_t, s_{t+1})`.
pub fn nonmarkov_witness(
    cfg: &DelayedProcessConfig,
    policy: &StationaryDetPolicy,
    horizon: usize,
) -> Result<Option<NonMarkovWitness>> {
    let mdp = cfg.mdp();
    policy.validate(mdp)?;
    EnumerationBudget::default().check("history enumeration", mdp.n_states() as u128, horizon)?;
    let mut search = WitnessSearch {
        cfg,
        policy,
        horizon,
        seen: HashMap::new(),
    };
    for (s0, &w) in cfg.initial_dist().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        if let Some(found) = search.walk(&mut History::start(s0)) {
            return Ok(Some(found));
        }
    }
    Ok(None)
}
