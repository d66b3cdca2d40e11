use rayon::prelude::*;

use super::value::{delayed_value_exact_with, truncation_bound};
use super::{decode_rule, DelayedProcessConfig, EnumerationBudget};
use crate::error::{Error, Result};
use crate::mdp::{MarkovDetPolicy, MarkovRandPolicy, Mdp, StationaryDetPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome<P> {
    pub policy: P,
    /// Delayed value averaged over the initial distribution.
    pub value: f64,
    pub truncation_bound: f64,
}

fn rule_count(mdp: &Mdp, budget: EnumerationBudget) -> Result<usize> {
    budget.check(
        "decision-rule enumeration",
        mdp.n_actions() as u128,
        mdp.n_states(),
    )?;
    Ok((mdp.n_actions() as u128).pow(mdp.n_states() as u32) as usize)
}

/// Exhaustive maximum of the delayed value over stationary deterministic
/// policies; the lowest-numbered maximizer wins.
pub fn best_stationary_det(
    cfg: &DelayedProcessConfig,
    horizon: usize,
) -> Result<SearchOutcome<StationaryDetPolicy>> {
    best_stationary_det_with(cfg, horizon, EnumerationBudget::default())
}

pub fn best_stationary_det_with(
    cfg: &DelayedProcessConfig,
    horizon: usize,
    budget: EnumerationBudget,
) -> Result<SearchOutcome<StationaryDetPolicy>> {
    let mdp = cfg.mdp();
    let n_rules = rule_count(mdp, budget)?;
    let queue = cfg.action_queue();
    let values = (0..n_rules)
        .into_par_iter()
        .map(|idx| {
            let pol = StationaryDetPolicy::new(decode_rule(idx, mdp.n_states(), mdp.n_actions()));
            let rp = MarkovRandPolicy::stationary(&pol, mdp.n_actions());
            let mut v = 0.0;
            for (s0, &w) in cfg.initial_dist().iter().enumerate() {
                if w != 0.0 {
                    v += w * delayed_value_exact_with(mdp, &queue, &rp, s0, horizon, budget)?.value;
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (best, value) = first_max(&values);
    Ok(SearchOutcome {
        policy: StationaryDetPolicy::new(decode_rule(best, mdp.n_states(), mdp.n_actions())),
        value,
        truncation_bound: truncation_bound(mdp, cfg.delay(), horizon),
    })
}

fn first_max(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

/// Forward propagation of the joint law of `(s_t, queued actions)` with the
/// queue stored oldest first and encoded most-significant first.
struct Propagator<'a> {
    mdp: &'a Mdp,
    delay: usize,
    codes: usize,
    rules: Vec<Vec<usize>>,
}

impl Propagator<'_> {
    /// Expected reward at the current time and the law one step later when
    /// rule `rule` decides the action that joins the back of the queue.
    fn step(&self, dist: &[f64], rule: &[usize]) -> (f64, Vec<f64>) {
        let mdp = self.mdp;
        let a_count = mdp.n_actions();
        let mut next = vec![0.0; dist.len()];
        let mut reward = 0.0;
        let high = self.codes / a_count.max(1);
        for (idx, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (s, code) = (idx / self.codes, idx % self.codes);
            let (executed, code_next) = if self.delay == 0 {
                (rule[s], 0)
            } else {
                (code / high, (code % high) * a_count + rule[s])
            };
            reward += w * mdp.reward(s, executed);
            let (succ, prob) = mdp.successors(s, executed);
            for (&s2, &p) in succ.iter().zip(prob) {
                next[s2 * self.codes + code_next] += w * p;
            }
        }
        (reward, next)
    }

    /// Best value and rules for decisions `j..decisions`, given the law at
    /// time `j`. Rewards before time `m` are not counted.
    fn search(
        &self,
        j: usize,
        decisions: usize,
        horizon: usize,
        dist: &[f64],
    ) -> (f64, Vec<usize>) {
        let gamma = self.mdp.discount();
        let weight = |t: usize| {
            if t >= self.delay {
                gamma.powi((t - self.delay) as i32)
            } else {
                0.0
            }
        };
        if j == decisions {
            // remaining rewards only depend on actions already queued
            let filler = vec![0; self.mdp.n_states()];
            let mut total = 0.0;
            let mut d = dist.to_vec();
            for t in j..horizon {
                let (r, nd) = self.step(&d, &filler);
                total += weight(t) * r;
                d = nd;
            }
            return (total, Vec::new());
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for (idx, rule) in self.rules.iter().enumerate() {
            let (r, nd) = self.step(dist, rule);
            let (rest, mut tail) = self.search(j + 1, decisions, horizon, &nd);
            let v = weight(j) * r + rest;
            if v > best.0 {
                tail.insert(0, idx);
                best = (v, tail);
            }
        }
        best
    }
}

/// Exhaustive maximum of the delayed value over time-indexed deterministic
/// rules `d_0, ..., d_{T-m-1}` (later rules cannot affect rewards before
/// `T`). Ties go to the lexicographically lowest rule sequence.
pub fn best_markov_det(
    cfg: &DelayedProcessConfig,
    horizon: usize,
) -> Result<SearchOutcome<MarkovDetPolicy>> {
    best_markov_det_with(cfg, horizon, EnumerationBudget::default())
}

pub fn best_markov_det_with(
    cfg: &DelayedProcessConfig,
    horizon: usize,
    budget: EnumerationBudget,
) -> Result<SearchOutcome<MarkovDetPolicy>> {
    let mdp = cfg.mdp();
    let m = cfg.delay();
    if horizon < m {
        return Err(Error::invalid(format!(
            "horizon {horizon} shorter than the delay {m}"
        )));
    }
    let n_rules = rule_count(mdp, budget)?;
    let decisions = horizon - m;
    budget.check("Markov policy enumeration", n_rules as u128, decisions)?;
    let codes = (mdp.n_actions() as u128)
        .checked_pow(m as u32)
        .filter(|c| c.saturating_mul(mdp.n_states() as u128) <= budget.0)
        .ok_or_else(|| Error::capacity("queue law", u128::MAX, budget.0))? as usize;
    let prop = Propagator {
        mdp,
        delay: m,
        codes,
        rules: (0..n_rules)
            .map(|i| decode_rule(i, mdp.n_states(), mdp.n_actions()))
            .collect(),
    };
    let code0 = cfg
        .initial_queue()
        .iter()
        .fold(0, |c, &a| c * mdp.n_actions() + a);
    let mut start = vec![0.0; mdp.n_states() * codes];
    for (s, &w) in cfg.initial_dist().iter().enumerate() {
        start[s * codes + code0] = w;
    }

    let (value, indices) = if decisions == 0 {
        prop.search(0, 0, horizon, &start)
    } else {
        let gamma_weight = if m == 0 { 1.0 } else { 0.0 };
        let branches: Vec<(f64, Vec<usize>)> = (0..n_rules)
            .into_par_iter()
            .map(|idx| {
                let (r, nd) = prop.step(&start, &prop.rules[idx]);
                let (rest, mut tail) = prop.search(1, decisions, horizon, &nd);
                tail.insert(0, idx);
                (gamma_weight * r + rest, tail)
            })
            .collect();
        let values: Vec<f64> = branches.iter().map(|b| b.0).collect();
        let (i, _) = first_max(&values);
        branches[i].clone()
    };
    let rules = if indices.is_empty() {
        vec![vec![0; mdp.n_states()]]
    } else {
        indices.into_iter().map(|i| prop.rules[i].clone()).collect()
    };
    Ok(SearchOutcome {
        policy: MarkovDetPolicy::new(rules)?,
        value,
        truncation_bound: truncation_bound(mdp, m, horizon),
    })
}
