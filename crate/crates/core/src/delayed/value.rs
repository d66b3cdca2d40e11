use nalgebra::DMatrix;

use super::{ActionDistQueue, EnumerationBudget};
use crate::error::{Error, Result};
use crate::mdp::{MarkovRandPolicy, Mdp};

/// A horizon-truncated delayed value and the bound on what was cut off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedValue {
    /// `E[Σ_{t=m}^{T-1} γ^{t-m} r_t]`.
    pub value: f64,
    /// `γ^{T-m} max|r| / (1 - γ)`.
    pub truncation_bound: f64,
}

pub(crate) fn truncation_bound(mdp: &Mdp, delay: usize, horizon: usize) -> f64 {
    let gamma = mdp.discount();
    let tail = horizon.saturating_sub(delay);
    gamma.powi(tail.min(i32::MAX as usize) as i32) * mdp.reward_abs_max() / (1.0 - gamma)
}

fn check_inputs(
    mdp: &Mdp,
    queue: &ActionDistQueue,
    policy: &MarkovRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<()> {
    queue.validate(mdp)?;
    policy.validate(mdp)?;
    mdp.check_state(s0)?;
    if horizon < queue.delay() {
        return Err(Error::invalid(format!(
            "horizon {horizon} shorter than the delay {}",
            queue.delay()
        )));
    }
    Ok(())
}

struct Enumeration<'a> {
    mdp: &'a Mdp,
    queue: &'a ActionDistQueue,
    policy: &'a MarkovRandPolicy,
    horizon: usize,
    powers: Vec<f64>,
}

impl Enumeration<'_> {
    /// Expected discounted reward collected from time `k` on, weighted by
    /// the probability `weight` of the path `states[..=k]`.
    fn expand(&self, k: usize, states: &mut Vec<usize>, weight: f64) -> f64 {
        let m = self.queue.delay();
        let s = states[k];
        let dist = if k < m {
            &self.queue.dists()[k][..]
        } else {
            self.policy.dist(k - m, states[k - m])
        };
        let mut total = 0.0;
        for (a, &q) in dist.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let wa = weight * q;
            if k >= m {
                total += wa * self.powers[k - m] * self.mdp.reward(s, a);
            }
            if k + 1 < self.horizon {
                let (next, prob) = self.mdp.successors(s, a);
                for (&s2, &p) in next.iter().zip(prob) {
                    states.push(s2);
                    total += self.expand(k + 1, states, wa * p);
                    states.pop();
                }
            }
        }
        total
    }
}

/// Delayed value of `policy` from `s0` by enumerating every path of length
/// `horizon`, using the default [`EnumerationBudget`].
pub fn delayed_value_exact(
    mdp: &Mdp,
    queue: &ActionDistQueue,
    policy: &MarkovRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<DelayedValue> {
    delayed_value_exact_with(
        mdp,
        queue,
        policy,
        s0,
        horizon,
        EnumerationBudget::default(),
    )
}

pub fn delayed_value_exact_with(
    mdp: &Mdp,
    queue: &ActionDistQueue,
    policy: &MarkovRandPolicy,
    s0: usize,
    horizon: usize,
    budget: EnumerationBudget,
) -> Result<DelayedValue> {
    check_inputs(mdp, queue, policy, s0, horizon)?;
    budget.check(
        "delayed-value path enumeration",
        (mdp.n_states() * mdp.n_actions()) as u128,
        horizon,
    )?;
    let m = queue.delay();
    let gamma = mdp.discount();
    let powers = (0..horizon.saturating_sub(m).max(1))
        .scan(1.0, |g, _| {
            let cur = *g;
            *g *= gamma;
            Some(cur)
        })
        .collect();
    let en = Enumeration {
        mdp,
        queue,
        policy,
        horizon,
        powers,
    };
    let value = if horizon == 0 {
        0.0
    } else {
        en.expand(0, &mut vec![s0], 1.0)
    };
    Ok(DelayedValue {
        value,
        truncation_bound: truncation_bound(mdp, m, horizon),
    })
}

/// `P_u(s, s') = Σ_a u(a) P(s'|s, a)`.
fn kernel_under(mdp: &Mdp, u: &[f64]) -> DMatrix<f64> {
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for (a, &w) in u.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (next, prob) = mdp.successors(s, a);
            for (&s2, &q) in next.iter().zip(prob) {
                p[(s, s2)] += w * q;
            }
        }
    }
    p
}

/// `R_d(s', s) = Σ_a d(s)(a) r(s', a)`: reward in `s'` of the action the
/// rule chose in `s`.
fn reward_under(mdp: &Mdp, rule: impl Fn(usize) -> Vec<f64>) -> DMatrix<f64> {
    let n = mdp.n_states();
    let mut r = DMatrix::zeros(n, n);
    for s in 0..n {
        let d = rule(s);
        for s2 in 0..n {
            r[(s2, s)] = d
                .iter()
                .enumerate()
                .map(|(a, &w)| w * mdp.reward(s2, a))
                .sum();
        }
    }
    r
}

struct Recursion<'a> {
    mdp: &'a Mdp,
    policy: &'a MarkovRandPolicy,
}

impl Recursion<'_> {
    /// `v(s0; μ_0..μ_{m-1}; d_k, d_{k+1}, ...)` truncated to `remaining`
    /// steps: the head `(P_{μ_0} ⋯ P_{μ_{m-1}} R_{d_k})(s0, s0)` plus `γ` times
    /// the value one step later, with `d_k(s0)` shifted onto the queue.
    fn value(&self, k: usize, s0: usize, queue: &[Vec<f64>], remaining: usize) -> f64 {
        let m = queue.len();
        if remaining <= m {
            return 0.0;
        }
        let mdp = self.mdp;
        let decided = self.policy.dist(k, s0);
        if m == 0 {
            let head: f64 = decided
                .iter()
                .enumerate()
                .map(|(a, &w)| w * mdp.reward(s0, a))
                .sum();
            let step = kernel_under(mdp, decided);
            let cont: f64 = (0..mdp.n_states())
                .filter(|&s1| step[(s0, s1)] != 0.0)
                .map(|s1| step[(s0, s1)] * self.value(k + 1, s1, queue, remaining - 1))
                .sum();
            return head + mdp.discount() * cont;
        }
        let mut reach = kernel_under(mdp, &queue[0]);
        let first = reach.clone();
        for u in &queue[1..] {
            reach *= kernel_under(mdp, u);
        }
        let r = reward_under(mdp, |s| self.policy.dist(k, s).to_vec());
        let head = (reach * r)[(s0, s0)];
        let mut shifted = queue[1..].to_vec();
        shifted.push(decided.to_vec());
        let cont: f64 = (0..mdp.n_states())
            .filter(|&s1| first[(s0, s1)] != 0.0)
            .map(|s1| first[(s0, s1)] * self.value(k + 1, s1, &shifted, remaining - 1))
            .sum();
        head + mdp.discount() * cont
    }
}

/// Delayed value through the queue-shift recursion, unrolled to `horizon`.
pub fn delayed_value_recursion(
    mdp: &Mdp,
    queue: &ActionDistQueue,
    policy: &MarkovRandPolicy,
    s0: usize,
    horizon: usize,
) -> Result<DelayedValue> {
    check_inputs(mdp, queue, policy, s0, horizon)?;
    EnumerationBudget::default().check(
        "delayed-value recursion",
        mdp.n_states() as u128,
        horizon - queue.delay(),
    )?;
    let rec = Recursion { mdp, policy };
    Ok(DelayedValue {
        value: rec.value(0, s0, queue.dists(), horizon),
        truncation_bound: truncation_bound(mdp, queue.delay(), horizon),
    })
}

/// `Σ_{t<m} γ^t E[r(s_t, ā_t)]`: reward collected while the fixed queue
/// drains, before any policy decision takes effect.
pub fn queue_prefix_value(mdp: &Mdp, s0: usize, initial_queue: &[usize]) -> Result<f64> {
    mdp.check_state(s0)?;
    let mut dist = vec![0.0; mdp.n_states()];
    dist[s0] = 1.0;
    let mut total = 0.0;
    let mut scale = 1.0;
    for &a in initial_queue {
        mdp.check_action(a)?;
        let mut next = vec![0.0; mdp.n_states()];
        for (s, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            total += scale * w * mdp.reward(s, a);
            let (succ, prob) = mdp.successors(s, a);
            for (&s2, &p) in succ.iter().zip(prob) {
                next[s2] += w * p;
            }
        }
        dist = next;
        scale *= mdp.discount();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::two_state_mdp;
    use crate::mdp::{evaluate_policy, MarkovDetPolicy, StationaryDetPolicy};

    #[test]
    fn zero_delay_matches_policy_evaluation() {
        let mdp = two_state_mdp(0.7, 0.5).unwrap();
        let pol = StationaryDetPolicy::new(vec![0, 1]);
        let v = evaluate_policy(&mdp, &pol).unwrap();
        let rp = MarkovRandPolicy::stationary(&pol, 2);
        let q = ActionDistQueue::deterministic(&[], 2);
        for s0 in 0..2 {
            let d = delayed_value_exact(&mdp, &q, &rp, s0, 14).unwrap();
            assert!((d.value - v[s0]).abs() <= d.truncation_bound + 1e-12);
        }
    }

    #[test]
    fn table_one_second_column() {
        // the flip-predicting policy at even delay keeps the action of s
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let rp = MarkovRandPolicy::stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = ActionDistQueue::deterministic(&[0, 0], 2);
        let d = delayed_value_exact(&mdp, &q, &rp, 0, 12).unwrap();
        assert!((d.value - 1.36).abs() <= d.truncation_bound + 1e-3);
    }

    #[test]
    fn recursion_on_zero_reward_is_zero() {
        let mdp = Mdp::from_dense(2, 2, &[0.5; 8], vec![0.0; 4], 0.9).unwrap();
        let rp = MarkovRandPolicy::stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = ActionDistQueue::uniform(2, 2);
        assert_eq!(
            delayed_value_recursion(&mdp, &q, &rp, 0, 8).unwrap().value,
            0.0
        );
    }

    #[test]
    fn periodic_policy_recursion_matches_enumeration() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let rp = MarkovDetPolicy::new(vec![vec![1, 0], vec![0, 0]])
            .unwrap()
            .to_randomized(2);
        let q = ActionDistQueue::new(vec![vec![0.3, 0.7]], 2).unwrap();
        for s0 in 0..2 {
            let a = delayed_value_exact(&mdp, &q, &rp, s0, 12).unwrap();
            let b = delayed_value_recursion(&mdp, &q, &rp, s0, 12).unwrap();
            assert!((a.value - b.value).abs() < 1e-10);
        }
    }

    #[test]
    fn horizon_shorter_than_delay_is_rejected() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let rp = MarkovRandPolicy::stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = ActionDistQueue::uniform(3, 2);
        assert!(delayed_value_exact(&mdp, &q, &rp, 0, 2).is_err());
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let rp = MarkovRandPolicy::stationary(&StationaryDetPolicy::new(vec![0, 1]), 2);
        let q = ActionDistQueue::uniform(1, 2);
        let err =
            delayed_value_exact_with(&mdp, &q, &rp, 0, 10, EnumerationBudget(1000)).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }

    #[test]
    fn queue_prefix() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        // r(s0, a0) = 1, then s1 w.p. 0.8 where a0 earns nothing
        let v = queue_prefix_value(&mdp, 0, &[0, 0]).unwrap();
        assert!((v - (1.0 + 0.5 * 0.2)).abs() < 1e-15);
    }
}
