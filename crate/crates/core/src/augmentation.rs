//! The `m`-augmented MDP over `X_m = S × A^m`, policy iteration on it, and
//! the chain family that forces policy iteration to take `|S| - 1` steps.
//!
//! An augmented state `x = (s, a^{-1}, ..., a^{-m})` lists pending actions
//! newest first. Taking action `a` in `x` executes the oldest pending action
//! `a^{-m}`, moves the base state with `P(·|s, a^{-m})`, and yields the queue
//! `(a, a^{-1}, ..., a^{-(m-1)})`. The reward `r(s, a^{-m})` ignores `a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_policy, policy_iteration, AugmentationInfo, Mdp, MdpFile, PolicyIterationOutcome,
    StationaryDetPolicy, ValueVector,
};

/// Environment variable overriding [`MemoryBudget::default`].
pub const MEMORY_BUDGET_ENV: &str = "EDMDP_MEMORY_BUDGET";

/// Largest augmented state space (in states) the crate will allocate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBudget(pub u128);

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget(2_000_000)
    }
}

impl MemoryBudget {
    /// The default budget unless [`MEMORY_BUDGET_ENV`] holds a valid count.
    pub fn from_env() -> Self {
        std::env::var(MEMORY_BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map(MemoryBudget)
            .unwrap_or_default()
    }

    /// `|S||A|^m`, or a capacity error when it exceeds the budget.
    pub fn check(&self, n_states: usize, n_actions: usize, delay: usize) -> Result<usize> {
        let required = augmented_cardinality(n_states, n_actions, delay);
        match required {
            Some(n) if n <= self.0 && n <= usize::MAX as u128 => Ok(n as usize),
            Some(n) => Err(Error::capacity(
                format!("augmented state space for delay {delay}"),
                n,
                self.0,
            )),
            None => Err(Error::capacity(
                format!("augmented state space for delay {delay}"),
                u128::MAX,
                self.0,
            )),
        }
    }
}

/// `|S||A|^m`, `None` on overflow.
pub fn augmented_cardinality(n_states: usize, n_actions: usize, delay: usize) -> Option<u128> {
    let pow = (n_actions as u128).checked_pow(u32::try_from(delay).ok()?)?;
    (n_states as u128).checked_mul(pow)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedState {
    pub base_state: usize,
    /// Pending actions, most recent decision first.
    pub pending: Vec<usize>,
}

/// Bijection between augmented states and `0..|S||A|^m`: base-state major,
/// then lexicographic over the pending actions (newest most significant).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentedIndexer {
    n_states: usize,
    n_actions: usize,
    delay: usize,
    queue_codes: usize,
}

impl AugmentedIndexer {
    pub fn new(n_states: usize, n_actions: usize, delay: usize) -> Result<Self> {
        let queue_codes = (n_actions as u128)
            .checked_pow(delay as u32)
            .filter(|&q| {
                q.checked_mul(n_states as u128)
                    .is_some_and(|n| n <= usize::MAX as u128)
            })
            .ok_or_else(|| {
                Error::capacity("augmented index space", u128::MAX, usize::MAX as u128)
            })? as usize;
        Ok(AugmentedIndexer {
            n_states,
            n_actions,
            delay,
            queue_codes,
        })
    }

    pub fn cardinality(&self) -> usize {
        self.n_states * self.queue_codes
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Number of distinct pending queues, `|A|^m`.
    pub fn queue_codes(&self) -> usize {
        self.queue_codes
    }

    pub fn encode(&self, x: &AugmentedState) -> Result<usize> {
        if x.base_state >= self.n_states {
            return Err(Error::invalid(format!(
                "base state {} out of range",
                x.base_state
            )));
        }
        if x.pending.len() != self.delay {
            return Err(Error::invalid(format!(
                "pending queue has {} actions, delay is {}",
                x.pending.len(),
                self.delay
            )));
        }
        if let Some(a) = x.pending.iter().find(|&&a| a >= self.n_actions) {
            return Err(Error::invalid(format!("pending action {a} out of range")));
        }
        Ok(self.encode_parts(x.base_state, x.pending.iter().copied()))
    }

    /// Encodes without validation; `pending` runs newest first.
    #[inline]
    pub fn encode_parts(&self, base_state: usize, pending: impl Iterator<Item = usize>) -> usize {
        let code = pending.fold(0, |c, a| c * self.n_actions + a);
        base_state * self.queue_codes + code
    }

    pub fn decode(&self, index: usize) -> Result<AugmentedState> {
        if index >= self.cardinality() {
            return Err(Error::invalid(format!(
                "augmented index {index} out of range"
            )));
        }
        let base_state = index / self.queue_codes;
        let mut code = index % self.queue_codes;
        let mut pending = vec![0; self.delay];
        for slot in pending.iter_mut().rev() {
            *slot = code % self.n_actions;
            code /= self.n_actions;
        }
        Ok(AugmentedState {
            base_state,
            pending,
        })
    }

    /// Base state, oldest pending action and the queue code after shifting
    /// in `decided`. For `m = 0` the executed action is `decided` itself.
    #[inline]
    fn step_parts(&self, index: usize, decided: usize) -> (usize, usize, usize) {
        let s = index / self.queue_codes;
        let code = index % self.queue_codes;
        if self.delay == 0 {
            return (s, decided, 0);
        }
        let oldest = code % self.n_actions;
        let shifted = decided * (self.queue_codes / self.n_actions) + code / self.n_actions;
        (s, oldest, shifted)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedMdp {
    inner: Mdp,
    delay: usize,
    source: Mdp,
    indexer: AugmentedIndexer,
}

impl AugmentedMdp {
    pub fn inner(&self) -> &Mdp {
        &self.inner
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn source(&self) -> &Mdp {
        &self.source
    }

    pub fn indexer(&self) -> &AugmentedIndexer {
        &self.indexer
    }

    pub fn to_file(&self) -> Result<MdpFile> {
        let mut file = MdpFile::from_mdp(&self.inner)?;
        file.augmentation = Some(AugmentationInfo {
            base_states: self.source.n_states(),
            base_actions: self.source.n_actions(),
            delay: self.delay,
        });
        Ok(file)
    }
}

/// Builds the `m`-augmented MDP, refusing state spaces beyond `budget`.
pub fn build_augmented(mdp: &Mdp, delay: usize, budget: MemoryBudget) -> Result<AugmentedMdp> {
    let n_aug = budget.check(mdp.n_states(), mdp.n_actions(), delay)?;
    let indexer = AugmentedIndexer::new(mdp.n_states(), mdp.n_actions(), delay)?;
    if delay == 0 {
        return Ok(AugmentedMdp {
            inner: mdp.clone(),
            delay,
            source: mdp.clone(),
            indexer,
        });
    }
    let n_actions = mdp.n_actions();
    let mut rows = Vec::with_capacity(n_aug * n_actions);
    let mut reward = Vec::with_capacity(n_aug * n_actions);
    for x in 0..n_aug {
        for a in 0..n_actions {
            let (s, oldest, code) = indexer.step_parts(x, a);
            let (next, prob) = mdp.successors(s, oldest);
            rows.push(
                next.iter()
                    .zip(prob)
                    .map(|(&s2, &p)| (s2 * indexer.queue_codes + code, p))
                    .collect(),
            );
            reward.push(mdp.reward(s, oldest));
        }
    }
    let inner = Mdp::from_rows(n_aug, n_actions, rows, reward, mdp.discount())?;
    Ok(AugmentedMdp {
        inner,
        delay,
        source: mdp.clone(),
        indexer,
    })
}

/// Iteration bound `|S||A|^m (|A|-1) ⌈log(1/(1-γ)) / log(1/γ)⌉` for
/// policy iteration on the augmented MDP, at least 1 (the confirming step).
pub fn ma_pi_iteration_bound(
    n_states: usize,
    n_actions: usize,
    delay: usize,
    discount: f64,
) -> u128 {
    let blocks = if discount <= 0.0 {
        1.0
    } else {
        ((1.0 / (1.0 - discount)).ln() / (1.0 / discount).ln())
            .ceil()
            .max(1.0)
    };
    let card = augmented_cardinality(n_states, n_actions, delay).unwrap_or(u128::MAX);
    card.saturating_mul(n_actions.saturating_sub(1) as u128)
        .saturating_mul(blocks as u128)
        .max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaPiOutcome {
    pub value: ValueVector,
    pub policy: StationaryDetPolicy,
    pub iterations: usize,
    pub bound: u128,
}

impl MaPiOutcome {
    pub fn bound_ok(&self) -> bool {
        self.iterations as u128 <= self.bound
    }
}

/// Policy iteration on the augmented MDP.
pub fn ma_pi(aug: &AugmentedMdp, initial: &StationaryDetPolicy) -> Result<MaPiOutcome> {
    let PolicyIterationOutcome {
        value,
        policy,
        iterations,
    } = policy_iteration(&aug.inner, initial)?;
    Ok(MaPiOutcome {
        value,
        policy,
        iterations,
        bound: ma_pi_iteration_bound(
            aug.source.n_states(),
            aug.source.n_actions(),
            aug.delay,
            aug.source.discount(),
        ),
    })
}

/// [`ma_pi`] from the all-zero policy.
pub fn ma_pi_default(aug: &AugmentedMdp) -> Result<MaPiOutcome> {
    ma_pi(aug, &StationaryDetPolicy::constant(aug.inner.n_states(), 0))
}

/// `‖v - T̄^π v‖_∞` where `v` is the evaluated augmented value and `T̄^π` is
/// applied through the original kernel and reward rather than the built one.
pub fn check_augmented_bellman(aug: &AugmentedMdp, policy: &StationaryDetPolicy) -> Result<f64> {
    let v = evaluate_policy(&aug.inner, policy)?;
    let src = &aug.source;
    let ix = &aug.indexer;
    let gamma = src.discount();
    let mut worst: f64 = 0.0;
    for x in 0..ix.cardinality() {
        let a = policy.action(x);
        let (s, executed, code) = ix.step_parts(x, a);
        let (next, prob) = src.successors(s, executed);
        let cont: f64 = next
            .iter()
            .zip(prob)
            .map(|(&s2, &p)| p * v[s2 * ix.queue_codes + code])
            .sum();
        let tv = src.reward(s, executed) + gamma * cont;
        worst = worst.max((v[x] - tv).abs());
    }
    Ok(worst)
}

/// Action indices of the chain MDP.
pub mod chain {
    /// Jump to the absorbing state.
    pub const DOWN: usize = 0;
    /// Advance along the row.
    pub const UP: usize = 1;
}

/// Row `s_0 .. s_n` plus absorbing `s_{n+1}`; `u` advances (`s_n` loops),
/// `d` jumps to `s_{n+1}`; the only reward is `r(s_n, u) = 1 - γ`.
pub fn make_lower_bound_chain(n: usize, discount: f64) -> Result<Mdp> {
    if n == 0 {
        return Err(Error::invalid("chain needs n >= 1"));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::invalid(format!(
            "chain discount {discount} outside (0, 1)"
        )));
    }
    let n_states = n + 2;
    let sink = n + 1;
    let mut rows = Vec::with_capacity(n_states * 2);
    let mut reward = vec![0.0; n_states * 2];
    for s in 0..n_states {
        for a in [chain::DOWN, chain::UP] {
            let next = match (s, a) {
                (s, _) if s == sink => sink,
                (_, chain::DOWN) => sink,
                (s, _) if s == n => n,
                (s, _) => s + 1,
            };
            rows.push(vec![(next, 1.0)]);
        }
    }
    reward[n * 2 + chain::UP] = 1.0 - discount;
    Mdp::from_rows(n_states, 2, rows, reward, discount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::two_state_mdp;

    #[test]
    fn zero_delay_is_identity() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let aug = build_augmented(&mdp, 0, MemoryBudget::default()).unwrap();
        assert_eq!(aug.inner(), &mdp);
    }

    #[test]
    fn cardinality_is_s_times_a_to_m() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let aug = build_augmented(&mdp, 3, MemoryBudget::default()).unwrap();
        assert_eq!(aug.inner().n_states(), 16);
        assert!(aug.inner().max_row_support() <= 2);
    }

    #[test]
    fn reward_uses_oldest_pending_action() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let aug = build_augmented(&mdp, 1, MemoryBudget::default()).unwrap();
        let x = aug
            .indexer()
            .encode(&AugmentedState {
                base_state: 0,
                pending: vec![1],
            })
            .unwrap();
        for a in 0..2 {
            assert_eq!(aug.inner().reward(x, a), 0.0);
        }
    }

    #[test]
    fn transition_shifts_queue() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let aug = build_augmented(&mdp, 2, MemoryBudget::default()).unwrap();
        let ix = aug.indexer();
        let x = ix
            .encode(&AugmentedState {
                base_state: 0,
                pending: vec![1, 0],
            })
            .unwrap();
        let to = |s, pending: Vec<usize>| {
            ix.encode(&AugmentedState {
                base_state: s,
                pending,
            })
            .unwrap()
        };
        let inner = aug.inner();
        assert_eq!(inner.prob(x, 0, to(1, vec![0, 1])), 0.8);
        assert_eq!(inner.prob(x, 0, to(0, vec![0, 1])), 1.0 - 0.8);
        assert_eq!(inner.prob(x, 0, to(1, vec![1, 0])), 0.0);
        // executes the oldest action a_0 in s_0
        assert_eq!(inner.reward(x, 1), 1.0);
    }

    #[test]
    fn budget_overflow_is_capacity_error() {
        let mdp = two_state_mdp(0.8, 0.5).unwrap();
        let err = build_augmented(&mdp, 4, MemoryBudget(16)).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert_eq!(err.exit_code(), 3);
        assert!(build_augmented(&mdp, 200, MemoryBudget::default()).is_err());
    }

    #[test]
    fn chain_rewards() {
        let mdp = make_lower_bound_chain(10, 0.9).unwrap();
        assert_eq!(mdp.n_states(), 12);
        for s in 0..12 {
            for a in 0..2 {
                let expected = if s == 10 && a == chain::UP {
                    1.0 - 0.9
                } else {
                    0.0
                };
                assert_eq!(mdp.reward(s, a), expected);
            }
        }
        assert!(make_lower_bound_chain(0, 0.9).is_err());
        assert!(make_lower_bound_chain(3, 1.0).is_err());
    }

    #[test]
    fn chain_optimal_value_at_end_is_one() {
        let gamma = 0.9;
        let mdp = make_lower_bound_chain(10, gamma).unwrap();
        let out = policy_iteration(&mdp, &StationaryDetPolicy::constant(12, chain::DOWN)).unwrap();
        assert!((out.value[10] - 1.0).abs() < 1e-12);
        let all_up = StationaryDetPolicy::constant(12, chain::UP);
        let v = evaluate_policy(&mdp, &all_up).unwrap();
        assert!((v[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_formula() {
        // γ = 0.5: ⌈log 2 / log 2⌉ = 1
        assert_eq!(ma_pi_iteration_bound(2, 2, 1, 0.5), 4);
        // γ = 0.9: ⌈ln 10 / ln(1/0.9)⌉ = 22
        assert_eq!(ma_pi_iteration_bound(3, 3, 0, 0.9), 3 * 2 * 22);
    }
}
