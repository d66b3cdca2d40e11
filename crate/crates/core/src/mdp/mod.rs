//! Finite tabular MDPs, policy classes and exact dynamic programming.
//!
//! States and actions are dense 0-based indices. The transition kernel is
//! stored row-compressed: each `(s, a)` row keeps only its nonzero
//! successors, sorted by successor index. Augmented MDPs rely on this since
//! their rows have at most `|S|` nonzero entries out of `|S||A|^m`.

mod io;
mod policy;
mod solve;

pub use io::{AugmentationInfo, MdpFile};
pub(crate) use policy::dirac;
pub use policy::{
    History, HistoryRandPolicy, MarkovDetPolicy, MarkovRandPolicy, StationaryDetPolicy, ValueVector,
};
pub use solve::{
    bellman_optimal, bellman_policy, evaluate_policy, evaluate_policy_from, greedy_policy,
    policy_iteration, policy_iteration_traced, q_value, PolicyIterationOutcome,
    DIRECT_SOLVE_MAX_STATES,
};

use crate::error::{Error, Result};

/// Row sums must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    row_start: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl Mdp {
    /// Builds an MDP from a dense row-major kernel indexed `(s, a, s')` and a
    /// reward indexed `(s, a)`.
    pub fn from_dense(
        n_states: usize,
        n_actions: usize,
        kernel: &[f64],
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid(
                "an MDP needs at least one state and one action",
            ));
        }
        let expected = n_states
            .checked_mul(n_actions)
            .and_then(|x| x.checked_mul(n_states))
            .ok_or_else(|| Error::invalid("kernel dimensions overflow"))?;
        if kernel.len() != expected {
            return Err(Error::invalid(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                expected
            )));
        }
        let rows = kernel
            .chunks(n_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(s, &p)| (s, p))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        Self::from_rows(n_states, n_actions, rows, reward, discount)
    }

    /// Builds an MDP from sparse rows, one per `(s, a)` in row-major order.
    /// Duplicate successors are summed and exact zeros dropped.
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid(
                "an MDP needs at least one state and one action",
            ));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "got {} kernel rows, expected {}",
                rows.len(),
                n_states * n_actions
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("non-finite reward {r}")));
        }

        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        row_start.push(0);
        for (idx, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(s, _)| s);
            let mut total = 0.0;
            let begin = next.len();
            for (s, p) in row {
                if s >= n_states {
                    return Err(Error::invalid(format!(
                        "row {idx}: successor {s} out of range"
                    )));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!(
                        "row {idx}: invalid probability {p}"
                    )));
                }
                total += p;
                if p == 0.0 {
                    continue;
                }
                if next.len() > begin && *next.last().unwrap() == s {
                    *prob.last_mut().unwrap() += p;
                } else {
                    next.push(s);
                    prob.push(p);
                }
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "row (s={}, a={}) sums to {total}, not 1",
                    idx / n_actions,
                    idx % n_actions
                )));
            }
            row_start.push(next.len());
        }

        Ok(Mdp {
            n_states,
            n_actions,
            row_start,
            next,
            prob,
            reward,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        Ok(Mdp {
            discount,
            ..self.clone()
        })
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Nonzero successors of `(s, a)` and their probabilities.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> (&[usize], &[f64]) {
        let row = s * self.n_actions + a;
        let (lo, hi) = (self.row_start[row], self.row_start[row + 1]);
        (&self.next[lo..hi], &self.prob[lo..hi])
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let (next, prob) = self.successors(s, a);
        match next.binary_search(&s_next) {
            Ok(i) => prob[i],
            Err(_) => 0.0,
        }
    }

    /// Largest number of nonzero successors over all rows.
    pub fn max_row_support(&self) -> usize {
        self.row_start
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    pub fn reward_min(&self) -> f64 {
        self.reward.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn reward_max(&self) -> f64 {
        self.reward
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute reward.
    pub fn reward_abs_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| f64::max(m, r.abs()))
    }

    /// Dense row-major kernel `(s, a, s')`.
    pub fn dense_kernel(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states * self.n_actions * self.n_states];
        for row in 0..self.n_states * self.n_actions {
            for i in self.row_start[row]..self.row_start[row + 1] {
                out[row * self.n_states + self.next[i]] = self.prob[i];
            }
        }
        out
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::invalid(format!(
                "state {s} out of range for {} states",
                self.n_states
            )));
        }
        Ok(())
    }

    pub(crate) fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::invalid(format!(
                "action {a} out of range for {} actions",
                self.n_actions
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(dist: &[f64], len: usize, what: &str) -> Result<()> {
    if dist.len() != len {
        return Err(Error::invalid(format!(
            "{what} has {} entries, expected {len}",
            dist.len()
        )));
    }
    let mut total = 0.0;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::invalid(format!("{what} has invalid entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> Mdp {
        Mdp::from_dense(2, 1, &[0.25, 0.75, 1.0, 0.0], vec![1.0, -1.0], 0.9).unwrap()
    }

    #[test]
    fn sparse_rows_drop_zeros() {
        let mdp = coin();
        assert_eq!(mdp.successors(1, 0), (&[0usize][..], &[1.0][..]));
        assert_eq!(mdp.prob(0, 0, 1), 0.75);
        assert_eq!(mdp.prob(1, 0, 1), 0.0);
        assert_eq!(mdp.dense_kernel(), vec![0.25, 0.75, 1.0, 0.0]);
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let err = Mdp::from_dense(2, 1, &[0.5, 0.4, 1.0, 0.0], vec![0.0; 2], 0.9);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_negative_entry() {
        let err = Mdp::from_dense(2, 1, &[1.5, -0.5, 1.0, 0.0], vec![0.0; 2], 0.9);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_bad_discount_and_reward() {
        assert!(Mdp::from_dense(1, 1, &[1.0], vec![0.0], 1.0).is_err());
        assert!(Mdp::from_dense(1, 1, &[1.0], vec![f64::NAN], 0.5).is_err());
        assert!(Mdp::from_dense(1, 1, &[1.0, 0.0], vec![0.0], 0.5).is_err());
    }

    #[test]
    fn duplicate_successors_merge() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![vec![(1, 0.5), (1, 0.5)], vec![(0, 1.0)]],
            vec![0.0; 2],
            0.5,
        )
        .unwrap();
        assert_eq!(mdp.successors(0, 0).0, &[1]);
        assert_eq!(mdp.prob(0, 0, 1), 1.0);
    }
}
