use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ActionQueue;
use crate::env::MazeGrid;

/// One-step dynamics used to look `m` steps ahead.
pub trait ForwardModel {
    fn predict(&self, s: usize, a: usize) -> usize;
}

/// Visit counts of observed transitions. Predicts the most frequent
/// successor (lowest index on ties) and `s` itself for unseen pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardModelTable {
    n_actions: usize,
    counts: Vec<BTreeMap<usize, u64>>,
    /// Current mode of each row, kept in step with `counts`.
    mode: Vec<Option<(usize, u64)>>,
}

impl ForwardModelTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        ForwardModelTable {
            n_actions,
            counts: vec![BTreeMap::new(); n_states * n_actions],
            mode: vec![None; n_states * n_actions],
        }
    }

    pub fn observe(&mut self, s: usize, a: usize, s_next: usize) {
        let row = s * self.n_actions + a;
        let c = self.counts[row].entry(s_next).or_insert(0);
        *c += 1;
        let c = *c;
        // counts only grow, so the mode is either unchanged or `s_next`
        let replace = match self.mode[row] {
            None => true,
            Some((m, mc)) => c > mc || (c == mc && s_next < m) || m == s_next,
        };
        if replace {
            self.mode[row] = Some((s_next, c));
        }
    }

    pub fn count(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.counts[s * self.n_actions + a]
            .get(&s_next)
            .copied()
            .unwrap_or(0)
    }

    pub fn counts(&self, s: usize, a: usize) -> &BTreeMap<usize, u64> {
        &self.counts[s * self.n_actions + a]
    }
}

impl ForwardModel for ForwardModelTable {
    fn predict(&self, s: usize, a: usize) -> usize {
        self.mode[s * self.n_actions + a].map_or(s, |(m, _)| m)
    }
}

/// Exact model of a noise-free maze; the goal absorbs.
impl ForwardModel for MazeGrid {
    fn predict(&self, s: usize, a: usize) -> usize {
        if s == self.goal() {
            s
        } else {
            self.move_from(s, a)
        }
    }
}

/// `ŝ_{t+m}`: applies the pending actions, oldest first, to `s`.
pub fn rollout_predict<M: ForwardModel + ?Sized>(
    model: &M,
    s: usize,
    queue: &ActionQueue,
) -> usize {
    queue
        .iter_oldest_first()
        .fold(s, |cur, a| model.predict(cur, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_with_ties_and_fallback() {
        let mut m = ForwardModelTable::new(3, 2);
        for _ in 0..3 {
            m.observe(0, 0, 1);
        }
        m.observe(0, 0, 0);
        assert_eq!(m.predict(0, 0), 1);
        assert_eq!(m.predict(2, 1), 2);

        let mut t = ForwardModelTable::new(3, 1);
        t.observe(1, 0, 2);
        t.observe(1, 0, 2);
        t.observe(1, 0, 0);
        t.observe(1, 0, 0);
        assert_eq!(t.predict(1, 0), 0);
    }

    #[test]
    fn mode_matches_brute_force_argmax() {
        let mut m = ForwardModelTable::new(5, 1);
        let seq = [3, 1, 3, 1, 4, 4, 4, 1, 0, 3];
        for (i, &s2) in seq.iter().enumerate() {
            m.observe(2, 0, s2);
            let counts = m.counts(2, 0);
            let best = counts.values().max().unwrap();
            let expected = counts
                .iter()
                .find(|(_, c)| *c == best)
                .map(|(s, _)| *s)
                .unwrap();
            assert_eq!(m.predict(2, 0), expected, "after {} observations", i + 1);
        }
    }

    #[test]
    fn zero_delay_rollout_is_identity() {
        let m = ForwardModelTable::new(4, 2);
        assert_eq!(rollout_predict(&m, 3, &ActionQueue::new(vec![])), 3);
    }
}
