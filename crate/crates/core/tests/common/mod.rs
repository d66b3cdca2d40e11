//! Reference computations shared by the integration tests. They avoid the
//! crate's own solvers so that agreement means something.

#![allow(dead_code)]

use std::collections::BTreeMap;

use edmdp::Mdp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense random kernel with some zero entries; rewards uniform in `[-1, 1]`.
pub fn random_dense(
    rng: &mut ChaCha8Rng,
    n_states: usize,
    n_actions: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut w: Vec<f64> = (0..n_states)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        w[rng.gen_range(0..n_states)] += 0.2;
        let total: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
        let big = (0..n_states)
            .max_by(|&i, &j| row[i].total_cmp(&row[j]))
            .unwrap();
        let residue = 1.0 - row.iter().sum::<f64>();
        row[big] += residue;
        kernel.extend(row);
    }
    let reward = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    (kernel, reward)
}

pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, discount: f64) -> Mdp {
    let (kernel, reward) = random_dense(rng, n_states, n_actions);
    Mdp::from_dense(n_states, n_actions, &kernel, reward, discount).unwrap()
}

/// Random distribution with every entry positive.
pub fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let t: f64 = w.iter().sum();
    let mut d: Vec<f64> = w.iter().map(|x| x / t).collect();
    let residue = 1.0 - d.iter().sum::<f64>();
    d[0] += residue;
    d
}

/// `rules[k][s]` is an action distribution.
pub fn random_rules(
    rng: &mut ChaCha8Rng,
    n_rules: usize,
    n_states: usize,
    n_actions: usize,
) -> Vec<Vec<Vec<f64>>> {
    (0..n_rules)
        .map(|_| (0..n_states).map(|_| random_dist(rng, n_actions)).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * y;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Value of a stationary deterministic policy by solving `(I - γP) v = r`.
pub fn policy_value(mdp: &Mdp, actions: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] += 1.0;
        for (s2, x) in a[s].iter_mut().enumerate() {
            *x -= gamma * mdp.prob(s, actions[s], s2);
        }
        b[s] = mdp.reward(s, actions[s]);
    }
    solve_linear(a, b)
}

/// Optimal values by brute force over every deterministic stationary policy.
pub fn brute_force_optimum(mdp: &Mdp) -> Vec<f64> {
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; n];
    for code in 0..k.pow(n as u32) {
        let actions: Vec<usize> = (0..n).map(|s| code / k.pow(s as u32) % k).collect();
        for (b, v) in best.iter_mut().zip(policy_value(mdp, &actions)) {
            *b = b.max(v);
        }
    }
    best
}

/// `Σ_{t=m}^{T-1} γ^{t-m} E r_t` by propagating the joint law of the state
/// and the pending actions. `queue[i]` is the law of the action executed at
/// time `i`; the action decided at time `k` follows `rules[k % len][s_k]`.
pub fn delayed_value_oracle(
    mdp: &Mdp,
    queue: &[Vec<f64>],
    rules: &[Vec<Vec<f64>>],
    s0: usize,
    horizon: usize,
) -> f64 {
    let m = queue.len();
    let gamma = mdp.discount();
    // (state, pending actions oldest first) -> probability
    let mut law: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
    let mut start = vec![(Vec::new(), 1.0)];
    for dist in queue {
        let mut next = Vec::new();
        for (prefix, p) in &start {
            for (a, &q) in dist.iter().enumerate() {
                if q > 0.0 {
                    let mut v: Vec<usize> = prefix.clone();
                    v.push(a);
                    next.push((v, p * q));
                }
            }
        }
        start = next;
    }
    for (pending, p) in start {
        *law.entry((s0, pending)).or_default() += p;
    }
    let mut value = 0.0;
    for t in 0..horizon {
        let mut next: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
        let rule = &rules[t % rules.len()];
        for ((s, pending), p) in law {
            let decisions: Vec<(usize, f64)> = rule[s]
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, q)| q > 0.0)
                .collect();
            let (a, rest) = if m == 0 {
                (None, Vec::new())
            } else {
                (Some(pending[0]), pending[1..].to_vec())
            };
            for &(d, q) in &decisions {
                let executed = a.unwrap_or(d);
                let weight = p * q;
                if t >= m {
                    value += gamma.powi((t - m) as i32) * weight * mdp.reward(s, executed);
                }
                let mut queue_next = rest.clone();
                if m > 0 {
                    queue_next.push(d);
                }
                for s2 in 0..mdp.n_states() {
                    let ps = mdp.prob(s, executed, s2);
                    if ps > 0.0 {
                        *next.entry((s2, queue_next.clone())).or_default() += weight * ps;
                    }
                }
            }
        }
        law = next;
    }
    value
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
