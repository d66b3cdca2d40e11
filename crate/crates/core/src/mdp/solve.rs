use nalgebra::{DMatrix, DVector};

use super::{Mdp, StationaryDetPolicy, ValueVector};
use crate::error::{Error, Result};

/// Above this many states policy evaluation switches from a direct LU solve
/// to Gauss-Seidel sweeps.
pub const DIRECT_SOLVE_MAX_STATES: usize = 5_000;

const RESIDUAL_TARGET: f64 = 1e-11;

/// Relative slack under which two action values count as tied.
const TIE_TOL: f64 = 1e-12;

#[inline]
pub fn q_value(mdp: &Mdp, v: &[f64], s: usize, a: usize) -> f64 {
    let (next, prob) = mdp.successors(s, a);
    let expected: f64 = next.iter().zip(prob).map(|(&s2, &p)| p * v[s2]).sum();
    mdp.reward(s, a) + mdp.discount() * expected
}

/// `T^π v`.
pub fn bellman_policy(mdp: &Mdp, policy: &StationaryDetPolicy, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| q_value(mdp, v, s, policy.action(s)))
        .collect()
}

/// `T v`.
pub fn bellman_optimal(mdp: &Mdp, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| q_value(mdp, v, s, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn residual(mdp: &Mdp, policy: &StationaryDetPolicy, v: &[f64]) -> f64 {
    bellman_policy(mdp, policy, v)
        .iter()
        .zip(v)
        .fold(0.0, |m, (tv, x)| f64::max(m, (tv - x).abs()))
}

fn check_dims(mdp: &Mdp, policy: &StationaryDetPolicy) -> Result<()> {
    policy.validate(mdp)
}

/// Exact value of a stationary deterministic policy, `v = r_π + γ P_π v`.
pub fn evaluate_policy(mdp: &Mdp, policy: &StationaryDetPolicy) -> Result<ValueVector> {
    evaluate_policy_from(mdp, policy, None)
}

/// As [`evaluate_policy`]; `warm` seeds the iterative solver used above
/// [`DIRECT_SOLVE_MAX_STATES`].
pub fn evaluate_policy_from(
    mdp: &Mdp,
    policy: &StationaryDetPolicy,
    warm: Option<&ValueVector>,
) -> Result<ValueVector> {
    check_dims(mdp, policy)?;
    if let Some(w) = warm {
        if w.len() != mdp.n_states() {
            return Err(Error::invalid("warm-start vector has wrong length"));
        }
    }
    let v = if mdp.n_states() <= DIRECT_SOLVE_MAX_STATES {
        solve_direct(mdp, policy)
    } else {
        solve_iterative(mdp, policy, warm)
    };
    Ok(ValueVector(v))
}

fn solve_direct(mdp: &Mdp, policy: &StationaryDetPolicy) -> Vec<f64> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        let act = policy.action(s);
        b[s] = mdp.reward(s, act);
        let (next, prob) = mdp.successors(s, act);
        for (&s2, &p) in next.iter().zip(prob) {
            a[(s, s2)] -= gamma * p;
        }
    }
    let lu = a.lu();
    let mut v = lu.solve(&b).expect("I - γP is nonsingular for γ < 1");
    // Iterative refinement keeps the Bellman residual small for γ near 1.
    for _ in 0..3 {
        let x: Vec<f64> = v.iter().copied().collect();
        let tv = bellman_policy(mdp, policy, &x);
        let r = DVector::from_iterator(n, tv.iter().zip(&x).map(|(t, xi)| t - xi));
        if r.amax() <= RESIDUAL_TARGET {
            break;
        }
        v += lu.solve(&r).expect("nonsingular");
    }
    v.iter().copied().collect()
}

fn solve_iterative(
    mdp: &Mdp,
    policy: &StationaryDetPolicy,
    warm: Option<&ValueVector>,
) -> Vec<f64> {
    let n = mdp.n_states();
    let mut v = warm.map_or_else(|| vec![0.0; n], |w| w.0.clone());
    loop {
        for s in 0..n {
            v[s] = q_value(mdp, &v, s, policy.action(s));
        }
        if residual(mdp, policy, &v) <= RESIDUAL_TARGET {
            return v;
        }
    }
}

/// Greedy policy w.r.t. `v`; ties go to the lowest action index.
pub fn greedy_policy(mdp: &Mdp, v: &ValueVector) -> Result<StationaryDetPolicy> {
    if v.len() != mdp.n_states() {
        return Err(Error::invalid(format!(
            "value vector has {} entries, MDP has {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    let actions = (0..mdp.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..mdp.n_actions())
                .map(|a| q_value(mdp, &v.0, s, a))
                .collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let slack = TIE_TOL * scale;
            q.iter().position(|&x| x >= best - slack).unwrap_or(0)
        })
        .collect();
    Ok(StationaryDetPolicy::new(actions))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyIterationOutcome {
    pub value: ValueVector,
    pub policy: StationaryDetPolicy,
    /// Improvement steps that changed the policy. A run whose initial policy
    /// is already greedy reports its single confirming step.
    pub iterations: usize,
}

/// Howard's policy iteration from `initial`.
pub fn policy_iteration(
    mdp: &Mdp,
    initial: &StationaryDetPolicy,
) -> Result<PolicyIterationOutcome> {
    policy_iteration_traced(mdp, initial, |_, _| {})
}

/// Policy iteration calling `observe(k, v_k)` after each evaluation.
pub fn policy_iteration_traced<F>(
    mdp: &Mdp,
    initial: &StationaryDetPolicy,
    mut observe: F,
) -> Result<PolicyIterationOutcome>
where
    F: FnMut(usize, &ValueVector),
{
    initial.validate(mdp)?;
    let mut policy = initial.clone();
    let mut value = evaluate_policy(mdp, &policy)?;
    observe(0, &value);
    let mut changes = 0;
    loop {
        let next = greedy_policy(mdp, &value)?;
        if next == policy {
            break;
        }
        changes += 1;
        policy = next;
        value = evaluate_policy_from(mdp, &policy, Some(&value))?;
        observe(changes, &value);
    }
    Ok(PolicyIterationOutcome {
        value,
        policy,
        iterations: changes.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reward_gives_zero_value() {
        let mdp = Mdp::from_dense(
            2,
            2,
            &[0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7],
            vec![0.0; 4],
            0.9,
        )
        .unwrap();
        let v = evaluate_policy(&mdp, &StationaryDetPolicy::new(vec![1, 0])).unwrap();
        assert_eq!(v.0, vec![0.0, 0.0]);
    }

    #[test]
    fn geometric_series_single_state() {
        let mdp = Mdp::from_dense(1, 1, &[1.0], vec![1.0], 0.5).unwrap();
        let v = evaluate_policy(&mdp, &StationaryDetPolicy::new(vec![0])).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reward_only_argmax_picks_highest_action() {
        let n_actions = 3;
        let mut kernel = Vec::new();
        for _ in 0..2 * n_actions {
            kernel.extend([1.0, 0.0]);
        }
        let reward = (0..2)
            .flat_map(|_| (0..n_actions).map(|a| a as f64))
            .collect();
        let mdp = Mdp::from_dense(2, n_actions, &kernel, reward, 0.9).unwrap();
        let p = greedy_policy(&mdp, &ValueVector::zeros(2)).unwrap();
        assert_eq!(p.actions(), &[2, 2]);
    }

    #[test]
    fn exact_tie_takes_lowest_index() {
        let mdp = Mdp::from_dense(1, 2, &[1.0, 1.0], vec![0.5, 0.5], 0.9).unwrap();
        let p = greedy_policy(&mdp, &ValueVector::zeros(1)).unwrap();
        assert_eq!(p.actions(), &[0]);
    }

    #[test]
    fn dimension_mismatch_is_invalid_input() {
        let mdp = Mdp::from_dense(1, 1, &[1.0], vec![1.0], 0.5).unwrap();
        let err = evaluate_policy(&mdp, &StationaryDetPolicy::new(vec![0, 0]));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        let err = evaluate_policy(&mdp, &StationaryDetPolicy::new(vec![1]));
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        assert!(greedy_policy(&mdp, &ValueVector::zeros(3)).is_err());
    }

    #[test]
    fn optimal_start_reports_one_iteration() {
        let mdp = Mdp::from_dense(1, 2, &[1.0, 1.0], vec![1.0, 0.0], 0.9).unwrap();
        let out = policy_iteration(&mdp, &StationaryDetPolicy::new(vec![0])).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.policy.actions(), &[0]);
    }

    #[test]
    fn iterative_solver_matches_direct() {
        // A ring large enough to take the Gauss-Seidel path.
        let n = DIRECT_SOLVE_MAX_STATES + 10;
        let rows = (0..n)
            .map(|s| vec![((s + 1) % n, 0.6), ((s + 7) % n, 0.4)])
            .collect();
        let reward = (0..n).map(|s| ((s * 37) % 11) as f64 / 11.0).collect();
        let mdp = Mdp::from_rows(n, 1, rows, reward, 0.9).unwrap();
        let pol = StationaryDetPolicy::constant(n, 0);
        let v = evaluate_policy(&mdp, &pol).unwrap();
        assert!(residual(&mdp, &pol, &v.0) <= 1e-10);
        let mut jacobi = vec![0.0; n];
        for _ in 0..400 {
            jacobi = bellman_policy(&mdp, &pol, &jacobi);
        }
        let diff =
            v.0.iter()
                .zip(&jacobi)
                .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        assert!(diff < 1e-9, "diff {diff}");
    }
}
