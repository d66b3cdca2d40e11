//! Property checks across every module at desk scale, run by `edmdp verify`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{run_cell, ExperimentConfig};
use crate::agents::{
    delayed_env_step, rollout_predict, train_agent, ActionQueue, Agent, AgentVariant, EnvConfig,
    Hyperparameters, ReplayShiftBuffer, RunSpec,
};
use crate::augmentation::{
    augmented_cardinality, build_augmented, check_augmented_bellman, ma_pi_default,
    make_lower_bound_chain, AugmentedMdp, MemoryBudget,
};
use crate::delayed::{
    best_markov_det, best_stationary_det, check_markovization, delayed_value_exact,
    delayed_value_recursion, markovize, nonmarkov_witness, path_probability, queue_prefix_value,
    two_state_analytic_return, ActionDistQueue, DelayedProcessConfig, PathProbabilityQuery,
};
use crate::env::{two_state_mdp, Environment, MazeEnv, MazeGrid, TwoStateEnv};
use crate::error::Result;
use crate::mdp::{
    evaluate_policy, greedy_policy, policy_iteration, policy_iteration_traced, History,
    HistoryRandPolicy, MarkovRandPolicy, Mdp, StationaryDetPolicy, ValueVector, STOCHASTIC_TOL,
};
use crate::rng::{derive_seed, substream, Stream};

/// Reference optimal returns of the two-state example, `p = 0.8`, `γ = 0.5`, `m = 0..=5`.
pub const TWO_STATE_OPTIMAL: [f64; 6] = [2.0, 1.6, 1.36, 1.216, 1.129, 1.077];
/// Published simulated best non-stationary Markov returns: `(mean, std)`.
pub const TWO_STATE_NONSTATIONARY: [(f64, f64); 6] = [
    (1.99, 0.01),
    (1.82, 0.05),
    (1.67, 0.08),
    (1.59, 0.12),
    (1.46, 0.15),
    (1.38, 0.2),
];

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Perturbs one maze kernel row before the stochasticity check.
    pub inject_kernel_fault: bool,
    /// Seed of every randomized check.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    /// Markdown rendering of the two-state delay table.
    pub two_state_table: String,
}

type Outcome = Result<(bool, String)>;

fn run(name: &str, checks: &mut Vec<CheckResult>, f: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let (passed, detail) = match f() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    checks.push(CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    });
}

/// Runs every check; `passed` is false if any single check failed.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let mut c = Vec::new();
    let seed = opts.seed;
    run("mdp.kernel_rows_stochastic", &mut c, || {
        kernel_rows_stochastic(opts.inject_kernel_fault)
    });
    run("mdp.pi_monotone", &mut c, || pi_monotone(seed));
    run("mdp.evaluate_matches_monte_carlo", &mut c, || {
        evaluate_matches_monte_carlo(seed)
    });
    run("mdp.greedy_deterministic", &mut c, || {
        greedy_deterministic(seed)
    });
    run("mdp.chain_iterations", &mut c, chain_iterations);
    run(
        "augmentation.encode_decode_bijection",
        &mut c,
        encode_decode_bijection,
    );
    run("augmentation.reward_ignores_decision", &mut c, || {
        reward_ignores_decision(seed)
    });
    run("augmentation.mapi_within_bound", &mut c, || {
        mapi_within_bound(seed)
    });
    run(
        "augmentation.pi_lower_bound_linear_in_states",
        &mut c,
        pi_lower_bound_linear,
    );
    run(
        "augmentation.dominates_stationary",
        &mut c,
        augmentation_dominates_stationary,
    );
    run("delayed.path_probability_normalized", &mut c, || {
        path_normalization(seed)
    });
    run("delayed.exact_equals_recursion", &mut c, || {
        exact_equals_recursion(seed)
    });
    run("delayed.markov_ge_stationary", &mut c, || {
        markov_ge_stationary(seed)
    });
    run(
        "delayed.markov_gt_stationary_two_state",
        &mut c,
        markov_gt_stationary_two_state,
    );
    run("delayed.randomized_below_markov_det", &mut c, || {
        randomized_below_markov_det(seed)
    });
    run("delayed.analytic_monotone", &mut c, analytic_monotone);
    run(
        "delayed.stationary_matches_analytic",
        &mut c,
        stationary_matches_analytic,
    );
    run("delayed.markovization", &mut c, || markovization(seed));
    run("delayed.nonmarkov_witness", &mut c, witness);
    let mut two_state_table = String::new();
    run("delayed.two_state_table", &mut c, || {
        two_state_table_check(&mut two_state_table)
    });
    run("agents.queue_length", &mut c, || queue_length(seed));
    run("agents.replay_tuples", &mut c, || replay_tuples(seed));
    run("agents.perfect_model_prediction", &mut c, || {
        perfect_model_prediction(seed)
    });
    run("agents.zero_delay_identical", &mut c, || {
        zero_delay_identical(seed)
    });
    run("agents.augmented_table_size", &mut c, augmented_table_size);
    run("env.kernel_chi_square", &mut c, || maze_chi_square(seed));
    run("env.perfect_maze", &mut c, perfect_mazes);
    run("env.noise_monotone", &mut c, || noise_monotone(seed));
    run("harness.record_reproducible", &mut c, || {
        record_reproducible(seed)
    });
    VerifyReport {
        passed: c.iter().all(|x| x.passed),
        checks: c,
        two_state_table,
    }
}

/// A random MDP with some zero transitions, rewards in `[-1, 1]`.
pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, discount: f64) -> Mdp {
    let rows = (0..n_states * n_actions)
        .map(|_| {
            let mut w: Vec<f64> = (0..n_states)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect();
            let k = rng.gen_range(0..n_states);
            w[k] += 0.1;
            let total: f64 = w.iter().sum();
            w.into_iter()
                .enumerate()
                .filter(|(_, p)| *p > 0.0)
                .map(|(s, p)| (s, p / total))
                .collect::<Vec<_>>()
        })
        .collect();
    let reward = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    renormalized(n_states, n_actions, rows, reward, discount)
}

/// Puts any rounding residue of a row onto its largest entry.
fn renormalized(
    n_states: usize,
    n_actions: usize,
    mut rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    discount: f64,
) -> Mdp {
    for row in &mut rows {
        let total: f64 = row.iter().map(|x| x.1).sum();
        let big = (0..row.len())
            .max_by(|&i, &j| row[i].1.total_cmp(&row[j].1))
            .unwrap();
        row[big].1 += 1.0 - total;
    }
    Mdp::from_rows(n_states, n_actions, rows, reward, discount).expect("random rows are stochastic")
}

fn random_markov_policy(
    rng: &mut ChaCha8Rng,
    rules: usize,
    n_states: usize,
    n_actions: usize,
) -> MarkovRandPolicy {
    let rules = (0..rules)
        .map(|_| {
            (0..n_states)
                .map(|_| {
                    let w: Vec<f64> = (0..n_actions).map(|_| rng.gen::<f64>() + 1e-3).collect();
                    let t: f64 = w.iter().sum();
                    let mut d: Vec<f64> = w.iter().map(|x| x / t).collect();
                    let fix = 1.0 - d.iter().sum::<f64>();
                    d[0] += fix;
                    d
                })
                .collect()
        })
        .collect();
    MarkovRandPolicy::new(rules).expect("random rules are distributions")
}

/// Largest `|Σ_s' P(s'|s,a) - 1|` over rows, or any negative entry.
pub fn max_row_error(n_states: usize, n_actions: usize, dense: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for row in dense.chunks(n_states).take(n_states * n_actions) {
        let total: f64 = row.iter().sum();
        worst = worst.max((total - 1.0).abs());
        if row.iter().any(|&p| p < 0.0) {
            worst = f64::INFINITY;
        }
    }
    worst
}

fn sparse_row_error(mdp: &Mdp) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let total: f64 = mdp.successors(s, a).1.iter().sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    worst
}

fn kernel_rows_stochastic(inject_fault: bool) -> Outcome {
    let maze = MazeEnv::generate(8, 0.1, 11)?.mdp(0.99)?;
    let mut dense = maze.dense_kernel();
    if inject_fault {
        dense[5] += 1e-3;
    }
    let mut worst = max_row_error(maze.n_states(), maze.n_actions(), &dense);
    let two = two_state_mdp(0.8, 0.5)?;
    let mut built = vec![two.clone(), make_lower_bound_chain(10, 0.9)?];
    for (mdp, m) in [(&two, 3), (&maze, 2)] {
        built.push(
            build_augmented(mdp, m, MemoryBudget::default())?
                .inner()
                .clone(),
        );
    }
    for mdp in &built {
        worst = worst.max(sparse_row_error(mdp));
    }
    Ok((
        worst <= STOCHASTIC_TOL,
        format!("largest row-sum error {worst:e}"),
    ))
}

fn pi_monotone(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 1), Stream::Sampling);
    for i in 0..40 {
        let (s, a) = (rng.gen_range(1..=6), rng.gen_range(1..=3));
        let gamma = [0.5, 0.9, 0.99][i % 3];
        let mdp = random_mdp(&mut rng, s, a, gamma);
        let mut prev: Option<ValueVector> = None;
        let mut ok = true;
        policy_iteration_traced(&mdp, &StationaryDetPolicy::constant(s, 0), |_, v| {
            if let Some(p) = &prev {
                let tol = 1e-9 * (1.0 + p.0.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                ok &= v.0.iter().zip(&p.0).all(|(x, y)| *x >= y - tol);
            }
            prev = Some(v.clone());
        })?;
        if !ok {
            return Ok((false, format!("value decreased on instance {i}")));
        }
    }
    Ok((true, "40 random MDPs".into()))
}

fn evaluate_matches_monte_carlo(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 2), Stream::Sampling);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (n, k) = (rng.gen_range(1..=6), rng.gen_range(1..=3));
        let gamma = 0.8;
        let mdp = random_mdp(&mut rng, n, k, gamma);
        let policy = StationaryDetPolicy::new((0..n).map(|_| rng.gen_range(0..k)).collect());
        let v = evaluate_policy(&mdp, &policy)?;
        let horizon = 120;
        let tail = gamma.powi(horizon) * mdp.reward_abs_max() / (1.0 - gamma);
        let runs = 4000;
        let returns: Vec<f64> = (0..runs)
            .map(|_| {
                let (mut s, mut ret, mut scale) = (0, 0.0, 1.0);
                for _ in 0..horizon {
                    let a = policy.action(s);
                    ret += scale * mdp.reward(s, a);
                    scale *= gamma;
                    s = sample(&mut rng, mdp.successors(s, a));
                }
                ret
            })
            .collect();
        let (mean, std) = super::mean_std(&returns);
        let se = std / (runs as f64).sqrt();
        let z = ((mean - v.0[0]).abs() - tail).max(0.0) / se.max(1e-12);
        worst = worst.max(z);
    }
    Ok((
        worst <= 3.0,
        format!("largest gap {worst:.2} standard errors"),
    ))
}

fn sample(rng: &mut ChaCha8Rng, (next, prob): (&[usize], &[f64])) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&s, &p) in next.iter().zip(prob) {
        acc += p;
        if u < acc {
            return s;
        }
    }
    *next.last().expect("rows are non-empty")
}

fn greedy_deterministic(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 3), Stream::Sampling);
    // all actions equal, so every state is a tie
    let mdp = Mdp::from_dense(3, 3, &[1.0 / 3.0; 27], vec![0.5; 9], 0.9)?;
    let v = ValueVector((0..3).map(|_| rng.gen()).collect());
    let a = greedy_policy(&mdp, &v)?;
    let b = greedy_policy(&mdp, &v)?;
    Ok((
        a == b && a.actions() == [0, 0, 0],
        format!("{:?}", a.actions()),
    ))
}

fn chain_iterations() -> Outcome {
    for gamma in [0.5, 0.9, 0.99] {
        for n in 1..=50 {
            let chain = make_lower_bound_chain(n, gamma)?;
            let it = policy_iteration(&chain, &StationaryDetPolicy::constant(n + 2, 0))?.iterations;
            if it != n + 1 {
                return Ok((false, format!("n={n} γ={gamma}: {it} iterations")));
            }
        }
    }
    Ok((true, "n+1 iterations for n=1..50".into()))
}

fn encode_decode_bijection() -> Outcome {
    for (s, a, m) in [
        (1, 1, 5),
        (2, 2, 10),
        (3, 3, 6),
        (5, 4, 6),
        (4, 3, 9),
        (10, 10, 4),
    ] {
        let aug = crate::augmentation::AugmentedIndexer::new(s, a, m)?;
        for x in 0..aug.cardinality() {
            if aug.encode(&aug.decode(x)?)? != x {
                return Ok((false, format!("|S|={s} |A|={a} m={m}: index {x}")));
            }
        }
    }
    Ok((true, "up to 10^5 indices per shape".into()))
}

fn reward_ignores_decision(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 4), Stream::Sampling);
    let mdp = random_mdp(&mut rng, 4, 3, 0.9);
    let maze = MazeEnv::generate(4, 0.2, 3)?.mdp(0.9)?;
    for (src, m) in [(&mdp, 3), (&maze, 2)] {
        let aug = build_augmented(src, m, MemoryBudget::default())?;
        let inner = aug.inner();
        for x in 0..inner.n_states() {
            let r0 = inner.reward(x, 0);
            if (1..inner.n_actions()).any(|a| inner.reward(x, a) != r0) {
                return Ok((false, format!("state {x} at m={m}")));
            }
        }
    }
    Ok((true, "random 4x3 at m=3, 4x4 maze at m=2".into()))
}

fn mapi_within_bound(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 5), Stream::Sampling);
    let mut worst_bellman: f64 = 0.0;
    for i in 0..100 {
        let (s, a, m) = (
            rng.gen_range(1..=4),
            rng.gen_range(1..=3),
            rng.gen_range(0..=3),
        );
        let gamma = [0.5, 0.9][i % 2];
        let aug = build_augmented(
            &random_mdp(&mut rng, s, a, gamma),
            m,
            MemoryBudget::default(),
        )?;
        let out = ma_pi_default(&aug)?;
        if !out.bound_ok() {
            return Ok((
                false,
                format!("instance {i}: {} > {}", out.iterations, out.bound),
            ));
        }
        worst_bellman = worst_bellman.max(check_augmented_bellman(&aug, &out.policy)?);
    }
    Ok((
        worst_bellman < 1e-8,
        format!("100 instances; Bellman residual {worst_bellman:e}"),
    ))
}

/// Howard's PI on the chain needs `|X| - 1` steps for an MDP with `|X|`
/// states; taking `|X| = |S||A|^m` gives growth linear in the augmented size.
fn pi_lower_bound_linear() -> Outcome {
    let mut detail = String::new();
    for m in 1..=6 {
        let x = augmented_cardinality(2, 2, m).expect("small") as usize;
        let chain = make_lower_bound_chain(x - 2, 0.9)?;
        let it = policy_iteration(&chain, &StationaryDetPolicy::constant(x, 0))?.iterations;
        let _ = write!(detail, "|X|={x}:{it} ");
        if it + 1 < x {
            return Ok((false, detail));
        }
    }
    Ok((true, detail.trim_end().to_string()))
}

fn augmentation_dominates_stationary() -> Outcome {
    let (p, gamma) = (0.8, 0.5);
    let mdp = two_state_mdp(p, gamma)?;
    let stationary: Vec<MarkovRandPolicy> = (0..4)
        .map(|code| {
            MarkovRandPolicy::stationary(&StationaryDetPolicy::new(vec![code % 2, code / 2]), 2)
        })
        .collect();
    let mut worst = f64::INFINITY;
    for m in 1..=3 {
        let aug: AugmentedMdp = build_augmented(&mdp, m, MemoryBudget::default())?;
        let opt = ma_pi_default(&aug)?;
        for x in 0..aug.indexer().cardinality() {
            let st = aug.indexer().decode(x)?;
            let oldest_first: Vec<usize> = st.pending.iter().rev().copied().collect();
            let queue = ActionDistQueue::deterministic(&oldest_first, 2);
            // rewards are non-negative, so truncation only lowers the stationary side
            let mut best = f64::NEG_INFINITY;
            for policy in &stationary {
                best = best.max(
                    delayed_value_recursion(&mdp, &queue, policy, st.base_state, m + 12)?.value,
                );
            }
            let prefix = queue_prefix_value(&mdp, st.base_state, &oldest_first)?;
            worst = worst.min(opt.value.0[x] - (prefix + gamma.powi(m as i32) * best));
        }
    }
    Ok((worst >= -1e-9, format!("smallest margin {worst:.3e}")))
}

fn path_normalization(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 6), Stream::Sampling);
    let mut worst: f64 = 0.0;
    for _ in 0..6 {
        let (n, k, m) = (
            rng.gen_range(1..=3),
            rng.gen_range(1..=2),
            rng.gen_range(0..=2),
        );
        let mdp = random_mdp(&mut rng, n, k, 0.9);
        let queue: Vec<usize> = (0..m).map(|_| rng.gen_range(0..k)).collect();
        let cfg = DelayedProcessConfig::from_state(mdp, queue, rng.gen_range(0..n))?;
        let policy = HistoryRandPolicy::from_markov(&random_markov_policy(&mut rng, 3, n, k));
        for t in 0..=6 {
            let mut total = 0.0;
            let paths = (n as u64).pow(t as u32 + 1) * (k as u64).pow(t as u32);
            for code in 0..paths {
                let mut c = code;
                let mut states = Vec::with_capacity(t + 1);
                let mut actions = Vec::with_capacity(t);
                for i in 0..=t {
                    states.push((c % n as u64) as usize);
                    c /= n as u64;
                    if i < t {
                        actions.push((c % k as u64) as usize);
                        c /= k as u64;
                    }
                }
                total +=
                    path_probability(&cfg, &policy, &PathProbabilityQuery::new(states, actions)?)?;
            }
            worst = worst.max((total - 1.0).abs());
        }
    }
    Ok((worst < 1e-10, format!("largest deviation {worst:e}")))
}

fn exact_equals_recursion(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 7), Stream::Sampling);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (n, k, m) = (
            rng.gen_range(1..=3),
            rng.gen_range(1..=2),
            rng.gen_range(0..=3),
        );
        let horizon = rng.gen_range(m.max(1)..=8.max(m + 1));
        let mdp = random_mdp(&mut rng, n, k, 0.8);
        // every other instance uses an m-periodic policy
        let rules = if i % 2 == 0 { m.max(1) } else { horizon };
        let policy = random_markov_policy(&mut rng, rules, n, k);
        let queue = if rng.gen_bool(0.5) {
            ActionDistQueue::deterministic(
                &(0..m).map(|_| rng.gen_range(0..k)).collect::<Vec<_>>(),
                k,
            )
        } else {
            ActionDistQueue::uniform(m, k)
        };
        let s0 = rng.gen_range(0..n);
        let a = delayed_value_exact(&mdp, &queue, &policy, s0, horizon)?.value;
        let b = delayed_value_recursion(&mdp, &queue, &policy, s0, horizon)?.value;
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 1e-10, format!("largest gap {worst:e}")))
}

fn markov_ge_stationary(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 8), Stream::Sampling);
    for i in 0..20 {
        let (n, k, m) = (
            rng.gen_range(1..=3),
            rng.gen_range(1..=2),
            rng.gen_range(0..=2),
        );
        let mdp = random_mdp(&mut rng, n, k, 0.7);
        let queue = (0..m).map(|_| rng.gen_range(0..k)).collect();
        let cfg = DelayedProcessConfig::from_state(mdp, queue, 0)?;
        let horizon = m + 5;
        let sd = best_stationary_det(&cfg, horizon)?.value;
        let md = best_markov_det(&cfg, horizon)?.value;
        if md < sd - 1e-12 {
            return Ok((false, format!("instance {i}: {md} < {sd}")));
        }
    }
    Ok((true, "20 random instances".into()))
}

fn two_state_cfg(m: usize) -> Result<DelayedProcessConfig> {
    DelayedProcessConfig::new(two_state_mdp(0.8, 0.5)?, m, vec![0; m], vec![0.5, 0.5])
}

fn markov_gt_stationary_two_state() -> Outcome {
    let mut detail = String::new();
    let mut ok = true;
    for m in 1..=5 {
        let cfg = two_state_cfg(m)?;
        let sd = best_stationary_det(&cfg, 10)?.value;
        let md = best_markov_det(&cfg, 10)?.value;
        let _ = write!(detail, "m={m}: {md:.6} vs {sd:.6}; ");
        ok &= md > sd + 1e-12;
    }
    Ok((ok, detail.trim_end().to_string()))
}

fn randomized_below_markov_det(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 9), Stream::Sampling);
    let mut instances = vec![two_state_cfg(1)?, two_state_cfg(2)?];
    let mdp = random_mdp(&mut rng, 3, 2, 0.8);
    instances.push(DelayedProcessConfig::new(
        mdp,
        1,
        vec![1],
        vec![0.2, 0.3, 0.5],
    )?);
    let mut worst = f64::INFINITY;
    for cfg in &instances {
        let horizon = cfg.delay() + 6;
        let best = best_markov_det(cfg, horizon)?.value;
        let (n, k) = (cfg.mdp().n_states(), cfg.mdp().n_actions());
        for _ in 0..200 {
            let policy = random_markov_policy(&mut rng, horizon - cfg.delay(), n, k);
            let mut v = 0.0;
            for (s0, &w) in cfg.initial_dist().iter().enumerate() {
                if w > 0.0 {
                    v += w * delayed_value_exact(
                        cfg.mdp(),
                        &cfg.action_queue(),
                        &policy,
                        s0,
                        horizon,
                    )?
                    .value;
                }
            }
            worst = worst.min(best - v);
        }
    }
    Ok((worst >= -1e-10, format!("smallest margin {worst:.3e}")))
}

fn analytic_monotone() -> Outcome {
    for m in 0..=10 {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=50 {
            let v = two_state_analytic_return(0.5 + 0.01 * i as f64, m, 0.5)?;
            if v < prev - 1e-12 {
                return Ok((false, format!("decreasing in p at m={m}")));
            }
            prev = v;
        }
    }
    for i in 0..=50 {
        let p = 0.5 + 0.01 * i as f64;
        for m in 0..10 {
            if two_state_analytic_return(p, m + 1, 0.5)?
                > two_state_analytic_return(p, m, 0.5)? + 1e-12
            {
                return Ok((false, format!("increasing in m at p={p}")));
            }
        }
    }
    Ok((true, "p in [0.5, 1], m in 0..=10".into()))
}

fn stationary_matches_analytic() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 0..=5 {
        let out = best_stationary_det(&two_state_cfg(m)?, 10)?;
        let exact = two_state_analytic_return(0.8, m, 0.5)?;
        worst = worst.max((out.value - exact).abs() - out.truncation_bound);
    }
    Ok((
        worst <= 1e-9,
        format!("largest excess over truncation {worst:e}"),
    ))
}

fn markovization(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 10), Stream::Sampling);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let m = 1 + i % 2;
        let cfg = two_state_cfg(m)?;
        let table: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..0.95)).collect();
        // depends on the whole history through a hash of it
        let policy = HistoryRandPolicy::new(2, move |h: &History| {
            let code = h
                .states()
                .iter()
                .chain(h.actions())
                .fold(h.len(), |acc, &x| (acc * 7 + x + 3) % 64);
            let q = table[code];
            vec![q, 1.0 - q]
        });
        let markov = markovize(&cfg, &policy, 0, 6)?;
        worst = worst.max(check_markovization(&cfg, &policy, &markov, 0, 6)?);
    }
    Ok((worst <= 1e-10, format!("largest marginal gap {worst:e}")))
}

fn witness() -> Outcome {
    let mdp = two_state_mdp(0.8, 0.5)?;
    let policy = StationaryDetPolicy::new(vec![0, 1]);
    let with_delay = nonmarkov_witness(
        &DelayedProcessConfig::from_state(mdp.clone(), vec![0], 0)?,
        &policy,
        5,
    )?;
    let without = nonmarkov_witness(
        &DelayedProcessConfig::from_state(mdp, vec![], 0)?,
        &policy,
        5,
    )?;
    Ok((
        with_delay.is_some() && without.is_none(),
        format!(
            "m=1 witness: {}, m=0 witness: {}",
            with_delay.is_some(),
            without.is_some()
        ),
    ))
}

/// Markdown rows of the two-state table and whether every cell agrees.
fn two_state_table_check(out: &mut String) -> Outcome {
    let mut ok = true;
    let mut rows = [
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ];
    for m in 0..=5 {
        let cfg = two_state_cfg(m)?;
        let analytic = two_state_analytic_return(0.8, m, 0.5)?;
        let sd = best_stationary_det(&cfg, 10)?;
        let md = best_markov_det(&cfg, 10)?;
        let (mean, std) = TWO_STATE_NONSTATIONARY[m];
        ok &= (analytic - TWO_STATE_OPTIMAL[m]).abs() <= 1e-3;
        ok &= (sd.value - analytic).abs() <= sd.truncation_bound + 1e-9;
        ok &= (md.value - mean).abs() <= std;
        let _ = write!(rows[0], " {m} |");
        let _ = write!(rows[1], " {analytic:.3} |");
        let _ = write!(rows[2], " {:.3} |", sd.value);
        let _ = write!(rows[3], " {:.3} |", md.value);
        let _ = write!(rows[4], " {mean:.2} ± {std:.2} |");
    }
    let _ = writeln!(out, "| m |{}", rows[0]);
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    let _ = writeln!(out, "| stationary, closed form |{}", rows[1]);
    let _ = writeln!(out, "| stationary, exact T=10 |{}", rows[2]);
    let _ = writeln!(out, "| non-stationary Markov, exact T=10 |{}", rows[3]);
    let _ = writeln!(
        out,
        "| non-stationary Markov, published simulation |{}",
        rows[4]
    );
    Ok((ok, out.clone()))
}

fn queue_length(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 11), Stream::Sampling);
    for m in 0..=4 {
        let mut env = MazeEnv::generate(4, 0.2, seed)?;
        for _ in 0..5 {
            env.reset();
            let mut q = ActionQueue::new((0..m).map(|_| rng.gen_range(0..4)).collect());
            while !env.is_done() {
                delayed_env_step(&mut env, &mut q, rng.gen_range(0..4))?;
                if q.delay() != m {
                    return Ok((false, format!("queue length {} at m={m}", q.delay())));
                }
            }
        }
    }
    Ok((true, "m=0..4 on a noisy 4x4 maze".into()))
}

fn replay_tuples(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 12), Stream::Sampling);
    for m in 0..=3 {
        for len in [1, 3, 8] {
            let mut env = TwoStateEnv::new(0.8, 0.5, len, seed)?;
            let mut s = env.reset();
            let mut q = ActionQueue::new(vec![1; m]);
            let mut buf = ReplayShiftBuffer::new(m);
            let mut trace = Vec::new();
            let mut decided = Vec::new();
            let mut tuples = Vec::new();
            while !env.is_done() {
                let d = rng.gen_range(0..2);
                let st = delayed_env_step(&mut env, &mut q, d)?;
                decided.push(d);
                trace.push((s, st.step.reward, st.step.next_state));
                tuples.extend(buf.record(
                    s,
                    d,
                    s,
                    st.step.reward,
                    st.step.next_state,
                    st.step.terminal,
                ));
                s = st.step.next_state;
            }
            if tuples.len() != len.saturating_sub(m) {
                return Ok((false, format!("m={m} len={len}: {} tuples", tuples.len())));
            }
            for (j, t) in tuples.iter().enumerate() {
                let (st, r, nx) = trace[j + m];
                if (t.state, t.reward, t.next_state, t.action) != (st, r, nx, decided[j]) {
                    return Ok((
                        false,
                        format!("m={m} len={len}: tuple {j} disagrees with the trace"),
                    ));
                }
            }
        }
    }
    Ok((true, "steps - m tuples matching the trace".into()))
}

fn perfect_model_prediction(seed: u64) -> Outcome {
    let mut rng = substream(derive_seed(seed, 13), Stream::Sampling);
    let grid = MazeGrid::generate(6, seed)?;
    for m in 0..=5 {
        let mut env = MazeEnv::new(grid.clone(), 0.0, seed)?;
        let mut s = env.reset();
        let mut q = ActionQueue::new((0..m).map(|_| rng.gen_range(0..4)).collect());
        let mut predicted = Vec::new();
        let mut realized = vec![s];
        while !env.is_done() {
            predicted.push(rollout_predict(&grid, s, &q));
            s = delayed_env_step(&mut env, &mut q, rng.gen_range(0..4))?
                .step
                .next_state;
            realized.push(s);
        }
        for (t, p) in predicted.iter().enumerate() {
            if t + m < realized.len() && realized[t + m] != *p {
                return Ok((false, format!("m={m} t={t}")));
            }
        }
    }
    Ok((true, "m=0..5 on a 6x6 maze".into()))
}

fn zero_delay_identical(seed: u64) -> Outcome {
    let env = EnvConfig::Maze {
        size: 5,
        noise: 0.1,
        maze_seed: Some(seed),
    };
    let tables: Vec<Vec<f64>> = AgentVariant::ALL
        .iter()
        .map(|&variant| {
            let spec = RunSpec {
                variant,
                env: env.clone(),
                delay: 0,
                episodes: 60,
                seed,
                hyper: Hyperparameters::default(),
            };
            train_agent(&spec, MemoryBudget::default()).map(|o| o.agent.q_table().values().to_vec())
        })
        .collect::<Result<_>>()?;
    let same = tables.windows(2).all(|w| w[0] == w[1]);
    Ok((same, "60 episodes on a noisy 5x5 maze".into()))
}

fn augmented_table_size() -> Outcome {
    for (s, a, m) in [(2, 2, 0), (2, 2, 5), (16, 4, 3), (64, 4, 5)] {
        let agent = Agent::new(
            AgentVariant::Augmented,
            s,
            a,
            m,
            0.1,
            MemoryBudget::default(),
        )?;
        let expected = s * a.pow(m as u32) * a;
        if agent.table_size() != expected {
            return Ok((false, format!("{} != {expected}", agent.table_size())));
        }
    }
    Ok((true, "|S||A|^m|A|".into()))
}

fn maze_chi_square(seed: u64) -> Outcome {
    let noise = 0.2;
    let mut env = MazeEnv::generate(5, noise, seed)?;
    let mdp = env.mdp(0.9)?;
    let samples = 100_000;
    let mut worst_p: f64 = 1.0;
    for (cell, a) in [(0, 1), (6, 0), (12, 2), (18, 3)] {
        let (next, prob) = mdp.successors(cell, a);
        let mut counts = vec![0u64; next.len()];
        for _ in 0..samples {
            env.reset_to(cell)?;
            let s2 = env.step(a)?.next_state;
            let i = next.binary_search(&s2).map_err(|_| {
                crate::error::Error::InvalidState(format!("sampled {s2} outside the support"))
            })?;
            counts[i] += 1;
        }
        if next.len() < 2 {
            continue;
        }
        let stat: f64 = counts
            .iter()
            .zip(prob)
            .map(|(&c, &p)| {
                let e = p * samples as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dist = ChiSquared::new((next.len() - 1) as f64).expect("positive degrees of freedom");
        worst_p = worst_p.min(1.0 - dist.cdf(stat));
    }
    Ok((worst_p > 0.001, format!("smallest p-value {worst_p:.4}")))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn perfect_mazes() -> Outcome {
    for n in 2..=12 {
        for seed in 0..5 {
            let g = MazeGrid::generate(n, seed)?;
            let cells = n * n;
            let mut parent: Vec<usize> = (0..cells).collect();
            let mut unions = 0;
            for c in 0..cells {
                // right and down neighbours only, so each wall is seen once
                for d in [1, 2] {
                    if g.is_open(c, d) {
                        let (a, b) = (find(&mut parent, c), find(&mut parent, g.move_from(c, d)));
                        if a == b {
                            return Ok((false, format!("n={n} seed={seed}: cycle")));
                        }
                        parent[a] = b;
                        unions += 1;
                    }
                }
            }
            let root = find(&mut parent, 0);
            let connected = (0..cells).all(|c| find(&mut parent, c) == root);
            if unions != cells - 1 || g.removed_walls() != cells - 1 || !connected {
                return Ok((false, format!("n={n} seed={seed}")));
            }
        }
    }
    Ok((true, "n=2..12, 5 seeds each".into()))
}

fn noise_monotone(seed: u64) -> Outcome {
    let grid = MazeGrid::generate(8, seed)?;
    let mut prev = f64::INFINITY;
    let mut detail = String::new();
    for i in 0..=5 {
        let p = 0.1 * i as f64;
        let mdp = MazeEnv::new(grid.clone(), p, seed)?.mdp(0.99)?;
        let v = policy_iteration(&mdp, &StationaryDetPolicy::constant(mdp.n_states(), 0))?
            .value
            .0[grid.start()];
        let _ = write!(detail, "p={p:.1}:{v:.4} ");
        if v > prev + 1e-9 {
            return Ok((false, detail));
        }
        prev = v;
    }
    Ok((true, detail.trim_end().to_string()))
}

fn record_reproducible(seed: u64) -> Outcome {
    let text = format!(
        "master_seed = {seed}\ndelays = [2]\nseeds = [0]\nvariants = [\"delayed\"]\nepisodes = 30\n\
         [environment]\nkind = \"maze\"\nsize = 5\nnoise = 0.1\n"
    );
    let cfg = ExperimentConfig::from_toml(&text)?;
    let a = run_cell(&cfg, AgentVariant::Delayed, 2, 0.1, 0)?;
    let b = run_cell(&cfg, AgentVariant::Delayed, 2, 0.1, 0)?;
    let same = a
        .returns
        .iter()
        .map(|x| x.to_bits())
        .eq(b.returns.iter().map(|x| x.to_bits()))
        && a.final_return.map(f64::to_bits) == b.final_return.map(f64::to_bits);
    Ok((same, format!("config {} seed 0", a.config_hash)))
}
