//! Tabular Q-learning under execution delay.
//!
//! * Oblivious-Q learns on `(s_t, a_t, r_t, s_{t+1})` as if there were no delay.
//! * Augmented-Q learns on the augmented state `(s_t, pending actions)`.
//! * Delayed-Q acts greedily on `ŝ_{t+m}`, the state predicted by rolling a
//!   count-based forward model through the pending actions, and learns on
//!   transitions re-paired with the action that actually executed in them.

mod model;
mod qtable;
mod replay;

pub use model::{rollout_predict, ForwardModel, ForwardModelTable};
pub use qtable::{EpsilonSchedule, QTable};
pub use replay::{ReplayShiftBuffer, ShiftedTuple};

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::{AugmentedIndexer, MemoryBudget};
use crate::env::{Environment, MazeEnv, MazeGrid, Step, TwoStateEnv};
use crate::error::{Error, Result};
use crate::harness::mean_std;
use crate::rng::{derive_seed, substream, Stream};

/// The `m` decided-but-unexecuted actions, oldest at the front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionQueue {
    pending: VecDeque<usize>,
}

impl ActionQueue {
    /// `initial[0]` executes first.
    pub fn new(initial: Vec<usize>) -> Self {
        ActionQueue {
            pending: initial.into(),
        }
    }

    pub fn delay(&self) -> usize {
        self.pending.len()
    }

    pub fn iter_oldest_first(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        self.pending.iter().copied()
    }

    /// Pushes `decided` and returns the action to execute now; with `m = 0`
    /// that is `decided` itself.
    pub fn shift(&mut self, decided: usize) -> usize {
        if self.pending.is_empty() {
            return decided;
        }
        self.pending.push_back(decided);
        self.pending.pop_front().expect("queue is non-empty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedStep {
    pub executed: usize,
    pub step: Step,
}

/// Executes the oldest pending action and enqueues `decided`.
pub fn delayed_env_step<E: Environment + ?Sized>(
    env: &mut E,
    queue: &mut ActionQueue,
    decided: usize,
) -> Result<DelayedStep> {
    if env.is_done() {
        return Err(Error::InvalidState("step after the episode ended".into()));
    }
    if decided >= env.n_actions() {
        return Err(Error::invalid(format!("action {decided} out of range")));
    }
    let executed = queue.shift(decided);
    let step = env.step(executed)?;
    Ok(DelayedStep { executed, step })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentVariant {
    Oblivious,
    Augmented,
    Delayed,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 3] = [
        AgentVariant::Oblivious,
        AgentVariant::Augmented,
        AgentVariant::Delayed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::Oblivious => "oblivious",
            AgentVariant::Augmented => "augmented",
            AgentVariant::Delayed => "delayed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    TwoState {
        p: f64,
        discount: f64,
        episode_len: usize,
    },
    Maze {
        size: usize,
        #[serde(default)]
        noise: f64,
        /// Fixes the maze across runs; otherwise each run seed draws its own.
        #[serde(default)]
        maze_seed: Option<u64>,
    },
}

impl EnvConfig {
    /// Environment for a run: walls from `maze_seed` (or `run_seed`),
    /// transition noise from `noise_seed`.
    pub fn build(&self, run_seed: u64, noise_seed: u64) -> Result<Box<dyn Environment + Send>> {
        Ok(match *self {
            EnvConfig::TwoState {
                p,
                discount,
                episode_len,
            } => Box::new(TwoStateEnv::new(p, discount, episode_len, noise_seed)?),
            EnvConfig::Maze {
                size,
                noise,
                maze_seed,
            } => {
                let grid = MazeGrid::generate(size, maze_seed.unwrap_or(run_seed))?;
                Box::new(MazeEnv::new(grid, noise, noise_seed)?)
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.build(0, 0).map(|_| ())
    }
}

/// Periodic greedy evaluation used to time when learning first reaches
/// `threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProbe {
    pub every: usize,
    pub episodes: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Greedy episodes run after training.
    pub eval_episodes: usize,
    pub probe: Option<ThresholdProbe>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.1,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.6,
            eval_episodes: 20,
            probe: None,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid(format!(
                "discount {} outside [0, 1)",
                self.discount
            )));
        }
        for (name, x) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::invalid(format!("{name} {x} outside [0, 1]")));
            }
        }
        if let Some(p) = &self.probe {
            if p.every == 0 || p.episodes == 0 {
                return Err(Error::invalid(
                    "threshold probe needs positive period and episode count",
                ));
            }
        }
        Ok(())
    }

    pub fn schedule(&self, episodes: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_episodes: (self.epsilon_decay_fraction * episodes as f64).round() as usize,
        }
    }
}

/// A learner's Q-table plus whatever it needs to pick the table row.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    variant: AgentVariant,
    delay: usize,
    q: QTable,
    model: ForwardModelTable,
    indexer: Option<AugmentedIndexer>,
}

impl Agent {
    pub fn new(
        variant: AgentVariant,
        n_states: usize,
        n_actions: usize,
        delay: usize,
        learning_rate: f64,
        budget: MemoryBudget,
    ) -> Result<Self> {
        let (rows, indexer) = match variant {
            AgentVariant::Augmented => {
                let rows = budget.check(n_states, n_actions, delay)?;
                (
                    rows,
                    Some(AugmentedIndexer::new(n_states, n_actions, delay)?),
                )
            }
            _ => (n_states, None),
        };
        Ok(Agent {
            variant,
            delay,
            q: QTable::new(rows, n_actions, learning_rate)?,
            model: ForwardModelTable::new(n_states, n_actions),
            indexer,
        })
    }

    pub fn variant(&self) -> AgentVariant {
        self.variant
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn model(&self) -> &ForwardModelTable {
        &self.model
    }

    /// Number of stored action values.
    pub fn table_size(&self) -> usize {
        self.q.len()
    }

    /// Table row consulted when deciding in `s` with `queue` pending.
    pub fn decision_row(&self, s: usize, queue: &ActionQueue) -> usize {
        match self.variant {
            AgentVariant::Oblivious => s,
            AgentVariant::Augmented => self.augmented_row(s, queue),
            AgentVariant::Delayed => rollout_predict(&self.model, s, queue),
        }
    }

    fn augmented_row(&self, s: usize, queue: &ActionQueue) -> usize {
        self.indexer
            .as_ref()
            .expect("augmented agents carry an indexer")
            .encode_parts(s, queue.iter_oldest_first().rev())
    }

    pub fn decide<R: Rng>(
        &self,
        s: usize,
        queue: &ActionQueue,
        epsilon: f64,
        rng: &mut R,
    ) -> usize {
        self.q
            .epsilon_greedy(self.decision_row(s, queue), epsilon, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub initial_queue: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    /// `Σ_{t>=m} γ^{t-m} r_t`, the delayed return.
    pub discounted_mean: f64,
    pub discounted_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub variant: AgentVariant,
    pub env: EnvConfig,
    pub delay: usize,
    pub episodes: usize,
    pub seed: u64,
    pub hyper: Hyperparameters,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub curve: Vec<EpisodeRecord>,
    pub evaluation: Evaluation,
    /// Training episodes completed when a greedy probe first met the threshold.
    pub episodes_to_threshold: Option<usize>,
    pub agent: Agent,
}

const EVAL_LABEL: u64 = 0xE7A1;

fn random_queue<R: Rng>(delay: usize, n_actions: usize, rng: &mut R) -> Vec<usize> {
    (0..delay).map(|_| rng.gen_range(0..n_actions)).collect()
}

/// Trains one agent. Identical specs give identical outcomes.
pub fn train_agent(spec: &RunSpec, budget: MemoryBudget) -> Result<TrainOutcome> {
    spec.hyper.validate()?;
    let mut env = spec.env.build(spec.seed, spec.seed)?;
    let (n_states, n_actions) = (env.n_states(), env.n_actions());
    let mut agent = Agent::new(
        spec.variant,
        n_states,
        n_actions,
        spec.delay,
        spec.hyper.learning_rate,
        budget,
    )?;
    let gamma = spec.hyper.discount;
    let schedule = spec.hyper.schedule(spec.episodes);
    let mut explore = substream(spec.seed, Stream::Exploration);
    let mut queues = substream(spec.seed, Stream::InitialQueue);
    let mut replay = ReplayShiftBuffer::new(spec.delay);
    let mut curve = Vec::with_capacity(spec.episodes);
    let mut episodes_to_threshold = None;

    for episode in 0..spec.episodes {
        let epsilon = schedule.at(episode);
        let initial_queue = random_queue(spec.delay, n_actions, &mut queues);
        let mut queue = ActionQueue::new(initial_queue.clone());
        replay.reset();
        let mut s = env.reset();
        let (mut ret, mut steps) = (0.0, 0);
        while !env.is_done() {
            let row = agent.decision_row(s, &queue);
            let decided = agent.q.epsilon_greedy(row, epsilon, &mut explore);
            let DelayedStep { executed, step } =
                delayed_env_step(env.as_mut(), &mut queue, decided)?;
            match spec.variant {
                AgentVariant::Oblivious => {
                    let next = (!step.terminal).then_some(step.next_state);
                    agent.q.update(s, decided, step.reward, next, gamma);
                }
                AgentVariant::Augmented => {
                    let next =
                        (!step.terminal).then(|| agent.augmented_row(step.next_state, &queue));
                    agent.q.update(row, decided, step.reward, next, gamma);
                }
                AgentVariant::Delayed => {
                    agent.model.observe(s, executed, step.next_state);
                    if let Some(t) =
                        replay.record(s, decided, s, step.reward, step.next_state, step.terminal)
                    {
                        debug_assert_eq!(t.action, executed);
                        let next = (!t.terminal).then_some(t.next_state);
                        agent.q.update(t.state, t.action, t.reward, next, gamma);
                    }
                }
            }
            ret += step.reward;
            steps += 1;
            s = step.next_state;
        }
        curve.push(EpisodeRecord {
            episode,
            ret,
            steps,
            epsilon,
            initial_queue,
        });
        if let Some(probe) = &spec.hyper.probe {
            if episodes_to_threshold.is_none() && (episode + 1) % probe.every == 0 {
                let e = evaluate_greedy(&agent, &spec.env, probe.episodes, spec.seed, gamma)?;
                if e.mean >= probe.threshold {
                    episodes_to_threshold = Some(episode + 1);
                }
            }
        }
    }
    let evaluation = evaluate_greedy(
        &agent,
        &spec.env,
        spec.hyper.eval_episodes,
        spec.seed,
        gamma,
    )?;
    Ok(TrainOutcome {
        curve,
        evaluation,
        episodes_to_threshold,
        agent,
    })
}

/// Runs the ε = 0 policy on fresh episodes with random initial queues.
/// The agent is not updated. For Delayed-Q the decision rule depends on the
/// current state and the pending queue only, i.e. it is a non-stationary
/// Markov policy in the original state space.
pub fn evaluate_greedy(
    agent: &Agent,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    discount: f64,
) -> Result<Evaluation> {
    let mut env = env_cfg.build(seed, derive_seed(seed, EVAL_LABEL))?;
    let mut rng = substream(seed, Stream::Eval);
    let m = agent.delay;
    let mut returns = Vec::with_capacity(episodes);
    let mut discounted = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut queue = ActionQueue::new(random_queue(m, env.n_actions(), &mut rng));
        let mut s = env.reset();
        let (mut ret, mut disc, mut t, mut scale) = (0.0, 0.0, 0, 1.0);
        while !env.is_done() {
            let decided = agent.q.greedy(agent.decision_row(s, &queue));
            let step = delayed_env_step(env.as_mut(), &mut queue, decided)?.step;
            ret += step.reward;
            if t >= m {
                disc += scale * step.reward;
                scale *= discount;
            }
            t += 1;
            s = step.next_state;
        }
        returns.push(ret);
        discounted.push(disc);
    }
    let (mean, std) = mean_std(&returns);
    let (discounted_mean, discounted_std) = mean_std(&discounted);
    Ok(Evaluation {
        episodes,
        mean,
        std,
        discounted_mean,
        discounted_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_is_fifo() {
        let mut q = ActionQueue::new(vec![1, 0]);
        assert_eq!(q.shift(1), 1);
        assert_eq!(q.iter_oldest_first().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(q.delay(), 2);
        let mut z = ActionQueue::new(vec![]);
        assert_eq!(z.shift(3), 3);
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let mut env = TwoStateEnv::new(0.8, 0.5, 1, 0).unwrap();
        env.reset();
        let mut q = ActionQueue::new(vec![0]);
        delayed_env_step(&mut env, &mut q, 1).unwrap();
        assert!(matches!(
            delayed_env_step(&mut env, &mut q, 1),
            Err(Error::InvalidState(_))
        ));
        assert_eq!(q.iter_oldest_first().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn augmented_table_size() {
        let a = Agent::new(
            AgentVariant::Augmented,
            5,
            3,
            2,
            0.1,
            MemoryBudget::default(),
        )
        .unwrap();
        assert_eq!(a.table_size(), 5 * 9 * 3);
        let err = Agent::new(
            AgentVariant::Augmented,
            64,
            4,
            10,
            0.1,
            MemoryBudget::default(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn hyperparameter_validation() {
        let mut h = Hyperparameters::default();
        assert!(h.validate().is_ok());
        h.discount = 1.0;
        assert!(h.validate().is_err());
    }
}
