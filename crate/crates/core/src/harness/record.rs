use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::agents::{train_agent, AgentVariant, RunSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// The cell's table would not fit the memory budget; reported as N/A.
    Capacity,
}

/// One (variant, m, noise, seed) cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub variant: AgentVariant,
    pub delay: usize,
    pub noise: f64,
    pub seed: u64,
    pub run_seed: u64,
    pub status: CellStatus,
    pub message: Option<String>,
    /// Undiscounted training return of each episode.
    pub returns: Vec<f64>,
    pub steps: Vec<usize>,
    pub epsilons: Vec<f64>,
    /// Mean undiscounted return of the greedy policy after training.
    pub final_return: Option<f64>,
    pub final_return_std: Option<f64>,
    pub episodes_to_threshold: Option<usize>,
    /// Stored action values.
    pub table_size: Option<usize>,
    pub wall_clock_secs: f64,
}

impl ResultRecord {
    /// File stem of the per-cell output.
    pub fn cell_name(&self) -> String {
        cell_name(self.variant, self.delay, self.noise, self.seed)
    }
}

pub(crate) fn cell_name(variant: AgentVariant, delay: usize, noise: f64, seed: u64) -> String {
    format!("{}_m{}_p{}_s{}", variant.name(), delay, noise, seed)
}

/// Trains one cell. A capacity failure becomes an N/A record; any other
/// error aborts.
pub fn run_cell(
    cfg: &ExperimentConfig,
    variant: AgentVariant,
    delay: usize,
    noise: f64,
    seed: u64,
) -> Result<ResultRecord> {
    let run_seed = cfg.run_seed(seed);
    let spec = RunSpec {
        variant,
        env: cfg.environment_for(noise),
        delay,
        episodes: cfg.episodes,
        seed: run_seed,
        hyper: cfg.hyper.clone(),
    };
    let mut record = ResultRecord {
        config_hash: cfg.hash(),
        variant,
        delay,
        noise,
        seed,
        run_seed,
        status: CellStatus::Ok,
        message: None,
        returns: Vec::new(),
        steps: Vec::new(),
        epsilons: Vec::new(),
        final_return: None,
        final_return_std: None,
        episodes_to_threshold: None,
        table_size: None,
        wall_clock_secs: 0.0,
    };
    let started = Instant::now();
    match train_agent(&spec, cfg.budget()) {
        Ok(out) => {
            record.returns = out.curve.iter().map(|e| e.ret).collect();
            record.steps = out.curve.iter().map(|e| e.steps).collect();
            record.epsilons = out.curve.iter().map(|e| e.epsilon).collect();
            record.final_return = Some(out.evaluation.mean);
            record.final_return_std = Some(out.evaluation.std);
            record.episodes_to_threshold = out.episodes_to_threshold;
            record.table_size = Some(out.agent.table_size());
        }
        Err(e @ Error::Capacity { .. }) => {
            record.status = CellStatus::Capacity;
            record.message = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(record)
}
