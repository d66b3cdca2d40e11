use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentVariant, EnvConfig, Hyperparameters};
use crate::augmentation::MemoryBudget;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

const MAZE_LABEL: u64 = 0x3A2E;

/// A sweep over `variants × delays × noises × seeds`, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub master_seed: u64,
    pub environment: EnvConfig,
    pub delays: Vec<usize>,
    /// Action-noise levels; each replaces the maze's own `noise`.
    #[serde(default = "default_noises")]
    pub noises: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<AgentVariant>,
    pub episodes: usize,
    #[serde(default)]
    pub hyper: Hyperparameters,
    /// Overrides the environment-variable memory budget for augmented tables.
    #[serde(default)]
    pub memory_budget: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_noises() -> Vec<f64> {
    vec![0.0]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (what, empty) in [
            ("delays", self.delays.is_empty()),
            ("noises", self.noises.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("variants", self.variants.is_empty()),
        ] {
            if empty {
                return Err(Error::invalid(format!("{what} must not be empty")));
            }
        }
        if self.episodes == 0 {
            return Err(Error::invalid("episodes must be positive"));
        }
        self.hyper.validate()?;
        if matches!(self.environment, EnvConfig::TwoState { .. })
            && self.noises.iter().any(|&p| p != 0.0)
        {
            return Err(Error::invalid(
                "the two-state environment has no action noise",
            ));
        }
        for &noise in &self.noises {
            self.environment_for(noise).validate()?;
        }
        Ok(())
    }

    pub fn budget(&self) -> MemoryBudget {
        self.memory_budget
            .map(|b| MemoryBudget(b as u128))
            .unwrap_or_else(MemoryBudget::from_env)
    }

    /// Environment of the cells at `noise`. A maze without a fixed seed gets
    /// one from the master seed, so every cell sees the same walls.
    pub fn environment_for(&self, noise: f64) -> EnvConfig {
        match self.environment.clone() {
            EnvConfig::Maze {
                size, maze_seed, ..
            } => EnvConfig::Maze {
                size,
                noise,
                maze_seed: Some(
                    maze_seed.unwrap_or_else(|| derive_seed(self.master_seed, MAZE_LABEL)),
                ),
            },
            other => other,
        }
    }

    /// Seed of one run, derived from the master seed and the listed seed.
    pub fn run_seed(&self, seed: u64) -> u64 {
        derive_seed(self.master_seed, seed)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        master_seed = 1
        delays = [0]
        seeds = [0]
        variants = ["delayed"]
        episodes = 5

        [environment]
        kind = "maze"
        size = 4
    "#;

    #[test]
    fn parses_and_fixes_the_maze() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.noises, vec![0.0]);
        match cfg.environment_for(0.1) {
            EnvConfig::Maze {
                noise, maze_seed, ..
            } => {
                assert_eq!(noise, 0.1);
                assert!(maze_seed.is_some());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_empty_lists_and_unknown_keys() {
        let empty = MINIMAL.replace("seeds = [0]", "seeds = []");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
        let unknown = format!("bogus = 1\n{MINIMAL}");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.episodes = 6;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
