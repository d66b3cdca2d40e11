use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mdp;
use crate::error::{Error, Result};

/// Dense kernels larger than this are refused on export.
const MAX_DENSE_ENTRIES: u128 = 200_000_000;

/// Present when the file holds an augmented MDP.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationInfo {
    pub base_states: usize,
    pub base_actions: usize,
    pub delay: usize,
}

/// On-disk layout: dimensions, flat row-major kernel `(s, a, s')`, flat
/// reward `(s, a)` and discount.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub kernel: Vec<f64>,
    pub reward: Vec<f64>,
    pub discount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentationInfo>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Result<Self> {
        let entries = mdp.n_states() as u128 * mdp.n_actions() as u128 * mdp.n_states() as u128;
        if entries > MAX_DENSE_ENTRIES {
            return Err(Error::capacity(
                "dense kernel export",
                entries,
                MAX_DENSE_ENTRIES,
            ));
        }
        Ok(MdpFile {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            kernel: mdp.dense_kernel(),
            reward: mdp.rewards().to_vec(),
            discount: mdp.discount(),
            augmentation: None,
        })
    }

    pub fn to_mdp(&self) -> Result<Mdp> {
        Mdp::from_dense(
            self.n_states,
            self.n_actions,
            &self.kernel,
            self.reward.clone(),
            self.discount,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl Mdp {
    pub fn to_json(&self) -> Result<String> {
        MdpFile::from_mdp(self)?.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        MdpFile::from_json(text)?.to_mdp()
    }
}
