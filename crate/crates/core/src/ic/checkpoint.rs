use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{IcConfig, LatentSite, ProposalModel};
use crate::error::Result;
use crate::numerics::checkpoint;
use crate::training::TrainMeta;

pub const MODEL_KIND: &str = "proposal";

#[derive(Serialize, Deserialize)]
struct Manifest {
    program: String,
    config: IcConfig,
    sites: Vec<LatentSite>,
    observation_norm: Vec<(f64, f64)>,
    meta: TrainMeta,
}

impl ProposalModel {
    pub fn to_checkpoint_string(&self) -> Result<String> {
        let m = Manifest {
            program: self.program.clone(),
            config: self.config.clone(),
            sites: self.sites.clone(),
            observation_norm: self.obs_norm.clone(),
            meta: self.meta.clone(),
        };
        checkpoint::to_string(MODEL_KIND, &m, &self.store)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let (m, store): (Manifest, _) = checkpoint::from_str(MODEL_KIND, text)?;
        ProposalModel::from_parts(m.program, m.config, m.sites, m.observation_norm, store, m.meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
