use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{PsnConfig, SurrogateModel};
use super::registry::{Registry, RegistryManifest};
use crate::error::Result;
use crate::numerics::checkpoint;
use crate::training::TrainMeta;

pub const MODEL_KIND: &str = "surrogate";

#[derive(Serialize, Deserialize)]
struct Manifest {
    program: String,
    config: PsnConfig,
    registry: RegistryManifest,
    meta: TrainMeta,
}

impl SurrogateModel {
    pub fn to_checkpoint_string(&self) -> Result<String> {
        let m = Manifest {
            program: self.program.clone(),
            config: self.config.clone(),
            registry: self.registry.to_manifest(),
            meta: self.meta.clone(),
        };
        checkpoint::to_string(MODEL_KIND, &m, &self.store)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let (m, store): (Manifest, _) = checkpoint::from_str(MODEL_KIND, text)?;
        let registry = Registry::from_manifest(&m.registry)?;
        SurrogateModel::from_parts(m.program, m.config, registry, store, m.meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_checkpoint_string()?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
