//! Versioned checkpoint files: a manifest describing the model plus the
//! parameter payload (values and optimizer moments).
//!
//! Reals are written as shortest round-trip decimals, so a save/load cycle
//! reproduces every `f64` bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::params::{ParamStore, StoreSnapshot};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "psn-checkpoint";

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    version: u32,
    /// What the checkpoint holds, e.g. "surrogate" or "proposal".
    model: String,
    manifest: M,
    shapes: Vec<(String, Vec<usize>)>,
    payload: StoreSnapshot,
}

pub fn to_string<M: Serialize>(model: &str, manifest: &M, store: &ParamStore) -> Result<String> {
    let payload = store.snapshot();
    let env = Envelope {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.into(),
        manifest,
        shapes: payload.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect(),
        payload,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_str<M: DeserializeOwned>(model: &str, text: &str) -> Result<(M, ParamStore)> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(Error::Malformed("not a checkpoint file".into()));
    }
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Malformed("checkpoint without version".into()))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Version {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let env: Envelope<M> = serde_json::from_value(raw)?;
    if env.model != model {
        return Err(Error::Malformed(format!(
            "checkpoint holds a {} model, expected {model}",
            env.model
        )));
    }
    for ((name, shape), p) in env.shapes.iter().zip(&env.payload.params) {
        if name != &p.name || shape != &p.shape {
            return Err(Error::Malformed(format!("shape table disagrees with payload at {name}")));
        }
    }
    let store = ParamStore::from_snapshot(env.payload)?;
    Ok((env.manifest, store))
}

pub fn save<M: Serialize>(path: &Path, model: &str, manifest: &M, store: &ParamStore) -> Result<()> {
    let text = to_string(model, manifest, store)?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load<M: DeserializeOwned>(path: &Path, model: &str) -> Result<(M, ParamStore)> {
    let text = fs::read_to_string(path)?;
    from_str(model, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Init;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Cfg {
        hidden: usize,
    }

    #[test]
    fn bit_exact_round_trip() {
        let mut s = ParamStore::new(9);
        let w = s.add("w", &[7, 5], Init::FanIn(5)).unwrap();
        s.value_mut(w)[3] = 1.0 / 3.0;
        s.value_mut(w)[4] = 1e-300;
        s.value_mut(w)[5] = -123456.789e-17;
        let text = to_string("toy", &Cfg { hidden: 5 }, &s).unwrap();
        let (cfg, back): (Cfg, ParamStore) = from_str("toy", &text).unwrap();
        assert_eq!(cfg, Cfg { hidden: 5 });
        let a: Vec<u64> = s.flat_values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.flat_values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.snapshot(), s.snapshot());
    }

    #[test]
    fn unknown_version_fails() {
        let s = ParamStore::new(0);
        let text = to_string("toy", &Cfg { hidden: 1 }, &s).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":99");
        match from_str::<Cfg>("toy", &bumped) {
            Err(Error::Version { found: 99, .. }) => {}
            other => panic!("expected version error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn wrong_model_kind_fails() {
        let s = ParamStore::new(0);
        let text = to_string("toy", &Cfg { hidden: 1 }, &s).unwrap();
        assert!(from_str::<Cfg>("other", &text).is_err());
    }
}
