//! Per-address schema: distribution family, successor sets and value
//! normalization statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DistKind, Distribution};
use crate::ppl::Address;

/// Transition target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Next {
    Site(usize),
    End,
}

pub const END_NAME: &str = "END";

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl ValueStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Normalization location and scale. Unseen or constant sites use (mean, 1).
    pub fn loc_scale(&self) -> (f64, f64) {
        if self.count < 2 {
            return (self.mean, 1.0);
        }
        let sd = (self.m2 / self.count as f64).sqrt();
        if sd > 1e-9 * self.mean.abs().max(1.0) {
            (self.mean, sd)
        } else {
            (self.mean, 1.0)
        }
    }
}

/// What the registry knows about one address.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteSchema {
    pub kind: DistKind,
    /// Category count for categorical sites, 1 for continuous ones.
    pub width: usize,
    pub bounds: Option<(f64, f64)>,
    pub observed: bool,
}

impl SiteSchema {
    pub fn of(dist: &Distribution, observed: bool) -> Self {
        let kind = dist.kind();
        Self {
            kind,
            width: dist.num_categories().unwrap_or(1),
            bounds: if kind == DistKind::Uniform { dist.bounds() } else { None },
            observed,
        }
    }

    fn describe(&self) -> String {
        match (self.kind, self.bounds) {
            (DistKind::Categorical, _) => format!("categorical({})", self.width),
            (DistKind::Uniform, Some((a, b))) => format!("uniform({a}, {b})"),
            (k, _) => k.name().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteRecord {
    pub address: Address,
    pub schema: SiteSchema,
    pub stats: ValueStats,
    pub successors: Vec<Next>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Registry {
    sites: Vec<SiteRecord>,
    index: HashMap<Address, usize>,
    start: Vec<Next>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteRecord] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &SiteRecord {
        &self.sites[i]
    }

    pub(crate) fn site_mut(&mut self, i: usize) -> &mut SiteRecord {
        &mut self.sites[i]
    }

    pub fn lookup(&self, address: &Address) -> Option<usize> {
        self.index.get(address).copied()
    }

    pub fn start_successors(&self) -> &[Next] {
        &self.start
    }

    /// Successor list of `from` (`None` is the start of a trace).
    pub fn successors(&self, from: Option<usize>) -> &[Next] {
        match from {
            None => &self.start,
            Some(i) => &self.sites[i].successors,
        }
    }

    /// Returns `(index, newly_created)`.
    pub fn register(&mut self, address: &Address, schema: SiteSchema) -> Result<(usize, bool)> {
        if let Some(&i) = self.index.get(address) {
            let known = &self.sites[i].schema;
            if known.kind != schema.kind || known.width != schema.width || known.bounds != schema.bounds {
                return Err(Error::SchemaConflict {
                    address: address.to_string(),
                    registered: known.describe(),
                    found: schema.describe(),
                });
            }
            if known.observed != schema.observed {
                return Err(Error::SchemaConflict {
                    address: address.to_string(),
                    registered: if known.observed { "observed" } else { "latent" }.into(),
                    found: if schema.observed { "observed" } else { "latent" }.into(),
                });
            }
            return Ok((i, false));
        }
        let i = self.sites.len();
        self.sites.push(SiteRecord {
            address: address.clone(),
            schema,
            stats: ValueStats::default(),
            successors: Vec::new(),
        });
        self.index.insert(address.clone(), i);
        Ok((i, true))
    }

    /// Position of `to` in the successor list of `from`, if present.
    pub fn successor_position(&self, from: Option<usize>, to: Next) -> Option<usize> {
        self.successors(from).iter().position(|n| *n == to)
    }

    /// Add `to` to `from`'s successor set. Returns `Some(position)` if new.
    pub(crate) fn add_successor(&mut self, from: Option<usize>, to: Next) -> Option<usize> {
        if self.successor_position(from, to).is_some() {
            return None;
        }
        let list = match from {
            None => &mut self.start,
            Some(i) => &mut self.sites[i].successors,
        };
        list.push(to);
        Some(list.len() - 1)
    }

    pub fn name_of(&self, n: Next) -> String {
        match n {
            Next::Site(i) => self.sites[i].address.to_string(),
            Next::End => END_NAME.into(),
        }
    }

    pub fn to_manifest(&self) -> RegistryManifest {
        let names = |list: &[Next]| list.iter().map(|n| self.name_of(*n)).collect();
        RegistryManifest {
            start: names(&self.start),
            sites: self
                .sites
                .iter()
                .map(|s| SiteManifest {
                    address: s.address.clone(),
                    kind: s.schema.kind,
                    width: s.schema.width,
                    bounds: s.schema.bounds,
                    observed: s.schema.observed,
                    stats: s.stats,
                    successors: names(&s.successors),
                })
                .collect(),
        }
    }

    pub fn from_manifest(m: &RegistryManifest) -> Result<Self> {
        let mut reg = Registry::default();
        for s in &m.sites {
            let (i, fresh) = reg.register(
                &s.address,
                SiteSchema {
                    kind: s.kind,
                    width: s.width,
                    bounds: s.bounds,
                    observed: s.observed,
                },
            )?;
            if !fresh {
                return Err(Error::Malformed(format!("address {} listed twice", s.address)));
            }
            reg.sites[i].stats = s.stats;
        }
        let resolve = |reg: &Registry, name: &str| -> Result<Next> {
            if name == END_NAME {
                return Ok(Next::End);
            }
            let a: Address = name.parse()?;
            reg.lookup(&a)
                .map(Next::Site)
                .ok_or_else(|| Error::Malformed(format!("successor {name} is not a registered address")))
        };
        for n in &m.start {
            let t = resolve(&reg, n)?;
            reg.start.push(t);
        }
        for (i, s) in m.sites.iter().enumerate() {
            for n in &s.successors {
                let t = resolve(&reg, n)?;
                reg.sites[i].successors.push(t);
            }
        }
        Ok(reg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteManifest {
    pub address: Address,
    pub kind: DistKind,
    pub width: usize,
    pub bounds: Option<(f64, f64)>,
    pub observed: bool,
    pub stats: ValueStats,
    pub successors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub start: Vec<String>,
    pub sites: Vec<SiteManifest>,
}
