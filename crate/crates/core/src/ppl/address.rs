use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Identifier of a random-choice site: an author-supplied label plus the
/// occurrence count of that label within the current execution.
///
/// Rendered canonically as `label__k`. The instance is the text after the
/// last `__` and contains no underscores, so rendering is injective.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub label: String,
    pub instance: u32,
}

impl Address {
    pub fn new(label: impl Into<String>, instance: u32) -> Self {
        Self {
            label: label.into(),
            instance,
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.label, self.instance)
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, k) = s
            .rsplit_once("__")
            .ok_or_else(|| Error::Malformed(format!("address {s:?} lacks an instance suffix")))?;
        if label.is_empty() || k.is_empty() || !k.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Malformed(format!("malformed address {s:?}")));
        }
        let instance = k
            .parse()
            .map_err(|_| Error::Malformed(format!("malformed address {s:?}")))?;
        Ok(Address::new(label, instance))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
