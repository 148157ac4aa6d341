//! Flat `key = value` experiment configs.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Every experiment declares the keys it accepts, and an
//! unknown key is an error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::domain::{DomainSpec, NormDegree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("cannot parse {key} = {v}"))),
        }
    }

    pub fn get_list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::Config(format!("cannot parse {key} entry {s}"))))
                .collect(),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed", 0u64)
    }

    /// Domain keys `p`, `S`, `I`, `D`, `E`.
    pub fn domain(&self, d: usize, e: usize) -> Result<DomainSpec> {
        DomainSpec::new(
            self.get("p", NormDegree::Inf)?,
            self.get("S", 1.0)?,
            self.get("I", 1.0)?,
            self.get("D", d)?,
            self.get("E", e)?,
        )
        .map_err(|err| Error::Config(err.to_string()))
    }
}

pub const DOMAIN_KEYS: [&str; 5] = ["p", "S", "I", "D", "E"];
