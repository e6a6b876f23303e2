//! Counters and recorded values of a run, exported as sorted `key=value`
//! lines with a SHA-256 digest.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    counters: BTreeMap<String, u64>,
    values: BTreeMap<String, String>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: impl Into<String>, n: u64) {
        *self.counters.entry(key.into()).or_default() += n;
    }

    pub fn inc(&mut self, key: impl Into<String>) {
        self.add(key, 1);
    }

    /// Raise a high-water mark.
    pub fn max(&mut self, key: impl Into<String>, v: u64) {
        let e = self.counters.entry(key.into()).or_default();
        *e = (*e).max(v);
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.values.insert(key.into(), value.to_string());
    }

    pub fn counter(&self, key: &str) -> u64 {
        self.counters.get(key).copied().unwrap_or(0)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Sum of all counters whose key starts with `prefix`.
    pub fn sum_prefix(&self, prefix: &str) -> u64 {
        self.counters
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty() && self.values.is_empty()
    }

    /// All records, sorted by key.
    pub fn records(&self) -> Vec<(String, String)> {
        let mut all: BTreeMap<&str, String> = self.values.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        for (k, v) in &self.counters {
            all.insert(k, v.to_string());
        }
        all.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn export(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.records() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of [`Metrics::export`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.export().as_bytes()))
    }
}
