//! Plain-text `key = value` documents.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear once.
//! Consumers take the keys they understand and then call
//! [`KvDoc::finish`], which rejects anything left over.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: BTreeMap<String, String>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<KvDoc> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err!("line {}: expected `key = value`, got {raw:?}", lineno + 1)
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(config_err!("line {}: empty key", lineno + 1));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err!("line {}: duplicate key {k:?}", lineno + 1));
            }
        }
        Ok(KvDoc { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err!("invalid value {v:?} for key {key:?}")),
        }
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| config_err!("invalid list {v:?} for key {key:?}"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Error on any key nobody consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            Err(config_err!("unknown keys: {}", keys.join(", ")))
        }
    }

    /// Canonical text: sorted keys, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn merge(&mut self, other: KvDoc) {
        self.entries.extend(other.entries);
    }
}

/// Comma-joined list value.
pub fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Shortest round-tripping float text.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}
