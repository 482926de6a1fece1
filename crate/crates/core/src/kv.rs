//! Flat `key=value` text records: config files, run manifests, checkpoint
//! manifests and machine-readable metric reports all use this format.
//!
//! One entry per line, `#` starts a comment line, blank lines are skipped,
//! keys are unique. Values run to the end of the line and are trimmed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered key/value record.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KvRecord {
    entries: Vec<(String, String)>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl KvRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut record = KvRecord::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                context: context.to_string(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key=value`, found `{line}`")))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(err(format!("invalid key `{key}`")));
            }
            if record.get(key).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            record.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(record)
    }

    /// Appends or replaces an entry. Panics on keys or values the format
    /// cannot represent; callers only pass program-generated keys.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        assert!(valid_key(&key), "invalid kv key `{key}`");
        assert!(
            !value.contains(['\n', '\r']),
            "kv value for `{key}` contains a line break"
        );
        let value = value.trim().to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Contract(format!("missing key `{key}`")))
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key, for order-independent hashing.
    pub fn sorted(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }

    /// SHA-256 over the key-sorted entries, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.sorted() {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

impl<K: Into<String>, V: ToString> FromIterator<(K, V)> for KvRecord {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut r = KvRecord::new();
        for (k, v) in iter {
            r.set(k, v);
        }
        r
    }
}
