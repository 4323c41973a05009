//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are kept in
//! sorted order so that a config's canonical text, and therefore its hash,
//! does not depend on the order of lines in the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("invalid value {v:?} for key {key:?}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key).ok_or_else(|| Error::InvalidConfig(format!("missing key {key:?}")))?;
        v.parse()
            .map_err(|_| Error::InvalidConfig(format!("invalid value {v:?} for key {key:?}")))
    }

    /// Comma-separated list.
    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("invalid list item {s:?} for key {key:?}")))
                })
                .collect(),
        }
    }

    /// Sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash_hex(&self) -> String {
        hex_digest(self.canonical().as_bytes())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_ignores_comments() {
        let kv = KeyValues::parse("# room\nbeta = 0.85\n\nseed=7\nsizes=256, 512\n").unwrap();
        assert_eq!(kv.get_or("beta", 0.0).unwrap(), 0.85);
        assert_eq!(kv.require::<u64>("seed").unwrap(), 7);
        assert_eq!(kv.list_or::<usize>("sizes", vec![]).unwrap(), vec![256, 512]);
        assert_eq!(kv.get_or("missing", 3).unwrap(), 3);
    }

    #[test]
    fn bad_lines_and_values_are_errors() {
        assert!(KeyValues::parse("novalue\n").is_err());
        let kv = KeyValues::parse("seed=abc").unwrap();
        assert!(kv.require::<u64>("seed").is_err());
    }

    #[test]
    fn hash_ignores_line_order() {
        let a = KeyValues::parse("a=1\nb=2").unwrap();
        let b = KeyValues::parse("b=2\na=1").unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
    }
}
