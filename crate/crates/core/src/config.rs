//! Line-oriented `key: value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    /// 0 when the value came from a command-line override.
    line: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    origin: String,
    entries: BTreeMap<String, Entry>,
}

impl Config {
    pub fn new(origin: impl Into<String>) -> Config {
        Config {
            origin: origin.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Config> {
        let mut cfg = Config::new(origin);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                return Err(Error::parse(origin, n + 1, "expected `key: value`"));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::parse(origin, n + 1, format!("invalid key {key:?}")));
            }
            if let Some(prev) = cfg.entries.get(key) {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            cfg.entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line: n + 1,
                },
            );
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Sets or replaces a key. Command-line flags use this, so they win over the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                line: 0,
            },
        );
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `allowed` and reports every missing `required` key at once.
    pub fn validate(&self, allowed: &[&str], required: &[&str]) -> Result<()> {
        let mut unknown: Vec<(&String, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !allowed.contains(&k.as_str()) && !required.contains(&k.as_str()))
            .map(|(k, e)| (k, e.line))
            .collect();
        if !unknown.is_empty() {
            unknown.sort_by_key(|&(_, line)| line);
            let (key, line) = unknown[0];
            return Err(Error::Config(if line == 0 {
                format!("unknown key `{key}`")
            } else {
                format!("{}:{}: unknown key `{key}`", self.origin, line)
            }));
        }
        let missing: Vec<&str> = required
            .iter()
            .copied()
            .filter(|k| !self.entries.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "{}: missing required keys: {}",
                self.origin,
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key)
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.origin)))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.bad_value(key, e)),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("{}: missing required key `{key}`", self.origin)))
    }

    /// Comma- or whitespace-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|_| self.bad_value(key, e)))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn bad_value(&self, key: &str, e: &Entry) -> Error {
        if e.line == 0 {
            Error::Config(format!("invalid value {:?} for `{key}`", e.value))
        } else {
            Error::Config(format!(
                "{}:{}: invalid value {:?} for `{key}`",
                self.origin, e.line, e.value
            ))
        }
    }
}
