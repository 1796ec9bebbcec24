//! Flat `key = value` text files with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key-value file. Keys are unique; later duplicates are an error.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    origin: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin,
                    line: i + 1,
                    message: format!("expected 'key = value', found '{line}'"),
                });
            };
            let key = key.trim().to_owned();
            if key.is_empty() {
                return Err(Error::Parse {
                    path: origin,
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), (i + 1, value.trim().to_owned())).is_some() {
                return Err(Error::Parse {
                    path: origin,
                    line: i + 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { origin, entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::parse(&text, path)
    }

    pub fn origin(&self) -> &Path {
        &self.origin
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn error(&self, key: &str, message: String) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line: self.entries.get(key).map_or(0, |(l, _)| *l),
            message,
        }
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.error(key, format!("bad value for '{key}': {e}"))),
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|e| self.error(key, format!("bad list item '{t}' for '{key}': {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(self.error(k, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}
