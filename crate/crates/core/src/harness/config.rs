//! Flat `key = value` configuration text with optional `[section]` headers.
//!
//! A key `lambda` under `[alg]` is addressed as `alg.lambda`; keys may also be written
//! fully qualified at top level. `#` starts a comment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(idx + 1, format!("unterminated section `{line}`")))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(idx + 1, format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(err(idx + 1, "empty key".into()));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if entries.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(err(idx + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { path: path.to_path_buf(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn bad(&self, key: &str, msg: String) -> Error {
        let line = self.entries.get(key).map_or(0, |e| e.0);
        Error::Parse { path: self.path.clone(), line, msg: format!("`{key}`: {msg}") }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| self.bad(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| self.bad(key, format!("cannot parse `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Fails on any key outside `known`.
    pub fn check_known(&self, known: &BTreeSet<&str>) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(k.as_str())) {
            Some(k) => Err(self.bad(k, "unknown key".into())),
            None => Ok(()),
        }
    }
}

/// Float parser accepting `inf`/`infinity`.
pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        other => other.parse::<f64>().map_err(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "seed = 7 # master\n\n[alg]\nname = drls, rdrls\nlambda=0.985\n[nc]\ntth = 15\n";
        let kv = KeyValues::parse(text, Path::new("t.cfg")).unwrap();
        assert_eq!(kv.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(kv.get::<f64>("alg.lambda").unwrap(), Some(0.985));
        assert_eq!(kv.list::<String>("alg.name").unwrap().unwrap(), vec!["drls", "rdrls"]);
        assert_eq!(kv.get_or("nc.rho", 3.0).unwrap(), 3.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = KeyValues::parse("a = 1\nnonsense\n", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = KeyValues::parse("a = 1\na = 2\n", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let kv = KeyValues::parse("\n[alg]\nlambda = x\n", Path::new("x.cfg")).unwrap();
        assert!(matches!(kv.get::<f64>("alg.lambda"), Err(Error::Parse { line: 3, .. })));
        let known: BTreeSet<&str> = ["alg.lambda"].into_iter().collect();
        assert!(kv.check_known(&known).is_ok());
        let kv = KeyValues::parse("alg.lamda = 1\n", Path::new("x.cfg")).unwrap();
        assert!(kv.check_known(&known).is_err());
    }

    #[test]
    fn infinity_literal() {
        assert_eq!(parse_f64("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_f64("0.5").unwrap(), 0.5);
        assert!(parse_f64("x").is_err());
    }
}
