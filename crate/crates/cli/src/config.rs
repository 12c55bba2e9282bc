//! Flat `key = value` config files and flag/config/default resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

/// Every key a config file may set. Names mirror the long flags.
pub const KNOWN_KEYS: &[&str] = &[
    "rho2",
    "sigma-g2",
    "sigma-xi2",
    "S",
    "mu",
    "dt",
    "t-end",
    "record-stride",
    "record-every",
    "N",
    "trials",
    "seed",
    "stat",
    "g-dist",
    "u-dist",
    "noise-dist",
    "input",
    "nodes",
    "S-from",
    "S-to",
    "S-step",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| UsageError(format!("{}: {}", path.display(), e.0)))
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    /// Underscores in keys are read as dashes.
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(UsageError(format!("line {}: unknown key `{key}`", i + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(UsageError(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// Resolves each setting as flag, then config entry, then default.
#[derive(Debug, Default)]
pub struct Resolver {
    config: ConfigFile,
}

impl Resolver {
    pub fn new(config: ConfigFile) -> Self {
        Self { config }
    }

    pub fn from_path(path: Option<&Path>) -> Result<Self, UsageError> {
        Ok(Self::new(match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        }))
    }

    pub fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, UsageError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.value_with(flag, key, default, |s| s.parse::<T>().map_err(|e| e.to_string()))
    }

    pub fn value_with<T>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, UsageError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.config.get(key) {
            Some(text) => parse(text).map_err(|e| UsageError(format!("config key `{key}` = `{text}`: {e}"))),
            None => Ok(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = ConfigFile::parse("# run\nS = inf\nmu=0.25  # step\n\nt_end = 10\n").unwrap();
        assert_eq!(cfg.get("S"), Some("inf"));
        assert_eq!(cfg.get("mu"), Some("0.25"));
        assert_eq!(cfg.get("t-end"), Some("10"));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("mu = 1\nmu = 2").is_err());
        assert!(ConfigFile::parse("mu 1").is_err());
    }

    #[test]
    fn precedence() {
        let r = Resolver::new(ConfigFile::parse("mu = 0.25\ntrials = 7").unwrap());
        assert_eq!(r.value(Some(0.5), "mu", 1.0).unwrap(), 0.5);
        assert_eq!(r.value(None, "mu", 1.0).unwrap(), 0.25);
        assert_eq!(r.value(None, "dt", 0.01).unwrap(), 0.01);
        assert_eq!(r.value::<usize>(None, "trials", 1).unwrap(), 7);
        let bad = Resolver::new(ConfigFile::parse("trials = many").unwrap());
        assert!(bad.value::<usize>(None, "trials", 1).is_err());
    }
}
