//! Flat `key = value` configuration files. Values fill in wherever the
//! command line did not set an option explicitly; flags always win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use adass_core::{Error, Result};

/// A parsed configuration file: keys not consumed by the command are
/// reported as errors so typos never pass silently.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| Error::format(format!("{}: {e}", path.display())))
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(format!(
                    "line {}: expected key = value, got '{line}'",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::format(format!("line {}: empty key", idx + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::format(format!(
                    "line {}: key '{key}' given twice",
                    idx + 1
                )));
            }
        }
        Ok(ConfigMap { entries })
    }

    /// Removes and parses one key, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::format(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }

    /// Removes and parses one boolean key (`true/false/1/0/yes/no`).
    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(Some(true)),
                "false" | "0" | "no" => Ok(Some(false)),
                _ => Err(Error::format(format!(
                    "config key '{key}': cannot parse '{raw}' as a boolean"
                ))),
            },
        }
    }

    /// Errors on any key the command did not recognize.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            Err(Error::parameter(format!(
                "unknown config keys: {}",
                keys.join(", ")
            )))
        }
    }
}

/// Flag-over-config resolution: the flag when given, else the config value,
/// else the default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
