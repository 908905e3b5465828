//! Flat JSON configuration with flag overrides.
//!
//! Precedence, highest first: command-line flag, `--config` file, built-in
//! default. A run manifest is accepted as a config file too; its resolved
//! `config` object is used, which is how a run is reproduced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub struct Resolver {
    file: Map<String, Value>,
    resolved: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", p.display())))?;
                let mut obj = match value {
                    Value::Object(m) => m,
                    _ => return Err(CliError::Usage(format!("config {} must be a JSON object", p.display()))),
                };
                if obj.contains_key("tool") {
                    match obj.remove("config") {
                        Some(Value::Object(m)) => m,
                        _ => return Err(CliError::Usage(format!("manifest {} has no config object", p.display()))),
                    }
                } else {
                    obj
                }
            }
        };
        Ok(Resolver {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        let value = serde_json::to_value(v).expect("config values serialize");
        self.resolved.insert(key.to_string(), value);
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    /// An existing input file, recorded as an absolute path.
    pub fn input(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p: PathBuf = self.required(key, flag)?;
        let abs = canonical_input(&p)?;
        self.record(key, &abs);
        Ok(abs)
    }

    pub fn opt_input(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        match self.opt::<PathBuf>(key, flag)? {
            None => Ok(None),
            Some(p) => {
                let abs = canonical_input(&p)?;
                self.record(key, &abs);
                Ok(Some(abs))
            }
        }
    }

    /// Fails on config-file keys that no setting consumed.
    pub fn finish(self) -> Result<Value, CliError> {
        if let Some(k) = self.file.keys().find(|k| !self.resolved.contains_key(*k)) {
            return Err(CliError::Usage(format!("unknown config key '{k}'")));
        }
        Ok(Value::Object(self.resolved.into_iter().collect()))
    }
}

fn canonical_input(p: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(p).map_err(|e| CliError::Usage(format!("input {}: {e}", p.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"epochs": 7, "lr": 0.5}"#).unwrap();
        let mut r = Resolver::load(Some(&p)).unwrap();
        assert_eq!(r.get("epochs", None, 200usize).unwrap(), 7);
        assert_eq!(r.get("lr", Some(0.1), 1e-3).unwrap(), 0.1);
        assert_eq!(r.get("batch_size", None, 32usize).unwrap(), 32);
        let resolved = r.finish().unwrap();
        assert_eq!(resolved["lr"], 0.1);
        assert_eq!(resolved["batch_size"], 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"epoch": 7}"#).unwrap();
        let mut r = Resolver::load(Some(&p)).unwrap();
        r.get("epochs", None, 200usize).unwrap();
        assert!(matches!(r.finish(), Err(CliError::Usage(_))));
    }

    #[test]
    fn manifest_config_is_unwrapped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, r#"{"tool": "x", "config": {"seed": 4}, "master_seed": 4}"#).unwrap();
        let mut r = Resolver::load(Some(&p)).unwrap();
        assert_eq!(r.get("seed", None, 0u64).unwrap(), 4);
        r.finish().unwrap();
    }
}
