use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every recognized key and its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    // corpus
    ("data", "data"),
    ("max_vocab", "50000"),
    ("max_conv_len", "120"),
    ("n_instances", "1000"),
    ("n_topics", "10"),
    ("synth_vocab", "200"),
    ("signal_location", "both"),
    ("indicative_per_topic", "4"),
    ("planted", "2"),
    ("post_len_min", "6"),
    ("post_len_max", "10"),
    ("turns_min", "2"),
    ("turns_max", "4"),
    ("turn_len_min", "4"),
    ("turn_len_max", "7"),
    // model
    ("variant", "full"),
    ("hidden", "300"),
    ("embed", "200"),
    ("layers", "2"),
    ("share_embeddings", "true"),
    // training
    ("lr", "0.001"),
    ("batch_size", "64"),
    ("max_epochs", "100"),
    ("dropout", "0.1"),
    ("clip", "1.0"),
    ("patience", "1"),
    ("max_halvings", "3"),
    ("lr_floor", "0.000001"),
    // inference
    ("checkpoint", "model.ckpt"),
    ("split", "test"),
    ("beam_width", "20"),
    ("max_len", "10"),
    ("top_k", "5"),
    // evaluation
    ("predictions", "predictions.jsonl"),
    ("stemming", "true"),
    ("char_mode", "false"),
];

/// Flat key-value run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown configuration key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v)
    }

    /// Reads `key = value` lines (`#` starts a comment), or the `config`
    /// object of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                line: 1,
                source,
            })?;
            let obj = manifest
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| Error::Config(format!("{} has no config object", path.display())))?;
            for (k, v) in obj {
                let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                cfg.set(k, &v)?;
            }
            return Ok(cfg);
        }
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.apply(line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("configuration key {key} has no default"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| Error::Config(format!("{key} = {:?}: {e}", self.raw(key))))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}
