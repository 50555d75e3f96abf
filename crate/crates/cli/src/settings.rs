//! Flat dotted-key configuration: defaults, then a JSON file, then
//! `--set key=value` pairs, then dedicated flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Keys that do not influence results and are left out of the config hash.
const UNHASHED: [&str; 2] = ["jobs", "out"];

fn defaults() -> BTreeMap<String, Value> {
    let pairs = [
        ("seed", Value::Null),
        ("jobs", Value::Null),
        ("out", json!(".")),
        ("full_scale", json!(false)),
        ("stream.preset", json!("fast")),
        ("stream.delta", Value::Null),
        ("stream.period", json!(10)),
        ("stream.fraction", json!(50)),
        ("stream.sign", json!("node")),
        ("stream.pool", json!("non-parents")),
        ("stream.length", json!(5000)),
        ("stream.attributes", json!(200)),
        ("model.order", json!(1)),
        ("model.smoothing", json!(1.0)),
        ("model.delta_threshold", json!(0.0)),
        ("forget.variant", json!("window")),
        ("forget.window", json!(50)),
        ("forget.decay", json!(0.05)),
        ("eval.runs", Value::Null),
        ("eval.bucket", json!(50)),
        ("grid.presets", json!(["fast", "medium", "slow"])),
        ("grid.models", json!([0, 1, 2])),
        (
            "grid.policies",
            json!(["w20", "w50", "w500", "d0.005", "d0.05", "d0.15"]),
        ),
        ("grid.a2de_attributes", json!(50)),
        ("data.dataset", Value::Null),
        ("data.file", Value::Null),
        ("data.format", Value::Null),
        ("data.class", Value::Null),
        ("data.nominal", json!([])),
        ("data.validate", json!(true)),
        ("discretizer.capacity", json!(1000)),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { values: defaults() }
    }
}

impl Settings {
    /// Merges a JSON object file. Nested objects are flattened into dotted keys.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(map) = value else {
            bail!("config {} must be a JSON object", path.display());
        };
        let mut flat = Vec::new();
        flatten("", map, &mut flat);
        for (k, v) in flat {
            self.set(&k, v)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(anyhow!("unknown configuration key {key:?}")),
        }
    }

    /// Applies `key=value`; the value is read as JSON when it parses, and as a
    /// plain string otherwise.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got {pair:?}"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.set(key.trim(), value)
    }

    pub fn set_if<T: Into<Value>>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v.into()),
            None => Ok(()),
        }
    }

    pub fn is_null(&self, key: &str) -> bool {
        self.raw(key).is_null()
    }

    pub fn raw(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("configuration key {key:?} has no default"))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.raw(key).as_u64().ok_or_else(|| {
            anyhow!(
                "{key} must be a non-negative integer, got {}",
                self.raw(key)
            )
        })
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        Ok(usize::try_from(self.u64(key)?)?)
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        if self.is_null(key) {
            Ok(None)
        } else {
            self.usize(key).map(Some)
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key)
            .as_f64()
            .ok_or_else(|| anyhow!("{key} must be a number, got {}", self.raw(key)))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.raw(key)
            .as_bool()
            .ok_or_else(|| anyhow!("{key} must be true or false, got {}", self.raw(key)))
    }

    pub fn string(&self, key: &str) -> Result<String> {
        match self.raw(key) {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(anyhow!("{key} must be a string, got {other}")),
        }
    }

    pub fn opt_string(&self, key: &str) -> Result<Option<String>> {
        if self.is_null(key) {
            Ok(None)
        } else {
            self.string(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    /// A list given as a JSON array or as a comma-separated string.
    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        match self.raw(key) {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    other => Err(anyhow!("{key}: unsupported list item {other}")),
                })
                .collect(),
            Value::String(s) => Ok(s
                .split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect()),
            Value::Number(n) => Ok(vec![n.to_string()]),
            other => Err(anyhow!("{key} must be a list, got {other}")),
        }
    }

    /// Every result-affecting key, sorted; excludes `jobs` and `out`.
    pub fn result_json(&self) -> Value {
        Value::Object(
            self.values
                .iter()
                .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        )
    }

    /// SHA-256 over the canonical JSON of [`Self::result_json`].
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.result_json()).expect("serialisable");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn flatten(prefix: &str, map: Map<String, Value>, out: &mut Vec<(String, Value)>) {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Object(inner) => flatten(&key, inner, out),
            other => out.push((key, other)),
        }
    }
}
