//! Flat key-value configuration files and flag resolution.

use std::path::{Path, PathBuf};

use hatcn::{Error, Result};
use toml::{Table, Value};

/// Keys accepted in a configuration file: the flag names without dashes.
pub const KEYS: [&str; 17] = [
    "seed", "out", "data", "model", "layers", "channels", "kernel", "folds", "repeats", "epochs", "lr", "batch",
    "layer-pct", "step-pct", "jobs", "checkpoint", "series",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    table: Table,
}

fn usage(msg: String) -> Error {
    Error::Usage(msg)
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: Table = toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        for (key, value) in &table {
            if !KEYS.contains(&key.as_str()) {
                return Err(usage(format!("config {}: unknown key '{key}'", path.display())));
            }
            if matches!(value, Value::Table(_)) {
                return Err(usage(format!("config {}: key '{key}' must be a plain value", path.display())));
            }
        }
        Ok(Self { table })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        debug_assert!(KEYS.contains(&key), "unlisted key {key}");
        self.table.get(key)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(v) => Err(usage(format!("config key '{key}' must be a non-negative integer, got {v}"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(v) => Err(usage(format!("config key '{key}' must be a number, got {v}"))),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(usage(format!("config key '{key}' must be a string, got {v}"))),
        }
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    /// `layers` may be an integer, an array of integers or a comma list.
    pub fn layers(&self) -> Result<Option<Vec<usize>>> {
        match self.get("layers") {
            None => Ok(None),
            Some(Value::Integer(v)) if *v > 0 => Ok(Some(vec![*v as usize])),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(k) if *k > 0 => Ok(*k as usize),
                    other => Err(usage(format!("config key 'layers' holds a non-positive or non-integer entry {other}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::String(s)) => parse_layers(s).map(Some),
            Some(v) => Err(usage(format!("config key 'layers' must be an integer or a list, got {v}"))),
        }
    }
}

pub fn parse_layers(s: &str) -> Result<Vec<usize>> {
    let depths = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().ok().filter(|&k| k > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| usage(format!("--layers expects positive integers separated by commas, got '{s}'")))?;
    if depths.is_empty() {
        return Err(usage("--layers is empty".into()));
    }
    Ok(depths)
}

/// Flag, else config file, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<FileConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        FileConfig::load(Some(&path))
    }

    #[test]
    fn reads_flat_values() {
        let c = config("seed = 9\nlr = 0.01\nmodel = \"tcn\"\nlayers = [2, 4]\nlayer-pct = 1\n").unwrap();
        assert_eq!(c.u64("seed").unwrap(), Some(9));
        assert_eq!(c.f64("lr").unwrap(), Some(0.01));
        assert_eq!(c.f64("layer-pct").unwrap(), Some(1.0));
        assert_eq!(c.string("model").unwrap().as_deref(), Some("tcn"));
        assert_eq!(c.layers().unwrap(), Some(vec![2, 4]));
        assert_eq!(c.u64("epochs").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_nested_keys() {
        assert!(matches!(config("sed = 1\n"), Err(Error::Usage(_))));
        assert!(matches!(config("[seed]\nx = 1\n"), Err(Error::Usage(_))));
        assert!(matches!(config("seed = -1\n").unwrap().u64("seed"), Err(Error::Usage(_))));
    }

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn layer_lists() {
        assert_eq!(parse_layers("2, 4,8").unwrap(), vec![2, 4, 8]);
        assert!(parse_layers("2,,4").is_err());
        assert!(parse_layers("0").is_err());
    }
}
