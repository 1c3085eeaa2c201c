//! Flat `key = value` pipeline configuration.
//!
//! Keys are either bare (`seed = 7`) or scoped to a stage
//! (`corrupt.del_rate = 0.1`). Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected key = value", i + 1);
            };
            let k = k.trim();
            if k.is_empty() {
                bail!("config line {}: empty key", i + 1);
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Config { values })
    }

    /// `stage.key`, falling back to a bare `key`.
    pub fn raw(&self, stage: &str, key: &str) -> Option<&str> {
        self.values
            .get(&format!("{stage}.{key}"))
            .or_else(|| self.values.get(key))
            .map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, stage: &str, key: &str) -> Result<Option<T>> {
        match self.raw(stage, key) {
            None => Ok(None),
            Some(v) => match v.parse() {
                Ok(x) => Ok(Some(x)),
                Err(_) => bail!("config value for {stage}.{key} is invalid: {v:?}"),
            },
        }
    }

    /// Flag value if given, else config, else `default`.
    pub fn pick<T: FromStr>(
        &self,
        flag: Option<T>,
        stage: &str,
        key: &str,
        default: T,
    ) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(stage, key)?.unwrap_or(default)),
        }
    }

    pub fn pick_opt<T: FromStr>(
        &self,
        flag: Option<T>,
        stage: &str,
        key: &str,
    ) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(stage, key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoped_keys_override_bare_ones() {
        let c = Config::parse("# run\nseed = 3\ncorrupt.seed = 9\ndel_rate=0.5\n").unwrap();
        assert_eq!(c.get::<u64>("corrupt", "seed").unwrap(), Some(9));
        assert_eq!(c.get::<u64>("augment", "seed").unwrap(), Some(3));
        assert_eq!(c.pick(Some(1u64), "corrupt", "seed", 0).unwrap(), 1);
        assert_eq!(c.pick::<f64>(None, "x", "missing", 0.25).unwrap(), 0.25);
        assert!(c.get::<u64>("x", "del_rate").is_err());
        assert!(Config::parse("novalue\n").is_err());
    }
}
