//! `key = value` configuration files mirroring the command-line flags.
//! Flags always win over file values; unknown keys are rejected.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use sif_core::Error;

/// Every accepted key. One list for all commands keeps a single config
/// file usable across a whole run.
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "threads",
    // sample
    "resolution",
    "padding",
    "count",
    "truncation",
    "text",
    // fit
    "elements",
    "steps",
    "lr",
    "lr-final",
    "beta1",
    "beta2",
    "adam-eps",
    "batch-uniform",
    "batch-surface",
    "log-every",
    "alpha",
    "beta",
    "w-uniform",
    "w-surface",
    "w-center-inside",
    "w-center-outside",
    "isolevel",
    // extract
    "res",
    "epsilon",
    "min-area",
    // eval
    "tau",
    "samples",
    // correspond
    "magnitude",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, line_no, "expected `key = value`").into());
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::parse(path, line_no, format!("unknown key `{key}`")).into());
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::parse(path, line_no, format!("duplicate key `{key}`")).into());
            }
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                Error::InvalidInput(format!("config key `{key}` = `{raw}`: {e}")).into()
            }),
        }
    }

    /// Flag value if given, else config file value, else the default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Flag value if given, else config file value.
    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
    }

    /// Boolean switches: a bare flag turns them on; the file can too.
    pub fn resolve_switch(&self, flag: bool, key: &str) -> anyhow::Result<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Parse a comma-separated weight list such as `0.5,0.5`.
pub fn parse_weights(raw: &str) -> anyhow::Result<Vec<f64>> {
    raw.split(',')
        .map(|w| {
            let w = w.trim();
            w.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad weight `{w}`: {e}")).into())
        })
        .collect()
}
