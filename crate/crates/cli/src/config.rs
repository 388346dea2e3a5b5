//! `key=value` defaults files and the run record written next to outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::UsageError;

/// Defaults read from a `--config` file. Blank lines and `#` comments are
/// ignored; keys use the long flag names (`budget-bits`, `batch-size`, ...),
/// with `_` accepted for `-`.
#[derive(Debug, Default, Clone)]
pub struct Defaults {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl Defaults {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                UsageError(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    n + 1
                ))
            })?;
            values.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self {
            values,
            source: Some(path.to_path_buf()),
        })
    }

    /// The flag value when given, else the config value, else `fallback`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, fallback: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.lookup(flag, key)?.unwrap_or(fallback))
    }

    /// Like [`pick`](Self::pick) with no fallback.
    pub fn lookup<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                let src = self.source.as_deref().map(Path::display);
                UsageError(format!(
                    "config {}: bad value for {key}: {raw:?} ({e})",
                    src.map_or("?".into(), |s| s.to_string())
                ))
                .into()
            }),
        }
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Ordered record of one invocation, written as `<output>.run`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn new(subcommand: &str) -> Self {
        Self {
            entries: vec![
                ("tool".into(), format!("embc {}", env!("CARGO_PKG_VERSION"))),
                ("subcommand".into(), subcommand.into()),
            ],
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Sidecar path for an output file.
    pub fn sidecar(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".run");
        PathBuf::from(name)
    }

    pub fn write_for(&self, output: &Path) -> Result<()> {
        let path = Self::sidecar(output);
        std::fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}
