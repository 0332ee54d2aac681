//! Flat key = value configuration files mirroring the command-line flags.
//! Explicit flags always win over file entries.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::input(format!(
                    "config line {} is not 'key = value': {line}",
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Fill an unset option from the config file, parsing with `parse`.
    pub fn fill<T>(
        &self,
        slot: &mut Option<T>,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(), CliError> {
        if slot.is_none() {
            if let Some(raw) = self.get(key) {
                let value = parse(raw)
                    .map_err(|e| CliError::input(format!("config key '{key}': {e}")))?;
                *slot = Some(value);
            }
        }
        Ok(())
    }
}
