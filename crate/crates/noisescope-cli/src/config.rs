//! Flat key=value configuration files.
//!
//! One assignment per line, `#` or `;` starts a comment, blank lines are
//! ignored. Keys are the long flag names without the leading dashes
//! (e.g. `tau-max = 5`). Underscores are accepted as an alias for
//! dashes.

use std::collections::BTreeMap;
use std::path::Path;

/// Parsed key=value pairs from a config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find(['#', ';']) {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected 'key = value', got '{}'",
                    path.display(),
                    lineno + 1,
                    line
                ));
            };
            let key = normalize_key(key.trim());
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(format!(
                    "{}:{}: empty key or value",
                    path.display(),
                    lineno + 1
                ));
            }
            entries.insert(key, value);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }
}

fn normalize_key(key: &str) -> String {
    key.replace('_', "-").to_ascii_lowercase()
}
