//! Flat key=value config files. One pair per line, `#` starts a comment,
//! blank lines are skipped. Keys use the long flag names without the
//! leading dashes. Values given on the command line win over the file.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            );
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            bail!("{}:{}: empty key", path.display(), lineno + 1);
        }
        map.insert(key, value);
    }
    Ok(map)
}

/// Fills `slot` from the config map only when the flag was absent.
pub fn fill<T: std::str::FromStr>(
    slot: &mut Option<T>,
    map: &HashMap<String, String>,
    key: &str,
) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        if let Some(raw) = map.get(key) {
            let parsed = raw
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("config key {key}={raw:?}: {e}"))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}
