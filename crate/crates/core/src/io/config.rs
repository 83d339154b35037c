//! TOML configuration files.
//!
//! Every [`SimConfig`] field is a top-level key; missing keys take their
//! defaults and unknown keys are rejected. See `config/default.toml` in the
//! repository for the full list.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SimConfig;

pub fn parse_config(text: &str, origin: &Path) -> Result<SimConfig> {
    toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn to_toml(cfg: &SimConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

/// Applies one `key=value` override. The value is read as a TOML value
/// (`0.5`, `"Shanghai"`, `[500, 1000]`); bare words fall back to strings.
pub fn apply_override(cfg: &SimConfig, assignment: &str) -> Result<SimConfig> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("override `{assignment}` is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut table = toml::Table::try_from(cfg).map_err(|e| Error::Argument(e.to_string()))?;
    table.insert(key.to_string(), value);
    table.try_into().map_err(|e: toml::de::Error| Error::Argument(format!("override `{key}`: {}", e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_config("", Path::new("x.toml")).unwrap(), SimConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = SimConfig::default();
        assert_eq!(parse_config(&to_toml(&cfg), Path::new("x.toml")).unwrap(), cfg);
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let cfg = parse_config("peer_count = 500\nstrategy = \"random\"\n", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.peer_count, 500);
        assert_eq!(cfg.strategy, Strategy::Random);
        assert!(parse_config("peers = 5\n", Path::new("x.toml")).is_err());
    }

    #[test]
    fn overrides() {
        let cfg = SimConfig::default();
        let cfg = apply_override(&cfg, "alpha=0.5").unwrap();
        let cfg = apply_override(&cfg, "failure_region=Shanghai").unwrap();
        let cfg = apply_override(&cfg, "content_sizes_kb=[500, 16000]").unwrap();
        let cfg = apply_override(&cfg, "failure_end_s = 600").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.failure_region, "Shanghai");
        assert_eq!(cfg.content_sizes_kb, vec![500.0, 16000.0]);
        assert_eq!(cfg.failure_end_s, Some(600.0));
        assert!(apply_override(&cfg, "nonsense=1").is_err());
        assert!(apply_override(&cfg, "alpha").is_err());
        assert!(apply_override(&cfg, "zeta=\"ten\"").is_err());
    }
}
