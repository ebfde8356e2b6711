//! Run configuration: one TOML file with `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use groupdet_core::detector::DetectorConfig;
use groupdet_core::synth::SynthSpec;
use groupdet_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of draft JSON documents (plus their referenced images).
    pub drafts: PathBuf,
    /// Output root for sliced datasets: `<dataset>/{train,val,test}`.
    pub dataset: PathBuf,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            drafts: PathBuf::from("out/drafts"),
            dataset: PathBuf::from("out/dataset"),
            ratios: (0.8, 0.1, 0.1),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Which split to evaluate: train, val, or test.
    pub split: String,
    /// Checkpoint to evaluate; defaults to `<io.output>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { split: "val".into(), checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub output: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig { output: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthSpec,
    pub model: DetectorConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.eval
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.io.output.join("model.ckpt"))
    }

    /// Write the fully resolved configuration next to the outputs.
    pub fn write_snapshot(&self) -> Result<()> {
        std::fs::create_dir_all(&self.io.output)?;
        let rendered = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot render config: {e}")))?;
        std::fs::write(self.io.output.join("resolved_config.toml"), rendered)?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key {key:?}")));
    }
    // parse the value as a TOML literal, falling back to a string
    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} crosses a non-table value")))?;
    }
    current.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Load a config file, apply the `GROUPDET_OUT` environment override and then
/// the `--set` overrides (file < env < set). Unknown keys are rejected.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            text.parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    if let Ok(out) = std::env::var("GROUPDET_OUT") {
        if !out.is_empty() {
            apply_override(&mut table, "io.output", &format!("{out:?}"))?;
        }
    }
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {set:?}")))?;
        apply_override(&mut table, key.trim(), value.trim())?;
    }
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    config.model.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[datum]\nx = 1\n").unwrap();
        assert!(load_config(Some(&path), &[]).is_err());
        std::fs::write(&path, "[model]\nlearning = 1\n").unwrap();
        assert!(load_config(Some(&path), &[]).is_err());
    }

    #[test]
    fn set_overrides_apply_and_parse_types() {
        let cfg = load_config(
            None,
            &[
                "model.lr0=0.5".into(),
                "synth.n_screens=3".into(),
                "eval.split=test".into(),
                "data.ratios=[0.6, 0.2, 0.2]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.lr0, 0.5);
        assert_eq!(cfg.synth.n_screens, 3);
        assert_eq!(cfg.eval.split, "test");
        assert_eq!(cfg.data.ratios, (0.6, 0.2, 0.2));
    }

    #[test]
    fn bad_override_value_is_config_error() {
        assert!(load_config(None, &["model.lr0=not_a_number".into()]).is_err());
        assert!(load_config(None, &["model.nonexistent=1".into()]).is_err());
    }
}
