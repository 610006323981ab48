//! Pipeline configuration: built-in defaults, overridden by a TOML file
//! (dotted keys such as `synth.n_participants = 4`), overridden by
//! `key=value` assignments.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg::EegConfig;
use crate::eval::{EvalConfig, PrepareConfig};
use crate::features::SrpConfig;
use crate::gaze::IvtParams;
use crate::synth::SynthConfig;

/// File name of the effective configuration written next to every artifact.
pub const EFFECTIVE_CONFIG: &str = "config.effective.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; also used as the generator seed.
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub synth: SynthConfig,
    pub gaze: IvtParams,
    pub eeg: EegConfig,
    pub srp: SrpConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        PipelineConfig {
            seed: synth.seed,
            jobs: 0,
            synth,
            gaze: IvtParams::default(),
            eeg: EegConfig::default(),
            srp: SrpConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Sets `path = value` inside a TOML table, creating intermediate tables.
/// `value` is read as a TOML value, or as a bare string if that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(ConfigError::Override(assignment.into()));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Invalid(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Defaults ← `text` ← `overrides`, then validation.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: PipelineConfig =
            PipelineConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.display().to_string(), source })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| inv(&e))?;
        self.gaze.validate().map_err(|e| inv(&e))?;
        self.eval.validate().map_err(|e| inv(&e))?;
        if !(self.srp.length_ms > 0.0 && self.srp.rate_hz > 0.0 && self.srp.baseline_ms >= 0.0) {
            return Err(ConfigError::Invalid("srp lengths and rate must be positive".into()));
        }
        Ok(())
    }

    pub fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig { gaze: self.gaze, eeg: self.eeg.clone(), srp: self.srp, include_unfound: self.eval.include_unfound }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Writes [`EFFECTIVE_CONFIG`] into `dir`.
    pub fn dump(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        std::fs::write(dir.as_ref().join(EFFECTIVE_CONFIG), self.to_toml())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering() {
        let c = PipelineConfig::from_toml_str("seed = 3\nsynth.n_participants = 4\n", &["synth.n_participants=5".into()]).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.synth.seed, 3);
        assert_eq!(c.synth.n_participants, 5);
        assert_eq!(c.synth.trials_per_participant, SynthConfig::default().trials_per_participant);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(PipelineConfig::from_toml_str("synth.colour = 1", &[]), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::from_toml_str("", &["nope".into()]), Err(ConfigError::Override(_))));
        assert!(matches!(PipelineConfig::from_toml_str("", &["eval.outer_folds=1".into()]), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn dump_round_trips() {
        let c = PipelineConfig::from_toml_str("", &["eval.conditions=[\"W->W\"]".into(), "eeg.sobi.n_lags=20".into()]).unwrap();
        let back = PipelineConfig::from_toml_str(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn string_fallback() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "a.b=hello").unwrap();
        assert_eq!(t["a"]["b"].as_str(), Some("hello"));
    }
}
