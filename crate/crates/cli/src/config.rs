use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use pulsestream_core::textprep::{DEFAULT_MAX_LEN, DEFAULT_VOCAB_SIZE};
use pulsestream_pipeline::ingest::{validate_figures, FigureConfig, DEFAULT_DAILY_LIMIT, DEFAULT_MAX_PAGES};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The single JSON document driving every command. Relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub figures: Vec<FigureConfig>,
    #[serde(default = "default_crawl_interval")]
    pub crawl_interval_secs: u64,
    #[serde(default = "default_max_pages")]
    pub max_pages: u32,
    #[serde(default = "default_quota")]
    pub quota_daily_limit: u32,
    pub store_root: PathBuf,
    #[serde(default = "default_partitions")]
    pub broker_partitions: u32,
    #[serde(default)]
    pub model: Option<ModelPaths>,
    #[serde(default)]
    pub serve: ServeSettings,
    #[serde(default = "default_scoring_interval")]
    pub scoring_interval_secs: u64,
    #[serde(default)]
    pub train: TrainSettings,
}

fn default_crawl_interval() -> u64 {
    3600
}
fn default_max_pages() -> u32 {
    DEFAULT_MAX_PAGES
}
fn default_quota() -> u32 {
    DEFAULT_DAILY_LIMIT
}
fn default_partitions() -> u32 {
    pulsestream_pipeline::DEFAULT_PARTITIONS
}
fn default_scoring_interval() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub params: PathBuf,
    pub vocab: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSettings {
    pub address: SocketAddr,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings { address: ([127, 0, 0, 1], 8080).into(), static_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub split_ratio: f64,
    pub clip_norm: Option<f64>,
    pub embed_dim: usize,
    pub lstm_hidden: usize,
    pub dense_hidden: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    /// Seeds both weight initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 8,
            batch_size: 32,
            learning_rate: 1e-3,
            split_ratio: 0.8,
            clip_norm: None,
            embed_dim: 64,
            lstm_hidden: 64,
            dense_hidden: 32,
            max_len: DEFAULT_MAX_LEN,
            vocab_size: DEFAULT_VOCAB_SIZE,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        validate_figures(&self.figures).map_err(|e| CliError::Config(e.to_string()))?;
        let checks = [
            (self.crawl_interval_secs == 0, "crawl_interval_secs must be positive"),
            (self.scoring_interval_secs == 0, "scoring_interval_secs must be positive"),
            (self.max_pages == 0, "max_pages must be at least 1"),
            (self.broker_partitions == 0, "broker_partitions must be at least 1"),
        ];
        match checks.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(CliError::Config(msg.to_string())),
            None => Ok(()),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_root);
        if let Some(m) = &mut self.model {
            fix(&mut m.params);
            fix(&mut m.vocab);
        }
        if let Some(d) = &mut self.serve.static_dir {
            fix(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/pipeline.example.json");
        let cfg = PipelineConfig::load(&path).unwrap();
        let ids: Vec<_> = cfg.figures.iter().map(|f| f.figure_id.as_str()).collect();
        assert_eq!(ids, ["anies", "ganjar", "prabowo", "puan"]);
        assert_eq!((cfg.crawl_interval_secs, cfg.quota_daily_limit, cfg.scoring_interval_secs), (3600, 2000, 60));
        assert!(cfg.store_root.ends_with("config/../var/store"));
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let write = |body: &str| {
            let p = dir.path().join("c.json");
            std::fs::write(&p, body).unwrap();
            PipelineConfig::load(&p)
        };
        assert!(write(r#"{"figures": [], "store_root": "s"}"#).is_ok());
        assert!(matches!(write(r#"{"figures": []}"#), Err(CliError::Config(_))));
        assert!(matches!(write(r#"{"figures": [], "store_root": "s", "bogus": 1}"#), Err(CliError::Config(_))));
        assert!(matches!(
            write(r#"{"figures": [{"figure_id": "a", "display_name": "A", "keywords": []}], "store_root": "s"}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(write(r#"{"figures": [], "store_root": "s", "max_pages": 0}"#), Err(CliError::Config(_))));
        assert!(matches!(PipelineConfig::load(&dir.path().join("missing.json")), Err(CliError::Config(_))));
    }
}
