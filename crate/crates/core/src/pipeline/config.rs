use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::align::DEFAULT_CYCLE_TOLERANCE;
use crate::compose::DEFAULT_INPAINT_ITERS;
use crate::gen::{DEFAULT_TIMEOUT_MS, ENDPOINT_ENV, TIMEOUT_ENV};
use crate::metrics::MetricConfig;
use crate::stage::StageParams;

/// Inputs and output of the current command. Filled in by the command
/// functions from their arguments; the output root is not part of the
/// configuration recorded in manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gripper_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedder {
    /// Downsampled-luma pixel embedding computed on the fly.
    #[default]
    Builtin,
    /// Precomputed `emb.jsonl` inside each episode directory.
    EpisodeFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub cycle_tolerance: usize,
    pub embedder: Embedder,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            cycle_tolerance: DEFAULT_CYCLE_TOLERANCE,
            embedder: Embedder::Builtin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockKind {
    Echo,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub concurrency: usize,
    /// In-process mock instead of a remote service.
    pub mock: Option<MockKind>,
    /// Truth directory for the compositing mock.
    pub truth_dir: Option<PathBuf>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            concurrency: 4,
            mock: None,
            truth_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Step count for `relative_actions.jsonl`.
    pub horizon: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { horizon: 1 }
    }
}

/// Everything that influences a command's output. Stored, minus the output
/// root, in every manifest the pipeline writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub alignment: AlignmentConfig,
    pub stage: StageParams,
    pub generator: GeneratorConfig,
    pub metrics: MetricConfig,
    pub export: ExportConfig,
    pub inpaint_max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig::default(),
            alignment: AlignmentConfig::default(),
            stage: StageParams::default(),
            generator: GeneratorConfig::default(),
            metrics: MetricConfig::default(),
            export: ExportConfig::default(),
            inpaint_max_iters: DEFAULT_INPAINT_ITERS,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `DEMOFORGE_GEN_ENDPOINT` and `DEMOFORGE_GEN_TIMEOUT_MS` when
    /// set.
    pub fn apply_env(&mut self) -> Result<(), PipelineError> {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            self.generator.endpoint = Some(endpoint);
        }
        if let Ok(ms) = std::env::var(TIMEOUT_ENV) {
            self.generator.timeout_ms = ms
                .parse()
                .map_err(|_| PipelineError::Config(format!("{TIMEOUT_ENV}={ms:?} is not an integer")))?;
        }
        Ok(())
    }

    /// The configuration as recorded in manifests: everything except the
    /// output root.
    pub fn recorded(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.paths.out_dir = None;
        serde_json::to_value(c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"stage":{"hysteresis":5},"export":{"horizon":4}}"#).unwrap();
        assert_eq!(c.stage.hysteresis, 5);
        assert_eq!(c.stage.dilation_px, 5);
        assert_eq!(c.export.horizon, 4);
        assert_eq!(c.alignment.cycle_tolerance, 2);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn recorded_config_drops_output_root() {
        let mut c = PipelineConfig::default();
        c.paths.out_dir = Some("/tmp/x".into());
        c.paths.hand_dir = Some("h".into());
        let v = c.recorded();
        assert!(v["paths"].get("out_dir").is_none());
        assert_eq!(v["paths"]["hand_dir"], "h");
        let back: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back.paths.hand_dir, c.paths.hand_dir);
    }
}
