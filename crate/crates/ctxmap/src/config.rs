//! Run configuration: JSON files deep-merged in order, then flag
//! overrides.
//!
//! Relative `corpus`, `qa` and `templates_dir` paths are resolved against
//! the directory of the file that sets them. `index_cache` is a file name
//! inside the output directory.

use std::fs;
use std::path::{Component, Path, PathBuf};

use ctxmap_core::cost::Pricing;
use ctxmap_core::prompt::PromptTemplates;
use ctxmap_core::scripted::ScriptedBiasModel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backend::WireConfig;
use crate::eval::ExperimentConfig;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: not valid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{origin}: field `{field}`: {detail}")]
    Schema { origin: String, field: String, detail: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedSpec {
    pub model: ScriptedBiasModel,
    pub pricing: Pricing,
}

/// Exactly one backend, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Scripted(ScriptedSpec),
    Wire(WireConfig),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Scripted(ScriptedSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    pub index_cache: PathBuf,
    pub output_dir: PathBuf,
    /// Overrides the scripted model's seed and seeds sampling.
    pub seed: Option<u64>,
    pub embedding_dimension: usize,
    /// Directory of `<template field>.txt` files overriding the built-in
    /// prompt templates.
    pub templates_dir: Option<PathBuf>,
    pub backend: BackendSpec,
    pub pipeline: PipelineConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            qa: None,
            index_cache: PathBuf::from("dense_index.jsonl"),
            output_dir: PathBuf::from("ctxmap-out"),
            seed: None,
            embedding_dimension: 256,
            templates_dir: None,
            backend: BackendSpec::default(),
            pipeline: PipelineConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Recursively overlays `top` onto `base`; objects merge key by key, any
/// other value replaces.
pub fn deep_merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

/// Reads one JSON config layer, resolving relative input paths against the
/// file's directory.
pub fn read_layer(path: &Path) -> Result<Value, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.to_path_buf(), source })?;
    let Value::Object(map) = &mut value else {
        return Err(ConfigError::Schema {
            origin: path.display().to_string(),
            field: ".".into(),
            detail: "top level must be a JSON object".into(),
        });
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    resolve_paths(map, dir);
    Ok(value)
}

fn resolve_paths(map: &mut Map<String, Value>, dir: &Path) {
    for key in ["corpus", "qa", "templates_dir"] {
        if let Some(Value::String(s)) = map.get_mut(key) {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = dir.join(p).to_string_lossy().into_owned();
            }
        }
    }
}

/// Deserializes a merged value, naming the offending field on error.
pub fn from_value(value: Value, origin: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Schema {
        origin: origin.to_string(),
        field: e.path().to_string(),
        detail: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Merges the given files in order over the defaults.
pub fn load(layers: &[&Path]) -> Result<RunConfig, ConfigError> {
    let mut merged = Value::Object(Map::new());
    for path in layers {
        deep_merge(&mut merged, read_layer(path)?);
    }
    let origin = layers.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" + ");
    from_value(merged, if origin.is_empty() { "<defaults>" } else { &origin })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.experiment.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.embedding_dimension == 0 {
            return Err(ConfigError::Invalid("embedding_dimension must be positive".into()));
        }
        let plain_name = self.index_cache.components().count() == 1
            && matches!(self.index_cache.components().next(), Some(Component::Normal(_)));
        if !plain_name {
            return Err(ConfigError::Invalid(format!(
                "index_cache must be a plain file name inside the output directory, got {}",
                self.index_cache.display()
            )));
        }
        if let BackendSpec::Scripted(s) = &self.backend {
            s.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Seed used for sampling and by the scripted backend.
    pub fn effective_seed(&self) -> u64 {
        match (&self.seed, &self.backend) {
            (Some(s), _) => *s,
            (None, BackendSpec::Scripted(spec)) => spec.model.seed,
            (None, BackendSpec::Wire(_)) => 0,
        }
    }

    pub fn index_cache_path(&self) -> PathBuf {
        self.output_dir.join(&self.index_cache)
    }

    pub fn corpus_path(&self) -> Result<&Path, ConfigError> {
        self.corpus.as_deref().ok_or_else(|| ConfigError::Invalid("no corpus path configured".into()))
    }

    pub fn qa_path(&self) -> Result<&Path, ConfigError> {
        self.qa.as_deref().ok_or_else(|| ConfigError::Invalid("no qa dataset path configured".into()))
    }

    /// The configured templates with any `<field>.txt` overrides applied.
    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        let mut t = self.pipeline.templates.clone();
        let Some(dir) = &self.templates_dir else {
            return Ok(t);
        };
        let fields: [(&str, &mut String); 8] = [
            ("extraction_instruction", &mut t.extraction_instruction),
            ("summarization_instruction", &mut t.summarization_instruction),
            ("answer_instruction", &mut t.answer_instruction),
            ("closed_book_instruction", &mut t.closed_book_instruction),
            ("cot_suffix", &mut t.cot_suffix),
            ("context_layout", &mut t.context_layout),
            ("reduce_layout", &mut t.reduce_layout),
            ("closed_book_layout", &mut t.closed_book_layout),
        ];
        for (name, slot) in fields {
            let path = dir.join(format!("{name}.txt"));
            match fs::read_to_string(&path) {
                Ok(text) => *slot = text.trim_end_matches('\n').to_string(),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => return Err(ConfigError::Read { path, source }),
            }
        }
        Ok(t)
    }
}
