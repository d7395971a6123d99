//! Run configuration, TOML presets and the config hash that names run
//! directories.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{DEFAULT_EMBEDDERS, DEFAULT_MODEL_ID};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::imaging::DEFAULT_MAX_SIDE;
use crate::metrics::DEFAULT_ANLS_THRESHOLD;
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Explain, select evidence cells, mask, re-query.
    Eagers,
    /// The question on the unmasked page, one call per question.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Eagers => "eagers",
            Mode::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eagers" => Ok(Mode::Eagers),
            "baseline" => Ok(Mode::Baseline),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub grid: GridSpec,
    pub margin_fraction: f64,
    pub max_side: u32,
    pub anls_threshold: f64,
    /// Exact match on raw strings instead of normalized ones.
    pub raw_exact_match: bool,
    pub embedder_ids: Vec<String>,
    pub model_id: String,
    pub explain_prompt: String,
    pub answer_prompt: String,
    /// Questions processed in parallel.
    pub concurrency: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Eagers,
            grid: GridSpec::new(5, 5).expect("valid default grid"),
            margin_fraction: 0.0,
            max_side: DEFAULT_MAX_SIDE,
            anls_threshold: DEFAULT_ANLS_THRESHOLD,
            raw_exact_match: false,
            embedder_ids: DEFAULT_EMBEDDERS.iter().map(|s| s.to_string()).collect(),
            model_id: DEFAULT_MODEL_ID.into(),
            explain_prompt: prompts::EXPLAIN_V1.into(),
            answer_prompt: prompts::ANSWER_V1.into(),
            concurrency: 4,
        }
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    mode: Mode,
    cols: u32,
    rows: u32,
    margin_fraction: f64,
    max_side: u32,
    anls_threshold: f64,
    raw_exact_match: bool,
    embedder_ids: &'a [String],
    model_id: &'a str,
    explain_prompt: &'a str,
    answer_prompt: &'a str,
    backend: &'a str,
}

#[derive(Serialize)]
struct EmbedScope<'a> {
    cols: u32,
    rows: u32,
    max_side: u32,
    backend: &'a str,
}

fn short_digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("hash input serializes");
    hex::encode(&Sha256::digest(json)[..8])
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.margin_fraction) {
            return Err(Error::Config(format!(
                "margin_fraction {} outside [0, 1]",
                self.margin_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.anls_threshold) {
            return Err(Error::Config(format!(
                "anls_threshold {} outside [0, 1]",
                self.anls_threshold
            )));
        }
        if self.max_side == 0 {
            return Err(Error::Config("max_side must be positive".into()));
        }
        if self.embedder_ids.is_empty() {
            return Err(Error::Config("at least one embedder id is required".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        prompts::lookup(&self.explain_prompt)?;
        prompts::lookup(&self.answer_prompt)?;
        Ok(())
    }

    /// Digest naming the run directory. `backend` identifies the model
    /// server (or mock) so runs against different backends never share a
    /// cache. Concurrency is excluded: it does not change results.
    pub fn config_hash(&self, backend: &str) -> String {
        short_digest(&HashInput {
            mode: self.mode,
            cols: self.grid.cols(),
            rows: self.grid.rows(),
            margin_fraction: self.margin_fraction,
            max_side: self.max_side,
            anls_threshold: self.anls_threshold,
            raw_exact_match: self.raw_exact_match,
            embedder_ids: &self.embedder_ids,
            model_id: &self.model_id,
            explain_prompt: &self.explain_prompt,
            answer_prompt: &self.answer_prompt,
            backend,
        })
    }

    /// Digest of the settings cell embeddings depend on. Margin, threshold
    /// and prompts are left out so runs differing only in those reuse them.
    pub fn embedding_scope(&self, backend: &str) -> String {
        short_digest(&EmbedScope {
            cols: self.grid.cols(),
            rows: self.grid.rows(),
            max_side: self.max_side,
            backend,
        })
    }

    /// Row label in the style `EaGERS_50|15`; the model id for baselines.
    pub fn label(&self) -> String {
        match self.mode {
            Mode::Eagers => format!(
                "EaGERS_{}|{}",
                self.grid.cell_count(),
                (self.margin_fraction * 100.0).round() as i64
            ),
            Mode::Baseline => self.model_id.clone(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        file.apply(Self::default())
    }

    pub fn load(path: &Path) -> Result<(Self, ConfigFile)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        Ok((file.clone().apply(Self::default())?, file))
    }
}

/// Backend connection settings from the `[backend]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub base_url: Option<String>,
    pub timeout_seconds: Option<f64>,
    pub retries: Option<u32>,
    pub max_in_flight: Option<usize>,
}

/// On-disk TOML; every key is optional and overrides the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub cols: Option<u32>,
    pub rows: Option<u32>,
    pub margin_fraction: Option<f64>,
    pub max_side: Option<u32>,
    pub anls_threshold: Option<f64>,
    pub raw_exact_match: Option<bool>,
    pub embedder_ids: Option<Vec<String>>,
    pub model_id: Option<String>,
    pub explain_prompt: Option<String>,
    pub answer_prompt: Option<String>,
    pub concurrency: Option<usize>,
    #[serde(default)]
    pub backend: BackendSection,
}

impl ConfigFile {
    pub fn apply(self, mut cfg: PipelineConfig) -> Result<PipelineConfig> {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        let cols = self.cols.unwrap_or(cfg.grid.cols());
        let rows = self.rows.unwrap_or(cfg.grid.rows());
        cfg.grid = GridSpec::new(cols, rows).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(v) = self.margin_fraction {
            cfg.margin_fraction = v;
        }
        if let Some(v) = self.max_side {
            cfg.max_side = v;
        }
        if let Some(v) = self.anls_threshold {
            cfg.anls_threshold = v;
        }
        if let Some(v) = self.raw_exact_match {
            cfg.raw_exact_match = v;
        }
        if let Some(v) = self.embedder_ids {
            cfg.embedder_ids = v;
        }
        if let Some(v) = self.model_id {
            cfg.model_id = v;
        }
        if let Some(v) = self.explain_prompt {
            cfg.explain_prompt = v;
        }
        if let Some(v) = self.answer_prompt {
            cfg.answer_prompt = v;
        }
        if let Some(v) = self.concurrency {
            cfg.concurrency = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("eagers_25_0", include_str!("../configs/eagers_25_0.toml")),
    ("eagers_50_0", include_str!("../configs/eagers_50_0.toml")),
    ("eagers_25_15", include_str!("../configs/eagers_25_15.toml")),
    ("eagers_50_15", include_str!("../configs/eagers_50_15.toml")),
    ("baseline", include_str!("../configs/baseline.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Option<ConfigFile> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| toml::from_str(text).expect("built-in presets parse"))
}

/// A config argument is a TOML path, or else the name of a built-in preset
/// (with or without `.toml`).
pub fn resolve(arg: &str) -> Result<(PipelineConfig, ConfigFile)> {
    let path = Path::new(arg);
    if path.is_file() {
        return PipelineConfig::load(path);
    }
    let bare = path.components().count() == 1;
    match preset(arg).filter(|_| bare) {
        Some(file) => Ok((file.clone().apply(PipelineConfig::default())?, file)),
        None => Err(Error::Config(format!(
            "config {arg:?} is neither a file nor a preset ({})",
            preset_names().join(", ")
        ))),
    }
}
