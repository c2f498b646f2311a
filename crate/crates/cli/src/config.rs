//! Run configuration: one TOML file drives a whole run. Paths are resolved
//! relative to the config file's directory at load time, so a config can be
//! invoked from anywhere; the run directory receives a snapshot with the
//! resolved absolute paths.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use strata_core::finqa::FactMode;
use strata_core::gateway::{BackendConfig, BackendKind};
use strata_core::prompt::{template_for, PromptMode, PromptTask};
use strata_core::retrieval::RetrievalStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Validation => write!(f, "validation"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}: expected validation or test")),
        }
    }
}

/// Cases per validation split: the first 40 by sorted id. Everything after
/// them is the test split.
pub const VALIDATION_SIZE: usize = 40;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    pub prompt: PromptSection,
    pub backend: BackendSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub task: PromptTask,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    /// Directory of raw statute text files (entailment task).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statute_dir: Option<PathBuf>,
    /// Case file: JSONL of cases (entailment) or report/question pairs
    /// (financial).
    pub cases_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_file: Option<PathBuf>,
    /// Side file of externally retrieved facts (financial, precomputed mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precomputed_facts: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetrievalSection {
    /// Entailment task: mentioned-only | entire-section | references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    /// Financial task: gold | precomputed | lexical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_mode: Option<String>,
    /// Facts to keep in lexical mode.
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSection {
    /// zero | few | cot.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_exemplars: Option<usize>,
    #[serde(default)]
    pub max_prompt_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendSection {
    /// mock | http-completions | http-chat.
    pub kind: String,
    pub model_id: String,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key; the key itself
    /// never appears in this file.
    #[serde(default)]
    pub auth_env_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop_sequences: Vec<String>,
    /// Response cache location; defaults to `<output_dir>/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

fn default_timeout_s() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_parallel() -> usize {
    1
}
fn default_retry_base_ms() -> u64 {
    1000
}
fn default_max_output_tokens() -> u32 {
    256
}

impl RunConfig {
    /// Read, resolve paths against the config file's directory, and validate.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let base = std::fs::canonicalize(&base)
            .with_context(|| format!("resolving config directory {}", base.display()))?;
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.run.output_dir);
        if let Some(p) = self.data.statute_dir.as_mut() {
            resolve(p);
        }
        resolve(&mut self.data.cases_file);
        if let Some(p) = self.data.exemplar_file.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.data.precomputed_facts.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.backend.fixture_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.backend.cache_dir.as_mut() {
            resolve(p);
        }
    }

    fn validate(&self) -> Result<()> {
        self.prompt_mode()?;
        self.backend_kind()?;
        if self.run.sample_n.is_some() && self.run.seed.is_none() {
            bail!("run.sample_n requires run.seed for reproducibility");
        }
        match self.run.task {
            PromptTask::Sara => {
                if self.data.statute_dir.is_none() {
                    bail!("task sara requires data.statute_dir");
                }
                self.strategy()?;
            }
            PromptTask::Finqa => {
                let mode = self.fact_mode()?;
                if mode == FactMode::Precomputed && self.data.precomputed_facts.is_none() {
                    bail!("fact_mode precomputed requires data.precomputed_facts");
                }
                if self.retrieval.k == 0 {
                    bail!("retrieval.k must be at least 1");
                }
            }
        }
        if self.prompt_mode()? != PromptMode::ZeroShot && self.data.exemplar_file.is_none() {
            bail!("prompt mode {:?} requires data.exemplar_file", self.prompt.mode);
        }
        if let Some(template) = &self.prompt.template {
            if strata_core::prompt::template_named(template).is_none() {
                bail!("unknown prompt template {template:?}");
            }
        }
        if self.backend_kind()? == BackendKind::Mock && self.backend.fixture_path.is_none() {
            bail!("backend kind mock requires backend.fixture_path");
        }
        Ok(())
    }

    pub fn prompt_mode(&self) -> Result<PromptMode> {
        self.prompt.mode.parse().map_err(|e: String| anyhow::anyhow!(e))
    }

    pub fn backend_kind(&self) -> Result<BackendKind> {
        self.backend.kind.parse().map_err(|e: String| anyhow::anyhow!(e))
    }

    pub fn strategy(&self) -> Result<RetrievalStrategy> {
        let raw = self
            .retrieval
            .strategy
            .as_deref()
            .unwrap_or("mentioned-only");
        raw.parse().map_err(|e: String| anyhow::anyhow!(e))
    }

    pub fn fact_mode(&self) -> Result<FactMode> {
        let raw = self.retrieval.fact_mode.as_deref().unwrap_or("gold");
        raw.parse().map_err(|e: String| anyhow::anyhow!(e))
    }

    /// Exemplars per prompt: explicit override or the task default
    /// (8 entailment, 12 financial).
    pub fn n_exemplars(&self) -> usize {
        self.prompt.n_exemplars.unwrap_or(match self.run.task {
            PromptTask::Sara => 8,
            PromptTask::Finqa => 12,
        })
    }

    pub fn template_id(&self) -> String {
        self.prompt
            .template
            .clone()
            .unwrap_or_else(|| template_for(self.run.task).id.to_string())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.backend
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.run.output_dir.join("cache"))
    }

    pub fn backend_config(&self) -> Result<BackendConfig> {
        Ok(BackendConfig {
            kind: self.backend_kind()?,
            endpoint_url: self.backend.endpoint_url.clone(),
            auth_env_var: self.backend.auth_env_var.clone(),
            timeout_s: self.backend.timeout_s,
            max_retries: self.backend.max_retries,
            max_parallel: self.backend.max_parallel,
            fixture_path: self.backend.fixture_path.clone(),
            retry_base_ms: self.backend.retry_base_ms,
        })
    }

    /// Snapshot the resolved config into the run directory so a run is
    /// reproducible from its own artifacts.
    pub fn write_snapshot(&self, run_dir: &Path) -> Result<()> {
        let rendered = toml::to_string_pretty(self).context("serializing config snapshot")?;
        let path = run_dir.join("config.toml");
        std::fs::write(&path, rendered)
            .with_context(|| format!("writing snapshot {}", path.display()))?;
        Ok(())
    }
}
