//! Pipeline configuration file (TOML, or JSON by `.json` extension).
//!
//! ```toml
//! parallelism = 4
//! checkpoint_path = "run.checkpoint.jsonl"
//! template_path = "templates.txt"
//! tag_style = "angle"          # or "prefix_code"
//! truncate_keep = "head"       # or "tail"
//!
//! [codes]
//! hi = "hin_Deva"
//!
//! [budgets]
//! translation_input_max = 2048
//! translation_output_max = 2048
//! generation_output_max = 3000
//!
//! [endpoints.translate_fwd]
//! base_url = "http://127.0.0.1:8081"
//! timeout_secs = 60
//! max_retries = 3
//! batch_size = 8
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. An endpoint whose `base_url` is `"mock"` is served by an in-process
//! mock built from the `[mock]` section.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{Backoff, BackendEndpoint, Role};
use crate::corpus::LanguageCode;
use crate::mockserve::MockBehavior;
use crate::postprocess::ArtifactRules;
use crate::preprocess::{StageBudget, TagMap, TagStyle, TruncateKeep};

pub const MOCK_URL: &str = "mock";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_batch() -> usize {
    8
}
fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl EndpointSection {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            batch_size: default_batch(),
        }
    }

    fn resolve(&self, role: Role) -> Result<BackendEndpoint, ConfigError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ConfigError::Invalid(format!("endpoints.{role}.timeout_secs must be positive")));
        }
        Ok(BackendEndpoint {
            role,
            base_url: self.base_url.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_retries: self.max_retries,
            batch_size: self.batch_size,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointsSection {
    pub translate_fwd: Option<EndpointSection>,
    pub translate_rev: Option<EndpointSection>,
    pub generate: Option<EndpointSection>,
    pub embed: Option<EndpointSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrySection {
    pub base_ms: u64,
    pub factor: f64,
    pub cap_ms: u64,
    pub jitter: bool,
}

impl Default for RetrySection {
    fn default() -> Self {
        let b = Backoff::default();
        Self {
            base_ms: b.base.as_millis() as u64,
            factor: b.factor,
            cap_ms: b.cap.as_millis() as u64,
            jitter: b.jitter,
        }
    }
}

/// The config file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub endpoints: EndpointsSection,
    #[serde(default)]
    pub budgets: StageBudget,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub template_path: Option<PathBuf>,
    #[serde(default)]
    pub tag_style: TagStyle,
    #[serde(default)]
    pub codes: BTreeMap<LanguageCode, String>,
    #[serde(default)]
    pub truncate_keep: TruncateKeep,
    #[serde(default)]
    pub artifacts: ArtifactRules,
    #[serde(default)]
    pub retry: RetrySection,
    pub mock: Option<MockBehavior>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            endpoints: EndpointsSection::default(),
            budgets: StageBudget::default(),
            parallelism: default_parallelism(),
            checkpoint_path: None,
            template_path: None,
            tag_style: TagStyle::default(),
            codes: BTreeMap::new(),
            truncate_keep: TruncateKeep::default(),
            artifacts: ArtifactRules::default(),
            retry: RetrySection::default(),
            mock: None,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut file = Self::parse(&text, json).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut file.checkpoint_path, &mut file.template_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// Validated configuration for [`crate::pipeline::Pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub translate_fwd: BackendEndpoint,
    pub translate_rev: BackendEndpoint,
    pub generate: BackendEndpoint,
    pub embed: Option<BackendEndpoint>,
    pub budgets: StageBudget,
    pub tags: TagMap,
    pub template_path: Option<PathBuf>,
    pub parallelism: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub truncate_keep: TruncateKeep,
    pub artifacts: ArtifactRules,
    pub backoff: Backoff,
    pub mock: Option<MockBehavior>,
}

impl PipelineConfig {
    /// All three pipeline roles pointed at one base URL, defaults elsewhere.
    pub fn with_base_url(base_url: &str) -> Self {
        Self {
            translate_fwd: BackendEndpoint::new(Role::TranslateFwd, base_url),
            translate_rev: BackendEndpoint::new(Role::TranslateRev, base_url),
            generate: BackendEndpoint::new(Role::Generate, base_url),
            embed: Some(BackendEndpoint::new(Role::Embed, base_url)),
            budgets: StageBudget::default(),
            tags: TagMap::default(),
            template_path: None,
            parallelism: 1,
            checkpoint_path: None,
            truncate_keep: TruncateKeep::default(),
            artifacts: ArtifactRules::default(),
            backoff: Backoff::default(),
            mock: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_config_file(ConfigFile::load(path)?)
    }

    pub fn from_config_file(file: ConfigFile) -> Result<Self, ConfigError> {
        let required = |section: &Option<EndpointSection>, role: Role| {
            section
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid(format!("endpoints.{role}.base_url is required")))?
                .resolve(role)
        };
        let config = Self {
            translate_fwd: required(&file.endpoints.translate_fwd, Role::TranslateFwd)?,
            translate_rev: required(&file.endpoints.translate_rev, Role::TranslateRev)?,
            generate: required(&file.endpoints.generate, Role::Generate)?,
            embed: file.endpoints.embed.as_ref().map(|e| e.resolve(Role::Embed)).transpose()?,
            budgets: file.budgets,
            tags: TagMap {
                style: file.tag_style,
                codes: file.codes,
            },
            template_path: file.template_path,
            parallelism: file.parallelism,
            checkpoint_path: file.checkpoint_path,
            truncate_keep: file.truncate_keep,
            artifacts: file.artifacts,
            backoff: Backoff {
                base: Duration::from_millis(file.retry.base_ms),
                factor: file.retry.factor,
                cap: Duration::from_millis(file.retry.cap_ms),
                jitter: file.retry.jitter,
            },
            mock: file.mock,
        };
        config.validate()?;
        Ok(config)
    }

    fn endpoints(&self) -> impl Iterator<Item = &BackendEndpoint> {
        [&self.translate_fwd, &self.translate_rev, &self.generate]
            .into_iter()
            .chain(self.embed.as_ref())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        self.budgets.validate().map_err(ConfigError::Invalid)?;
        if !(self.backoff.factor.is_finite() && self.backoff.factor >= 1.0) {
            return Err(ConfigError::Invalid("retry.factor must be at least 1".into()));
        }
        for endpoint in self.endpoints().filter(|e| e.base_url != MOCK_URL) {
            endpoint.validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn uses_mock(&self) -> bool {
        self.endpoints().any(|e| e.base_url == MOCK_URL)
    }

    /// Points every `"mock"` endpoint at `base_url`.
    pub fn bind_mock(&mut self, base_url: &str) {
        for endpoint in [&mut self.translate_fwd, &mut self.translate_rev, &mut self.generate]
            .into_iter()
            .chain(self.embed.as_mut())
        {
            if endpoint.base_url == MOCK_URL {
                endpoint.base_url = base_url.to_string();
            }
        }
    }

    /// Checkpoint file for a run writing to `out`.
    pub fn checkpoint_for(&self, out: &Path) -> PathBuf {
        self.checkpoint_path.clone().unwrap_or_else(|| {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".checkpoint.jsonl");
            out.with_file_name(name)
        })
    }
}
