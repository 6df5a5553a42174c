//! Run configuration: a versioned TOML file plus `PBTGEN_*` environment
//! overrides.
//!
//! An override `PBTGEN_MAX_ITERATIONS=3` sets the top-level key
//! `max_iterations`; a double underscore descends into a table, so
//! `PBTGEN_HTTP__MODEL=gpt-4o` sets `http.model`. Values are read as TOML
//! scalars when they parse as one and as strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::generator::GeneratorConfig;
use crate::llm::{
    ChatBackend, HttpBackend, HttpConfig, LlmSettings, MockBackend, MockScript, ReplayBackend,
    DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::problem::DEFAULT_TIME_LIMIT_MS;
use crate::sandbox::{ResourceLimits, SandboxConfig};
use crate::tester::{SelectionStrategy, TesterConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "PBTGEN_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("config version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot build backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "replay" => Ok(BackendKind::Replay),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}` (expected http, replay or mock)")),
        }
    }
}

/// Which metric basis decides that an initial candidate was incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RsrBasis {
    Hidden,
    Public,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Refinement rounds after the initial candidate.
    pub max_iterations: u32,
    pub max_properties: usize,
    pub pbt_input_count: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub time_limit_ms: u64,
    pub memory_limit_mb: u64,
    pub selection_strategy: SelectionStrategy,
    pub seed: u64,
    /// Problems solved concurrently.
    pub parallelism: usize,
    /// Stop when a refinement returns the program unchanged.
    pub detect_no_progress: bool,
    /// Ask for a new PBT input batch after every refinement.
    pub resynthesize_inputs: bool,
    /// Let the model instrument programs before using the built-in weaver.
    pub llm_instrumentation: bool,
    /// Most recent wrong outputs kept for check sensitivity.
    pub known_error_cap: usize,
    pub rsr_basis: RsrBasis,
    pub backend: BackendKind,
    pub http: HttpConfig,
    pub mock_script: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub interpreter: Vec<String>,
    pub shim_path: Option<PathBuf>,
    pub isolate_network: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sandbox = SandboxConfig::default();
        Self {
            version: CONFIG_VERSION,
            max_iterations: 5,
            max_properties: 5,
            pbt_input_count: 20,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            time_limit_ms: DEFAULT_TIME_LIMIT_MS,
            memory_limit_mb: 2048,
            selection_strategy: SelectionStrategy::default(),
            seed: 0,
            parallelism: 4,
            detect_no_progress: true,
            resynthesize_inputs: false,
            llm_instrumentation: true,
            known_error_cap: 10,
            rsr_basis: RsrBasis::Hidden,
            backend: BackendKind::Mock,
            http: HttpConfig::default(),
            mock_script: None,
            transcript: None,
            interpreter: sandbox.interpreter,
            shim_path: None,
            isolate_network: sandbox.isolate_network,
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        if let Some(v) = table.get("version") {
            let found = v.as_integer().unwrap_or(-1);
            if found != CONFIG_VERSION as i64 {
                return Err(ConfigError::Version {
                    found: found.max(0) as u32,
                    expected: CONFIG_VERSION,
                });
            }
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// File (if any) then overrides from `vars`, typically `std::env::vars()`.
    pub fn load(
        path: Option<&Path>,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .filter(|(k, _)| !k.is_empty() && k != "log")
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            let mut path: Vec<&str> = key.split("__").collect();
            let leaf = path.pop().expect("split yields one item");
            let mut t = &mut table;
            for part in path {
                t = t
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| ConfigError::Invalid(format!("{ENV_PREFIX}{key}: `{part}` is not a table")))?;
            }
            let value = match leaf {
                // Always strings, even when they look like numbers.
                "model" | "base_url" | "api_key_env" | "selection_strategy" | "backend" => {
                    toml::Value::String(raw)
                }
                _ => env_value(&raw),
            };
            t.insert(leaf.to_string(), value);
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_properties", self.max_properties as u64),
            ("pbt_input_count", self.pbt_input_count as u64),
            ("max_tokens", self.max_tokens as u64),
            ("time_limit_ms", self.time_limit_ms),
            ("parallelism", self.parallelism as u64),
            ("known_error_cap", self.known_error_cap as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{name} must be positive")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Invalid("temperature must be within [0, 2]".into()));
        }
        if self.interpreter.is_empty() {
            return Err(ConfigError::Invalid("interpreter must not be empty".into()));
        }
        Ok(())
    }

    /// Stable hash of every setting, for reports.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn llm(&self) -> LlmSettings {
        LlmSettings {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    pub fn limits(&self) -> ResourceLimits {
        ResourceLimits {
            wall_time_ms: self.time_limit_ms,
            memory_bytes: self.memory_limit_mb << 20,
            ..ResourceLimits::default()
        }
    }

    pub fn tester_config(&self) -> TesterConfig {
        TesterConfig {
            max_properties: self.max_properties,
            pbt_input_count: self.pbt_input_count,
            seed: self.seed,
            llm: self.llm(),
            limits: self.limits(),
            ..TesterConfig::default()
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            llm: self.llm(),
            limits: self.limits(),
            llm_instrumentation: self.llm_instrumentation,
        }
    }

    pub fn sandbox_config(&self, max_parallel: Option<usize>) -> SandboxConfig {
        let default = SandboxConfig::default();
        SandboxConfig {
            interpreter: self.interpreter.clone(),
            shim_path: self.shim_path.clone(),
            isolate_network: self.isolate_network,
            max_parallel: max_parallel.unwrap_or(default.max_parallel),
            ..default
        }
    }

    /// Backend selected by `backend`, reading the mock script or transcript
    /// named in the config.
    pub fn build_backend(&self) -> Result<Box<dyn ChatBackend>, ConfigError> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| ConfigError::Backend(format!("{what} path required for this backend")))
        };
        Ok(match self.backend {
            BackendKind::Http => Box::new(HttpBackend::new(self.http.clone())),
            BackendKind::Mock => {
                let path = need(&self.mock_script, "mock_script")?;
                let script = MockScript::load(&path)
                    .map_err(|e| ConfigError::Backend(format!("{}: {e}", path.display())))?;
                Box::new(MockBackend::from_script(script))
            }
            BackendKind::Replay => {
                let path = need(&self.transcript, "transcript")?;
                Box::new(
                    ReplayBackend::load(&path)
                        .map_err(|e| ConfigError::Backend(format!("{}: {e}", path.display())))?,
                )
            }
        })
    }
}
