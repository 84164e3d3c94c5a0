//! Service configuration: a TOML file plus `ODA_SECTION__KEY` environment
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datalake::{DatalakeConfig, DatalakeKind};
use crate::query_pipeline::QrConfig;
use crate::sparql::LlmConfig;
use crate::store::StoreConfig;
use crate::vkg::{AssemblyMode, EmitOptions};

pub const CONFIG_ENV: &str = "ODA_CONFIG";
const ENV_PREFIX: &str = "ODA_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment override {key}: {message}")]
    Env { key: String, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VkgConfig {
    pub assembly: AssemblyMode,
    pub emit_reading_type: bool,
    /// Spill triples to N-Triples chunk files of this size before upload.
    pub chunk_batch: Option<usize>,
}

impl VkgConfig {
    pub fn emit_options(&self) -> EmitOptions {
        EmitOptions { emit_reading_type: self.emit_reading_type }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Overrides `{root}/topology.csv` of the selected dataset.
    pub topology_path: Option<PathBuf>,
    /// Overrides `{root}/metadata.json` of the selected dataset.
    pub metadata_path: Option<PathBuf>,
    /// Directory holding downloaded or generated subsets.
    pub data_root: Option<PathBuf>,
    pub registry_url: Option<String>,
    /// Selected at startup when set.
    pub datalake: Option<DatalakeConfig>,
    pub store: StoreConfig,
    pub llm: LlmConfig,
    pub qr: QrConfig,
    pub vkg: VkgConfig,
    pub server: ServerConfig,
}

fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_owned())),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let path: Vec<String> = key.split("__").map(str::to_lowercase).collect();
    let (last, parents) = path.split_last().expect("split yields one item");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.clone()).or_insert_with(|| toml::Value::Table(Default::default()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::Env {
            key: key.to_owned(),
            message: format!("{p} is not a table"),
        })?;
    }
    table.insert(last.clone(), env_value(raw));
    Ok(())
}

impl AppConfig {
    /// Parses `text` and applies overrides from `vars`.
    pub fn from_parts(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text)?;
        for (k, v) in vars {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            if k == CONFIG_ENV || key.is_empty() {
                continue;
            }
            apply_override(&mut table, key, &v)?;
        }
        Ok(table.try_into()?)
    }

    /// `path`, else `$ODA_CONFIG`, else defaults; then the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let text = match &path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.clone(), source })?,
            None => String::new(),
        };
        Self::from_parts(&text, std::env::vars())
    }

    pub fn topology_for(&self, ds: &DatalakeConfig) -> Option<PathBuf> {
        self.topology_path.clone().or_else(|| dataset_root(ds).map(|r| r.join("topology.csv")))
    }

    pub fn metadata_for(&self, ds: &DatalakeConfig) -> Option<PathBuf> {
        self.metadata_path.clone().or_else(|| dataset_root(ds).map(|r| r.join("metadata.json")))
    }
}

fn dataset_root(ds: &DatalakeConfig) -> Option<&Path> {
    match ds.kind {
        DatalakeKind::ColumnarFiles => ds.root.as_deref(),
        DatalakeKind::RemoteHttp => None,
    }
}
