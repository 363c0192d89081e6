//! Run configuration: a TOML file plus flag overrides, flags winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use apieval::{Hub, RemoteBackendConfig, RemoteEmbeddingConfig};

/// The on-disk configuration file. Every field is optional; missing files
/// mean defaults.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub databases: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub match_specs: BTreeMap<String, PathBuf>,
    pub retriever: Option<RetrieverSection>,
    pub backend: Option<BackendSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RetrieverSection {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub embedding: Option<RemoteEmbeddingConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub replay_path: Option<PathBuf>,
    pub remote: Option<RemoteBackendConfig>,
}

/// The resolved configuration a command actually runs with. Serialized
/// (without the output directory) to produce the config hash recorded in
/// every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub databases: BTreeMap<String, PathBuf>,
    pub match_specs: BTreeMap<String, PathBuf>,
    pub k1: f64,
    pub b: f64,
    pub embedding: Option<RemoteEmbeddingConfig>,
    pub backend_kind: Option<String>,
    pub replay_path: Option<PathBuf>,
    pub remote: Option<RemoteBackendConfig>,
}

impl RunConfig {
    pub fn resolve(
        file: FileConfig,
        seed_flag: Option<u64>,
        out_flag: Option<PathBuf>,
        jobs_flag: Option<usize>,
    ) -> Self {
        RunConfig {
            seed: seed_flag.or(file.seed).unwrap_or(0),
            output_dir: out_flag
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            jobs: jobs_flag.or(file.jobs).unwrap_or(4).max(1),
            databases: file.databases,
            match_specs: file.match_specs,
            k1: file.retriever.as_ref().and_then(|r| r.k1).unwrap_or(1.2),
            b: file.retriever.as_ref().and_then(|r| r.b).unwrap_or(0.75),
            embedding: file.retriever.and_then(|r| r.embedding),
            backend_kind: file.backend.as_ref().and_then(|b| b.kind.clone()),
            replay_path: file.backend.as_ref().and_then(|b| b.replay_path.clone()),
            remote: file.backend.and_then(|b| b.remote),
        }
    }

    /// SHA-256 over the canonical JSON form, recorded in artifact headers
    /// so reruns are attributable to an exact configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }

    /// Database path for a hub: config entry, unless a flag provided one.
    pub fn database_for(&self, hub: Hub, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.databases.get(hub.as_str()).cloned())
    }

    pub fn match_spec_for(&self, hub: Hub, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.match_specs.get(hub.as_str()).cloned())
    }
}

/// Loads the config file when present; a missing file at the default
/// location means defaults, while an explicitly requested missing file is
/// an error.
pub fn load_file_config(path: &Path, explicit: bool) -> Result<FileConfig, String> {
    match std::fs::read_to_string(path) {
        Ok(content) => {
            toml::from_str(&content).map_err(|e| format!("{}: {e}", path.display()))
        }
        Err(_) if !explicit => Ok(FileConfig::default()),
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}
