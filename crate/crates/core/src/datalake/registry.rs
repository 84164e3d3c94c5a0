//! Subset registry client: `GET {registry}/manifest.json` lists the
//! downloadable subsets; downloads land atomically in a destination directory.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("partial download of {subset_id}: expected {expected} bytes, got {got}")]
    PartialDownload { subset_id: String, expected: u64, got: u64 },
    #[error("checksum mismatch for {subset_id}")]
    ChecksumMismatch { subset_id: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetDescriptor {
    pub subset_id: String,
    pub label: String,
    pub byte_size: u64,
    pub download_url: String,
    /// Hex SHA-256 of the payload, when the registry publishes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl SubsetDescriptor {
    /// Local file name: the last URL path segment, else the subset id.
    pub fn file_name(&self) -> String {
        let path = self.download_url.split(['?', '#']).next().unwrap_or("");
        match path.rsplit('/').next() {
            Some(seg) if !seg.is_empty() && !path.ends_with("//") && path.contains('/') && seg != ".." => {
                seg.to_owned()
            }
            _ => self.subset_id.clone(),
        }
    }
}

pub async fn list_subsets(client: &reqwest::Client, registry_url: &str) -> Result<Vec<SubsetDescriptor>, RegistryError> {
    let url = format!("{}/manifest.json", registry_url.trim_end_matches('/'));
    let resp = client.get(&url).send().await.map_err(|e| RegistryError::Unreachable(format!("{url}: {e}")))?;
    if !resp.status().is_success() {
        return Err(RegistryError::Unreachable(format!("{url}: HTTP {}", resp.status())));
    }
    let text = resp.text().await.map_err(|e| RegistryError::Unreachable(e.to_string()))?;
    let list: Vec<SubsetDescriptor> =
        serde_json::from_str(&text).map_err(|e| RegistryError::MalformedManifest(e.to_string()))?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = list.iter().find(|d| !seen.insert(d.subset_id.as_str())) {
        return Err(RegistryError::MalformedManifest(format!("duplicate subset_id {}", dup.subset_id)));
    }
    Ok(list)
}

static DEST_LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<tokio::sync::Mutex<()>>>>> =
    LazyLock::new(Default::default);

fn dest_lock(path: &Path) -> Arc<tokio::sync::Mutex<()>> {
    DEST_LOCKS.lock().unwrap().entry(path.to_owned()).or_default().clone()
}

/// Streams the subset into `dest_dir`, verifying length (and checksum when
/// published) before the rename. Returns bytes written.
pub async fn download_subset(
    client: &reqwest::Client,
    desc: &SubsetDescriptor,
    dest_dir: &Path,
) -> Result<u64, RegistryError> {
    std::fs::create_dir_all(dest_dir)?;
    let target = dest_dir.join(desc.file_name());
    let lock = dest_lock(&target);
    let _guard = lock.lock().await;

    let mut resp = client
        .get(&desc.download_url)
        .send()
        .await
        .map_err(|e| RegistryError::Unreachable(format!("{}: {e}", desc.download_url)))?;
    if !resp.status().is_success() {
        return Err(RegistryError::Unreachable(format!("{}: HTTP {}", desc.download_url, resp.status())));
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dest_dir)?;
    let mut hasher = Sha256::new();
    let mut got = 0u64;
    loop {
        match resp.chunk().await {
            Ok(Some(chunk)) => {
                got += chunk.len() as u64;
                hasher.update(&chunk);
                tmp.write_all(&chunk)?;
            }
            Ok(None) => break,
            // A connection cut mid-body is a short read, not an outage.
            Err(_) => break,
        }
    }
    if got != desc.byte_size {
        return Err(RegistryError::PartialDownload { subset_id: desc.subset_id.clone(), expected: desc.byte_size, got });
    }
    if let Some(want) = &desc.sha256 {
        if !hex::encode(hasher.finalize()).eq_ignore_ascii_case(want) {
            return Err(RegistryError::ChecksumMismatch { subset_id: desc.subset_id.clone() });
        }
    }
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(got)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubsetStatus {
    Present,
    Missing,
    SizeMismatch { expected: u64, actual: u64 },
}

pub fn verify_subset(desc: &SubsetDescriptor, dest_dir: &Path) -> SubsetStatus {
    match std::fs::metadata(dest_dir.join(desc.file_name())) {
        Err(_) => SubsetStatus::Missing,
        Ok(m) if m.len() == desc.byte_size => SubsetStatus::Present,
        Ok(m) => SubsetStatus::SizeMismatch { expected: desc.byte_size, actual: m.len() },
    }
}
