//! Checksummed binary side files referenced from JSON manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub file: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_blob(dir: &Path, file: &str, bytes: &[u8]) -> Result<BlobRef> {
    let path = dir.join(file);
    fs::write(&path, bytes).map_err(Error::io(&path))?;
    Ok(BlobRef {
        file: file.to_string(),
        sha256: sha256_hex(bytes),
    })
}

/// Reads a blob and verifies its checksum.
pub fn read_blob(dir: &Path, blob: &BlobRef) -> Result<Vec<u8>> {
    if blob.file.is_empty() || Path::new(&blob.file).components().count() != 1 {
        return Err(Error::Manifest(format!("blob name `{}` must be a plain file name", blob.file)));
    }
    let path = dir.join(&blob.file);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingBlob(path)),
        Err(e) => return Err(Error::Io { path, source: e }),
    };
    let found = sha256_hex(&bytes);
    if !found.eq_ignore_ascii_case(&blob.sha256) {
        return Err(Error::ChecksumMismatch {
            file: blob.file.clone(),
            expected: blob.sha256.clone(),
            found,
        });
    }
    Ok(bytes)
}

pub fn f32_to_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_le(bytes: &[u8]) -> Option<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn i64_to_le(values: &[i64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn i64_from_le(bytes: &[u8]) -> Option<Vec<i64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}
