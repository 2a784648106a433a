//! Content-addressed sidecar storage for bulky payloads.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Point3;
use sha2::{Digest, Sha256};

use super::types::{EmbeddingKind, EmbeddingVector, PointCloud};
use crate::error::{Error, Result};

/// A `blobs/` directory; each blob is stored under the hex SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct BlobStore {
    dir: PathBuf,
}

impl BlobStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BlobStore { dir: dir.into() }
    }

    /// The store next to a manifest: `<manifest dir>/blobs`.
    pub fn beside(manifest: &Path) -> Self {
        let parent = manifest.parent().unwrap_or(Path::new("."));
        BlobStore::new(parent.join("blobs"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn put(&self, bytes: &[u8]) -> Result<String> {
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.dir.join(&hash);
        if path.exists() {
            return Ok(hash);
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = self.dir.join(format!(".{hash}.{}.tmp", std::process::id()));
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_data().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(hash);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != hash {
            return Err(Error::Malformed(format!("blob {hash} failed its checksum")));
        }
        Ok(bytes)
    }
}

/// Point cloud blob: little-endian `u64` count, then `count` f32 triples.
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + cloud.len() * 12);
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in &cloud.points {
        for c in p.coords.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    let header: [u8; 8] = bytes
        .get(..8)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| Error::Malformed("point cloud blob shorter than its header".into()))?;
    let count = u64::from_le_bytes(header) as usize;
    let body = &bytes[8..];
    if body.len() != count * 12 {
        return Err(Error::Malformed(format!(
            "point cloud blob declares {count} points but holds {} bytes",
            body.len()
        )));
    }
    let points = body
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
            Point3::new(f(0), f(1), f(2))
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Embedding blob: kind byte, little-endian `u32` dim, then f64 values.
pub fn encode_embedding(e: &EmbeddingVector) -> Vec<u8> {
    let kind = match e.kind() {
        EmbeddingKind::Global => 0u8,
        EmbeddingKind::PatchObject => 1,
        EmbeddingKind::Perceptual => 2,
    };
    let mut out = vec![kind];
    out.extend_from_slice(&(e.dim() as u32).to_le_bytes());
    for v in e.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<EmbeddingVector> {
    if bytes.len() < 5 {
        return Err(Error::Malformed("embedding blob too short".into()));
    }
    let kind = match bytes[0] {
        0 => EmbeddingKind::Global,
        1 => EmbeddingKind::PatchObject,
        2 => EmbeddingKind::Perceptual,
        k => return Err(Error::Malformed(format!("unknown embedding kind byte {k}"))),
    };
    let dim = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
    let body = &bytes[5..];
    if body.len() != dim * 8 {
        return Err(Error::DimensionMismatch {
            expected: dim * 8,
            actual: body.len(),
        });
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let raw = serde_json::json!({ "kind": kind, "dim": dim, "values": values });
    Ok(serde_json::from_value(raw)?)
}
