//! On-disk cache of descriptor matrices.
//!
//! File layout: `BSFM`, version byte `1`, a little-endian `u32` length
//! followed by that many bytes of JSON header (kind, bands, frames, frame
//! params, sample rate), then `bands * frames` little-endian `f32` values
//! in row-major order. Files are named by the SHA-256 of the source audio
//! bytes and the extraction parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureConfig, FeatureKind, FeatureMatrix, FrameParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BSFM";
const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: FeatureKind,
    bands: usize,
    frames: usize,
    frame_params: FrameParams,
    sample_rate: u32,
}

#[derive(Clone, Debug)]
pub struct FeatureCache {
    dir: PathBuf,
    salt: String,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            salt: String::new(),
        })
    }

    /// Mixes `salt` into every key, for preprocessing settings that change
    /// the matrix but are not part of [`FeatureConfig`].
    pub fn with_salt(mut self, salt: impl Into<String>) -> Self {
        self.salt = salt.into();
        self
    }

    pub fn key(&self, source_bytes: &[u8], config: &FeatureConfig) -> String {
        let mut h = Sha256::new();
        h.update(source_bytes);
        h.update(serde_json::to_vec(config).expect("config serializes"));
        h.update(self.salt.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.feat"))
    }

    /// Cached matrix for `source` under `config`, computing and storing it
    /// on a miss. Returns whether the entry was a hit.
    pub fn get_or_compute(
        &self,
        source: &Path,
        config: &FeatureConfig,
        compute: impl FnOnce() -> Result<FeatureMatrix>,
    ) -> Result<(FeatureMatrix, bool)> {
        let bytes = fs::read(source).map_err(|e| Error::io(source, e))?;
        let path = self.path_for(&self.key(&bytes, config));
        if path.exists() {
            return Ok((read_matrix(&path)?, true));
        }
        let fm = compute()?;
        write_matrix(&path, &fm)?;
        Ok((fm, false))
    }
}

pub fn write_matrix(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        kind: fm.kind,
        bands: fm.bands,
        frames: fm.frames,
        frame_params: fm.frame_params,
        sample_rate: fm.sample_rate,
    })
    .expect("header serializes");
    let mut buf = Vec::with_capacity(9 + header.len() + 4 * fm.values.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for &v in &fm.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    // write-then-rename so a crash never leaves a torn entry
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 9 || &buf[..4] != MAGIC {
        return Err(Error::Format(format!("{} is not a feature cache file", path.display())));
    }
    if buf[4] != VERSION {
        return Err(Error::Format(format!("unsupported feature cache version {}", buf[4])));
    }
    let hlen = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
    let body = buf
        .get(9..9 + hlen)
        .ok_or_else(|| Error::Corruption(format!("{}: truncated header", path.display())))?;
    let h: Header = serde_json::from_slice(body)
        .map_err(|e| Error::Corruption(format!("{}: bad header: {e}", path.display())))?;
    let data = &buf[9 + hlen..];
    if data.len() != 4 * h.bands * h.frames {
        return Err(Error::Corruption(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            h.bands * h.frames,
            data.len()
        )));
    }
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureMatrix::new(h.kind, h.bands, h.frames, h.frame_params, h.sample_rate, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix() -> FeatureMatrix {
        let values = (0..12).map(|i| i as f64 * 0.5 - 3.0).collect();
        FeatureMatrix::new(FeatureKind::Mfcc, 3, 4, FrameParams::default(), 44100, values).unwrap()
    }

    #[test]
    fn hit_after_miss() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.wav");
        fs::write(&src, b"not really audio").unwrap();
        let cache = FeatureCache::new(dir.path().join("cache")).unwrap();
        let cfg = FeatureConfig::default();
        let (first, hit) = cache.get_or_compute(&src, &cfg, || Ok(sample_matrix())).unwrap();
        assert!(!hit);
        let (second, hit) = cache
            .get_or_compute(&src, &cfg, || panic!("should not recompute"))
            .unwrap();
        assert!(hit);
        assert_eq!(first, second);

        // a different parameter set is a different key
        let other = cfg.clone().with_kind(FeatureKind::Mfcc);
        let (_, hit) = cache.get_or_compute(&src, &other, || Ok(sample_matrix())).unwrap();
        assert!(!hit);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.feat");
        write_matrix(&p, &sample_matrix()).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Corruption(_))));
        fs::write(&p, b"XXXX").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format(_))));
    }
}
