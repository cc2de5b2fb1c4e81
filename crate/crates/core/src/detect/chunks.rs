use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_seconds: f64,
    pub hop_seconds: f64,
    /// Events below this softmax probability are dropped.
    pub min_confidence: f64,
    /// Chunks quieter than this many dB below full scale are flagged.
    pub low_energy_db: f64,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            chunk_seconds: 3.0,
            hop_seconds: 1.0,
            min_confidence: 0.0,
            low_energy_db: crate::audio::DEFAULT_TOP_DB,
        }
    }
}

/// Chunk geometry in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk: usize,
    pub hop: usize,
    /// Shortest chunk the model accepts.
    pub min: usize,
}

impl ChunkPlan {
    pub fn new(cp: &ChunkParams, sample_rate: u32, min_samples: usize) -> Result<Self> {
        let sr = sample_rate as f64;
        let chunk = (cp.chunk_seconds * sr).round() as usize;
        let hop = (cp.hop_seconds * sr).round() as usize;
        if !(cp.hop_seconds > 0.0) || hop == 0 {
            return Err(Error::Parameter(format!("hop {} s must be positive", cp.hop_seconds)));
        }
        if hop > chunk {
            return Err(Error::Parameter(format!(
                "hop {} s exceeds chunk {} s",
                cp.hop_seconds, cp.chunk_seconds
            )));
        }
        if chunk < min_samples {
            return Err(Error::Parameter(format!(
                "chunk of {} s is shorter than the model minimum of {:.3} s",
                cp.chunk_seconds,
                min_samples as f64 / sr
            )));
        }
        if !(0.0..=f64::INFINITY).contains(&cp.min_confidence) {
            return Err(Error::Parameter(format!("min confidence {} is negative", cp.min_confidence)));
        }
        Ok(Self {
            chunk,
            hop,
            min: min_samples,
        })
    }

    /// Chunk boundaries for a signal of `n` samples.
    ///
    /// Full chunks start every `hop` samples. Audio left after the last
    /// full chunk becomes one partial chunk starting a hop later when it
    /// is long enough for the model; otherwise the last full chunk is
    /// stretched to the end. A signal shorter than one chunk is a single
    /// chunk.
    pub fn chunks(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        if n < self.min {
            return Err(Error::DegenerateInput(format!(
                "{n} samples is shorter than the {} the model needs",
                self.min
            )));
        }
        if n <= self.chunk {
            return Ok(vec![(0, n)]);
        }
        let full = 1 + (n - self.chunk) / self.hop;
        let mut out: Vec<(usize, usize)> = (0..full).map(|k| (k * self.hop, k * self.hop + self.chunk)).collect();
        let last_end = out[full - 1].1;
        if last_end < n {
            let tail = (full - 1) * self.hop + self.hop;
            if n - tail >= self.min {
                out.push((tail, n));
            } else {
                out[full - 1].1 = n;
            }
        }
        Ok(out)
    }

    /// Stream length after which the chunk starting at `start` can no
    /// longer change (by being stretched to the end of the signal).
    pub fn settled_at(&self, start: usize) -> usize {
        start + self.chunk.max(self.hop + self.min)
    }
}

/// Boundaries as (start, end) samples for a signal of `n` samples.
pub fn plan_chunks(n: usize, cp: &ChunkParams, sample_rate: u32, min_samples: usize) -> Result<Vec<(usize, usize)>> {
    ChunkPlan::new(cp, sample_rate, min_samples)?.chunks(n)
}

/// Chunks of a clip as (start s, end s, features), with features computed
/// from each chunk's own audio.
pub fn chunk_stream(
    clip: &AudioClip,
    cp: &ChunkParams,
    extractor: &FeatureExtractor,
    min_frames: usize,
) -> Result<Vec<(f64, f64, FeatureMatrix)>> {
    let min = extractor.config().frame.samples_for_frames(min_frames);
    let sr = clip.sample_rate as f64;
    plan_chunks(clip.len(), cp, clip.sample_rate, min)?
        .into_iter()
        .map(|(s, e)| {
            let part = clip.with_samples(clip.samples[s..e].to_vec());
            Ok((s as f64 / sr, e as f64 / sr, extractor.extract(&part)?))
        })
        .collect()
}
