//! Mel spectrogram and MFCC descriptors.
//!
//! Both start from Hamming-windowed, zero-padded frames and a power
//! spectrum. The mel spectrogram converts filterbank energies to decibels
//! relative to the clip maximum; the MFCC path adds pre-emphasis up front
//! and ends with a log and a DCT-II.

mod cache;
mod fft;
mod frames;
mod mel;

use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

pub use cache::FeatureCache;
pub use fft::{dft_naive, power_spectrum, rfft};
pub use frames::{frame_and_window, hamming, FrameParams};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};

/// Energy floor applied before any logarithm.
pub const ENERGY_FLOOR: f64 = 1e-10;
/// Lowest value a mel-dB cell can take.
pub const DB_FLOOR: f64 = -100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    MelDb,
    Mfcc,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::MelDb => "mel",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" | "mel-db" => Ok(FeatureKind::MelDb),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(Error::Parameter(format!("unknown descriptor '{other}' (mel|mfcc)"))),
        }
    }
}

/// `bands x frames` descriptor of one clip, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub bands: usize,
    pub frames: usize,
    pub frame_params: FrameParams,
    pub sample_rate: u32,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        kind: FeatureKind,
        bands: usize,
        frames: usize,
        frame_params: FrameParams,
        sample_rate: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != bands * frames {
            return Err(Error::Shape(format!(
                "{bands}x{frames} feature matrix given {} values",
                values.len()
            )));
        }
        Ok(Self {
            kind,
            bands,
            frames,
            frame_params,
            sample_rate,
            values,
        })
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.frames + frame]
    }

    pub fn column(&self, frame: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(b, frame)).collect()
    }

    /// Mean over frames, one value per band.
    pub fn time_average(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.frames)
            .map(|row| row.iter().sum::<f64>() / self.frames as f64)
            .collect()
    }

    /// Keeps the first `frames` frames.
    pub fn truncate_frames(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames);
        let values = self
            .values
            .chunks_exact(self.frames)
            .flat_map(|row| row[..frames].iter().copied())
            .collect();
        Self {
            frames,
            values,
            ..self.clone()
        }
    }

    /// Seconds between successive frames.
    pub fn frame_seconds(&self) -> f64 {
        self.frame_params.hop as f64 / self.sample_rate as f64
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - b x[n-1]`, with `b` in `[0.4, 1]`.
pub fn preemphasis(samples: &[f64], b: f64) -> Result<Vec<f64>> {
    if !(0.4..=1.0).contains(&b) {
        return Err(Error::Parameter(format!(
            "pre-emphasis coefficient {b} outside [0.4, 1]"
        )));
    }
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
    }
    out.extend(samples.windows(2).map(|w| w[1] - b * w[0]));
    Ok(out)
}

/// `C[m] = sum_{k=0}^{M-1} L[k] cos(m (k + 1/2) pi / M)` for
/// `m = 1..=n_mfcc`, where `L` are log energies.
pub fn dct_cepstrum(log_energies: &[f64], n_mfcc: usize) -> Result<Vec<f64>> {
    let m_total = log_energies.len();
    if n_mfcc == 0 || n_mfcc > m_total {
        return Err(Error::Parameter(format!(
            "cannot take {n_mfcc} cepstral coefficients from {m_total} filters"
        )));
    }
    let scale = std::f64::consts::PI / m_total as f64;
    Ok((1..=n_mfcc)
        .map(|m| {
            log_energies
                .iter()
                .enumerate()
                .map(|(k, &l)| l * (m as f64 * (k as f64 + 0.5) * scale).cos())
                .sum()
        })
        .collect())
}

fn power_frames(samples: &[f64], fp: &FrameParams) -> Result<Vec<Vec<f64>>> {
    frame_and_window(samples, fp)?
        .iter()
        .map(|f| power_spectrum(f))
        .collect()
}

/// Mel-filterbank energies in decibels, shifted so the loudest cell is
/// 0 dB and clamped at -100 dB. A clip with no energy above the floor
/// anywhere stays at -100 dB everywhere.
pub fn mel_spectrogram(clip: &AudioClip, fp: &FrameParams, fb: &MelFilterbank) -> Result<FeatureMatrix> {
    check_compatible(clip, fp, fb)?;
    let frames = power_frames(&clip.samples_f64(), fp)?;
    let n = frames.len();
    let mut db = vec![0.0; fb.n_mels * n];
    for (t, p) in frames.iter().enumerate() {
        for (m, e) in fb.energies(p)?.into_iter().enumerate() {
            db[m * n + t] = 10.0 * e.max(ENERGY_FLOOR).log10();
        }
    }
    let peak = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak > DB_FLOOR {
        db.iter_mut().for_each(|v| *v = (*v - peak).max(DB_FLOOR));
    } else {
        db.iter_mut().for_each(|v| *v = DB_FLOOR);
    }
    FeatureMatrix::new(FeatureKind::MelDb, fb.n_mels, n, *fp, clip.sample_rate, db)
}

/// Pre-emphasis, framing, power spectrum, filterbank energies, natural
/// log and DCT; `n_mfcc x frames`.
pub fn mfcc(
    clip: &AudioClip,
    fp: &FrameParams,
    fb: &MelFilterbank,
    b: f64,
    n_mfcc: usize,
) -> Result<FeatureMatrix> {
    check_compatible(clip, fp, fb)?;
    if n_mfcc == 0 || n_mfcc > fb.n_mels {
        return Err(Error::Parameter(format!(
            "cannot take {n_mfcc} cepstral coefficients from {} filters",
            fb.n_mels
        )));
    }
    let emphasized = preemphasis(&clip.samples_f64(), b)?;
    let frames = power_frames(&emphasized, fp)?;
    let n = frames.len();
    let mut values = vec![0.0; n_mfcc * n];
    for (t, p) in frames.iter().enumerate() {
        let logs: Vec<f64> = fb.energies(p)?.iter().map(|e| e.max(ENERGY_FLOOR).ln()).collect();
        for (m, c) in dct_cepstrum(&logs, n_mfcc)?.into_iter().enumerate() {
            values[m * n + t] = c;
        }
    }
    FeatureMatrix::new(FeatureKind::Mfcc, n_mfcc, n, *fp, clip.sample_rate, values)
}

fn check_compatible(clip: &AudioClip, fp: &FrameParams, fb: &MelFilterbank) -> Result<()> {
    if fb.fft_size != fp.fft_size {
        return Err(Error::Shape(format!(
            "filterbank built for FFT size {}, frames use {}",
            fb.fft_size, fp.fft_size
        )));
    }
    if fb.sample_rate != clip.sample_rate {
        return Err(Error::Shape(format!(
            "filterbank built for {} Hz, clip is {} Hz",
            fb.sample_rate, clip.sample_rate
        )));
    }
    Ok(())
}

/// Everything needed to turn a clip into a descriptor matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub frame: FrameParams,
    pub sample_rate: u32,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub preemphasis: f64,
    pub n_mfcc: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::MelDb,
            frame: FrameParams::default(),
            sample_rate: SAMPLE_RATE,
            n_mels: 128,
            fmin: 0.0,
            fmax: SAMPLE_RATE as f64 / 2.0,
            preemphasis: 0.97,
            n_mfcc: 20,
        }
    }
}

impl FeatureConfig {
    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn bands(&self) -> usize {
        match self.kind {
            FeatureKind::MelDb => self.n_mels,
            FeatureKind::Mfcc => self.n_mfcc,
        }
    }
}

/// A [`FeatureConfig`] with its filterbank built once.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    filterbank: MelFilterbank,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let filterbank = MelFilterbank::new(
            config.n_mels,
            &config.frame,
            config.sample_rate,
            config.fmin,
            config.fmax,
        )?;
        if config.kind == FeatureKind::Mfcc && (config.n_mfcc == 0 || config.n_mfcc > config.n_mels) {
            return Err(Error::Parameter(format!(
                "n_mfcc {} must be in 1..={}",
                config.n_mfcc, config.n_mels
            )));
        }
        Ok(Self { config, filterbank })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn bands(&self) -> usize {
        self.config.bands()
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        match self.config.kind {
            FeatureKind::MelDb => mel_spectrogram(clip, &self.config.frame, &self.filterbank),
            FeatureKind::Mfcc => mfcc(
                clip,
                &self.config.frame,
                &self.filterbank,
                self.config.preemphasis,
                self.config.n_mfcc,
            ),
        }
    }
}

/// Per-band affine normalization to zero mean and unit variance, fitted
/// on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for fm in matrices {
            if sum.is_empty() {
                sum = vec![0.0; fm.bands];
                sq = vec![0.0; fm.bands];
            } else if fm.bands != sum.len() {
                return Err(Error::Shape(format!(
                    "mixed band counts {} and {}",
                    sum.len(),
                    fm.bands
                )));
            }
            for (b, row) in fm.values.chunks_exact(fm.frames).enumerate() {
                sum[b] += row.iter().sum::<f64>();
                sq[b] += row.iter().map(|v| v * v).sum::<f64>();
            }
            count += fm.frames;
        }
        if count == 0 {
            return Err(Error::Parameter("cannot fit a standardizer on no frames".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-8))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        if fm.bands != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} bands, matrix has {}",
                self.mean.len(),
                fm.bands
            )));
        }
        let mut out = fm.clone();
        for (b, row) in out.values.chunks_exact_mut(fm.frames).enumerate() {
            row.iter_mut().for_each(|v| *v = (*v - self.mean[b]) / self.std[b]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
