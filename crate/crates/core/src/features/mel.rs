//! Mel scale and triangular mel filterbank.

use serde::{Deserialize, Serialize};

use super::FrameParams;
use crate::error::{Error, Result};

/// `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Parameter(format!("frequency {f} Hz is negative")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> Result<f64> {
    if !(mel >= 0.0) {
        return Err(Error::Parameter(format!("mel value {mel} is negative")));
    }
    Ok(700.0 * (10f64.powf(mel / 2595.0) - 1.0))
}

/// Triangular filters equally spaced in mel, each of unit area in Hz.
///
/// Filter `m` rises from edge `m` to edge `m + 1` and falls to edge
/// `m + 2`, with height `2 / (edge[m+2] - edge[m])`. The stored weights
/// sample that response on the FFT bin frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
    /// `n_mels + 2` edge frequencies in Hz.
    edges: Vec<f64>,
    /// `n_mels x (fft_size / 2 + 1)`, row-major.
    weights: Vec<f64>,
    /// Per filter, the half-open bin range holding its nonzero weights.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fp: &FrameParams, sample_rate: u32, fmin: f64, fmax: f64) -> Result<Self> {
        fp.validate()?;
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels < 2 {
            return Err(Error::Parameter(format!("need at least 2 mel filters, got {n_mels}")));
        }
        if fmax > nyquist {
            return Err(Error::Parameter(format!(
                "fmax {fmax} Hz exceeds the Nyquist frequency {nyquist} Hz"
            )));
        }
        if !(fmin >= 0.0 && fmin < fmax) {
            return Err(Error::Parameter(format!("invalid band [{fmin}, {fmax}] Hz")));
        }
        let (lo, hi) = (hz_to_mel(fmin)?, hz_to_mel(fmax)?);
        let step = (hi - lo) / (n_mels + 1) as f64;
        let edges = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + step * i as f64))
            .collect::<Result<Vec<_>>>()?;

        let bins = fp.bins();
        let bin_hz = sample_rate as f64 / fp.fft_size as f64;
        let mut fb = Self {
            n_mels,
            fmin,
            fmax,
            sample_rate,
            fft_size: fp.fft_size,
            edges,
            weights: vec![0.0; n_mels * bins],
            support: Vec::with_capacity(n_mels),
        };
        for m in 0..n_mels {
            let (mut first, mut last) = (bins, 0);
            for k in 0..bins {
                let w = fb.response(m, k as f64 * bin_hz);
                if w > 0.0 {
                    fb.weights[m * bins + k] = w;
                    first = first.min(k);
                    last = k + 1;
                }
            }
            fb.support.push(if first < last { (first, last) } else { (0, 0) });
        }
        Ok(fb)
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges
    }

    /// Peak frequency of filter `m`.
    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let bins = self.bins();
        &self.weights[m * bins..(m + 1) * bins]
    }

    /// Bin range outside which row `m` is zero.
    pub fn support(&self, m: usize) -> (usize, usize) {
        self.support[m]
    }

    /// Continuous response of filter `m` at `f` Hz.
    pub fn response(&self, m: usize, f: f64) -> f64 {
        let (a, b, c) = (self.edges[m], self.edges[m + 1], self.edges[m + 2]);
        let height = 2.0 / (c - a);
        if f <= a || f >= c {
            0.0
        } else if f <= b {
            height * (f - a) / (b - a)
        } else {
            height * (c - f) / (c - b)
        }
    }

    /// `E[m] = sum_k power[k] * weights[m][k]^2`.
    pub fn energies(&self, power: &[f64]) -> Result<Vec<f64>> {
        if power.len() != self.bins() {
            return Err(Error::Shape(format!(
                "power spectrum has {} bins, filterbank expects {}",
                power.len(),
                self.bins()
            )));
        }
        Ok((0..self.n_mels)
            .map(|m| {
                let (s, e) = self.support[m];
                let row = self.row(m);
                (s..e).map(|k| power[k] * row[k] * row[k]).sum()
            })
            .collect())
    }
}
