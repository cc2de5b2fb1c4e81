use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short-time analysis framing, in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for FrameParams {
    /// 20 ms Hamming windows every 10 ms at 44.1 kHz, zero-padded to 1024.
    fn default() -> Self {
        Self {
            window_len: 882,
            hop: 441,
            fft_size: 1024,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::Parameter("window and hop must be positive".into()));
        }
        if self.hop > self.window_len {
            return Err(Error::Parameter(format!(
                "hop {} exceeds window {}",
                self.hop, self.window_len
            )));
        }
        if self.fft_size < self.window_len || !self.fft_size.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "FFT size {} must be a power of two no smaller than the window {}",
                self.fft_size, self.window_len
            )));
        }
        Ok(())
    }

    /// `1 + floor((samples - window) / hop)`, or zero when the signal is
    /// shorter than one window.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.window_len {
            0
        } else {
            1 + (samples - self.window_len) / self.hop
        }
    }

    /// Fewest samples that produce `frames` frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            self.window_len + (frames - 1) * self.hop
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// `w[i] = 0.54 - 0.46 cos(2 pi i / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Overlapping Hamming-windowed frames, each zero-padded to the FFT size.
pub fn frame_and_window(samples: &[f64], fp: &FrameParams) -> Result<Vec<Vec<f64>>> {
    fp.validate()?;
    let count = fp.frame_count(samples.len());
    if count == 0 {
        return Err(Error::DegenerateInput(format!(
            "{} samples is shorter than one {}-sample window",
            samples.len(),
            fp.window_len
        )));
    }
    let window = hamming(fp.window_len);
    Ok((0..count)
        .map(|t| {
            let start = t * fp.hop;
            let mut frame = vec![0.0; fp.fft_size];
            for (i, (f, &w)) in frame.iter_mut().zip(&window).enumerate() {
                *f = samples[start + i] * w;
            }
            frame
        })
        .collect())
}
