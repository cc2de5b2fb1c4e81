//! Clip-level preprocessing: silence removal, duration cap, padding.

use super::AudioClip;
use crate::error::{Error, Result};

/// Default threshold below the loudest frame, in dB.
pub const DEFAULT_TOP_DB: f64 = 60.0;
/// Power-envelope frame length in samples.
pub const ENVELOPE_FRAME: usize = 2048;
/// Power-envelope hop in samples.
pub const ENVELOPE_HOP: usize = 512;
/// Duration cap applied to every recording.
pub const MAX_SECONDS: f64 = 20.0;

/// Mean-square power of centred, zero-padded frames.
fn frame_powers(samples: &[f32]) -> Vec<f64> {
    let n = samples.len();
    let count = 1 + n / ENVELOPE_HOP;
    let half = ENVELOPE_FRAME / 2;
    (0..count)
        .map(|t| {
            let centre = t * ENVELOPE_HOP;
            let lo = centre.saturating_sub(half);
            let hi = (centre + half).min(n);
            let sum: f64 = samples[lo..hi].iter().map(|&s| (s as f64) * (s as f64)).sum();
            sum / ENVELOPE_FRAME as f64
        })
        .collect()
}

/// Sample intervals whose envelope frames are within `top_db` of `reference`.
fn loud_intervals(samples: &[f32], reference: f64, top_db: f64) -> Vec<(usize, usize)> {
    let threshold = reference * 10f64.powf(-top_db / 10.0);
    let powers = frame_powers(samples);
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (t, &p) in powers.iter().enumerate() {
        let loud = p > threshold;
        match (loud, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, powers.len()));
    }
    out.into_iter()
        .map(|(a, b)| ((a * ENVELOPE_HOP).min(samples.len()), (b * ENVELOPE_HOP).min(samples.len())))
        .filter(|(a, b)| b > a)
        .collect()
}

/// Removes every stretch whose frame power is more than `top_db` below
/// the loudest frame and joins what remains.
///
/// The pass repeats until nothing more is removed (joining can expose a
/// new fully silent frame), so the result is a fixed point: trimming it
/// again returns it unchanged.
pub fn trim_silence(clip: &AudioClip, top_db: f64) -> Result<AudioClip> {
    if !(top_db > 0.0) {
        return Err(Error::Parameter(format!("top_db {top_db} must be positive")));
    }
    if clip.is_empty() {
        return Err(Error::DegenerateInput(format!("{}: empty clip", clip.source_id)));
    }
    let reference = frame_powers(&clip.samples).into_iter().fold(0.0, f64::max);
    if reference == 0.0 {
        return Err(Error::EmptyResult(format!("{}: clip is entirely silent", clip.source_id)));
    }
    let mut samples = clip.samples.clone();
    loop {
        let intervals = loud_intervals(&samples, reference, top_db);
        let kept: usize = intervals.iter().map(|(a, b)| b - a).sum();
        if kept == 0 {
            return Err(Error::EmptyResult(format!("{}: nothing above threshold", clip.source_id)));
        }
        if kept == samples.len() {
            return Ok(clip.with_samples(samples));
        }
        samples = intervals
            .iter()
            .flat_map(|&(a, b)| samples[a..b].iter().copied())
            .collect();
    }
}

/// Keeps at most the first `max_seconds` of the clip.
pub fn cap_duration(clip: &AudioClip, max_seconds: f64) -> AudioClip {
    let limit = (max_seconds * clip.sample_rate as f64).round() as usize;
    if clip.len() <= limit {
        clip.clone()
    } else {
        clip.with_samples(clip.samples[..limit].to_vec())
    }
}

/// Appends zeros up to `target` samples.
pub fn pad_to_length(clip: &AudioClip, target: usize) -> Result<AudioClip> {
    if target < clip.len() {
        return Err(Error::Parameter(format!(
            "{}: cannot pad {} samples down to {target}",
            clip.source_id,
            clip.len()
        )));
    }
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    Ok(clip.with_samples(samples))
}

/// Pads every clip to the length of the longest one.
pub fn pad_batch(clips: &[AudioClip]) -> Vec<AudioClip> {
    let target = clips.iter().map(AudioClip::len).max().unwrap_or(0);
    clips
        .iter()
        .map(|c| pad_to_length(c, target).expect("target is the batch maximum"))
        .collect()
}

/// The ingest chain applied to every recording: cap at 20 s, then trim
/// silence.
pub fn prepare_clip(clip: &AudioClip, top_db: f64) -> Result<AudioClip> {
    trim_silence(&cap_duration(clip, MAX_SECONDS), top_db)
}
