use serde::{Deserialize, Serialize};

use super::trainer::predict_all;
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::model::FcnModel;

/// Durations, in seconds, of the length study.
pub const STUDY_DURATIONS: [f64; 7] = [1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationPoint {
    pub seconds: f64,
    /// Frames kept at this duration; `None` accuracy when too short for
    /// the model.
    pub frames: usize,
    pub accuracy: Option<f64>,
}

/// Accuracy with every test clip cut to each duration (clips that are
/// already shorter are used whole). Truncation acts on the feature
/// matrices: the first `d` seconds of audio produce exactly the first
/// frames of the full matrix.
pub fn duration_study(model: &FcnModel, test: &[&Sample], durations: &[f64]) -> Result<Vec<DurationPoint>> {
    if test.is_empty() {
        return Err(Error::Parameter("duration study needs test samples".into()));
    }
    let fm = &test[0].features;
    let fp = fm.frame_params;
    let mut out = Vec::with_capacity(durations.len());
    for &d in durations {
        let samples = (d * fm.sample_rate as f64).round() as usize;
        let frames = fp.frame_count(samples);
        if frames < model.min_frames() {
            log::warn!(
                "{d} s gives {frames} frames, below the model minimum of {}; skipped",
                model.min_frames()
            );
            out.push(DurationPoint {
                seconds: d,
                frames,
                accuracy: None,
            });
            continue;
        }
        let cut: Vec<Sample> = test
            .iter()
            .map(|s| Sample {
                id: s.id.clone(),
                label: s.label,
                features: s.features.truncate_frames(frames.min(s.features.frames)),
            })
            .collect();
        let refs: Vec<&Sample> = cut.iter().collect();
        let pred = predict_all(model, &refs)?;
        let correct = pred.iter().zip(&cut).filter(|(p, s)| **p == s.label).count();
        out.push(DurationPoint {
            seconds: d,
            frames,
            accuracy: Some(correct as f64 / cut.len() as f64),
        });
    }
    Ok(out)
}
