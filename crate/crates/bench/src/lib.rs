//! Inputs shared by the benchmarks.

use birdsong_core::audio::AudioClip;
use birdsong_core::features::{FeatureConfig, FeatureExtractor, FeatureKind, FeatureMatrix};

pub const SAMPLE_RATE: u32 = 44_100;

/// A two-tone warble, deterministic so runs are comparable.
pub fn warble(seconds: f64) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let sr = SAMPLE_RATE as f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = 2500.0 + 800.0 * (2.0 * std::f64::consts::PI * 6.0 * t).sin();
            (0.4 * (2.0 * std::f64::consts::PI * f * t).sin() + 0.1 * (2.0 * std::f64::consts::PI * 5200.0 * t).sin()) as f32
        })
        .collect();
    AudioClip::new(samples, SAMPLE_RATE, "warble")
}

pub fn extractor(kind: FeatureKind) -> FeatureExtractor {
    FeatureExtractor::new(FeatureConfig::default().with_kind(kind)).expect("default front end is valid")
}

pub fn mel_features(seconds: f64) -> FeatureMatrix {
    extractor(FeatureKind::MelDb).extract(&warble(seconds)).expect("warble is long enough")
}
