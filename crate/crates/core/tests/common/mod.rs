#![allow(dead_code)]

use birdsong_core::dataset::{dataset_from_clips, Dataset};
use birdsong_core::features::{FeatureConfig, FeatureExtractor, FeatureKind};
use birdsong_core::model::{Activation, FcnConfig};
use birdsong_core::synth::{class_names, synth_dataset, SynthSpec};
use birdsong_core::train::TrainConfig;

pub fn front_end(n_mels: usize) -> FeatureConfig {
    FeatureConfig {
        n_mels,
        fmax: 8000.0,
        ..FeatureConfig::default()
    }
    .with_kind(FeatureKind::MelDb)
}

pub fn synthetic(spec: &SynthSpec, n_mels: usize) -> (Dataset, FeatureExtractor) {
    let ex = FeatureExtractor::new(front_end(n_mels)).unwrap();
    let clips = synth_dataset(spec);
    (dataset_from_clips(&clips, class_names(spec.n_classes), &ex).unwrap(), ex)
}

pub fn small_fcn(n_classes: usize, bands: usize, w: usize) -> FcnConfig {
    FcnConfig::canonical(n_classes, bands)
        .with_widths(vec![w / 2, w, w / 2, n_classes])
        .with_activation(Activation::Adaptive)
}

pub fn quick_train(epochs: usize) -> TrainConfig {
    let mut tc = TrainConfig {
        epochs_max: epochs,
        batch_size: 16,
        patience: 6,
        ..TrainConfig::default()
    };
    tc.adam.alpha = 5e-3;
    tc
}
