use std::path::PathBuf;

use clap::{Args, ValueEnum};

use birdsong_core::dataset::PrepOptions;
use birdsong_core::features::{FeatureConfig, FeatureKind, FrameParams};
use birdsong_core::model::{Activation, DropoutPlacement, FcnConfig};
use birdsong_core::nn::AdamConfig;
use birdsong_core::train::{Monitor, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Descriptor {
    Mel,
    Mfcc,
}

impl From<Descriptor> for FeatureKind {
    fn from(d: Descriptor) -> Self {
        match d {
            Descriptor::Mel => FeatureKind::MelDb,
            Descriptor::Mfcc => FeatureKind::Mfcc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Act {
    Relu,
    Tanh,
    Adaptive,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Relu => Activation::Relu,
            Act::Tanh => Activation::Tanh,
            Act::Adaptive => Activation::Adaptive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MonitorArg {
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DropoutArg {
    BeforeProjection,
    BeforeSoftmax,
}

/// Front end: framing, filterbank and descriptor.
#[derive(Args, Clone, Debug)]
pub struct FeatureArgs {
    /// Analysis window in samples
    #[arg(long, default_value_t = 882)]
    pub window: usize,
    /// Hop between frames in samples
    #[arg(long, default_value_t = 441)]
    pub hop: usize,
    /// FFT size (power of two, at least the window)
    #[arg(long, default_value_t = 1024)]
    pub fft_size: usize,
    /// Mel filters
    #[arg(long, default_value_t = 128)]
    pub n_mels: usize,
    /// Cepstral coefficients kept (mfcc only)
    #[arg(long, default_value_t = 20)]
    pub n_mfcc: usize,
    /// Lowest filterbank frequency in Hz
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Highest filterbank frequency in Hz
    #[arg(long, default_value_t = 22050.0)]
    pub fmax: f64,
    /// Pre-emphasis coefficient (mfcc only)
    #[arg(long, default_value_t = 0.97)]
    pub preemphasis: f64,
    #[command(flatten)]
    pub prep: PrepArgs,
}

/// Silence trimming and feature caching.
#[derive(Args, Clone, Debug)]
pub struct PrepArgs {
    /// Drop frames this many dB below the loudest frame
    #[arg(long, default_value_t = 60.0)]
    pub top_db: f64,
    /// Keep silent stretches
    #[arg(long)]
    pub no_trim: bool,
    /// Reuse feature matrices cached in this directory
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl FeatureArgs {
    pub fn feature_config(&self, kind: FeatureKind) -> FeatureConfig {
        FeatureConfig {
            kind,
            frame: FrameParams {
                window_len: self.window,
                hop: self.hop,
                fft_size: self.fft_size,
            },
            n_mels: self.n_mels,
            n_mfcc: self.n_mfcc,
            fmin: self.fmin,
            fmax: self.fmax,
            preemphasis: self.preemphasis,
            ..FeatureConfig::default()
        }
    }
}

impl PrepArgs {
    pub fn options(&self) -> PrepOptions {
        PrepOptions {
            top_db: (!self.no_trim).then_some(self.top_db),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 80)]
    pub batch_size: usize,
    /// Epochs without improvement before stopping
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Smallest loss drop that counts as an improvement
    #[arg(long, default_value_t = 1e-4)]
    pub min_delta: f64,
    /// Adam step size
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Share of each training split held out for early stopping
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    /// Loss watched by early stopping
    #[arg(long, value_enum, default_value = "validation")]
    pub monitor: MonitorArg,
    /// Share of the data used for training in each fold
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Add the adaptive-slope recovery term to the loss
    #[arg(long)]
    pub slope_recovery: bool,
    /// Skip per-band standardization
    #[arg(long)]
    pub no_standardize: bool,
}

impl TrainArgs {
    pub fn train_config(&self, jobs: usize) -> TrainConfig {
        TrainConfig {
            epochs_max: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            min_delta: self.min_delta,
            adam: AdamConfig {
                alpha: self.lr,
                ..AdamConfig::default()
            },
            validation_fraction: self.validation_fraction,
            monitor: match self.monitor {
                MonitorArg::Validation => Monitor::Validation,
                MonitorArg::Test => Monitor::Test,
            },
            slope_recovery: self.slope_recovery,
            standardize: !self.no_standardize,
            train_fraction: self.train_fraction,
            jobs,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ModelArgs {
    /// Hidden convolution widths; a 1x1 projection to the classes follows
    #[arg(long, value_delimiter = ',', default_value = "100,400,100")]
    pub widths: Vec<usize>,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub activation: Act,
    #[arg(long, default_value_t = 0.4)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value = "before-projection")]
    pub dropout_placement: DropoutArg,
}

impl ModelArgs {
    pub fn config(&self, n_classes: usize, bands: usize) -> FcnConfig {
        let mut widths = self.widths.clone();
        widths.push(n_classes);
        let mut c = FcnConfig::canonical(n_classes, bands)
            .with_widths(widths)
            .with_activation(self.activation.into());
        c.dropout_rate = self.dropout;
        c.dropout_placement = match self.dropout_placement {
            DropoutArg::BeforeProjection => DropoutPlacement::BeforeProjection,
            DropoutArg::BeforeSoftmax => DropoutPlacement::BeforeSoftmax,
        };
        c
    }
}
