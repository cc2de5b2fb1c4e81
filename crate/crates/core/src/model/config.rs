use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::BaseActivation;

/// Depths explored by the grid search.
pub const GRID_DEPTHS: [usize; 3] = [3, 4, 6];
/// Widest-layer filter counts explored by the grid search.
pub const GRID_WIDTHS: [usize; 3] = [100, 250, 400];
/// Scale `n` inside adaptive activations; slopes start at `1 / n`.
pub const ADAPTIVE_N: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    /// Layer-wise adaptive tanh with one trainable slope per layer.
    Adaptive,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Adaptive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Adaptive => "adaptive",
        }
    }

    pub(crate) fn adaptive_base(&self) -> Option<BaseActivation> {
        match self {
            Activation::Adaptive => Some(BaseActivation::Tanh),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "adaptive" => Ok(Activation::Adaptive),
            _ => Err(Error::Config(format!("unknown activation '{s}'"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifier on top of the convolution stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum Head {
    /// Final 1x1 projection, global average pooling, softmax. Accepts any
    /// input length.
    Gap,
    /// Same convolutions, then flatten and one dense layer. Only accepts
    /// inputs of exactly `fixed_frames` frames.
    Dense { fixed_frames: usize },
}

/// Where the dropout layer sits in the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    /// On the feature maps entering the final projection (gap head) or on
    /// the flattened maps entering the dense layer.
    BeforeProjection,
    /// On the pooled class scores, right before the softmax.
    BeforeSoftmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcnConfig {
    /// Filter count per convolution; the last entry is the class count.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub n_classes: usize,
    /// Feature bands of the input matrices.
    pub bands: usize,
    pub dropout_rate: f64,
    pub dropout_placement: DropoutPlacement,
    pub head: Head,
    /// Side of the square kernels of every convolution but the last.
    pub kernel: usize,
}

impl FcnConfig {
    /// Canonical network: 100, 400, 100 and `n_classes` filters.
    pub fn canonical(n_classes: usize, bands: usize) -> Self {
        Self {
            widths: vec![100, 400, 100, n_classes],
            activation: Activation::Adaptive,
            n_classes,
            bands,
            dropout_rate: 0.4,
            dropout_placement: DropoutPlacement::BeforeProjection,
            head: Head::Gap,
            kernel: 3,
        }
    }

    /// A cell of the architecture grid, with `width` filters in the widest
    /// layer and the others scaled like the canonical 100/400/100 shape.
    pub fn grid(depth: usize, width: usize, activation: Activation, n_classes: usize, bands: usize) -> Result<Self> {
        if !GRID_DEPTHS.contains(&depth) {
            return Err(Error::Config(format!("depth {depth} is not one of {GRID_DEPTHS:?}")));
        }
        if !GRID_WIDTHS.contains(&width) {
            return Err(Error::Config(format!("width {width} is not one of {GRID_WIDTHS:?}")));
        }
        let quarter = ((width as f64) / 4.0).round() as usize;
        let widths = match depth {
            3 => vec![width, width, n_classes],
            4 => vec![quarter, width, quarter, n_classes],
            _ => vec![quarter, quarter, width, quarter, quarter, n_classes],
        };
        Ok(Self {
            widths,
            activation,
            ..Self::canonical(n_classes, bands)
        })
    }

    /// Same network with explicit filter counts (the last must equal the
    /// class count).
    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = widths;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Pooling stages: one after every convolution except the last.
    pub fn pools(&self) -> usize {
        self.depth().saturating_sub(1)
    }

    /// Shortest input (in frames) that survives every pooling stage.
    pub fn min_frames(&self) -> usize {
        1 << self.pools()
    }

    /// Widest convolution, excluding the class projection.
    pub fn widest(&self) -> usize {
        self.widths[..self.pools()].iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !GRID_DEPTHS.contains(&self.depth()) {
            return Err(Error::Config(format!(
                "depth {} is not one of {GRID_DEPTHS:?}",
                self.depth()
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        if self.widths.last() != Some(&self.n_classes) {
            return Err(Error::Config(format!(
                "last width must equal the class count {}, widths are {:?}",
                self.n_classes, self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("filter counts must be positive".into()));
        }
        if self.bands == 0 {
            return Err(Error::Config("band count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if let Head::Dense { fixed_frames } = self.head {
            if fixed_frames < self.min_frames() {
                return Err(Error::Config(format!(
                    "dense head needs fixed_frames >= {}, got {fixed_frames}",
                    self.min_frames()
                )));
            }
        }
        Ok(())
    }

    /// Map height and width after every pooling stage for an input of
    /// `frames` frames. The band axis stops pooling once it reaches 1.
    pub fn pooled_extent(&self, frames: usize) -> (usize, usize) {
        let (mut h, mut w) = (self.bands, frames);
        for _ in 0..self.pools() {
            if h >= 2 {
                h /= 2;
            }
            w /= 2;
        }
        (h, w)
    }
}
