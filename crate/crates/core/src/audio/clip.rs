use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical sample rate of every clip the toolkit works on.
pub const SAMPLE_RATE: u32 = 44100;

/// Mono audio with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    /// Samples in `[-1, 1]`.
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
    pub species: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
            species: None,
        }
    }

    pub fn with_species(mut self, species: impl Into<String>) -> Self {
        self.species = Some(species.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn samples_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    /// Same metadata, different samples.
    pub fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
            species: self.species.clone(),
        }
    }

    /// Checks the invariants every normalized clip satisfies.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Validation(format!(
                "{}: sample rate {} Hz, expected {SAMPLE_RATE}",
                self.source_id, self.sample_rate
            )));
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::Validation(format!(
                "{}: sample {i} is {} (outside [-1, 1])",
                self.source_id, self.samples[i]
            )));
        }
        Ok(())
    }
}
