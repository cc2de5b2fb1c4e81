//! Labelled feature matrices ready for training and evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::audio::{decode_audio, prepare_clip, resolve_entry, AudioClip, DatasetManifest};
use crate::error::{Error, Result};
use crate::features::{FeatureCache, FeatureExtractor, FeatureMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub features: FeatureMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub labels: Vec<String>,
    pub samples: Vec<Sample>,
    /// Feature column of a silent frame, used to pad matrices the way
    /// trailing digital silence would.
    pub silence: Vec<f64>,
}

/// A manifest row that could not be turned into a sample.
#[derive(Clone, Debug, Serialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

/// Audio preparation applied before feature extraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrepOptions {
    /// Silence threshold in dB below the loudest frame; `None` disables
    /// trimming.
    pub top_db: Option<f64>,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self {
            top_db: Some(crate::audio::DEFAULT_TOP_DB),
        }
    }
}

impl PrepOptions {
    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        match self.top_db {
            Some(db) => prepare_clip(clip, db),
            None => Ok(crate::audio::cap_duration(clip, crate::audio::MAX_SECONDS)),
        }
    }

    fn salt(&self) -> String {
        match self.top_db {
            Some(db) => format!("trim:{db}"),
            None => "trim:off".into(),
        }
    }
}

/// Feature column produced by one window of digital silence.
pub fn silence_column(extractor: &FeatureExtractor) -> Result<Vec<f64>> {
    let fp = extractor.config().frame;
    let clip = AudioClip::new(vec![0.0; fp.window_len], extractor.config().sample_rate, "silence");
    Ok(extractor.extract(&clip)?.column(0))
}

impl Dataset {
    pub fn new(labels: Vec<String>, samples: Vec<Sample>, silence: Vec<f64>) -> Result<Self> {
        let ds = Self {
            labels,
            samples,
            silence,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let bands = self.silence.len();
        for s in &self.samples {
            if s.label >= self.labels.len() {
                return Err(Error::Validation(format!("{}: label index {} out of range", s.id, s.label)));
            }
            if s.features.bands != bands {
                return Err(Error::Shape(format!(
                    "{}: {} bands, dataset has {bands}",
                    s.id, s.features.bands
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.silence.len()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<&Sample> {
        idx.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Extends a matrix to `frames` columns with the silence column.
    pub fn pad(&self, fm: &FeatureMatrix, frames: usize) -> Result<FeatureMatrix> {
        if frames < fm.frames {
            return Err(Error::Parameter(format!(
                "cannot pad {} frames down to {frames}",
                fm.frames
            )));
        }
        let mut values = Vec::with_capacity(fm.bands * frames);
        for b in 0..fm.bands {
            values.extend_from_slice(&fm.values[b * fm.frames..(b + 1) * fm.frames]);
            values.extend(std::iter::repeat_n(self.silence[b], frames - fm.frames));
        }
        FeatureMatrix::new(fm.kind, fm.bands, frames, fm.frame_params, fm.sample_rate, values)
    }
}

/// Featurizes in-memory clips with known class indices (no trimming).
pub fn dataset_from_clips(
    clips: &[(AudioClip, usize)],
    labels: Vec<String>,
    extractor: &FeatureExtractor,
) -> Result<Dataset> {
    let samples = clips
        .par_iter()
        .map(|(clip, label)| {
            Ok(Sample {
                id: clip.source_id.clone(),
                label: *label,
                features: extractor.extract(clip)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(labels, samples, silence_column(extractor)?)
}

/// Decodes, prepares and featurizes every manifest entry.
///
/// Entries that are silent after trimming or shorter than one analysis
/// window are skipped and reported rather than failing the whole build.
pub fn build_dataset(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    extractor: &FeatureExtractor,
    cache: Option<&FeatureCache>,
    prep: PrepOptions,
) -> Result<(Dataset, Vec<Skipped>)> {
    let cache = cache.map(|c| c.clone().with_salt(prep.salt()));
    let results: Vec<Result<std::result::Result<Sample, Skipped>>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let path = resolve_entry(manifest_path, entry);
            let label = manifest.class_index(&entry.species).expect("manifest validated");
            let compute = || -> Result<FeatureMatrix> {
                let clip = prep.apply(&decode_audio(&path)?)?;
                extractor.extract(&clip)
            };
            let computed = match &cache {
                Some(c) => c.get_or_compute(&path, extractor.config(), compute).map(|(fm, _)| fm),
                None => compute(),
            };
            match computed {
                Ok(fm) => Ok(Ok(Sample {
                    id: entry.path.to_string_lossy().into_owned(),
                    label,
                    features: fm,
                })),
                Err(e @ (Error::EmptyResult(_) | Error::DegenerateInput(_))) => Ok(Err(Skipped {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(s) => samples.push(s),
            Err(s) => {
                log::warn!("skipping {}: {}", s.path, s.reason);
                skipped.push(s);
            }
        }
    }
    let ds = Dataset::new(manifest.label_set.clone(), samples, silence_column(extractor)?)?;
    Ok((ds, skipped))
}
