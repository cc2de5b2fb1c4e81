//! Chunked detection over recordings of any length.

mod chunks;
mod events;

pub use chunks::{chunk_stream, plan_chunks, ChunkParams, ChunkPlan};
pub use events::{merge_events, timeline, write_events_jsonl, DetectionEvent};

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, Standardizer};
use crate::model::FcnModel;

/// A frozen model with the front end that turns audio into its input.
pub struct Detector<'m> {
    model: &'m FcnModel,
    extractor: FeatureExtractor,
    standardizer: Option<Standardizer>,
    params: ChunkParams,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn rms_dbfs(samples: &[f32]) -> f64 {
    let ms = samples.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / samples.len().max(1) as f64;
    10.0 * ms.max(1e-20).log10()
}

impl<'m> Detector<'m> {
    /// Uses the feature settings and standardizer stored with the model.
    pub fn new(model: &'m FcnModel, params: ChunkParams) -> Result<Self> {
        let pre = model
            .preprocessing
            .as_ref()
            .ok_or_else(|| Error::Config("model carries no feature settings".into()))?;
        let extractor = FeatureExtractor::new(pre.features.clone())?;
        Self::with_frontend(model, extractor, pre.standardizer.clone(), params)
    }

    pub fn with_frontend(
        model: &'m FcnModel,
        extractor: FeatureExtractor,
        standardizer: Option<Standardizer>,
        params: ChunkParams,
    ) -> Result<Self> {
        if extractor.bands() != model.config().bands {
            return Err(Error::Config(format!(
                "extractor yields {} bands, model expects {}",
                extractor.bands(),
                model.config().bands
            )));
        }
        Ok(Self {
            model,
            extractor,
            standardizer,
            params,
        })
    }

    pub fn params(&self) -> &ChunkParams {
        &self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.extractor.config().sample_rate
    }

    /// Fewest samples the model can classify.
    pub fn min_samples(&self) -> usize {
        self.extractor.config().frame.samples_for_frames(self.model.min_frames())
    }

    pub fn plan(&self) -> Result<ChunkPlan> {
        ChunkPlan::new(&self.params, self.sample_rate(), self.min_samples())
    }

    /// Class probabilities for a stretch of audio.
    pub fn classify(&self, samples: &[f32]) -> Result<Vec<f64>> {
        let clip = AudioClip::new(samples.to_vec(), self.sample_rate(), "chunk");
        let fm = self.extractor.extract(&clip)?;
        let fm = match &self.standardizer {
            Some(st) => st.apply(&fm)?,
            None => fm,
        };
        self.model.predict(&fm)
    }

    fn event(&self, samples: &[f32], start: usize, end: usize) -> Result<(DetectionEvent, usize)> {
        let p = self.classify(samples)?;
        let c = argmax(&p);
        let sr = self.sample_rate() as f64;
        Ok((
            DetectionEvent {
                t_start: start as f64 / sr,
                t_end: end as f64 / sr,
                species: self.model.label_set()[c].clone(),
                confidence: p[c],
                low_energy: rms_dbfs(samples) < -self.params.low_energy_db,
            },
            c,
        ))
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate != self.sample_rate() {
            return Err(Error::Parameter(format!(
                "clip is at {} Hz, detector runs at {} Hz",
                clip.sample_rate,
                self.sample_rate()
            )));
        }
        Ok(())
    }

    /// One event per chunk, in time order, above the confidence threshold.
    pub fn detect(&self, clip: &AudioClip) -> Result<Vec<DetectionEvent>> {
        self.check_rate(clip)?;
        let mut out = Vec::new();
        for (s, e) in self.plan()?.chunks(clip.len())? {
            let (ev, _) = self.event(&clip.samples[s..e], s, e)?;
            if ev.confidence >= self.params.min_confidence {
                out.push(ev);
            }
        }
        Ok(out)
    }

    /// Incremental detection over pushed sample blocks.
    pub fn stream(&self) -> Result<StreamDetector<'_, 'm>> {
        Ok(StreamDetector {
            plan: self.plan()?,
            detector: self,
            buffer: Vec::new(),
            offset: 0,
            next_start: 0,
            finished: false,
        })
    }

    /// Chunk accuracy, whole-clip accuracy and the species co-occurrence
    /// matrix over clips with one primary label each.
    pub fn multispecies_eval(&self, clips: &[(AudioClip, usize)]) -> Result<MultispeciesReport> {
        let n = self.model.label_set().len();
        let mut cooccurrence = vec![vec![0usize; n]; n];
        let (mut chunks, mut chunk_hits, mut clip_hits) = (0usize, 0usize, 0usize);
        for (clip, primary) in clips {
            self.check_rate(clip)?;
            if *primary >= n {
                return Err(Error::Index(format!("primary label {primary} out of {n}")));
            }
            if argmax(&self.classify(&clip.samples)?) == *primary {
                clip_hits += 1;
            }
            for (s, e) in self.plan()?.chunks(clip.len())? {
                let (ev, c) = self.event(&clip.samples[s..e], s, e)?;
                chunks += 1;
                if c == *primary {
                    chunk_hits += 1;
                }
                if ev.confidence >= self.params.min_confidence {
                    cooccurrence[*primary][c] += 1;
                }
            }
        }
        if clips.is_empty() {
            return Err(Error::Parameter("no clips to evaluate".into()));
        }
        Ok(MultispeciesReport {
            labels: self.model.label_set().to_vec(),
            chunks,
            chunk_accuracy: chunk_hits as f64 / chunks as f64,
            full_clip_accuracy: clip_hits as f64 / clips.len() as f64,
            cooccurrence,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultispeciesReport {
    pub labels: Vec<String>,
    pub chunks: usize,
    pub chunk_accuracy: f64,
    pub full_clip_accuracy: f64,
    /// `cooccurrence[primary][detected]` chunk counts.
    pub cooccurrence: Vec<Vec<usize>>,
}

/// Classifies each chunk as soon as enough samples have arrived to know
/// its final extent.
pub struct StreamDetector<'d, 'm> {
    detector: &'d Detector<'m>,
    plan: ChunkPlan,
    /// Samples from absolute position `offset` onwards.
    buffer: Vec<f32>,
    offset: usize,
    next_start: usize,
    finished: bool,
}

impl StreamDetector<'_, '_> {
    /// Samples received so far.
    pub fn received(&self) -> usize {
        self.offset + self.buffer.len()
    }

    fn emit(&mut self, start: usize, end: usize, out: &mut Vec<DetectionEvent>) -> Result<()> {
        let (ev, _) = self
            .detector
            .event(&self.buffer[start - self.offset..end - self.offset], start, end)?;
        if ev.confidence >= self.detector.params.min_confidence {
            out.push(ev);
        }
        Ok(())
    }

    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<DetectionEvent>> {
        if self.finished {
            return Err(Error::Parameter("stream already finished".into()));
        }
        self.buffer.extend_from_slice(samples);
        let mut out = Vec::new();
        while self.received() >= self.plan.settled_at(self.next_start) {
            let s = self.next_start;
            self.emit(s, s + self.plan.chunk, &mut out)?;
            self.next_start += self.plan.hop;
            let drop = self.next_start - self.offset;
            self.buffer.drain(..drop);
            self.offset = self.next_start;
        }
        Ok(out)
    }

    /// Flushes the chunks that depend on the end of the stream.
    pub fn finish(&mut self) -> Result<Vec<DetectionEvent>> {
        if self.finished {
            return Ok(Vec::new());
        }
        self.finished = true;
        let total = self.received();
        let mut out = Vec::new();
        for (s, e) in self.plan.chunks(total)? {
            if s >= self.next_start {
                self.emit(s, e, &mut out)?;
            }
        }
        Ok(out)
    }
}
