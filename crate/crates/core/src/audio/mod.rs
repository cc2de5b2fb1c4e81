//! Audio decoding, silence trimming, duration handling, manifests and the
//! recording-archive client.

mod clip;
pub mod fetch;
mod manifest;
mod prep;
mod resample;
mod wav;

pub use clip::{AudioClip, SAMPLE_RATE};
pub use fetch::{FetchConfig, FetchOutcome, FetchQuery, FetchedRecording, Fetcher};
pub use manifest::{
    label_file_for, load_manifest, resolve_entry, DatasetManifest, LoadedManifest, ManifestEntry,
};
pub use prep::{
    cap_duration, pad_batch, pad_to_length, prepare_clip, trim_silence, DEFAULT_TOP_DB,
    ENVELOPE_FRAME, ENVELOPE_HOP, MAX_SECONDS,
};
pub use resample::resample;
pub use wav::{decode_audio, probe_wav, write_wav, write_wav_i16};
