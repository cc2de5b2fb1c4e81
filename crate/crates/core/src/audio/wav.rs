//! PCM WAV input and output.

use std::path::Path;

use super::resample::resample;
use super::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => {
            Error::Format(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Sample rate, channel count and frame count from the file header.
pub fn probe_wav(path: &Path) -> Result<(u32, u16, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    Ok((spec.sample_rate, spec.channels, reader.duration()))
}

fn check_spec(path: &Path, spec: &hound::WavSpec) -> Result<()> {
    let ok = matches!(
        (spec.sample_format, spec.bits_per_sample),
        (hound::SampleFormat::Int, 16) | (hound::SampleFormat::Float, 32)
    );
    if !ok {
        return Err(Error::Format(format!(
            "{}: {}-bit {:?} samples are not supported (16-bit int or 32-bit float)",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::Format(format!(
            "{}: {} channels (mono or stereo only)",
            path.display(),
            spec.channels
        )));
    }
    Ok(())
}

/// Reads a 16-bit integer or 32-bit float WAV file, averages stereo to
/// mono and resamples to 44.1 kHz. Integer samples are scaled by 1/32768.
pub fn decode_audio(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
    }
    .map_err(|e| map_hound(path, e))?;

    let ch = spec.channels as usize;
    let mono: Vec<f64> = interleaved
        .chunks_exact(ch)
        .map(|f| f.iter().sum::<f64>() / ch as f64)
        .collect();
    let mono = resample(&mono, spec.sample_rate, SAMPLE_RATE);
    let samples = mono
        .into_iter()
        .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) as f32 } else { 0.0 })
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip::new(samples, SAMPLE_RATE, id))
}

/// Writes a mono 32-bit float WAV, which round-trips clip samples exactly.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

/// Writes interleaved 16-bit PCM.
pub fn write_wav_i16(path: &Path, samples: &[i16], sample_rate: u32, channels: u16) -> Result<()> {
    let spec = hound::WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in samples {
        w.write_sample(s).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passthrough_16_bit_mono() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let raw: Vec<i16> = vec![0, 16384, -32768, 32767, -1];
        write_wav_i16(&p, &raw, 44100, 1).unwrap();
        let clip = decode_audio(&p).unwrap();
        assert_eq!(clip.sample_rate, 44100);
        assert_eq!(clip.source_id, "a");
        let want: Vec<f32> = raw.iter().map(|&v| (v as f64 / 32768.0) as f32).collect();
        assert_eq!(clip.samples, want);
    }

    #[test]
    fn antiphase_stereo_cancels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let raw: Vec<i16> = (0..200).flat_map(|i| [i * 50, -(i * 50)]).collect();
        write_wav_i16(&p, &raw, 44100, 2).unwrap();
        let clip = decode_audio(&p).unwrap();
        assert_eq!(clip.len(), 200);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn resamples_to_canonical_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        write_wav_i16(&p, &vec![1000; 22050], 22050, 1).unwrap();
        let clip = decode_audio(&p).unwrap();
        assert_eq!(clip.len(), 44100);
        clip.validate().unwrap();
    }

    #[test]
    fn float_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let clip = AudioClip::new(vec![0.1, -0.75, 1.0, -1.0, 3e-7], 44100, "f");
        write_wav(&p, &clip).unwrap();
        assert_eq!(decode_audio(&p).unwrap().samples, clip.samples);
    }

    #[test]
    fn unsupported_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u8.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(decode_audio(&p), Err(Error::Format(_))));

        let t = dir.path().join("t.wav");
        write_wav_i16(&t, &vec![7; 1000], 44100, 1).unwrap();
        let bytes = std::fs::read(&t).unwrap();
        std::fs::write(&t, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(decode_audio(&t), Err(Error::Io { .. })));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFFnope").unwrap();
        assert!(decode_audio(&junk).is_err());
    }
}
