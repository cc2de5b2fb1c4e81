use super::*;
use crate::audio::AudioClip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn tone(freq: f64, seconds: f64, amp: f64) -> AudioClip {
    let n = (seconds * 44100.0) as usize;
    let s = (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / 44100.0).sin()) as f32)
        .collect();
    AudioClip::new(s, 44100, "tone")
}

#[test]
fn preemphasis_examples() {
    let y = preemphasis(&[1.0, 1.0, 1.0], 0.97).unwrap();
    assert_eq!(y[0], 1.0);
    assert!((y[1] - 0.03).abs() < 1e-12 && (y[2] - 0.03).abs() < 1e-12);
    let y = preemphasis(&[2.0, 2.0], 0.4).unwrap();
    assert!((y[1] - 1.2).abs() < 1e-12);
    assert!(preemphasis(&[1.0], 0.3).is_err());
    assert!(preemphasis(&[1.0], 1.01).is_err());
}

#[test]
fn preemphasis_gain_at_dc_and_nyquist() {
    let b = 0.9;
    let dc = preemphasis(&[0.5; 10], b).unwrap();
    assert!(dc[1..].iter().all(|&v| (v - 0.5 * (1.0 - b)).abs() < 1e-12));
    let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let y = preemphasis(&alt, b).unwrap();
    for (i, v) in y.iter().enumerate().skip(1) {
        assert!((v - alt[i] * (1.0 + b)).abs() < 1e-12);
    }
}

#[test]
fn dct_examples() {
    let c = dct_cepstrum(&[3.7; 40], 20).unwrap();
    assert!(c.iter().all(|v| v.abs() < 1e-10));
    let c = dct_cepstrum(&[1.0, 0.0], 1).unwrap();
    assert!((c[0] - (PI / 4.0).cos()).abs() < 1e-15);
    assert!(dct_cepstrum(&[1.0, 2.0], 3).is_err());
    assert!(dct_cepstrum(&[1.0, 2.0], 0).is_err());
}

#[test]
fn dct_matches_naive_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l: Vec<f64> = (0..128).map(|_| rng.random_range(-20.0..5.0)).collect();
    let fast = dct_cepstrum(&l, 20).unwrap();
    for m in 1..=20 {
        let mut acc = 0.0;
        for k in 0..128 {
            acc += l[k] * (m as f64 * (k as f64 + 0.5) * PI / 128.0).cos();
        }
        assert!((fast[m - 1] - acc).abs() < 1e-10);
    }
}

#[test]
fn silence_sits_on_the_floor() {
    let mut clip = AudioClip::new(vec![0.0; 44100], 44100, "quiet");
    clip.samples[0] = 1e-6;
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let fm = fx.extract(&clip).unwrap();
    assert_eq!((fm.bands, fm.frames), (128, 99));
    assert!(fm.values.iter().all(|&v| v == DB_FLOOR));
}

#[test]
fn loud_clip_peaks_at_zero_db() {
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let fm = fx.extract(&tone(3000.0, 0.5, 0.5)).unwrap();
    let peak = fm.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(peak, 0.0);
    assert!(fm.values.iter().all(|&v| v >= DB_FLOOR));
}

#[test]
fn tone_lights_up_nearest_filter() {
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let fb = fx.filterbank();
    let fm = fx.extract(&tone(2000.0, 0.5, 0.5)).unwrap();
    let nearest = (0..fb.n_mels)
        .min_by(|&a, &b| {
            (fb.center_hz(a) - 2000.0)
                .abs()
                .total_cmp(&(fb.center_hz(b) - 2000.0).abs())
        })
        .unwrap();
    for t in 0..fm.frames {
        let col = fm.column(t);
        let arg = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        assert_eq!(arg, nearest, "frame {t}");
    }
}

#[test]
fn tone_at_filter_centre_peaks_in_that_filter() {
    let fp = FrameParams::default();
    let fb = MelFilterbank::new(40, &fp, 44100, 0.0, 22050.0).unwrap();
    for m in [5, 10, 20, 30, 38] {
        let clip = tone(fb.center_hz(m), 0.2, 0.5);
        let fm = mel_spectrogram(&clip, &fp, &fb).unwrap();
        let avg = fm.time_average();
        let arg = (0..avg.len()).max_by(|&a, &b| avg[a].total_cmp(&avg[b])).unwrap();
        assert_eq!(arg, m);
    }
}

#[test]
fn doubling_a_hop_periodic_clip_keeps_columns() {
    // 2 kHz repeats exactly every 441 samples
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let short = fx.extract(&tone(2000.0, 0.5, 0.3)).unwrap();
    let long = fx.extract(&tone(2000.0, 1.0, 0.3)).unwrap();
    let fp = FrameParams::default();
    assert_eq!(short.frames, fp.frame_count(22050));
    assert_eq!(long.frames, fp.frame_count(44100));
    for t in 0..short.frames {
        for b in 0..short.bands {
            assert!((short.get(b, t) - long.get(b, t)).abs() < 1e-9);
            assert!((short.get(b, 0) - long.get(b, long.frames - 1)).abs() < 1e-6);
        }
    }
}

#[test]
fn mfcc_shape_and_determinism() {
    let fx = FeatureExtractor::new(FeatureConfig::default().with_kind(FeatureKind::Mfcc)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s: Vec<f32> = (0..44100).map(|_| rng.random_range(-0.5..0.5)).collect();
    let clip = AudioClip::new(s, 44100, "noise");
    let a = fx.extract(&clip).unwrap();
    let b = fx.extract(&clip).unwrap();
    assert_eq!((a.bands, a.frames), (20, 99));
    assert_eq!(a.values, b.values);
}

/// Every stage rebuilt from its defining formula with plain loops.
fn naive_mfcc(samples: &[f64], n_mels: usize, n_mfcc: usize, b: f64) -> Vec<Vec<f64>> {
    let (l, hop, n, sr) = (882usize, 441usize, 1024usize, 44100.0);
    let mut x = samples.to_vec();
    for i in (1..x.len()).rev() {
        x[i] = samples[i] - b * samples[i - 1];
    }
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    let weight = |m: usize, f: f64| {
        let (a, c, e) = (edges[m], edges[m + 1], edges[m + 2]);
        let h = 2.0 / (e - a);
        if f > a && f <= c {
            h * (f - a) / (c - a)
        } else if f > c && f < e {
            h * (e - f) / (e - c)
        } else {
            0.0
        }
    };
    let frames = 1 + (x.len() - l) / hop;
    let mut out = vec![vec![0.0; frames]; n_mfcc];
    for t in 0..frames {
        let mut frame = vec![0.0; n];
        for i in 0..l {
            frame[i] = x[t * hop + i] * (0.54 - 0.46 * (2.0 * PI * i as f64 / (l - 1) as f64).cos());
        }
        let mut power = vec![0.0; n / 2 + 1];
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * ((i * k) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            *p = re * re + im * im;
        }
        let mut logs = vec![0.0; n_mels];
        for (m, lg) in logs.iter_mut().enumerate() {
            let mut e = 0.0;
            for (k, &p) in power.iter().enumerate() {
                let w = weight(m, k as f64 * sr / n as f64);
                e += p * w * w;
            }
            *lg = e.max(1e-10).ln();
        }
        for m in 1..=n_mfcc {
            let mut c = 0.0;
            for (k, &lg) in logs.iter().enumerate() {
                c += lg * (m as f64 * (k as f64 + 0.5) * PI / n_mels as f64).cos();
            }
            out[m - 1][t] = c;
        }
    }
    out
}

#[test]
fn mfcc_matches_composed_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let s: Vec<f32> = (0..4000)
        .map(|i| (0.3 * (i as f64 * 0.21).sin() + rng.random_range(-0.2..0.2)) as f32)
        .collect();
    let clip = AudioClip::new(s, 44100, "mix");
    let cfg = FeatureConfig {
        kind: FeatureKind::Mfcc,
        n_mels: 40,
        n_mfcc: 13,
        ..FeatureConfig::default()
    };
    let fm = FeatureExtractor::new(cfg).unwrap().extract(&clip).unwrap();
    let oracle = naive_mfcc(&clip.samples_f64(), 40, 13, 0.97);
    assert_eq!(fm.frames, oracle[0].len());
    for (m, row) in oracle.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            assert!((fm.get(m, t) - v).abs() < 1e-8, "cell ({m},{t}): {} vs {v}", fm.get(m, t));
        }
    }
}

#[test]
fn standardizer_zero_mean_unit_variance() {
    let values: Vec<f64> = (0..20).map(|i| (i % 7) as f64 * 3.0 - 2.0).collect();
    let fm = FeatureMatrix::new(FeatureKind::MelDb, 2, 10, FrameParams::default(), 44100, values).unwrap();
    let st = Standardizer::fit([&fm]).unwrap();
    let z = st.apply(&fm).unwrap();
    for row in z.values.chunks_exact(10) {
        let mean = row.iter().sum::<f64>() / 10.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}
