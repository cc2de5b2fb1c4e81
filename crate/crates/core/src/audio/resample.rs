//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

/// Kernel length in input samples at unity ratio.
pub const TAPS: usize = 64;
/// Kaiser shape parameter.
pub const KAISER_BETA: f64 = 8.6;

/// Zeroth-order modified Bessel function of the first kind, by its power
/// series.
fn bessel_i0(x: f64) -> f64 {
    let q = (x / 2.0) * (x / 2.0);
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn kaiser(t: f64, beta: f64) -> f64 {
    if t.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - t * t).sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Resamples `input` from `from_hz` to `to_hz`. The output has
/// `round(len * to / from)` samples. When downsampling, the kernel cutoff
/// moves to the new Nyquist frequency and its support widens to match.
pub fn resample(input: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to_hz as f64 / from_hz as f64;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let half = TAPS as f64 / 2.0 / cutoff;
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let pos = j as f64 / ratio;
        let lo = (pos - half).ceil() as i64;
        let hi = (pos + half).floor() as i64;
        let (mut acc, mut norm) = (0.0, 0.0);
        for i in lo..=hi {
            let d = pos - i as f64;
            let w = cutoff * sinc(cutoff * d) * kaiser(d / half, KAISER_BETA);
            norm += w;
            if i >= 0 && (i as usize) < input.len() {
                acc += w * input[i as usize];
            }
        }
        out.push(if norm != 0.0 { acc / norm } else { 0.0 });
    }
    out
}
