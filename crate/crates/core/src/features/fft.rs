//! Discrete Fourier transform of real frames.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bins `0..=N/2` of the DFT of a real frame whose length is a power of
/// two, via an iterative radix-2 Cooley-Tukey transform.
pub fn rfft(frame: &[f64]) -> Result<Vec<Complex64>> {
    let n = frame.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "FFT length {n} is not a power of two"
        )));
    }
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * std::f64::consts::PI / len as f64;
        // exact twiddles per stage instead of a running product
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Direct evaluation of `X_k = sum_n x_n exp(-j 2 pi n k / N)` for
/// `k = 0..=N/2`. Any length; O(N^2).
pub fn dft_naive(frame: &[f64]) -> Vec<Complex64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            frame
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    // reduce n*k mod N first to keep the angle small
                    let phase = ((i * k) % n) as f64 / n as f64;
                    x * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase)
                })
                .sum()
        })
        .collect()
}

/// `|X_k|^2` for `k = 0..=N/2`.
pub fn power_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    Ok(rfft(frame)?.iter().map(|c| c.norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        for c in rfft(&x).unwrap() {
            assert_eq!(c, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn cosine_concentrates_in_its_bin() {
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 4.0 * i as f64 / n as f64).cos())
            .collect();
        let p = power_spectrum(&x).unwrap();
        assert!((p[4] - 1024.0).abs() < 1e-9);
        for (k, &v) in p.iter().enumerate() {
            if k != 4 {
                assert!(v < 1e-18, "bin {k}: {v}");
            }
        }
    }

    #[test]
    fn fft_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 8, 256, 1024] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = rfft(&x).unwrap();
            let slow = dft_naive(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(rfft(&[0.0; 12]).is_err());
        assert!(rfft(&[]).is_err());
    }
}
