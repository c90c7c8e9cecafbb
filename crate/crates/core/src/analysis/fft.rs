//! Iterative radix-2 FFT and FFT-magnitude spectral flatness.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// In-place forward DFT, `X_k = Σ x_n e^{-2πikn/N}`. `data.len()` must be a
/// power of two.
pub fn fft_in_place(data: &mut [Complex64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // direct twiddle per k keeps rounding error from accumulating
                let w = Complex64::from_polar(1.0, ang * k as f64);
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// FFT of a real signal zero-padded to the next power of two.
pub fn fft_real_padded(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len().next_power_of_two();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    fft_in_place(&mut buf);
    buf
}

/// One-sided magnitude spectrum (bins `1..=N/2`) of the mean-removed,
/// zero-padded signal. The DC bin is excluded.
pub fn magnitude_spectrum(samples: &[f64]) -> Vec<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let spec = fft_real_padded(&centered);
    let n = spec.len();
    spec[1..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Geometric over arithmetic mean of the FFT magnitudes, in `[0, 1]`.
pub fn spectral_flatness(samples: &[f64]) -> Result<f64> {
    if samples.len() < 8 {
        return Err(Error::InsufficientData {
            needed: 8,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSignal(
            "non-finite sample in spectrum input".into(),
        ));
    }
    let mags = magnitude_spectrum(samples);
    let am = mags.iter().sum::<f64>() / mags.len() as f64;
    // tiny relative floor: a constant signal leaves only rounding noise
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if am <= peak * 1e-12 || am == 0.0 {
        return Err(Error::UndefinedFlatness);
    }
    if mags.contains(&0.0) {
        return Ok(0.0);
    }
    let gm = (mags.iter().map(|m| m.ln()).sum::<f64>() / mags.len() as f64).exp();
    Ok((gm / am).clamp(0.0, 1.0))
}

/// Mean and variance of the FFT magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumSummary {
    pub mean_magnitude: f64,
    pub magnitude_variance: f64,
    pub flatness: f64,
}

pub fn spectrum_summary(samples: &[f64]) -> Result<SpectrumSummary> {
    let flatness = spectral_flatness(samples)?;
    let mags = magnitude_spectrum(samples);
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    let var = mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    Ok(SpectrumSummary {
        mean_magnitude: mean,
        magnitude_variance: var,
        flatness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n²) reference transform.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .fold(Complex64::new(0.0, 0.0), |acc, (j, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                        acc + v * Complex64::from_polar(1.0, ang)
                    })
            })
            .collect()
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<Complex64> = (0..64)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let want = naive_dft(&x);
            let mut got = x.clone();
            fft_in_place(&mut got);
            let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn sinusoid_is_not_flat() {
        let x: Vec<f64> = (0..512)
            .map(|i| (2.0 * std::f64::consts::PI * 16.0 * i as f64 / 512.0).sin())
            .collect();
        assert!(spectral_flatness(&x).unwrap() < 0.1);
    }

    #[test]
    fn undefined_and_short_inputs() {
        assert!(matches!(
            spectral_flatness(&[0.0; 16]),
            Err(Error::UndefinedFlatness)
        ));
        assert!(matches!(
            spectral_flatness(&[3.5; 300]),
            Err(Error::UndefinedFlatness)
        ));
        assert!(matches!(
            spectral_flatness(&[1.0; 4]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn white_noise_flatness_floor() {
        // 1st percentile over 1000 uniform-byte draws of 300 samples,
        // frozen from the oracle run below with ~0.02 margin.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut fs: Vec<f64> = (0..1000)
            .map(|_| {
                let x: Vec<f64> = (0..300)
                    .map(|_| rng.random_range(0..=255u8) as f64)
                    .collect();
                spectral_flatness(&x).unwrap()
            })
            .collect();
        fs.sort_by(f64::total_cmp);
        let p1 = fs[10];
        assert!(p1 > WHITE_NOISE_P1, "1st percentile {p1}");
        assert!(fs[990] < 1.0);
    }

    const WHITE_NOISE_P1: f64 = 0.79;
}
