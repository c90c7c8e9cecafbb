//! Reconstruction quality and sensitivity (avalanche) measurements.

use serde::{Deserialize, Serialize};

use crate::chaos::{apply_salt, derive_params, ChaoticParams, KeySalt};
use crate::cipher::{compute_stats, quantize, Cipher, RecordMeta, SignalSegment};
use crate::error::{Error, Result};

use super::stats::{bytes_as_f64, pearson_correlation};

/// MSE, PSNR and MAE on `[0, 1]`-normalized signals (peak 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub mse: f64,
    /// `10·log10(1/mse)`; `+∞` when the signals are identical.
    #[serde(with = "crate::analysis::report::float_or_sentinel")]
    pub psnr_db: f64,
    pub mae: f64,
}

impl QualityMetrics {
    pub fn from_normalized(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape {
                expected: a.len(),
                got: b.len(),
            });
        }
        if a.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = a.len() as f64;
        let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
        let mae = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
        Ok(Self {
            mse,
            psnr_db: psnr_from_mse(mse),
            mae,
        })
    }

    /// Aggregate from already-averaged MSE and MAE; PSNR follows the mean MSE.
    pub fn from_means(mse: f64, mae: f64) -> Self {
        Self {
            mse,
            psnr_db: psnr_from_mse(mse),
            mae,
        }
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Both signals are normalized with the original's range before comparison.
pub fn quality_metrics(
    original: &SignalSegment,
    decrypted: &SignalSegment,
) -> Result<QualityMetrics> {
    if original.len() != decrypted.len() {
        return Err(Error::Shape {
            expected: original.len(),
            got: decrypted.len(),
        });
    }
    let range = original.range();
    QualityMetrics::from_normalized(
        &range.normalize_all(&original.samples),
        &range.normalize_all(&decrypted.samples),
    )
}

/// Largest absolute per-position byte difference.
pub fn max_byte_diff(a: &[u8], b: &[u8]) -> u8 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.abs_diff(*y))
        .max()
        .unwrap_or(0)
}

/// Fraction of positions whose bytes differ.
pub fn byte_change_rate(a: &[u8], b: &[u8]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// Damage from decrypting with one perturbed key coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyTweak {
    pub max_byte_diff: u8,
    /// Pearson correlation of the wrongly decrypted bytes with the true
    /// plaintext bytes (1.0 when decryption is exact).
    pub correlation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeySensitivity {
    pub r_tweak: KeyTweak,
    pub x0_tweak: KeyTweak,
}

impl KeySensitivity {
    pub fn max_byte_diff(&self) -> u8 {
        self.r_tweak.max_byte_diff.max(self.x0_tweak.max_byte_diff)
    }

    /// The correlation with the larger magnitude of the two tweaks.
    pub fn worst_correlation(&self) -> f64 {
        if self.r_tweak.correlation.abs() >= self.x0_tweak.correlation.abs() {
            self.r_tweak.correlation
        } else {
            self.x0_tweak.correlation
        }
    }
}

/// Encrypts with `params`, then decrypts with `(r+δ, x0)` and `(r, x0+δ)`.
pub fn key_sensitivity_test(
    cipher: &Cipher,
    segment: &SignalSegment,
    params: ChaoticParams,
    delta: f64,
) -> Result<KeySensitivity> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "key delta must be non-negative: {delta}"
        )));
    }
    let plain = quantize(segment)?.bytes;
    let (record, _) = cipher.encrypt(segment, params, RecordMeta::default())?;
    let tweak = |r: f64, x0: f64| -> Result<KeyTweak> {
        let wrong = ChaoticParams::new(r, x0)?;
        let got = cipher.decrypt_bytes(&record, wrong)?;
        let correlation = match pearson_correlation(&bytes_as_f64(&plain), &bytes_as_f64(&got)) {
            Ok(c) => c,
            Err(Error::UndefinedCorrelation) if got == plain => 1.0,
            Err(Error::UndefinedCorrelation) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(KeyTweak {
            max_byte_diff: max_byte_diff(&plain, &got),
            correlation,
        })
    };
    Ok(KeySensitivity {
        r_tweak: tweak(params.r() + delta, params.x0())?,
        x0_tweak: tweak(params.r(), params.x0() + delta)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaintextSensitivity {
    pub max_byte_diff: u8,
    pub byte_change_rate: f64,
}

/// Adds `flip_amount` to one sample, re-derives the biometric key for the
/// modified segment and compares the two ciphertexts position by position.
pub fn plaintext_sensitivity_test(
    cipher: &Cipher,
    segment: &SignalSegment,
    salt: Option<&KeySalt>,
    flip_index: usize,
    flip_amount: f64,
) -> Result<PlaintextSensitivity> {
    if flip_index >= segment.len() {
        return Err(Error::Domain(format!(
            "flip index {flip_index} outside segment of {}",
            segment.len()
        )));
    }
    let key_for = |s: &SignalSegment| -> Result<ChaoticParams> {
        let p = derive_params(compute_stats(s)?)?;
        Ok(salt.map_or(p, |salt| apply_salt(p, salt)))
    };
    let mut modified = segment.clone();
    modified.samples[flip_index] += flip_amount;
    let (a, _) = cipher.encrypt(segment, key_for(segment)?, RecordMeta::default())?;
    let (b, _) = cipher.encrypt(&modified, key_for(&modified)?, RecordMeta::default())?;
    Ok(PlaintextSensitivity {
        max_byte_diff: max_byte_diff(&a.ciphertext, &b.ciphertext),
        byte_change_rate: byte_change_rate(&a.ciphertext, &b.ciphertext),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(n: usize) -> SignalSegment {
        SignalSegment::new(
            (0..n).map(|i| ((i * 37) % 101) as f64 / 50.0).collect(),
            500.0,
        )
        .unwrap()
    }

    #[test]
    fn identical_signals() {
        let s = ramp(64);
        let q = quality_metrics(&s, &s).unwrap();
        assert_eq!((q.mse, q.mae), (0.0, 0.0));
        assert!(q.psnr_db.is_infinite() && q.psnr_db > 0.0);
    }

    #[test]
    fn psnr_matches_mse() {
        assert_abs_diff_eq!(psnr_from_mse(5e-6), 10.0 * 2e5f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(psnr_from_mse(5e-6), 53.01, epsilon = 0.01);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            quality_metrics(&ramp(10), &ramp(11)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_delta_recovers_exactly() {
        let s = ramp(300);
        let p = derive_params(compute_stats(&s).unwrap()).unwrap();
        let k = key_sensitivity_test(&Cipher::default(), &s, p, 0.0).unwrap();
        assert_eq!(k.max_byte_diff(), 0);
        assert_eq!(k.worst_correlation(), 1.0);
    }

    #[test]
    fn zero_flip_is_identical() {
        let s = ramp(300);
        let r = plaintext_sensitivity_test(&Cipher::default(), &s, None, 17, 0.0).unwrap();
        assert_eq!(r.max_byte_diff, 0);
        assert_eq!(r.byte_change_rate, 0.0);
        assert!(plaintext_sensitivity_test(&Cipher::default(), &s, None, 300, 1.0).is_err());
    }

    #[test]
    fn byte_helpers() {
        assert_eq!(max_byte_diff(&[0, 10, 255], &[255, 10, 0]), 255);
        assert_abs_diff_eq!(byte_change_rate(&[1, 2, 3, 4], &[1, 0, 3, 0]), 0.5);
    }
}
