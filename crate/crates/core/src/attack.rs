//! Noise and occlusion attacks on stored ciphertext, scored after decryption
//! with the correct key.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::quality::quality_metrics;
use crate::chaos::{derive_params, ChaoticParams};
use crate::cipher::{compute_stats, quantize, Cipher, EncryptedRecord, RecordMeta, SignalSegment};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Integer noise uniform on `[-a, a]` per byte.
    NoiseUniform,
    /// Gaussian noise with standard deviation `a`, rounded to integers.
    NoiseGaussian,
    /// A contiguous run of ciphertext bytes set to 0x00.
    Occlusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Noise amplitude in byte units, or the occluded fraction.
    pub intensity: f64,
    /// Ciphertext positions attacked. Noise defaults to everything; occlusion
    /// defaults to a seeded random placement and uses only the start.
    pub region: Option<Range<usize>>,
    pub seed: u64,
}

impl AttackConfig {
    pub fn noise(amplitude: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::NoiseUniform,
            intensity: amplitude,
            region: None,
            seed,
        }
    }

    pub fn occlusion(fraction: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::Occlusion,
            intensity: fraction,
            region: None,
            seed,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.kind {
            AttackKind::Occlusion if !(0.0..=1.0).contains(&self.intensity) => Err(Error::Domain(
                format!("occlusion fraction {} outside [0, 1]", self.intensity),
            )),
            AttackKind::NoiseUniform | AttackKind::NoiseGaussian
                if !(self.intensity >= 0.0 && self.intensity.is_finite()) =>
            {
                Err(Error::Domain(format!(
                    "noise amplitude {} must be >= 0",
                    self.intensity
                )))
            }
            _ => match &self.region {
                Some(r) if r.start > r.end || r.end > n => Err(Error::Domain(format!(
                    "region {r:?} outside ciphertext of {n} bytes"
                ))),
                _ => Ok(()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub mae: f64,
    pub mse: f64,
    /// Plaintext positions whose recovered value may be wrong, ascending.
    pub corrupted_sample_indices: Vec<usize>,
    pub dispersion: f64,
    /// Mean gap between consecutive corrupted indices (0 for fewer than two).
    pub mean_gap: f64,
}

/// Samples occluded for a fraction `f` of `n`: `⌈f·n⌉`, guarding against
/// products like `0.1 · 300` landing an ulp above an integer.
pub fn occluded_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Width of the smallest index window holding `⌈k/2⌉` of the `k` corrupted
/// positions, over `n/2`, clamped to `[0, 1]`. Near 0 for a clump, near 1 for
/// indices spread over the whole segment.
pub fn dispersion(sorted: &[usize], n: usize) -> f64 {
    let k = sorted.len();
    if k < 2 || n < 2 {
        return 0.0;
    }
    let half = k.div_ceil(2);
    let window = sorted
        .windows(half)
        .map(|w| w[half - 1] - w[0] + 1)
        .min()
        .expect("k >= 2");
    (window as f64 / (n as f64 / 2.0)).clamp(0.0, 1.0)
}

pub fn mean_gap(sorted: &[usize]) -> f64 {
    if sorted.len() < 2 {
        return 0.0;
    }
    (sorted[sorted.len() - 1] - sorted[0]) as f64 / (sorted.len() - 1) as f64
}

fn score(
    cipher: &Cipher,
    attacked: &EncryptedRecord,
    params: ChaoticParams,
    original: &SignalSegment,
    mut corrupted: Vec<usize>,
) -> Result<AttackResult> {
    let decrypted = cipher.decrypt(attacked, params, original.sample_rate)?;
    let q = quality_metrics(original, &decrypted)?;
    corrupted.sort_unstable();
    corrupted.dedup();
    let n = original.len();
    Ok(AttackResult {
        mae: q.mae,
        mse: q.mse,
        dispersion: dispersion(&corrupted, n),
        mean_gap: mean_gap(&corrupted),
        corrupted_sample_indices: corrupted,
    })
}

pub fn noise_attack(
    cipher: &Cipher,
    record: &EncryptedRecord,
    params: ChaoticParams,
    original: &SignalSegment,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let n = record.ciphertext.len();
    config.check(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let region = config.region.clone().unwrap_or(0..n);
    let mut attacked = record.clone();
    match config.kind {
        AttackKind::NoiseUniform => {
            let a = config.intensity.floor() as i64;
            for c in &mut attacked.ciphertext[region] {
                let d = rng.random_range(-a..=a);
                *c = (*c as i64 + d).clamp(0, 255) as u8;
            }
        }
        AttackKind::NoiseGaussian => {
            let normal =
                Normal::new(0.0, config.intensity).map_err(|e| Error::Domain(e.to_string()))?;
            for c in &mut attacked.ciphertext[region] {
                let d = normal.sample(&mut rng).round();
                *c = (*c as f64 + d).clamp(0.0, 255.0) as u8;
            }
        }
        AttackKind::Occlusion => {
            return Err(Error::Domain("noise_attack needs a noise kind".into()));
        }
    }
    let plain = quantize(original)?.bytes;
    let got = cipher.decrypt_bytes(&attacked, params)?;
    let corrupted = (0..n).filter(|&i| plain[i] != got[i]).collect();
    score(cipher, &attacked, params, original, corrupted)
}

pub fn occlusion_attack(
    cipher: &Cipher,
    record: &EncryptedRecord,
    params: ChaoticParams,
    original: &SignalSegment,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let n = record.ciphertext.len();
    config.check(n)?;
    if config.kind != AttackKind::Occlusion {
        return Err(Error::Domain(
            "occlusion_attack needs the occlusion kind".into(),
        ));
    }
    let k = occluded_count(config.intensity, n);
    let start = match &config.region {
        Some(r) => r.start.min(n - k),
        None => ChaCha8Rng::seed_from_u64(config.seed).random_range(0..=n - k),
    };
    let mut attacked = record.clone();
    attacked.ciphertext[start..start + k].fill(0);
    let key = cipher.derive_key_material(params, n, record.range)?;
    let corrupted = key.permutation()[start..start + k].to_vec();
    score(cipher, &attacked, params, original, corrupted)
}

/// Dispatches on the configured kind.
pub fn run_attack(
    cipher: &Cipher,
    record: &EncryptedRecord,
    params: ChaoticParams,
    original: &SignalSegment,
    config: &AttackConfig,
) -> Result<AttackResult> {
    match config.kind {
        AttackKind::Occlusion => occlusion_attack(cipher, record, params, original, config),
        _ => noise_attack(cipher, record, params, original, config),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub intensity: f64,
    pub mean_mae: f64,
    pub mean_mse: f64,
    pub mean_corrupted: f64,
    pub mean_dispersion: f64,
}

/// Corpus means of one attack kind at each intensity. Every segment is
/// encrypted with its unsalted biometric key; segment `i` uses seed
/// `seed + i`.
pub fn sweep(
    cipher: &Cipher,
    segments: &[SignalSegment],
    kind: AttackKind,
    intensities: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if segments.is_empty() {
        return Err(Error::EmptyInput);
    }
    let encrypted = par::try_map(exec, segments, |s| -> Result<_> {
        let params = derive_params(compute_stats(s)?)?;
        let (rec, _) = cipher.encrypt(s, params, RecordMeta::default())?;
        Ok((rec, params))
    })?;
    intensities
        .iter()
        .map(|&intensity| {
            let results = par::try_map_indexed(exec, segments, |i, s| {
                let cfg = AttackConfig {
                    kind,
                    intensity,
                    region: None,
                    seed: seed.wrapping_add(i as u64),
                };
                let (rec, params) = &encrypted[i];
                run_attack(cipher, rec, *params, s, &cfg)
            })?;
            let m = |f: fn(&AttackResult) -> f64| {
                results.iter().map(f).sum::<f64>() / results.len() as f64
            };
            Ok(SweepRow {
                intensity,
                mean_mae: m(|r| r.mae),
                mean_mse: m(|r| r.mse),
                mean_corrupted: m(|r| r.corrupted_sample_indices.len() as f64),
                mean_dispersion: m(|r| r.dispersion),
            })
        })
        .collect()
}

/// Tab-separated sweep table with a header row.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("intensity\tmae\tmse\tcorrupted\tdispersion\n");
    for r in rows {
        out.push_str(&format!(
            "{:?}\t{:?}\t{:?}\t{:?}\t{:?}\n",
            r.intensity, r.mean_mae, r.mean_mse, r.mean_corrupted, r.mean_dispersion
        ));
    }
    out
}
