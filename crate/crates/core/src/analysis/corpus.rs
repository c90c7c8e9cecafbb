//! Corpus-level run of the whole battery: each segment is encrypted with its
//! own biometric key, analyzed independently, and the results are reduced
//! into one [`CorpusReport`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chaos::{apply_salt, derive_params, ChaoticParams, KeySalt};
use crate::cipher::{compute_stats, quantize, Cipher, RecordMeta, SignalSegment};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

use super::fft::{spectral_flatness, spectrum_summary, SpectrumSummary};
use super::quality::{
    key_sensitivity_test, plaintext_sensitivity_test, quality_metrics, KeySensitivity,
    PlaintextSensitivity, QualityMetrics,
};
use super::report::{AnalysisReport, Timing};
use super::stats::{
    autocorrelation, bytes_as_f64, empirical_key_space_bits, histogram_distance,
    histogram_stats_from, key_space_bits, min_entropy_mcv, min_entropy_mcv_blocks, monobit_test,
    pearson_correlation, shannon_entropy, Histogram256, HistogramDistance, HistogramStats,
    MinEntropySummary, MONOBIT_ALPHA,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub cipher: Cipher,
    pub max_lag: usize,
    pub key_delta: f64,
    /// Mixed into every segment key when present.
    pub salt: Option<KeySalt>,
    /// Plaintext perturbation; `None` means one quantization step of the
    /// segment's own range.
    pub flip_amount: Option<f64>,
    /// Resolution of the analytic key-space figure.
    pub key_resolution: f64,
    pub exec: Execution,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            cipher: Cipher::default(),
            max_lag: 50,
            key_delta: 1e-10,
            salt: None,
            flip_amount: None,
            key_resolution: 0.01,
            exec: Execution::default(),
        }
    }
}

/// Everything measured on one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnalysis {
    pub index: usize,
    pub r: f64,
    pub x0: f64,
    pub entropy_bits: f64,
    pub plain_entropy_bits: f64,
    pub monobit_p_value: f64,
    pub plain_monobit_p_value: f64,
    /// Normalized plaintext samples against ciphertext bytes.
    pub pearson_correlation: f64,
    pub autocorrelation: Vec<f64>,
    pub autocorrelation_lag0_raw: f64,
    pub spectrum: SpectrumSummary,
    /// `None` for a constant segment.
    pub plain_spectral_flatness: Option<f64>,
    pub min_entropy_bits: f64,
    pub quality: QualityMetrics,
    pub key_sensitivity: KeySensitivity,
    pub plaintext_sensitivity: PlaintextSensitivity,
    pub encrypt_seconds: f64,
    pub decrypt_seconds: f64,
}

impl SegmentAnalysis {
    pub fn max_abs_autocorrelation(&self) -> f64 {
        self.autocorrelation[1..]
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// The same statistics for the unencrypted, quantized corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainSummary {
    pub shannon_entropy_bits: f64,
    pub monobit_p_value: f64,
    pub histogram_stats: HistogramStats,
    pub mean_spectral_flatness: f64,
}

/// Relative change (percent) of each histogram statistic, encrypted vs plain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramShift {
    pub variance_pct: f64,
    pub std_dev_pct: f64,
    pub entropy_pct: f64,
    pub uniformity_pct: f64,
}

impl HistogramShift {
    pub fn between(plain: &HistogramStats, enc: &HistogramStats) -> Self {
        let pct = |a: f64, b: f64| if a == 0.0 { 0.0 } else { (b - a) / a * 100.0 };
        Self {
            variance_pct: pct(plain.variance, enc.variance),
            std_dev_pct: pct(plain.std_dev, enc.std_dev),
            entropy_pct: pct(plain.entropy, enc.entropy),
            uniformity_pct: pct(plain.uniformity, enc.uniformity),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub mean_abs: f64,
    pub mean_signed: f64,
    pub max_abs: f64,
    /// Pearson over all segments concatenated.
    pub pooled: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub key_max_byte_diff: u8,
    pub key_mean_abs_correlation: f64,
    pub plaintext_max_byte_diff: u8,
    pub plaintext_mean_change_rate: f64,
    pub plaintext_min_change_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeySpaceSummary {
    pub resolution: f64,
    pub analytic_bits: f64,
    pub empirical_bits: f64,
    pub distinct_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub encrypted: AnalysisReport,
    pub plain: PlainSummary,
    pub histogram_shift: HistogramShift,
    pub correlation: CorrelationSummary,
    pub sensitivity: SensitivitySummary,
    pub min_entropy: MinEntropySummary,
    pub key_space: KeySpaceSummary,
    pub encrypted_histogram: Vec<u64>,
    pub plain_histogram: Vec<u64>,
    pub segments: Vec<SegmentAnalysis>,
}

impl CorpusReport {
    /// Fraction of segments satisfying `pred`.
    pub fn fraction(&self, pred: impl Fn(&SegmentAnalysis) -> bool) -> f64 {
        self.segments.iter().filter(|s| pred(s)).count() as f64 / self.segments.len() as f64
    }

    pub fn encrypted_histogram(&self) -> Histogram256 {
        Histogram256::from_counts(&self.encrypted_histogram)
    }
}

struct Work {
    analysis: SegmentAnalysis,
    plain: Vec<u8>,
    cipher: Vec<u8>,
    normalized: Vec<f64>,
    params: ChaoticParams,
}

fn analyze_one(
    index: usize,
    seg: &SignalSegment,
    key: Option<ChaoticParams>,
    cfg: &CorpusConfig,
) -> Result<Work> {
    seg.validate()?;
    let t0 = Instant::now();
    let params = match key {
        Some(k) => k,
        None => {
            let p = derive_params(compute_stats(seg)?)?;
            cfg.salt.as_ref().map_or(p, |salt| apply_salt(p, salt))
        }
    };
    let (record, _) = cfg.cipher.encrypt(seg, params, RecordMeta::default())?;
    let encrypt_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let decrypted = cfg.cipher.decrypt(&record, params, seg.sample_rate)?;
    let decrypt_seconds = t1.elapsed().as_secs_f64();

    let plain = quantize(seg)?.bytes;
    let ct = &record.ciphertext;
    let normalized = seg.normalized();
    let ac = autocorrelation(ct, cfg.max_lag)?;
    let flip = cfg
        .flip_amount
        .unwrap_or_else(|| seg.range().width() / 255.0);
    let analysis = SegmentAnalysis {
        index,
        r: params.r(),
        x0: params.x0(),
        entropy_bits: shannon_entropy(ct)?,
        plain_entropy_bits: shannon_entropy(&plain)?,
        monobit_p_value: monobit_test(ct)?.p_value,
        plain_monobit_p_value: monobit_test(&plain)?.p_value,
        pearson_correlation: correlation_or_zero(&normalized, &bytes_as_f64(ct))?,
        autocorrelation: ac.normalized,
        autocorrelation_lag0_raw: ac.lag0_raw,
        spectrum: spectrum_summary(&bytes_as_f64(ct))?,
        plain_spectral_flatness: match spectral_flatness(&seg.samples) {
            Ok(f) => Some(f),
            Err(Error::UndefinedFlatness) => None,
            Err(e) => return Err(e),
        },
        min_entropy_bits: min_entropy_mcv(ct)?,
        quality: quality_metrics(seg, &decrypted)?,
        key_sensitivity: key_sensitivity_test(&cfg.cipher, seg, params, cfg.key_delta)?,
        plaintext_sensitivity: plaintext_sensitivity_test(
            &cfg.cipher,
            seg,
            cfg.salt.as_ref(),
            seg.len() / 2,
            flip,
        )?,
        encrypt_seconds,
        decrypt_seconds,
    };
    Ok(Work {
        analysis,
        plain,
        cipher: record.ciphertext,
        normalized,
        params,
    })
}

/// A constant plaintext has no defined correlation; it is reported as 0.
fn correlation_or_zero(a: &[f64], b: &[f64]) -> Result<f64> {
    match pearson_correlation(a, b) {
        Err(Error::UndefinedCorrelation) => Ok(0.0),
        other => other,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn analyze_corpus(segments: &[SignalSegment], cfg: &CorpusConfig) -> Result<CorpusReport> {
    if segments.is_empty() {
        return Err(Error::EmptyInput);
    }
    let work = par::try_map_indexed(cfg.exec, segments, |i, s| analyze_one(i, s, None, cfg))?;
    summarize(work, cfg)
}

/// Same battery, but segment `i` is encrypted with `keys[i]` instead of its
/// derived key. Used for stored records whose keys came from a salt or a
/// model; `cfg.salt` then only affects the plaintext-sensitivity re-keying.
pub fn analyze_corpus_with_keys(
    segments: &[SignalSegment],
    keys: &[ChaoticParams],
    cfg: &CorpusConfig,
) -> Result<CorpusReport> {
    if segments.is_empty() {
        return Err(Error::EmptyInput);
    }
    if keys.len() != segments.len() {
        return Err(Error::Shape {
            expected: segments.len(),
            got: keys.len(),
        });
    }
    let work = par::try_map_indexed(cfg.exec, segments, |i, s| {
        analyze_one(i, s, Some(keys[i]), cfg)
    })?;
    summarize(work, cfg)
}

fn summarize(work: Vec<Work>, cfg: &CorpusConfig) -> Result<CorpusReport> {
    // exact counts so the reduction is order-independent
    let mut enc_hist = Histogram256::default();
    let mut plain_hist = Histogram256::default();
    let mut enc_all = Vec::new();
    let mut plain_all = Vec::new();
    let mut norm_all = Vec::new();
    for w in &work {
        enc_hist.add(&w.cipher);
        plain_hist.add(&w.plain);
        enc_all.extend_from_slice(&w.cipher);
        plain_all.extend_from_slice(&w.plain);
        norm_all.extend_from_slice(&w.normalized);
    }
    let seg: Vec<&SegmentAnalysis> = work.iter().map(|w| &w.analysis).collect();
    let n_lags = cfg.max_lag + 1;
    let autocorrelation = (0..n_lags)
        .map(|k| mean(seg.iter().map(|s| s.autocorrelation[k])))
        .collect();
    let mean_mse = mean(seg.iter().map(|s| s.quality.mse));
    let enc_stats = histogram_stats_from(&enc_hist)?;
    let monobit = monobit_test(&enc_all)?;
    let encrypted = AnalysisReport {
        segments: seg.len(),
        bytes: enc_all.len(),
        shannon_entropy_bits: enc_hist.entropy_bits(),
        monobit_p_value: monobit.p_value,
        monobit_passed: monobit.passed(MONOBIT_ALPHA),
        pearson_correlation: mean(seg.iter().map(|s| s.pearson_correlation)),
        autocorrelation,
        autocorrelation_lag0_raw: mean(seg.iter().map(|s| s.autocorrelation_lag0_raw)),
        histogram_stats: enc_stats,
        spectral_flatness: mean(seg.iter().map(|s| s.spectrum.flatness)),
        spectrum: SpectrumSummary {
            mean_magnitude: mean(seg.iter().map(|s| s.spectrum.mean_magnitude)),
            magnitude_variance: mean(seg.iter().map(|s| s.spectrum.magnitude_variance)),
            flatness: mean(seg.iter().map(|s| s.spectrum.flatness)),
        },
        min_entropy_bits: min_entropy_mcv(&enc_all)?,
        min_entropy_block_bits: min_entropy_mcv_blocks(&enc_all)?,
        quality: QualityMetrics::from_means(mean_mse, mean(seg.iter().map(|s| s.quality.mae))),
        timing: Timing {
            encrypt_seconds: mean(seg.iter().map(|s| s.encrypt_seconds)),
            decrypt_seconds: mean(seg.iter().map(|s| s.decrypt_seconds)),
        },
    };

    let plain_stats = histogram_stats_from(&plain_hist)?;
    let plain = PlainSummary {
        shannon_entropy_bits: plain_hist.entropy_bits(),
        monobit_p_value: monobit_test(&plain_all)?.p_value,
        histogram_stats: plain_stats,
        mean_spectral_flatness: mean(seg.iter().filter_map(|s| s.plain_spectral_flatness)),
    };

    let correlation = CorrelationSummary {
        mean_abs: mean(seg.iter().map(|s| s.pearson_correlation.abs())),
        mean_signed: encrypted.pearson_correlation,
        max_abs: seg
            .iter()
            .fold(0.0, |m, s| m.max(s.pearson_correlation.abs())),
        pooled: correlation_or_zero(&norm_all, &bytes_as_f64(&enc_all))?,
    };

    let rates: Vec<f64> = seg
        .iter()
        .map(|s| s.plaintext_sensitivity.byte_change_rate)
        .collect();
    let sensitivity = SensitivitySummary {
        key_max_byte_diff: seg
            .iter()
            .map(|s| s.key_sensitivity.max_byte_diff())
            .max()
            .unwrap_or(0),
        key_mean_abs_correlation: mean(
            seg.iter()
                .map(|s| s.key_sensitivity.worst_correlation().abs()),
        ),
        plaintext_max_byte_diff: seg
            .iter()
            .map(|s| s.plaintext_sensitivity.max_byte_diff)
            .max()
            .unwrap_or(0),
        plaintext_mean_change_rate: mean(rates.iter().copied()),
        plaintext_min_change_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
    };

    let params: Vec<ChaoticParams> = work.iter().map(|w| w.params).collect();
    let distinct = {
        let mut bits: Vec<(u64, u64)> = params
            .iter()
            .map(|p| (p.r().to_bits(), p.x0().to_bits()))
            .collect();
        bits.sort_unstable();
        bits.dedup();
        bits.len()
    };
    let key_space = KeySpaceSummary {
        resolution: cfg.key_resolution,
        analytic_bits: key_space_bits(cfg.key_resolution, cfg.key_resolution)?,
        empirical_bits: empirical_key_space_bits(&params, cfg.key_resolution)?,
        distinct_fraction: distinct as f64 / params.len() as f64,
    };

    Ok(CorpusReport {
        histogram_shift: HistogramShift::between(
            &plain.histogram_stats,
            &encrypted.histogram_stats,
        ),
        min_entropy: MinEntropySummary::from_bounds(
            seg.iter().map(|s| s.min_entropy_bits).collect(),
        )?,
        encrypted,
        plain,
        correlation,
        sensitivity,
        key_space,
        encrypted_histogram: enc_hist.counts.clone(),
        plain_histogram: plain_hist.counts.clone(),
        segments: work.into_iter().map(|w| w.analysis).collect(),
    })
}

/// Histogram distance between the concatenated ciphertexts of two corpora.
pub fn compare_ciphertexts(a: &[Vec<u8>], b: &[Vec<u8>]) -> Result<HistogramDistance> {
    let hist = |xs: &[Vec<u8>]| {
        let mut h = Histogram256::default();
        xs.iter().for_each(|c| h.add(c));
        h
    };
    histogram_distance(&hist(a), &hist(b))
}
