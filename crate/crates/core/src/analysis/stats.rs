//! Byte-level randomness statistics.

use serde::{Deserialize, Serialize};

use crate::chaos::{ChaoticParams, R_SPAN, X0_SPAN};
use crate::error::{Error, Result};

/// Exact 256-bin byte histogram. Merging is order-independent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram256 {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self {
            counts: vec![0; 256],
            total: 0,
        }
    }
}

impl Histogram256 {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut h = Self::default();
        h.add(bytes);
        h
    }

    /// Panics unless `counts` has exactly 256 entries.
    pub fn from_counts(counts: &[u64]) -> Self {
        assert_eq!(counts.len(), 256, "histogram needs 256 bins");
        Self {
            counts: counts.to_vec(),
            total: counts.iter().sum(),
        }
    }

    pub fn add(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.counts[b as usize] += 1;
        }
        self.total += bytes.len() as u64;
    }

    pub fn merge(&mut self, other: &Histogram256) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_of(&self.frequencies())
    }
}

fn entropy_of(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Shannon entropy of the empirical byte distribution, in bits (0..=8).
pub fn shannon_entropy(bytes: &[u8]) -> Result<f64> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Histogram256::from_bytes(bytes).entropy_bits().max(0.0))
}

/// Outcome of the frequency (monobit) test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonobitResult {
    pub n_bits: u64,
    pub sum: i64,
    pub p_value: f64,
}

impl MonobitResult {
    pub fn passed(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

pub const MONOBIT_ALPHA: f64 = 0.01;

/// Frequency test over bits taken most-significant-first from each byte.
pub fn monobit_test(bytes: &[u8]) -> Result<MonobitResult> {
    monobit_bits(
        bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1 == 1)),
    )
}

/// Frequency test over an explicit bit stream; needs at least 100 bits.
pub fn monobit_bits(bits: impl IntoIterator<Item = bool>) -> Result<MonobitResult> {
    let (mut n, mut s) = (0u64, 0i64);
    for b in bits {
        n += 1;
        s += if b { 1 } else { -1 };
    }
    if n < 100 {
        return Err(Error::InsufficientData {
            needed: 100,
            got: n as usize,
        });
    }
    let stat = s.unsigned_abs() as f64 / (2.0 * n as f64).sqrt();
    Ok(MonobitResult {
        n_bits: n,
        sum: s,
        p_value: libm::erfc(stat).clamp(0.0, 1.0),
    })
}

/// Pearson product-moment correlation.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn bytes_as_f64(bytes: &[u8]) -> Vec<f64> {
    bytes.iter().map(|&b| b as f64).collect()
}

/// Autocorrelation of the mean-removed sequence for lags `0..=max_lag`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    /// `rho[k] = c(k)/c(0)`, so `rho[0] == 1`.
    pub normalized: Vec<f64>,
    /// Unnormalized lag-0 autocovariance `c(0)` (the byte variance).
    pub lag0_raw: f64,
}

impl Autocorrelation {
    /// Largest `|rho(k)|` over `1..=max_lag`.
    pub fn max_abs_nonzero_lag(&self) -> f64 {
        self.normalized[1..].iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// `c(k) = (1/n) Σ_{i<n-k} (x_i − x̄)(x_{i+k} − x̄)`.
pub fn autocorrelation(bytes: &[u8], max_lag: usize) -> Result<Autocorrelation> {
    if max_lag == 0 {
        return Err(Error::Domain("max_lag must be positive".into()));
    }
    if bytes.len() <= max_lag {
        return Err(Error::InsufficientData {
            needed: max_lag + 1,
            got: bytes.len(),
        });
    }
    let n = bytes.len() as f64;
    let mean = bytes.iter().map(|&b| b as f64).sum::<f64>() / n;
    let x: Vec<f64> = bytes.iter().map(|&b| b as f64 - mean).collect();
    let c = |k: usize| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n;
    let c0 = c(0);
    if c0 == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let normalized = (0..=max_lag)
        .map(|k| if k == 0 { 1.0 } else { c(k) / c0 })
        .collect();
    Ok(Autocorrelation {
        normalized,
        lag0_raw: c0,
    })
}

/// Distribution-shape statistics of a byte sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub variance: f64,
    pub std_dev: f64,
    pub entropy: f64,
    /// `1 − JSD(empirical ‖ uniform)`; 1 for a perfectly flat histogram.
    pub uniformity: f64,
}

pub fn histogram_stats(bytes: &[u8]) -> Result<HistogramStats> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = bytes.len() as f64;
    let mean = bytes.iter().map(|&b| b as f64).sum::<f64>() / n;
    let variance = bytes
        .iter()
        .map(|&b| (b as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(stats_from_histogram(
        &Histogram256::from_bytes(bytes),
        variance,
    ))
}

/// Same statistics computed from an exact histogram, so corpus results do
/// not depend on reduction order.
pub fn histogram_stats_from(h: &Histogram256) -> Result<HistogramStats> {
    if h.total == 0 {
        return Err(Error::EmptyInput);
    }
    let (mut s1, mut s2) = (0u128, 0u128);
    for (v, &c) in h.counts.iter().enumerate() {
        s1 += v as u128 * c as u128;
        s2 += (v * v) as u128 * c as u128;
    }
    let n = h.total as f64;
    let mean = s1 as f64 / n;
    let variance = (s2 as f64 / n - mean * mean).max(0.0);
    Ok(stats_from_histogram(h, variance))
}

fn stats_from_histogram(h: &Histogram256, variance: f64) -> HistogramStats {
    let p = h.frequencies();
    let uniform = vec![1.0 / 256.0; 256];
    HistogramStats {
        variance,
        std_dev: variance.sqrt(),
        entropy: entropy_of(&p).max(0.0),
        uniformity: (1.0 - js_divergence(&p, &uniform)).clamp(0.0, 1.0),
    }
}

/// Jensen-Shannon divergence in bits, in `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / y).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramDistance {
    /// Symmetric chi-squared distance on normalized frequencies,
    /// `Σ (p−q)²/(p+q)`, in `[0, 2]`.
    pub chi_squared: f64,
    pub js_divergence: f64,
}

pub fn histogram_distance(h1: &Histogram256, h2: &Histogram256) -> Result<HistogramDistance> {
    if h1.total == 0 || h2.total == 0 {
        return Err(Error::EmptyInput);
    }
    let (p, q) = (h1.frequencies(), h2.frequencies());
    let chi_squared = p
        .iter()
        .zip(&q)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| (a - b).powi(2) / (a + b))
        .sum();
    Ok(HistogramDistance {
        chi_squared,
        js_divergence: js_divergence(&p, &q),
    })
}

/// Upper confidence multiplier of the most-common-value estimator.
const MCV_Z: f64 = 2.576;

fn mcv_bound(max_count: u64, n: u64) -> f64 {
    let n_f = n as f64;
    let p_hat = max_count as f64 / n_f;
    let p_u = (p_hat + MCV_Z * (p_hat * (1.0 - p_hat) / (n_f - 1.0)).sqrt()).min(1.0);
    -p_u.log2()
}

/// Most-common-value min-entropy lower bound, bits per byte.
pub fn min_entropy_mcv(bytes: &[u8]) -> Result<f64> {
    if bytes.len() < 256 {
        return Err(Error::InsufficientData {
            needed: 256,
            got: bytes.len(),
        });
    }
    let h = Histogram256::from_bytes(bytes);
    let max = *h.counts.iter().max().expect("256 bins");
    Ok(mcv_bound(max, h.total).max(0.0))
}

/// Supplementary variant: the MCV bound over non-overlapping 2-byte blocks,
/// reported per byte. Captures dependence between adjacent bytes that the
/// plain estimator ignores.
pub fn min_entropy_mcv_blocks(bytes: &[u8]) -> Result<f64> {
    if bytes.len() < 256 {
        return Err(Error::InsufficientData {
            needed: 256,
            got: bytes.len(),
        });
    }
    let mut counts = vec![0u64; 1 << 16];
    let blocks = bytes.len() / 2;
    for pair in bytes.chunks_exact(2) {
        counts[(pair[0] as usize) << 8 | pair[1] as usize] += 1;
    }
    let max = *counts.iter().max().expect("non-empty");
    Ok((mcv_bound(max, blocks as u64) / 2.0).max(0.0))
}

/// Distribution of per-segment min-entropy lower bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEntropySummary {
    pub bounds: Vec<f64>,
    pub median: f64,
    pub iqr: f64,
    pub p5: f64,
    pub p95: f64,
}

impl MinEntropySummary {
    pub fn from_bounds(mut bounds: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sorted = bounds.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| percentile_sorted(&sorted, p);
        let s = Self {
            median: q(50.0),
            iqr: q(75.0) - q(25.0),
            p5: q(5.0),
            p95: q(95.0),
            bounds: std::mem::take(&mut bounds),
        };
        Ok(s)
    }
}

/// Linear-interpolation percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `log2((0.4/res_r)·(0.8/res_x0))`.
pub fn key_space_bits(res_r: f64, res_x0: f64) -> Result<f64> {
    if !(res_r > 0.0 && res_x0 > 0.0) || !res_r.is_finite() || !res_x0.is_finite() {
        return Err(Error::Domain(format!(
            "resolutions must be positive: {res_r}, {res_x0}"
        )));
    }
    Ok((R_SPAN / res_r * (X0_SPAN / res_x0)).log2())
}

/// `log2` of the number of distinct observed `(r, x0)` cells at the given
/// quantization step.
pub fn empirical_key_space_bits(observed: &[ChaoticParams], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!(
            "quantization step must be positive: {step}"
        )));
    }
    if observed.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cells: std::collections::HashSet<(i64, i64)> = observed
        .iter()
        .map(|p| {
            (
                (p.r() / step).floor() as i64,
                (p.x0() / step).floor() as i64,
            )
        })
        .collect();
    Ok((cells.len() as f64).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_extremes() {
        assert_eq!(shannon_entropy(&[7; 1000]).unwrap(), 0.0);
        let all: Vec<u8> = (0..=255).collect();
        assert_abs_diff_eq!(shannon_entropy(&all).unwrap(), 8.0, epsilon = 1e-12);
        assert!(matches!(shannon_entropy(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn monobit_known_vectors() {
        // 0x55 = 01010101: perfectly balanced
        let r = monobit_test(&[0x55; 16]).unwrap();
        assert_eq!(r.sum, 0);
        assert_eq!(r.p_value, 1.0);
        let ones = monobit_test(&[0xff; 16]).unwrap();
        assert_eq!(ones.n_bits, 128);
        assert!(ones.p_value < 1e-10 && !ones.passed(MONOBIT_ALPHA));
        assert!(matches!(
            monobit_test(&[0; 12]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn monobit_reference_example() {
        // 100-bit worked example from the frequency-test documentation
        let s = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
        let r = monobit_bits(s.chars().map(|c| c == '1')).unwrap();
        assert_eq!(r.sum, -16);
        assert_abs_diff_eq!(r.p_value, 0.109599, epsilon = 1e-6);
    }

    #[test]
    fn monobit_msb_first_order() {
        // 100 bits: 0x80 then zeros, the leading bit must count as a one
        let mut v = vec![0u8; 13];
        v[0] = 0x80;
        let r = monobit_test(&v).unwrap();
        assert_eq!(r.sum, -102);
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 4.0, 7.0];
        assert_abs_diff_eq!(pearson_correlation(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        let z = [-1.5, 0.5, 2.0, -1.0];
        let nz: Vec<f64> = z.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(pearson_correlation(&z, &nz).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(pearson_correlation(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn white_noise_autocorrelation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bytes = vec![0u8; 4096];
        rng.fill_bytes(&mut bytes);
        let ac = autocorrelation(&bytes, 100).unwrap();
        assert_eq!(ac.normalized[0], 1.0);
        let bound = 3.0 / (bytes.len() as f64).sqrt();
        let inside = ac.normalized[1..]
            .iter()
            .filter(|r| r.abs() < bound)
            .count();
        assert!(inside as f64 > 0.95 * 100.0);
    }

    #[test]
    fn sine_autocorrelation_oscillates() {
        let period = 20.0;
        let bytes: Vec<u8> = (0..400)
            .map(|i| (127.5 + 127.0 * (2.0 * std::f64::consts::PI * i as f64 / period).sin()) as u8)
            .collect();
        let ac = autocorrelation(&bytes, 40).unwrap();
        assert!(ac.normalized[20] > 0.9);
        assert!(ac.normalized[10] < -0.9);
        assert!(ac.max_abs_nonzero_lag() > 0.9);
    }

    #[test]
    fn autocorrelation_preconditions() {
        assert!(autocorrelation(&[1, 2, 3], 3).is_err());
        assert!(autocorrelation(&[1, 2, 3], 0).is_err());
    }

    #[test]
    fn uniformity_examples() {
        let all: Vec<u8> = (0..=255).collect();
        let u = histogram_stats(&all).unwrap();
        assert_abs_diff_eq!(u.uniformity, 1.0, epsilon = 1e-12);

        // δ vs uniform: m puts 1/2+1/512 on one bin and 1/512 elsewhere;
        // KL(δ‖m) = log2(512/257), KL(u‖m) = (1/256)log2(2/257) + (255/256)·1
        let single = histogram_stats(&[42; 500]).unwrap();
        let kl_d = (512.0f64 / 257.0).log2();
        let kl_u = (1.0 / 256.0) * (2.0f64 / 257.0).log2() + 255.0 / 256.0;
        let jsd = 0.5 * (kl_d + kl_u);
        assert_abs_diff_eq!(single.uniformity, 1.0 - jsd, epsilon = 1e-12);
        assert_abs_diff_eq!(single.uniformity, 0.018448260044583, epsilon = 1e-12);
        assert_eq!(single.entropy, 0.0);
        assert_eq!(single.variance, 0.0);
    }

    #[test]
    fn histogram_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bytes: Vec<u8> = (0..999).map(|_| rng.random_range(10..200)).collect();
        let a = histogram_stats(&bytes).unwrap();
        let b = histogram_stats_from(&Histogram256::from_bytes(&bytes)).unwrap();
        assert_abs_diff_eq!(a.variance, b.variance, epsilon = 1e-9);
        assert_eq!(a.entropy, b.entropy);
    }

    #[test]
    fn distance_examples() {
        let h = Histogram256::from_bytes(&[1, 2, 3, 3]);
        let d = histogram_distance(&h, &h).unwrap();
        assert_eq!((d.chi_squared, d.js_divergence), (0.0, 0.0));
        let a = Histogram256::from_bytes(&[0, 1, 2]);
        let b = Histogram256::from_bytes(&[200, 201]);
        let d = histogram_distance(&a, &b).unwrap();
        assert_abs_diff_eq!(d.js_divergence, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.chi_squared, 2.0, epsilon = 1e-12);
        assert!(histogram_distance(&a, &Histogram256::default()).is_err());
    }

    #[test]
    fn mcv_examples() {
        assert_eq!(min_entropy_mcv(&[9; 300]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bytes = vec![0u8; 65536];
        rng.fill_bytes(&mut bytes);
        assert!(min_entropy_mcv(&bytes).unwrap() >= 7.0);
        assert!(min_entropy_mcv_blocks(&bytes).unwrap() > 0.0);
        assert!(min_entropy_mcv(&bytes[..255]).is_err());
    }

    #[test]
    fn min_entropy_summary_percentiles() {
        let s =
            MinEntropySummary::from_bounds((0..=100).map(|i| i as f64 / 100.0).collect()).unwrap();
        assert_abs_diff_eq!(s.median, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.iqr, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p5, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p95, 0.95, epsilon = 1e-12);
    }

    #[test]
    fn key_space_examples() {
        assert_abs_diff_eq!(
            key_space_bits(0.01, 0.01).unwrap(),
            3200f64.log2(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(key_space_bits(0.01, 0.01).unwrap(), 11.64, epsilon = 0.01);
        let res = (0.32 / 2f64.powf(12.94)).sqrt();
        assert_abs_diff_eq!(key_space_bits(res, res).unwrap(), 12.94, epsilon = 1e-9);
        assert!(key_space_bits(0.0, 0.1).is_err());
        let one = [ChaoticParams::new(3.7, 0.4).unwrap()];
        assert_eq!(empirical_key_space_bits(&one, 0.01).unwrap(), 0.0);
        assert!(empirical_key_space_bits(&one, -1.0).is_err());
    }

    #[test]
    fn monobit_calibration_on_true_random_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut buf = vec![0u8; 128];
        let passes = (0..1000)
            .filter(|_| {
                rng.fill_bytes(&mut buf);
                monobit_test(&buf).unwrap().passed(MONOBIT_ALPHA)
            })
            .count();
        let rate = passes as f64 / 1000.0;
        assert!((0.975..=0.998).contains(&rate), "pass rate {rate}");
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_min_entropy_order(bytes in proptest::collection::vec(any::<u8>(), 256..2000)) {
            let h = shannon_entropy(&bytes).unwrap();
            prop_assert!((0.0..=8.0).contains(&h));
            prop_assert!(min_entropy_mcv(&bytes).unwrap() <= h + 1e-12);
        }

        #[test]
        fn jsd_symmetric_and_bounded(a in proptest::collection::vec(any::<u8>(), 1..300),
                                     b in proptest::collection::vec(any::<u8>(), 1..300)) {
            let (ha, hb) = (Histogram256::from_bytes(&a), Histogram256::from_bytes(&b));
            let ab = histogram_distance(&ha, &hb).unwrap().js_divergence;
            let ba = histogram_distance(&hb, &ha).unwrap().js_divergence;
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
