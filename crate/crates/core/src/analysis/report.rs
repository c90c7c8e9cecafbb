//! Report types and their two serialized forms: structured JSON and a flat
//! `name<TAB>value` text form with one metric per line.
//!
//! The flat form writes each leaf as a JSON scalar under a dotted path
//! (`histogram_stats.entropy`, `autocorrelation.3`), so it parses back
//! losslessly into the same type.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

use super::fft::SpectrumSummary;
use super::quality::QualityMetrics;
use super::stats::HistogramStats;

/// Encrypt/decrypt wall time in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub encrypt_seconds: f64,
    pub decrypt_seconds: f64,
}

/// The security battery for one segment or one corpus of ciphertext.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub segments: usize,
    pub bytes: usize,
    pub shannon_entropy_bits: f64,
    pub monobit_p_value: f64,
    pub monobit_passed: bool,
    pub pearson_correlation: f64,
    /// Normalized autocorrelation for lags `0..=max_lag`.
    pub autocorrelation: Vec<f64>,
    pub autocorrelation_lag0_raw: f64,
    pub histogram_stats: HistogramStats,
    pub spectral_flatness: f64,
    pub spectrum: SpectrumSummary,
    pub min_entropy_bits: f64,
    /// Supplementary 2-byte-block MCV bound, bits per byte.
    pub min_entropy_block_bits: f64,
    pub quality: QualityMetrics,
    pub timing: Timing,
}

impl AnalysisReport {
    /// Checks the PSNR/MSE identity and finiteness of every other metric.
    pub fn check_consistency(&self) -> Result<()> {
        let q = &self.quality;
        if q.mse == 0.0 {
            if q.psnr_db != f64::INFINITY {
                return Err(Error::Domain("zero mse must give infinite psnr".into()));
            }
        } else if (q.psnr_db - 10.0 * (1.0 / q.mse).log10()).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "psnr {} disagrees with mse {}",
                q.psnr_db, q.mse
            )));
        }
        let finite = [
            self.shannon_entropy_bits,
            self.monobit_p_value,
            self.pearson_correlation,
            self.autocorrelation_lag0_raw,
            self.histogram_stats.variance,
            self.histogram_stats.uniformity,
            self.spectral_flatness,
            self.min_entropy_bits,
            self.min_entropy_block_bits,
            q.mse,
            q.mae,
            self.timing.encrypt_seconds,
            self.timing.decrypt_seconds,
        ];
        if finite
            .iter()
            .chain(&self.autocorrelation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain("non-finite metric in report".into()));
        }
        Ok(())
    }
}

/// Serializes any report type to the flat text form.
pub fn to_kv_text<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = String::new();
    flatten("", &v, &mut out);
    Ok(out)
}

/// Parses the flat text form back into a report type.
pub fn from_kv_text<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut root = Value::Object(Map::new());
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line.split_once('\t').ok_or_else(|| {
            Error::Domain(format!("line {}: expected name<TAB>value", lineno + 1))
        })?;
        let leaf: Value = serde_json::from_str(raw)
            .map_err(|e| Error::Domain(format!("line {}: {e}", lineno + 1)))?;
        insert_path(&mut root, key, leaf)?;
    }
    serde_json::from_value(arrays_from_index_maps(root)).map_err(|e| Error::Domain(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Domain(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Domain(e.to_string()))
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) if !m.is_empty() => m.iter().for_each(|(k, v)| flatten(&join(k), v, out)),
        Value::Array(a) if !a.is_empty() => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&join(&i.to_string()), v, out)),
        leaf => {
            out.push_str(prefix);
            out.push('\t');
            out.push_str(&leaf.to_string());
            out.push('\n');
        }
    }
}

fn insert_path(root: &mut Value, path: &str, leaf: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur
            .as_object_mut()
            .ok_or_else(|| Error::Domain(format!("key {path} conflicts with a scalar")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), leaf);
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn arrays_from_index_maps(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let is_array = !m.is_empty() && (0..m.len()).all(|i| m.contains_key(&i.to_string()));
            if is_array {
                let mut m = m;
                Value::Array(
                    (0..m.len())
                        .map(|i| arrays_from_index_maps(m.remove(&i.to_string()).expect("checked")))
                        .collect(),
                )
            } else {
                Value::Object(
                    m.into_iter()
                        .map(|(k, v)| (k, arrays_from_index_maps(v)))
                        .collect(),
                )
            }
        }
        other => other,
    }
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`; JSON has no literal for them.
pub mod float_or_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "infinite" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!(
                    "bad float sentinel {other:?}"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AnalysisReport {
        AnalysisReport {
            segments: 3,
            bytes: 900,
            shannon_entropy_bits: 7.812345678901234,
            monobit_p_value: 0.4,
            monobit_passed: true,
            pearson_correlation: -0.0123,
            autocorrelation: vec![1.0, 0.01, -0.02],
            autocorrelation_lag0_raw: 5400.5,
            histogram_stats: HistogramStats {
                variance: 5400.5,
                std_dev: 73.49,
                entropy: 7.8,
                uniformity: 0.97,
            },
            spectral_flatness: 0.83,
            spectrum: SpectrumSummary {
                mean_magnitude: 1100.0,
                magnitude_variance: 3.0e5,
                flatness: 0.83,
            },
            min_entropy_bits: 5.9,
            min_entropy_block_bits: 3.1,
            quality: QualityMetrics {
                mse: 1.3e-6,
                psnr_db: 10.0 * (1.0 / 1.3e-6f64).log10(),
                mae: 9.8e-4,
            },
            timing: Timing {
                encrypt_seconds: 2e-5,
                decrypt_seconds: 1e-5,
            },
        }
    }

    #[test]
    fn kv_roundtrip_is_lossless() {
        let r = sample();
        let text = to_kv_text(&r).unwrap();
        assert!(text.contains("histogram_stats.uniformity\t0.97\n"));
        assert!(text.contains("autocorrelation.2\t-0.02\n"));
        let back: AnalysisReport = from_kv_text(&text).unwrap();
        assert_eq!(back, r);
        r.check_consistency().unwrap();
    }

    #[test]
    fn infinite_psnr_survives_both_forms() {
        let mut r = sample();
        r.quality = QualityMetrics {
            mse: 0.0,
            psnr_db: f64::INFINITY,
            mae: 0.0,
        };
        let kv: AnalysisReport = from_kv_text(&to_kv_text(&r).unwrap()).unwrap();
        let js: AnalysisReport = from_json(&to_json(&r).unwrap()).unwrap();
        assert_eq!(kv.quality.psnr_db, f64::INFINITY);
        assert_eq!(js, r);
        r.check_consistency().unwrap();
    }

    #[test]
    fn inconsistent_psnr_detected() {
        let mut r = sample();
        r.quality.psnr_db += 1e-6;
        assert!(r.check_consistency().is_err());
    }

    #[test]
    fn malformed_kv_rejected() {
        assert!(from_kv_text::<AnalysisReport>("segments 3\n").is_err());
        assert!(from_kv_text::<AnalysisReport>("segments\tthree\n").is_err());
    }
}
