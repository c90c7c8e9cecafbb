//! Acquire, encrypt, store, retrieve, decrypt, classify.
//!
//! A producer thread reads segments from a [`SegmentSource`] (optionally
//! paced to real time) into a bounded queue; the consumer runs the cipher and
//! the stores. Salts come from a deterministic clock: segment `i` is stamped
//! `start_timestamp_ms + i · segment duration`.

pub mod ingest;
pub mod store;
pub mod synthetic;

use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::chaos::{apply_salt, derive_params, ChaoticParams, KeySalt};
use crate::cipher::{
    compute_stats, dequantize, quantize, Cipher, KeyId, ModeTag, QuantizedSegment, RecordMeta,
    SignalSegment,
};
use crate::error::{Error, Result};
use crate::ml::{predict_params, KeyPredictor};

use ingest::CsvOptions;
use store::{KeyStore, RecordStore};
use synthetic::SyntheticEcg;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pacing {
    RealTime,
    #[default]
    Unpaced,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceKind {
    FileReplay {
        path: PathBuf,
        csv: CsvOptions,
    },
    Synthetic(SyntheticEcg),
    /// Pre-loaded segments, replayed in order.
    Segments(Vec<SignalSegment>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSource {
    pub kind: SourceKind,
    pub sample_rate: f64,
    pub segment_len: usize,
    pub pacing: Pacing,
}

impl SegmentSource {
    pub fn synthetic(gen: SyntheticEcg) -> Self {
        Self {
            sample_rate: gen.sample_rate,
            kind: SourceKind::Synthetic(gen),
            segment_len: 300,
            pacing: Pacing::Unpaced,
        }
    }

    pub fn segment_duration(&self) -> Duration {
        Duration::from_secs_f64(self.segment_len as f64 / self.sample_rate)
    }

    /// Segments in acquisition order; a synthetic source never ends.
    pub fn open(&self) -> Result<Box<dyn Iterator<Item = Result<SignalSegment>> + Send>> {
        if self.segment_len < 2 || !(self.sample_rate > 0.0) {
            return Err(Error::Domain(
                "segment length must be >= 2 and sample rate positive".into(),
            ));
        }
        match &self.kind {
            SourceKind::FileReplay { path, csv } => {
                let opts = CsvOptions {
                    sample_rate: self.sample_rate,
                    segment_len: self.segment_len,
                    ..csv.clone()
                };
                let segs = ingest::ingest_csv(path, &opts)?;
                Ok(Box::new(segs.into_iter().map(Ok)))
            }
            SourceKind::Segments(segs) => Ok(Box::new(segs.clone().into_iter().map(Ok))),
            SourceKind::Synthetic(gen) => {
                let gen = SyntheticEcg {
                    sample_rate: self.sample_rate,
                    ..gen.clone()
                };
                let mut stream = gen.stream()?;
                let (len, rate) = (self.segment_len, self.sample_rate);
                Ok(Box::new(std::iter::from_fn(move || {
                    let chunk: Vec<f64> = stream.by_ref().take(len).collect();
                    Some(SignalSegment::new(chunk, rate))
                })))
            }
        }
    }
}

/// Stand-in for a diagnostic model run on every decrypted segment.
pub trait Classifier: Send + Sync {
    fn classify(&self, segment: &SignalSegment) -> String;
}

/// Returns a fixed label and the segment's R-peak count. Replace with a real
/// model by implementing [`Classifier`].
#[derive(Clone, Debug)]
pub struct PeakCountClassifier {
    pub label: String,
}

impl Default for PeakCountClassifier {
    fn default() -> Self {
        Self {
            label: "unclassified".into(),
        }
    }
}

impl PeakCountClassifier {
    pub fn peaks(&self, segment: &SignalSegment) -> usize {
        synthetic::count_peaks(segment, 0.6)
    }
}

impl Classifier for PeakCountClassifier {
    fn classify(&self, segment: &SignalSegment) -> String {
        format!("{} peaks={}", self.label, self.peaks(segment))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: ModeTag,
    pub cipher: Cipher,
    pub stream_id: String,
    pub device_id: String,
    /// Mix the timestamp/device salt into every key.
    pub salt: bool,
    pub start_timestamp_ms: u64,
    pub max_segments: Option<usize>,
    /// Stop after this much acquired signal time.
    pub max_signal_seconds: Option<f64>,
    pub queue_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: ModeTag::Direct,
            cipher: Cipher::default(),
            stream_id: "stream0".into(),
            device_id: "dev0".into(),
            salt: true,
            start_timestamp_ms: 1_700_000_000_000,
            max_segments: None,
            max_signal_seconds: None,
            queue_capacity: 4,
        }
    }
}

/// Per-segment latencies in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub index: u64,
    pub key_id: String,
    pub r: f64,
    pub x0: f64,
    /// Statistics and derivation, or model prediction; salt included.
    pub key_seconds: f64,
    /// Quantize, keystream, permutation and XOR.
    pub encrypt_seconds: f64,
    pub store_seconds: f64,
    pub retrieve_seconds: f64,
    pub decrypt_seconds: f64,
    pub classify_seconds: f64,
    pub total_seconds: f64,
    /// Arrival time relative to the first segment.
    pub arrival_seconds: f64,
    pub roundtrip_exact: bool,
    pub label: Option<String>,
}

impl SegmentMetrics {
    pub fn core_encrypt_seconds(&self) -> f64 {
        self.key_seconds + self.encrypt_seconds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentError {
    pub index: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub mode: ModeTag,
    pub segments_processed: usize,
    pub segments: Vec<SegmentMetrics>,
    pub errors: Vec<SegmentError>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub median: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl LatencySummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                median: 0.0,
                p99: 0.0,
                max: 0.0,
                mean: 0.0,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| crate::analysis::stats::percentile_sorted(&v, p);
        Self {
            median: q(50.0),
            p99: q(99.0),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub mode: ModeTag,
    pub segments_processed: usize,
    pub errors: usize,
    pub exact_roundtrips: usize,
    pub distinct_keys: usize,
    pub core_encrypt: LatencySummary,
    pub decrypt: LatencySummary,
    pub store: LatencySummary,
    pub total: LatencySummary,
    /// Mean gap between consecutive arrivals.
    pub mean_interarrival_seconds: f64,
}

impl PipelineMetrics {
    pub fn summary(&self) -> PipelineSummary {
        let col = |f: fn(&SegmentMetrics) -> f64| self.segments.iter().map(f).collect::<Vec<_>>();
        let mut keys: Vec<(u64, u64)> = self
            .segments
            .iter()
            .map(|s| (s.r.to_bits(), s.x0.to_bits()))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let arrivals = col(|s| s.arrival_seconds);
        let gaps: Vec<f64> = arrivals.windows(2).map(|w| w[1] - w[0]).collect();
        PipelineSummary {
            mode: self.mode,
            segments_processed: self.segments_processed,
            errors: self.errors.len(),
            exact_roundtrips: self.segments.iter().filter(|s| s.roundtrip_exact).count(),
            distinct_keys: keys.len(),
            core_encrypt: LatencySummary::of(&col(SegmentMetrics::core_encrypt_seconds)),
            decrypt: LatencySummary::of(&col(|s| s.decrypt_seconds)),
            store: LatencySummary::of(&col(|s| s.store_seconds)),
            total: LatencySummary::of(&col(|s| s.total_seconds)),
            mean_interarrival_seconds: if gaps.is_empty() {
                0.0
            } else {
                gaps.iter().sum::<f64>() / gaps.len() as f64
            },
        }
    }

    /// Human-readable per-segment table.
    pub fn table(&self) -> String {
        let mut out = String::from(
            "index\tkey_id\tr\tx0\tkey_s\tencrypt_s\tstore_s\tretrieve_s\tdecrypt_s\ttotal_s\texact\tlabel\n",
        );
        for s in &self.segments {
            out.push_str(&format!(
                "{}\t{}\t{:?}\t{:?}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{}\t{}\n",
                s.index,
                s.key_id,
                s.r,
                s.x0,
                s.key_seconds,
                s.encrypt_seconds,
                s.store_seconds,
                s.retrieve_seconds,
                s.decrypt_seconds,
                s.total_seconds,
                s.roundtrip_exact,
                s.label.as_deref().unwrap_or("-")
            ));
        }
        out
    }
}

/// Stores, model and classifier used by [`run_pipeline`].
pub struct PipelineContext<'a> {
    pub records: &'a mut dyn RecordStore,
    pub keys: &'a mut dyn KeyStore,
    pub model: Option<&'a KeyPredictor>,
    pub classifier: Option<&'a dyn Classifier>,
}

struct Arrival {
    index: u64,
    segment: Result<SignalSegment>,
    at: Instant,
}

pub fn run_pipeline(
    source: &SegmentSource,
    config: &PipelineConfig,
    ctx: PipelineContext<'_>,
) -> Result<PipelineMetrics> {
    if config.mode == ModeTag::MlPredicted && ctx.model.is_none() {
        return Err(Error::Model(
            "ML mode requires a loaded key predictor".into(),
        ));
    }
    if config.max_segments.is_none() && config.max_signal_seconds.is_none() {
        if let SourceKind::Synthetic(_) = source.kind {
            return Err(Error::Domain(
                "a synthetic source needs a segment or time bound".into(),
            ));
        }
    }
    let seg_dur = source.segment_duration();
    let limit = match (config.max_segments, config.max_signal_seconds) {
        (Some(n), Some(t)) => n.min((t / seg_dur.as_secs_f64()).floor() as usize),
        (Some(n), None) => n,
        (None, Some(t)) => (t / seg_dur.as_secs_f64()).floor() as usize,
        (None, None) => usize::MAX,
    };
    let iter = source.open()?;
    let pacing = source.pacing;
    let (tx, rx) = sync_channel::<Arrival>(config.queue_capacity.max(1));
    let started = Instant::now();
    let PipelineContext {
        records,
        keys,
        model,
        classifier,
    } = ctx;

    thread::scope(|scope| {
        scope.spawn(move || {
            for (i, seg) in iter.take(limit).enumerate() {
                if pacing == Pacing::RealTime {
                    // segment i is complete only once its last sample is acquired
                    let due = started + seg_dur * (i as u32 + 1);
                    let now = Instant::now();
                    if due > now {
                        thread::sleep(due - now);
                    }
                }
                let msg = Arrival {
                    index: i as u64,
                    segment: seg,
                    at: Instant::now(),
                };
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });

        let mut metrics = PipelineMetrics {
            mode: config.mode,
            segments_processed: 0,
            segments: Vec::new(),
            errors: Vec::new(),
            wall_seconds: 0.0,
        };
        let mut first_arrival: Option<Instant> = None;
        for msg in rx {
            let t0 = *first_arrival.get_or_insert(msg.at);
            metrics.segments_processed += 1;
            let outcome = msg.segment.and_then(|seg| {
                process_segment(
                    msg.index, &seg, source, config, records, keys, model, classifier,
                )
            });
            match outcome {
                Ok(mut m) => {
                    m.arrival_seconds = msg.at.duration_since(t0).as_secs_f64();
                    metrics.segments.push(m);
                }
                Err(e) => metrics.errors.push(SegmentError {
                    index: msg.index,
                    message: e.to_string(),
                }),
            }
        }
        metrics.wall_seconds = started.elapsed().as_secs_f64();
        Ok(metrics)
    })
}

#[allow(clippy::too_many_arguments)]
fn process_segment(
    index: u64,
    seg: &SignalSegment,
    source: &SegmentSource,
    config: &PipelineConfig,
    records: &mut dyn RecordStore,
    keys: &mut dyn KeyStore,
    model: Option<&KeyPredictor>,
    classifier: Option<&dyn Classifier>,
) -> Result<SegmentMetrics> {
    seg.validate()?;
    let start = Instant::now();
    let ts = config.start_timestamp_ms + index * (source.segment_duration().as_millis() as u64);
    let salt = KeySalt::new(ts, config.device_id.as_bytes())?;

    let t = Instant::now();
    let base: ChaoticParams = match config.mode {
        ModeTag::Direct => derive_params(compute_stats(seg)?)?,
        ModeTag::MlPredicted => predict_params(model.expect("checked at start"), seg)?,
    };
    let params = if config.salt {
        apply_salt(base, &salt)
    } else {
        base
    };
    let key_seconds = t.elapsed().as_secs_f64();

    let key_id = KeyId::derive(&salt, index);
    let meta = RecordMeta {
        key_id,
        salt,
        mode: config.mode,
    };
    let t = Instant::now();
    let (record, _) = config.cipher.encrypt(seg, params, meta)?;
    let encrypt_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    records.put(&config.stream_id, index, &record)?;
    keys.put(key_id, params)?;
    let store_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let fetched = records.get(&config.stream_id, index)?;
    let fetched_key = keys.get(&fetched.key_id)?;
    let retrieve_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let bytes = config.cipher.decrypt_bytes(&fetched, fetched_key)?;
    let decrypted = dequantize(
        &QuantizedSegment {
            bytes: bytes.clone(),
            range: fetched.range,
        },
        seg.sample_rate,
    )?;
    let decrypt_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let label = classifier.map(|c| c.classify(&decrypted));
    let classify_seconds = t.elapsed().as_secs_f64();
    let total_seconds = start.elapsed().as_secs_f64();

    let roundtrip_exact = fetched == record && bytes == quantize(seg)?.bytes;
    Ok(SegmentMetrics {
        index,
        key_id: key_id.to_hex(),
        r: params.r(),
        x0: params.x0(),
        key_seconds,
        encrypt_seconds,
        store_seconds,
        retrieve_seconds,
        decrypt_seconds,
        classify_seconds,
        total_seconds,
        arrival_seconds: 0.0,
        roundtrip_exact,
        label,
    })
}
