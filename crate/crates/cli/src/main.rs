//! `hecg`: encrypt, decrypt, analyze, attack, train and stream from the
//! command line.
//!
//! Global options resolve in this order: flag, `HECG_*` environment
//! variable, `--config` TOML file, built-in default.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use hecg::analysis::fft::magnitude_spectrum;
use hecg::analysis::report::{from_json, from_kv_text, to_json, to_kv_text};
use hecg::analysis::stats::bytes_as_f64;
use hecg::analysis::{
    analyze_corpus, analyze_corpus_with_keys, compare_ciphertexts, quality_metrics, CorpusConfig,
    CorpusReport, QualityMetrics, MONOBIT_ALPHA,
};
use hecg::attack::{sweep, sweep_table, AttackKind};
use hecg::cipher::{EncryptedRecord, ModeTag};
use hecg::ml::{build_dataset, train, KeyPredictor, TrainConfig};
use hecg::pipeline::ingest::{ingest_csv, write_csv, Column, CsvOptions};
use hecg::pipeline::store::{
    DirStore, FileKeyStore, KeyStore, MemoryKeyStore, MemoryStore, RecordStore,
};
use hecg::pipeline::synthetic::{add_noise_snr, Cohort, SyntheticEcg};
use hecg::pipeline::{
    run_pipeline, Pacing, PeakCountClassifier, PipelineConfig, PipelineContext, PipelineMetrics,
    SegmentSource, SourceKind,
};
use hecg::{
    compute_stats, derive_params, quantize, ChaoticParams, Cipher, Execution, SignalSegment,
};

#[derive(Parser)]
#[command(
    name = "hecg",
    version,
    about = "Chaotic per-segment ECG encryption and its security battery"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML file with defaults for the global options.
    #[arg(long, global = true, env = "HECG_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "HECG_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "HECG_SEGMENT_LEN")]
    segment_len: Option<usize>,
    #[arg(long, global = true, env = "HECG_SAMPLE_RATE")]
    sample_rate: Option<f64>,
    /// Logistic iterates discarded before the keystream.
    #[arg(long, global = true, env = "HECG_BURN_IN")]
    burn_in: Option<usize>,
    #[arg(long, global = true, env = "HECG_MODE", value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Direct,
    Ml,
}

impl From<Mode> for ModeTag {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Direct => ModeTag::Direct,
            Mode::Ml => ModeTag::MlPredicted,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    segment_len: Option<usize>,
    sample_rate: Option<f64>,
    burn_in: Option<usize>,
    mode: Option<Mode>,
}

struct Settings {
    seed: u64,
    segment_len: usize,
    sample_rate: f64,
    cipher: Cipher,
    mode: Mode,
}

impl Settings {
    fn resolve(g: &GlobalArgs) -> Result<Self> {
        let file = match &g.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let s = Settings {
            seed: g.seed.or(file.seed).unwrap_or(0),
            segment_len: g.segment_len.or(file.segment_len).unwrap_or(300),
            sample_rate: g.sample_rate.or(file.sample_rate).unwrap_or(500.0),
            cipher: Cipher::new(g.burn_in.or(file.burn_in).unwrap_or(0)),
            mode: g.mode.or(file.mode).unwrap_or(Mode::Direct),
        };
        if s.segment_len < 2 {
            bail!("segment length must be at least 2");
        }
        if !(s.sample_rate > 0.0 && s.sample_rate.is_finite()) {
            bail!("sample rate must be positive");
        }
        Ok(s)
    }
}

/// Plaintext signal: a CSV column or a seeded synthetic cohort.
#[derive(Args)]
struct InputArgs {
    /// CSV file holding one sample per row.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Column index or header name.
    #[arg(long, default_value = "0")]
    column: Column,
    /// The first CSV row is a header.
    #[arg(long)]
    header: bool,
    /// Generate this many synthetic segments instead of reading a file.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Standard deviation of the synthetic sensor noise.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

impl InputArgs {
    fn csv(&self, s: &Settings) -> CsvOptions {
        CsvOptions {
            column: self.column.clone(),
            has_header: self.header,
            sample_rate: s.sample_rate,
            segment_len: s.segment_len,
            ..Default::default()
        }
    }

    fn given(&self) -> bool {
        self.input.is_some() || self.synthetic.is_some()
    }

    fn load(&self, s: &Settings) -> Result<Vec<SignalSegment>> {
        let segs = match (&self.input, self.synthetic) {
            (Some(path), _) => ingest_csv(path, &self.csv(s))
                .with_context(|| format!("reading {}", path.display()))?,
            (None, Some(count)) => Cohort {
                count,
                segment_len: s.segment_len,
                sample_rate: s.sample_rate,
                noise_amplitude: self.noise,
                seed: s.seed,
            }
            .segments()?,
            (None, None) => bail!("give --input <csv> or --synthetic <count>"),
        };
        if segs.is_empty() {
            bail!("input holds no complete {}-sample segment", s.segment_len);
        }
        Ok(segs)
    }
}

/// Record directory plus a separate key file.
#[derive(Args)]
struct StoreArgs {
    /// Store root; records go to `<store>/records/<stream>/`.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "stream0")]
    stream: String,
    /// Key file; defaults to `<store>/keys.txt`.
    #[arg(long)]
    keys: Option<PathBuf>,
}

impl StoreArgs {
    fn key_path(&self) -> PathBuf {
        self.keys
            .clone()
            .unwrap_or_else(|| self.store.join("keys.txt"))
    }

    fn records(&self) -> Result<DirStore> {
        Ok(DirStore::open(self.store.join("records"))?)
    }

    fn existing_keys(&self) -> Result<FileKeyStore> {
        let p = self.key_path();
        if !p.exists() {
            bail!(
                "key store {} not found; records cannot be decrypted without it",
                p.display()
            );
        }
        Ok(FileKeyStore::open(p)?)
    }

    fn load_records(&self) -> Result<Vec<EncryptedRecord>> {
        let rs = self.records()?;
        let idx = rs.indices(&self.stream)?;
        if idx.is_empty() {
            bail!(
                "no records for stream {:?} under {}",
                self.stream,
                self.store.display()
            );
        }
        idx.iter()
            .map(|&i| {
                rs.get(&self.stream, i)
                    .with_context(|| format!("reading record {i}"))
            })
            .collect()
    }

    /// Decrypted segments and the keys that decrypt them.
    fn decrypt_all(&self, s: &Settings) -> Result<(Vec<SignalSegment>, Vec<ChaoticParams>)> {
        let keys = self.existing_keys()?;
        let mut segs = Vec::new();
        let mut params = Vec::new();
        for (i, rec) in self.load_records()?.iter().enumerate() {
            let p = keys.get(&rec.key_id).with_context(|| {
                format!(
                    "record {i}: key {} missing, record undecryptable",
                    rec.key_id
                )
            })?;
            segs.push(s.cipher.decrypt(rec, p, s.sample_rate)?);
            params.push(p);
        }
        Ok((segs, params))
    }
}

/// Keys are salted with the device id and segment timestamp unless disabled.
#[derive(Args, Clone)]
struct SaltArgs {
    #[arg(long, env = "HECG_DEVICE_ID", default_value = "dev0")]
    device_id: String,
    /// Derive keys from the signal alone.
    #[arg(long)]
    no_salt: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt a signal into a record store.
    Encrypt {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        store: StoreArgs,
        /// Trained key predictor, required in ml mode.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        salt: SaltArgs,
        /// Timestamp of the first segment, ms since the epoch.
        #[arg(long, default_value_t = 1_700_000_000_000)]
        timestamp_ms: u64,
    },
    /// Decrypt a record store back to a CSV column.
    Decrypt {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        output: PathBuf,
        /// Print MSE, PSNR and MAE against --reference.
        #[arg(long, requires = "reference")]
        report: bool,
        /// Original CSV to compare with.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "0")]
        column: Column,
        #[arg(long)]
        header: bool,
    },
    /// Run the security battery and write reports and plot series.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        /// Analyze the records (and keys) of this store instead of an input.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "stream0")]
        stream: String,
        /// Second store whose ciphertext histogram is compared with --store.
        #[arg(long, requires = "store")]
        compare: Option<PathBuf>,
        /// Directory for report.json, report.txt and the .tsv series.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep noise or occlusion attacks over a corpus.
    Attack {
        #[command(flatten)]
        input: InputArgs,
        /// Attack the decrypted contents of this store instead of an input.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "stream0")]
        stream: String,
        #[arg(long, value_enum, default_value = "noise")]
        sweep: SweepKind,
        /// Comma-separated amplitudes (bytes) or occluded fractions.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Write the table here as well as to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the key predictor.
    Train {
        #[command(flatten)]
        input: InputArgs,
        /// Model file to write.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "32,16")]
        hidden: Vec<usize>,
        /// Training report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the acquisition-to-classification loop.
    Stream {
        /// Replay this CSV instead of the synthetic generator.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "0")]
        column: Column,
        #[arg(long)]
        header: bool,
        /// Record store; in memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "stream0")]
        stream: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        segments: Option<usize>,
        /// Seconds of signal to process.
        #[arg(long)]
        duration: Option<f64>,
        /// Pace segments at the acquisition rate.
        #[arg(long)]
        realtime: bool,
        #[arg(long, default_value_t = 72.0)]
        heart_rate: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Add white noise at this SNR before encryption.
        #[arg(long)]
        snr_db: Option<f64>,
        #[command(flatten)]
        salt: SaltArgs,
        /// Run Direct and ML modes on the same input and compare.
        #[arg(long, requires = "model")]
        compare: bool,
        /// Metrics as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse a saved report (.json or .txt) and print its summary.
    Show { report: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKind {
    Noise,
    Gaussian,
    Occlusion,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` when the command finished but recorded errors.
fn run(cli: Cli) -> Result<bool> {
    let s = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Encrypt {
            input,
            store,
            model,
            salt,
            timestamp_ms,
        } => cmd_encrypt(&s, &input, &store, model.as_deref(), &salt, timestamp_ms),
        Command::Decrypt {
            store,
            output,
            report,
            reference,
            column,
            header,
        } => {
            let reference = reference.filter(|_| report);
            cmd_decrypt(&s, &store, &output, reference.as_deref(), column, header).map(|_| true)
        }
        Command::Analyze {
            input,
            store,
            stream,
            compare,
            output,
        } => cmd_analyze(&s, &input, store, &stream, compare, output.as_deref()).map(|_| true),
        Command::Attack {
            input,
            store,
            stream,
            sweep,
            levels,
            output,
        } => cmd_attack(&s, &input, store, &stream, sweep, levels, output.as_deref()).map(|_| true),
        Command::Train {
            input,
            output,
            epochs,
            learning_rate,
            batch_size,
            test_fraction,
            hidden,
            report,
        } => {
            let cfg = TrainConfig {
                hidden,
                learning_rate,
                epochs,
                batch_size,
                test_fraction,
                seed: s.seed,
            };
            cmd_train(&s, &input, &output, &cfg, report.as_deref()).map(|_| true)
        }
        Command::Stream {
            input,
            column,
            header,
            store,
            stream,
            model,
            segments,
            duration,
            realtime,
            heart_rate,
            noise,
            snr_db,
            salt,
            compare,
            output,
        } => {
            let opts = StreamOpts {
                input,
                csv: CsvOptions {
                    column,
                    has_header: header,
                    sample_rate: s.sample_rate,
                    segment_len: s.segment_len,
                    ..Default::default()
                },
                store,
                stream,
                model,
                segments,
                duration,
                realtime,
                heart_rate,
                noise,
                snr_db,
                salt,
                compare,
                output,
            };
            cmd_stream(&s, &opts)
        }
        Command::Show { report } => cmd_show(&report).map(|_| true),
    }
}

fn load_model(path: Option<&Path>, mode: Mode) -> Result<Option<KeyPredictor>> {
    match (mode, path) {
        (Mode::Ml, None) => bail!("ml mode needs a trained model: pass --model <file>"),
        (_, Some(p)) => {
            Ok(Some(KeyPredictor::load(p).with_context(|| {
                format!("loading model {}", p.display())
            })?))
        }
        (Mode::Direct, None) => Ok(None),
    }
}

fn pipeline_config(
    s: &Settings,
    mode: Mode,
    stream: &str,
    salt: &SaltArgs,
    ts: u64,
) -> PipelineConfig {
    PipelineConfig {
        mode: mode.into(),
        cipher: s.cipher,
        stream_id: stream.to_string(),
        salt: !salt.no_salt,
        device_id: salt.device_id.clone(),
        start_timestamp_ms: ts,
        ..Default::default()
    }
}

fn cmd_encrypt(
    s: &Settings,
    input: &InputArgs,
    store: &StoreArgs,
    model: Option<&Path>,
    salt: &SaltArgs,
    timestamp_ms: u64,
) -> Result<bool> {
    let model = load_model(model, s.mode)?;
    let segments = input.load(s)?;
    let n = segments.len();
    let source = SegmentSource {
        kind: SourceKind::Segments(segments),
        sample_rate: s.sample_rate,
        segment_len: s.segment_len,
        pacing: Pacing::Unpaced,
    };
    let mut records = store.records()?;
    let mut keys = FileKeyStore::open(store.key_path())?;
    let m = run_pipeline(
        &source,
        &pipeline_config(s, s.mode, &store.stream, salt, timestamp_ms),
        PipelineContext {
            records: &mut records,
            keys: &mut keys,
            model: model.as_ref(),
            classifier: None,
        },
    )?;
    print!("{}", m.table());
    report_errors(&m);
    println!(
        "encrypted {} of {n} segments into {} ({:?} mode)",
        m.segments_processed,
        store.store.display(),
        m.mode
    );
    Ok(m.errors.is_empty())
}

fn report_errors(m: &PipelineMetrics) {
    for e in &m.errors {
        eprintln!("segment {}: {}", e.index, e.message);
    }
}

fn cmd_decrypt(
    s: &Settings,
    store: &StoreArgs,
    output: &Path,
    reference: Option<&Path>,
    column: Column,
    header: bool,
) -> Result<()> {
    let (segs, _) = store.decrypt_all(s)?;
    let samples: Vec<f64> = segs
        .iter()
        .flat_map(|g| g.samples.iter().copied())
        .collect();
    let f = fs::File::create(output).with_context(|| format!("creating {}", output.display()))?;
    write_csv(f, "value", &samples)?;
    println!(
        "decrypted {} segments ({} samples) to {}",
        segs.len(),
        samples.len(),
        output.display()
    );

    if let Some(path) = reference {
        let opts = CsvOptions {
            column,
            has_header: header,
            sample_rate: s.sample_rate,
            segment_len: s.segment_len,
            ..Default::default()
        };
        let originals =
            ingest_csv(path, &opts).with_context(|| format!("reading {}", path.display()))?;
        if originals.len() < segs.len() {
            bail!(
                "reference holds {} segments, store holds {}",
                originals.len(),
                segs.len()
            );
        }
        println!("segment\tmse\tpsnr_db\tmae");
        let (mut mse, mut mae) = (0.0, 0.0);
        for (i, (o, d)) in originals.iter().zip(&segs).enumerate() {
            let q = quality_metrics(o, d)?;
            println!("{i}\t{}\t{}\t{}", q.mse, q.psnr_db, q.mae);
            mse += q.mse;
            mae += q.mae;
        }
        let k = segs.len() as f64;
        let q = QualityMetrics::from_means(mse / k, mae / k);
        println!("mean\t{}\t{}\t{}", q.mse, q.psnr_db, q.mae);
    }
    Ok(())
}

fn ciphertexts(store: &Path, stream: &str) -> Result<Vec<Vec<u8>>> {
    let args = StoreArgs {
        store: store.to_path_buf(),
        stream: stream.to_string(),
        keys: None,
    };
    Ok(args
        .load_records()?
        .into_iter()
        .map(|r| r.ciphertext)
        .collect())
}

fn cmd_analyze(
    s: &Settings,
    input: &InputArgs,
    store: Option<PathBuf>,
    stream: &str,
    compare: Option<PathBuf>,
    output: Option<&Path>,
) -> Result<()> {
    if let (Some(a), Some(b)) = (&store, &compare) {
        let d = compare_ciphertexts(&ciphertexts(a, stream)?, &ciphertexts(b, stream)?)?;
        println!("metric\tvalue");
        println!("chi_squared\t{}", d.chi_squared);
        println!("js_divergence\t{}", d.js_divergence);
        return Ok(());
    }
    if s.segment_len < 256 {
        bail!(
            "analysis needs segments of at least 256 samples for the per-segment min-entropy bound"
        );
    }
    let cfg = CorpusConfig {
        cipher: s.cipher,
        ..Default::default()
    };
    let (segments, report, cts) = match &store {
        Some(root) => {
            let args = StoreArgs {
                store: root.clone(),
                stream: stream.to_string(),
                keys: None,
            };
            let (segs, keys) = args.decrypt_all(s)?;
            let report = analyze_corpus_with_keys(&segs, &keys, &cfg)?;
            let cts = args
                .load_records()?
                .into_iter()
                .map(|r| r.ciphertext)
                .collect();
            (segs, report, cts)
        }
        None if input.given() => {
            let segs = input.load(s)?;
            let report = analyze_corpus(&segs, &cfg)?;
            let cts = segs
                .iter()
                .map(|g| -> Result<Vec<u8>> {
                    let p = derive_params(compute_stats(g)?)?;
                    Ok(s.cipher.encrypt(g, p, Default::default())?.0.ciphertext)
                })
                .collect::<Result<Vec<_>>>()?;
            (segs, report, cts)
        }
        None => bail!("give --store <dir>, --input <csv> or --synthetic <count>"),
    };
    report.encrypted.check_consistency()?;
    print_summary(&report);
    if let Some(dir) = output {
        write_outputs(dir, &report, &segments, &cts)?;
        println!("wrote reports and plot series to {}", dir.display());
    }
    Ok(())
}

fn print_summary(r: &CorpusReport) {
    let e = &r.encrypted;
    let rows: Vec<(&str, String)> = vec![
        ("segments", e.segments.to_string()),
        ("bytes", e.bytes.to_string()),
        ("entropy_bits", e.shannon_entropy_bits.to_string()),
        (
            "plain_entropy_bits",
            r.plain.shannon_entropy_bits.to_string(),
        ),
        ("monobit_p", e.monobit_p_value.to_string()),
        ("monobit_passed", e.monobit_passed.to_string()),
        ("plain_monobit_p", r.plain.monobit_p_value.to_string()),
        (
            "plain_monobit_passed",
            (r.plain.monobit_p_value > MONOBIT_ALPHA).to_string(),
        ),
        ("mean_abs_correlation", r.correlation.mean_abs.to_string()),
        (
            "autocorrelation_lag0_raw",
            e.autocorrelation_lag0_raw.to_string(),
        ),
        (
            "max_abs_autocorrelation",
            e.autocorrelation[1..]
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
                .to_string(),
        ),
        ("uniformity", e.histogram_stats.uniformity.to_string()),
        (
            "histogram_variance_change_pct",
            r.histogram_shift.variance_pct.to_string(),
        ),
        (
            "histogram_uniformity_change_pct",
            r.histogram_shift.uniformity_pct.to_string(),
        ),
        ("spectral_flatness", e.spectral_flatness.to_string()),
        (
            "plain_spectral_flatness",
            r.plain.mean_spectral_flatness.to_string(),
        ),
        ("min_entropy_bits", e.min_entropy_bits.to_string()),
        (
            "min_entropy_block_bits",
            e.min_entropy_block_bits.to_string(),
        ),
        (
            "key_max_byte_diff",
            r.sensitivity.key_max_byte_diff.to_string(),
        ),
        (
            "key_mean_abs_correlation",
            r.sensitivity.key_mean_abs_correlation.to_string(),
        ),
        (
            "plaintext_change_rate",
            r.sensitivity.plaintext_mean_change_rate.to_string(),
        ),
        ("mse", e.quality.mse.to_string()),
        ("psnr_db", e.quality.psnr_db.to_string()),
        ("mae", e.quality.mae.to_string()),
        ("encrypt_seconds", e.timing.encrypt_seconds.to_string()),
        ("decrypt_seconds", e.timing.decrypt_seconds.to_string()),
        ("key_space_bits", r.key_space.analytic_bits.to_string()),
        (
            "key_space_empirical_bits",
            r.key_space.empirical_bits.to_string(),
        ),
    ];
    for (k, v) in rows {
        println!("{k}\t{v}");
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_outputs(
    dir: &Path,
    r: &CorpusReport,
    segs: &[SignalSegment],
    cts: &[Vec<u8>],
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join("report.json"), &to_json(r)?)?;
    write_file(&dir.join("report.txt"), &to_kv_text(r)?)?;

    let mut hist = String::from("bin\tencrypted\tplain\n");
    for (b, (e, p)) in r
        .encrypted_histogram
        .iter()
        .zip(&r.plain_histogram)
        .enumerate()
    {
        hist.push_str(&format!("{b}\t{e}\t{p}\n"));
    }
    write_file(&dir.join("histogram.tsv"), &hist)?;

    let mut ac = String::from("lag\tautocorrelation\n");
    for (k, v) in r.encrypted.autocorrelation.iter().enumerate() {
        ac.push_str(&format!("{k}\t{v}\n"));
    }
    write_file(&dir.join("autocorrelation.tsv"), &ac)?;

    // corpus-mean magnitude spectra of ciphertext and quantized plaintext
    let mean_spec = |rows: Vec<Vec<f64>>| -> Vec<f64> {
        let len = rows.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let enc = mean_spec(
        cts.iter()
            .map(|c| magnitude_spectrum(&bytes_as_f64(c)))
            .collect(),
    );
    let plain = mean_spec(
        segs.iter()
            .map(|g| quantize(g).map(|q| magnitude_spectrum(&bytes_as_f64(&q.bytes))))
            .collect::<hecg::Result<Vec<_>>>()?,
    );
    let padded = 2 * enc.len();
    let mut sp = String::from("bin\tcycles_per_sample\tencrypted\tplain\n");
    for (i, (e, p)) in enc.iter().zip(&plain).enumerate() {
        let k = i + 1;
        sp.push_str(&format!("{k}\t{}\t{e}\t{p}\n", k as f64 / padded as f64));
    }
    write_file(&dir.join("spectrum.tsv"), &sp)?;

    let mut seg = String::from(
        "index\tr\tx0\tentropy\tplain_entropy\tmonobit_p\tplain_monobit_p\tcorrelation\tflatness\tmin_entropy\tmse\tmae\n",
    );
    for a in &r.segments {
        seg.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            a.index,
            a.r,
            a.x0,
            a.entropy_bits,
            a.plain_entropy_bits,
            a.monobit_p_value,
            a.plain_monobit_p_value,
            a.pearson_correlation,
            a.spectrum.flatness,
            a.min_entropy_bits,
            a.quality.mse,
            a.quality.mae
        ));
    }
    write_file(&dir.join("segments.tsv"), &seg)
}

fn cmd_show(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: CorpusReport = if path.extension().is_some_and(|e| e == "json") {
        from_json(&text)?
    } else {
        from_kv_text(&text)?
    };
    report.encrypted.check_consistency()?;
    print_summary(&report);
    Ok(())
}

fn cmd_attack(
    s: &Settings,
    input: &InputArgs,
    store: Option<PathBuf>,
    stream: &str,
    kind: SweepKind,
    levels: Option<Vec<f64>>,
    output: Option<&Path>,
) -> Result<()> {
    let segments = match store {
        Some(root) => {
            StoreArgs {
                store: root,
                stream: stream.to_string(),
                keys: None,
            }
            .decrypt_all(s)?
            .0
        }
        None => input.load(s)?,
    };
    let (kind, default_levels) = match kind {
        SweepKind::Noise => (AttackKind::NoiseUniform, vec![0.0, 1.0, 4.0, 16.0]),
        SweepKind::Gaussian => (AttackKind::NoiseGaussian, vec![0.0, 1.0, 4.0, 16.0]),
        SweepKind::Occlusion => (AttackKind::Occlusion, vec![0.05, 0.1, 0.25]),
    };
    let levels = levels.unwrap_or(default_levels);
    let rows = sweep(
        &s.cipher,
        &segments,
        kind,
        &levels,
        s.seed,
        Execution::default(),
    )?;
    let table = sweep_table(&rows);
    print!("{table}");
    if let Some(p) = output {
        write_file(p, &table)?;
    }
    Ok(())
}

fn cmd_train(
    s: &Settings,
    input: &InputArgs,
    output: &Path,
    cfg: &TrainConfig,
    report: Option<&Path>,
) -> Result<()> {
    let segments = input.load(s)?;
    let data = build_dataset(&segments)?;
    let (model, rep) = train(&data, cfg)?;
    model
        .save(output)
        .with_context(|| format!("writing model {}", output.display()))?;
    println!("train_mse\t{}", rep.train_mse);
    println!("test_mse\t{}", rep.test_mse);
    println!("final_loss\t{}", rep.final_loss);
    println!("n_train\t{}", rep.n_train);
    println!("n_test\t{}", rep.n_test);
    println!("epochs\t{}", rep.epochs);
    if let Some(p) = report {
        write_file(p, &serde_json::to_string_pretty(&rep)?)?;
    }
    println!("saved model to {}", output.display());
    Ok(())
}

struct StreamOpts {
    input: Option<PathBuf>,
    csv: CsvOptions,
    store: Option<PathBuf>,
    stream: String,
    model: Option<PathBuf>,
    segments: Option<usize>,
    duration: Option<f64>,
    realtime: bool,
    heart_rate: f64,
    noise: f64,
    snr_db: Option<f64>,
    salt: SaltArgs,
    compare: bool,
    output: Option<PathBuf>,
}

fn stream_source(s: &Settings, o: &StreamOpts) -> Result<SegmentSource> {
    let gen = SyntheticEcg {
        sample_rate: s.sample_rate,
        heart_rate_bpm: o.heart_rate,
        noise_amplitude: o.noise,
        seed: s.seed,
        ..Default::default()
    };
    let mut kind = match &o.input {
        Some(path) => SourceKind::FileReplay {
            path: path.clone(),
            csv: o.csv.clone(),
        },
        None => SourceKind::Synthetic(gen),
    };
    if let Some(snr) = o.snr_db {
        let count = match (o.segments, o.duration) {
            (Some(n), _) => n,
            (None, Some(d)) => (d * s.sample_rate / s.segment_len as f64).floor() as usize,
            (None, None) => bail!("--snr-db needs --segments or --duration"),
        };
        let clean = SegmentSource {
            kind,
            sample_rate: s.sample_rate,
            segment_len: s.segment_len,
            pacing: Pacing::Unpaced,
        };
        let mut rng =
            <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(s.seed ^ 0x5eed);
        let noisy = clean
            .open()?
            .take(count)
            .map(|seg| -> Result<SignalSegment> { Ok(add_noise_snr(&seg?, snr, &mut rng)?) })
            .collect::<Result<Vec<_>>>()?;
        kind = SourceKind::Segments(noisy);
    }
    Ok(SegmentSource {
        kind,
        sample_rate: s.sample_rate,
        segment_len: s.segment_len,
        pacing: if o.realtime {
            Pacing::RealTime
        } else {
            Pacing::Unpaced
        },
    })
}

struct ModeRun {
    metrics: PipelineMetrics,
    mean_entropy: f64,
}

fn run_mode(
    s: &Settings,
    o: &StreamOpts,
    source: &SegmentSource,
    mode: Mode,
    model: Option<&KeyPredictor>,
) -> Result<ModeRun> {
    let mut cfg = pipeline_config(s, mode, &o.stream, &o.salt, 1_700_000_000_000);
    cfg.max_segments = o.segments;
    cfg.max_signal_seconds = o.duration;
    if cfg.max_segments.is_none()
        && cfg.max_signal_seconds.is_none()
        && matches!(source.kind, SourceKind::Synthetic(_))
    {
        bail!("a synthetic stream needs --segments or --duration");
    }
    let classifier = PeakCountClassifier::default();
    let mut mem_records = MemoryStore::default();
    let mut mem_keys = MemoryKeyStore::default();
    let mut dir_records;
    let mut file_keys;
    let (records, keys): (&mut dyn RecordStore, &mut dyn KeyStore) = match &o.store {
        Some(root) => {
            let sub = if o.compare {
                root.join(format!("{mode:?}").to_lowercase())
            } else {
                root.clone()
            };
            dir_records = DirStore::open(sub.join("records"))?;
            file_keys = FileKeyStore::open(sub.join("keys.txt"))?;
            (&mut dir_records, &mut file_keys)
        }
        None => (&mut mem_records, &mut mem_keys),
    };
    let metrics = run_pipeline(
        source,
        &cfg,
        PipelineContext {
            records: &mut *records,
            keys,
            model,
            classifier: Some(&classifier),
        },
    )?;
    let mut ent = Vec::new();
    for i in records.indices(&o.stream)? {
        ent.push(hecg::analysis::shannon_entropy(
            &records.get(&o.stream, i)?.ciphertext,
        )?);
    }
    let mean_entropy = if ent.is_empty() {
        0.0
    } else {
        ent.iter().sum::<f64>() / ent.len() as f64
    };
    Ok(ModeRun {
        metrics,
        mean_entropy,
    })
}

fn cmd_stream(s: &Settings, o: &StreamOpts) -> Result<bool> {
    let mode = if o.compare { Mode::Ml } else { s.mode };
    let model = load_model(o.model.as_deref(), mode)?;
    let source = stream_source(s, o)?;
    let modes: Vec<Mode> = if o.compare {
        vec![Mode::Direct, Mode::Ml]
    } else {
        vec![s.mode]
    };
    let mut runs = Vec::new();
    for &m in &modes {
        runs.push(run_mode(s, o, &source, m, model.as_ref())?);
    }
    if !o.compare {
        print!("{}", runs[0].metrics.table());
    }
    let summaries: Vec<_> = runs.iter().map(|r| r.metrics.summary()).collect();
    let names: Vec<String> = modes
        .iter()
        .map(|m| format!("{m:?}").to_lowercase())
        .collect();
    println!("metric\t{}", names.join("\t"));
    let row = |name: &str, f: &dyn Fn(usize) -> String| {
        println!(
            "{name}\t{}",
            (0..runs.len()).map(f).collect::<Vec<_>>().join("\t")
        );
    };
    row("segments", &|i| summaries[i].segments_processed.to_string());
    row("errors", &|i| summaries[i].errors.to_string());
    row("exact_roundtrips", &|i| {
        summaries[i].exact_roundtrips.to_string()
    });
    row("distinct_keys", &|i| summaries[i].distinct_keys.to_string());
    row("mean_ciphertext_entropy_bits", &|i| {
        runs[i].mean_entropy.to_string()
    });
    row("core_encrypt_median_s", &|i| {
        summaries[i].core_encrypt.median.to_string()
    });
    row("core_encrypt_p99_s", &|i| {
        summaries[i].core_encrypt.p99.to_string()
    });
    row("decrypt_median_s", &|i| {
        summaries[i].decrypt.median.to_string()
    });
    row("store_median_s", &|i| summaries[i].store.median.to_string());
    row("total_median_s", &|i| summaries[i].total.median.to_string());
    row("mean_interarrival_s", &|i| {
        summaries[i].mean_interarrival_seconds.to_string()
    });
    for r in &runs {
        report_errors(&r.metrics);
    }
    if let Some(p) = &o.output {
        let all: Vec<&PipelineMetrics> = runs.iter().map(|r| &r.metrics).collect();
        let mut f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&all)?)?;
    }
    Ok(runs.iter().all(|r| r.metrics.errors.is_empty()))
}
