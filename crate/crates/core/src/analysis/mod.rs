//! Statistical security battery and reconstruction-quality metrics.

pub mod corpus;
pub mod fft;
pub mod quality;
pub mod report;
pub mod stats;

pub use corpus::{
    analyze_corpus, analyze_corpus_with_keys, compare_ciphertexts, CorpusConfig, CorpusReport,
    SegmentAnalysis,
};
pub use fft::{spectral_flatness, spectrum_summary, SpectrumSummary};
pub use quality::{
    key_sensitivity_test, plaintext_sensitivity_test, psnr_from_mse, quality_metrics,
    KeySensitivity, PlaintextSensitivity, QualityMetrics,
};
pub use report::{AnalysisReport, Timing};
pub use stats::{
    autocorrelation, empirical_key_space_bits, histogram_distance, histogram_stats, key_space_bits,
    min_entropy_mcv, min_entropy_mcv_blocks, monobit_test, pearson_correlation, shannon_entropy,
    Histogram256, HistogramDistance, HistogramStats, MinEntropySummary, MONOBIT_ALPHA,
};
