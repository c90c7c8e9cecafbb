//! Biometric-keyed chaotic encryption of fixed-length signal segments.
//!
//! Each segment's `(r, x0)` logistic-map key comes from its own mean and
//! standard deviation ([`chaos::derive_params`]) or from a trained
//! [`ml::KeyPredictor`]. The [`cipher`] quantizes, permutes and masks the
//! segment; [`analysis`] and [`attack`] measure the result and [`pipeline`]
//! runs the acquire, encrypt, store, decrypt loop.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attack;
pub mod chaos;
pub mod cipher;
pub mod error;
pub mod ml;
pub mod par;
pub mod pipeline;
pub mod record;

pub use chaos::{
    apply_salt, derive_params, iterate_logistic, ChaoticParams, KeySalt, SegmentStats,
};
pub use cipher::{
    compute_stats, decrypt, encrypt, quantize, sample_stats, Cipher, EncryptedRecord, KeyId,
    KeyMaterial, ModeTag, QuantizationRange, QuantizedSegment, RecordMeta, SignalSegment,
};
pub use error::{Error, Result};
pub use par::Execution;
