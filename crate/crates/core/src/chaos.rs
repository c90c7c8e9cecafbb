//! Logistic-map keystream generation and biometric parameter derivation.
//!
//! The whole cipher secret is a [`ChaoticParams`] pair `(r, x0)` inside the
//! chaotic regime. Parameters are derived from the mean and standard deviation
//! of the segment being protected, optionally salted with a timestamp and a
//! device identifier so that repeated segments still get fresh keystreams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound of the control parameter interval (exclusive).
pub const R_MIN: f64 = 3.6;
/// Width of the control parameter interval.
pub const R_SPAN: f64 = 0.4;
/// Lower bound of the initial-condition interval (exclusive).
pub const X0_MIN: f64 = 0.1;
/// Width of the initial-condition interval.
pub const X0_SPAN: f64 = 0.8;

/// Exact-zero remainders are moved this fraction of the modulus off the
/// interval boundary.
pub const BOUNDARY_NUDGE: f64 = 1.0 / (1u64 << 20) as f64;

/// Control parameter `r` and initial condition `x0` of the logistic map.
///
/// Always satisfies `3.6 < r < 4.0` and `0.1 < x0 < 0.9`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaoticParams {
    r: f64,
    x0: f64,
}

impl ChaoticParams {
    pub fn new(r: f64, x0: f64) -> Result<Self> {
        if !(r > R_MIN && r < R_MIN + R_SPAN) {
            return Err(Error::ParameterDomain(format!("r={r} outside (3.6, 4.0)")));
        }
        if !(x0 > X0_MIN && x0 < X0_MIN + X0_SPAN) {
            return Err(Error::ParameterDomain(format!(
                "x0={x0} outside (0.1, 0.9)"
            )));
        }
        Ok(Self { r, x0 })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Builds params from offsets into the two intervals, folding each offset
    /// back into `[0, span)` and nudging exact zeros off the boundary.
    fn from_offsets(r_offset: f64, x0_offset: f64) -> Self {
        Self {
            r: interior(R_MIN, R_SPAN, r_offset),
            x0: interior(X0_MIN, X0_SPAN, x0_offset),
        }
    }

    /// Clamps an arbitrary (possibly non-finite) pair into the open domain.
    ///
    /// Values at or beyond an interval edge land one boundary nudge inside it;
    /// NaN maps to the interval midpoint.
    pub fn clamped(r: f64, x0: f64) -> Self {
        Self {
            r: clamp_interior(R_MIN, R_SPAN, r),
            x0: clamp_interior(X0_MIN, X0_SPAN, x0),
        }
    }
}

fn clamp_interior(lo: f64, span: f64, v: f64) -> f64 {
    let eps = BOUNDARY_NUDGE * span;
    if v.is_nan() {
        return lo + span / 2.0;
    }
    v.clamp(lo + eps, lo + span - eps)
}

/// `lo + (offset mod span)` kept strictly inside `(lo, lo + span)`.
fn interior(lo: f64, span: f64, offset: f64) -> f64 {
    let mut rem = nonneg_fmod(offset, span);
    if rem == 0.0 {
        rem = BOUNDARY_NUDGE * span;
    }
    let v = lo + rem;
    let hi = lo + span;
    if v >= hi {
        // rem was within an ulp of span and rounded onto the edge
        hi - BOUNDARY_NUDGE * span
    } else {
        v
    }
}

/// Floating remainder of `a / m` in `[0, m)`, for `m > 0`.
pub fn nonneg_fmod(a: f64, m: f64) -> f64 {
    let r = a % m;
    let r = if r < 0.0 { r + m } else { r };
    // -tiny % m + m can round up to m itself
    if r >= m {
        0.0
    } else {
        r
    }
}

/// Mean and population standard deviation of one raw segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Maps segment statistics onto the chaotic domain:
/// `r = 3.6 + (σ mod 0.4)`, `x0 = 0.1 + (μ mod 0.8)`.
pub fn derive_params(stats: SegmentStats) -> Result<ChaoticParams> {
    if !stats.mean.is_finite() || !stats.std_dev.is_finite() || stats.std_dev < 0.0 {
        return Err(Error::InvalidStatistics {
            mean: stats.mean,
            std_dev: stats.std_dev,
        });
    }
    Ok(ChaoticParams::from_offsets(stats.std_dev, stats.mean))
}

/// A finite run of logistic-map iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaoticSequence {
    pub values: Vec<f64>,
    pub params: ChaoticParams,
    pub burn_in: usize,
}

impl ChaoticSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Iterates `x ← r·x·(1−x)` from `x0`, discards `burn_in` iterates and
/// returns the next `n`. The first emitted value is the image of `x0`
/// (or of the last burn-in iterate).
pub fn iterate_logistic(
    params: ChaoticParams,
    n: usize,
    burn_in: usize,
) -> Result<ChaoticSequence> {
    // re-validate: the fields are private but a deserialized value may be anything
    let params = ChaoticParams::new(params.r, params.x0)?;
    if n == 0 {
        return Err(Error::ParameterDomain(
            "sequence length must be at least 1".into(),
        ));
    }
    let values = iterate_unchecked(params.r, params.x0, n, burn_in)?;
    Ok(ChaoticSequence {
        values,
        params,
        burn_in,
    })
}

/// Iteration core without the domain check; `iteration` in the error counts
/// every application of the map, burn-in included, starting at 1.
pub(crate) fn iterate_unchecked(r: f64, x0: f64, n: usize, burn_in: usize) -> Result<Vec<f64>> {
    let mut x = x0;
    let mut out = Vec::with_capacity(n);
    for i in 1..=burn_in + n {
        x = r * x * (1.0 - x);
        if x <= 0.0 || x >= 1.0 {
            return Err(Error::DegenerateOrbit {
                iteration: i,
                value: x,
            });
        }
        if i > burn_in {
            out.push(x);
        }
    }
    Ok(out)
}

/// Per-segment salt: acquisition timestamp and an opaque device identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct KeySalt {
    pub timestamp_ms: u64,
    pub device_id: Vec<u8>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl KeySalt {
    pub fn new(timestamp_ms: u64, device_id: impl Into<Vec<u8>>) -> Result<Self> {
        let device_id = device_id.into();
        if device_id.is_empty() {
            return Err(Error::ParameterDomain(
                "salt device id must be non-empty".into(),
            ));
        }
        if device_id.len() > u8::MAX as usize {
            return Err(Error::ParameterDomain(
                "salt device id longer than 255 bytes".into(),
            ));
        }
        Ok(Self {
            timestamp_ms,
            device_id,
        })
    }

    /// 64-bit FNV-1a over `timestamp (LE) ‖ device_id`, finished with the
    /// murmur3 `fmix64` avalanche so both 32-bit halves depend on every input
    /// bit. Not a cryptographic hash.
    pub fn digest(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for &b in self
            .timestamp_ms
            .to_le_bytes()
            .iter()
            .chain(&self.device_id)
        {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        fmix64(h)
    }

    /// The two unit offsets `(u_r, u_x)` in `[0, 1)` taken from the high and
    /// low halves of the digest.
    pub fn offsets(&self) -> (f64, f64) {
        let d = self.digest();
        let scale = 1.0 / (1u64 << 32) as f64;
        ((d >> 32) as f64 * scale, (d & 0xffff_ffff) as f64 * scale)
    }
}

fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    h
}

/// Rotates `params` within the chaotic domain by the salt's digest offsets.
pub fn apply_salt(params: ChaoticParams, salt: &KeySalt) -> ChaoticParams {
    let (u_r, u_x) = salt.offsets();
    apply_salt_offsets(params, u_r, u_x)
}

/// `r' = 3.6 + ((r − 3.6) + 0.4·u_r) mod 0.4`, and likewise for `x0` over 0.8.
/// A zero offset leaves its coordinate bit-identical.
pub fn apply_salt_offsets(params: ChaoticParams, u_r: f64, u_x: f64) -> ChaoticParams {
    let r = if u_r == 0.0 {
        params.r
    } else {
        interior(R_MIN, R_SPAN, (params.r - R_MIN) + R_SPAN * u_r)
    };
    let x0 = if u_x == 0.0 {
        params.x0
    } else {
        interior(X0_MIN, X0_SPAN, (params.x0 - X0_MIN) + X0_SPAN * u_x)
    };
    ChaoticParams { r, x0 }
}
