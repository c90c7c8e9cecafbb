//! Permutation + XOR segment cipher.
//!
//! A segment is min-max quantized to bytes, shuffled by the argsort of a
//! logistic sequence and XORed with a mask drawn from the same sequence.
//! Neither the permutation nor the mask is stored: both are regenerated from
//! `(r, x0)` at decryption time.

use serde::{Deserialize, Serialize};

use crate::chaos::{iterate_logistic, ChaoticParams, KeySalt, SegmentStats};
use crate::error::{Error, Result};

/// Window of real-valued samples (signal units, e.g. millivolts).
///
/// Construction only checks shape; non-finite samples are allowed here
/// because they mark missing values on ingestion. Every cipher operation
/// calls [`SignalSegment::validate`] first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSegment {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SignalSegment {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidSignal(format!(
                "segment needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "sample rate {sample_rate} must be positive"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InvalidSignal(
                "segment shorter than 2 samples".into(),
            ));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(())
    }

    pub fn range(&self) -> QuantizationRange {
        let (min, max) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        QuantizationRange { min, max }
    }

    /// Samples mapped onto `[0, 1]` using the segment's own range.
    pub fn normalized(&self) -> Vec<f64> {
        self.range().normalize_all(&self.samples)
    }
}

/// Min/max of the raw samples, needed to rescale decrypted bytes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationRange {
    pub min: f64,
    pub max: f64,
}

impl QuantizationRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    /// Largest real-domain error introduced by quantization, `(max−min)/510`.
    pub fn max_error(&self) -> f64 {
        self.width() / 510.0
    }

    pub fn dequantize(&self, byte: u8) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + byte as f64 / 255.0 * self.width()
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / self.width()
        }
    }

    pub fn normalize_all(&self, vs: &[f64]) -> Vec<f64> {
        vs.iter().map(|&v| self.normalize(v)).collect()
    }
}

/// Byte image of a segment plus the range needed to undo it.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedSegment {
    pub bytes: Vec<u8>,
    pub range: QuantizationRange,
}

/// `byte = round((s − min)/(max − min)·255)`, rounding half away from zero.
/// Constant segments quantize to all zeros.
pub fn quantize(segment: &SignalSegment) -> Result<QuantizedSegment> {
    segment.validate()?;
    let range = segment.range();
    let bytes = if range.is_constant() {
        vec![0; segment.len()]
    } else {
        let w = range.width();
        segment
            .samples
            .iter()
            .map(|&s| ((s - range.min) / w * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    Ok(QuantizedSegment { bytes, range })
}

pub fn dequantize(q: &QuantizedSegment, sample_rate: f64) -> Result<SignalSegment> {
    SignalSegment::new(
        q.bytes.iter().map(|&b| q.range.dequantize(b)).collect(),
        sample_rate,
    )
}

/// Arithmetic mean and population standard deviation.
pub fn compute_stats(segment: &SignalSegment) -> Result<SegmentStats> {
    segment.validate()?;
    Ok(sample_stats(&segment.samples))
}

/// Mean and population standard deviation. A constant input gets exactly its
/// value and zero, not the rounding residue of the two-pass formula.
pub fn sample_stats(samples: &[f64]) -> SegmentStats {
    if samples.iter().all(|&s| s == samples[0]) {
        return SegmentStats {
            mean: samples[0],
            std_dev: 0.0,
        };
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    SegmentStats {
        mean,
        std_dev: var.sqrt(),
    }
}

/// Per-segment artifacts regenerated from `(r, x0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyMaterial {
    permutation: Vec<usize>,
    mask: Vec<u8>,
    pub range: QuantizationRange,
    pub params: ChaoticParams,
}

impl KeyMaterial {
    /// Assembles key material from explicit parts; the permutation must be a
    /// bijection and the mask the same length.
    pub fn from_parts(
        permutation: Vec<usize>,
        mask: Vec<u8>,
        range: QuantizationRange,
        params: ChaoticParams,
    ) -> Result<Self> {
        check_bijection(&permutation)?;
        if mask.len() != permutation.len() {
            return Err(Error::Shape {
                expected: permutation.len(),
                got: mask.len(),
            });
        }
        Ok(Self {
            permutation,
            mask,
            range,
            params,
        })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// `M_i = floor(x_i · 255)`.
pub fn mask_from_sequence(xs: &[f64]) -> Vec<u8> {
    xs.iter().map(|&x| (x * 255.0).floor() as u8).collect()
}

/// Indices sorting `xs` ascending; ties keep the lower original index first.
pub fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    idx
}

fn check_bijection(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for (i, &v) in p.iter().enumerate() {
        if v >= p.len() {
            return Err(Error::InvalidPermutation(format!(
                "entry {v} at {i} out of range"
            )));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidPermutation(format!("entry {v} repeated")));
        }
    }
    Ok(())
}

/// `q` with `q[p[i]] = i`.
pub fn invert_permutation(p: &[usize]) -> Result<Vec<usize>> {
    check_bijection(p)?;
    let mut q = vec![0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        q[v] = i;
    }
    Ok(q)
}

/// Which key path produced a record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeTag {
    #[default]
    Direct,
    MlPredicted,
}

impl ModeTag {
    pub fn as_byte(self) -> u8 {
        match self {
            ModeTag::Direct => 0,
            ModeTag::MlPredicted => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModeTag::Direct),
            1 => Ok(ModeTag::MlPredicted),
            other => Err(Error::CorruptRecord(format!("unknown mode tag {other}"))),
        }
    }
}

impl std::fmt::Display for ModeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeTag::Direct => "direct",
            ModeTag::MlPredicted => "ml",
        })
    }
}

/// 16-byte key-store index. Carries no key entropy.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct KeyId(pub [u8; 16]);

impl KeyId {
    /// Salt digest (LE) followed by the segment counter (LE).
    pub fn derive(salt: &KeySalt, segment_counter: u64) -> Self {
        let mut id = [0u8; 16];
        id[..8].copy_from_slice(&salt.digest().to_le_bytes());
        id[8..].copy_from_slice(&segment_counter.to_le_bytes());
        KeyId(id)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 32 || !s.is_ascii() {
            return Err(Error::Domain(format!(
                "key id must be 32 hex digits: {s:?}"
            )));
        }
        let mut id = [0u8; 16];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let pair = std::str::from_utf8(chunk).expect("ascii checked");
            id[i] = u8::from_str_radix(pair, 16)
                .map_err(|_| Error::Domain(format!("bad hex in key id {s:?}")))?;
        }
        Ok(KeyId(id))
    }
}

impl std::fmt::Display for KeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Public metadata attached to a ciphertext.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordMeta {
    pub key_id: KeyId,
    pub salt: KeySalt,
    pub mode: ModeTag,
}

/// Ciphertext plus what a receiver needs besides the key itself.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedRecord {
    pub ciphertext: Vec<u8>,
    pub range: QuantizationRange,
    pub segment_len: u32,
    pub key_id: KeyId,
    pub salt: KeySalt,
    pub mode: ModeTag,
}

/// Encryption configuration. `burn_in` logistic iterates are discarded before
/// the keystream is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cipher {
    pub burn_in: usize,
}

impl Cipher {
    pub fn new(burn_in: usize) -> Self {
        Self { burn_in }
    }

    /// Mask and argsort permutation from `iterate_logistic(params, n, burn_in)`.
    pub fn derive_key_material(
        &self,
        params: ChaoticParams,
        n: usize,
        range: QuantizationRange,
    ) -> Result<KeyMaterial> {
        if n < 2 {
            return Err(Error::InvalidSignal(format!("segment length {n} below 2")));
        }
        let seq = iterate_logistic(params, n, self.burn_in)?;
        Ok(KeyMaterial {
            permutation: argsort(&seq.values),
            mask: mask_from_sequence(&seq.values),
            range,
            params,
        })
    }

    pub fn encrypt(
        &self,
        segment: &SignalSegment,
        params: ChaoticParams,
        meta: RecordMeta,
    ) -> Result<(EncryptedRecord, KeyMaterial)> {
        let q = quantize(segment)?;
        let key = self.derive_key_material(params, q.bytes.len(), q.range)?;
        let ciphertext = permute_xor(&q.bytes, &key.permutation, &key.mask);
        let record = EncryptedRecord {
            segment_len: segment_len_u32(ciphertext.len())?,
            ciphertext,
            range: q.range,
            key_id: meta.key_id,
            salt: meta.salt,
            mode: meta.mode,
        };
        Ok((record, key))
    }

    /// Encrypts with caller-supplied key material (its range is replaced by
    /// the segment's own).
    pub fn encrypt_with_key(
        &self,
        segment: &SignalSegment,
        key: &KeyMaterial,
        meta: RecordMeta,
    ) -> Result<EncryptedRecord> {
        let q = quantize(segment)?;
        if key.len() != q.bytes.len() {
            return Err(Error::Shape {
                expected: q.bytes.len(),
                got: key.len(),
            });
        }
        let ciphertext = permute_xor(&q.bytes, &key.permutation, &key.mask);
        Ok(EncryptedRecord {
            segment_len: segment_len_u32(ciphertext.len())?,
            ciphertext,
            range: q.range,
            key_id: meta.key_id,
            salt: meta.salt,
            mode: meta.mode,
        })
    }

    /// Recovers the quantized plaintext bytes.
    pub fn decrypt_bytes(
        &self,
        record: &EncryptedRecord,
        params: ChaoticParams,
    ) -> Result<Vec<u8>> {
        let n = record.segment_len as usize;
        if record.ciphertext.len() != n {
            return Err(Error::CorruptRecord(format!(
                "ciphertext holds {} bytes, header says {n}",
                record.ciphertext.len()
            )));
        }
        let key = self.derive_key_material(params, n, record.range)?;
        unpermute_xor(&record.ciphertext, &key.permutation, &key.mask)
    }

    pub fn decrypt(
        &self,
        record: &EncryptedRecord,
        params: ChaoticParams,
        sample_rate: f64,
    ) -> Result<SignalSegment> {
        let bytes = self.decrypt_bytes(record, params)?;
        dequantize(
            &QuantizedSegment {
                bytes,
                range: record.range,
            },
            sample_rate,
        )
    }
}

fn segment_len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidSignal(format!("segment length {n} exceeds u32")))
}

/// `c_i = plain[perm_i] XOR mask_i`.
pub fn permute_xor(plain: &[u8], perm: &[usize], mask: &[u8]) -> Vec<u8> {
    perm.iter().zip(mask).map(|(&p, &m)| plain[p] ^ m).collect()
}

/// Inverse of [`permute_xor`]: `plain[perm_i] = c_i XOR mask_i`.
pub fn unpermute_xor(cipher: &[u8], perm: &[usize], mask: &[u8]) -> Result<Vec<u8>> {
    if cipher.len() != perm.len() || mask.len() != perm.len() {
        return Err(Error::CorruptRecord(format!(
            "length mismatch: ciphertext {}, key {}",
            cipher.len(),
            perm.len()
        )));
    }
    let mut plain = vec![0u8; cipher.len()];
    for ((&c, &p), &m) in cipher.iter().zip(perm).zip(mask) {
        plain[p] = c ^ m;
    }
    Ok(plain)
}

/// Encrypts with the default configuration and Direct metadata.
pub fn encrypt(
    segment: &SignalSegment,
    params: ChaoticParams,
) -> Result<(EncryptedRecord, KeyMaterial)> {
    Cipher::default().encrypt(segment, params, RecordMeta::default())
}

/// Decrypts with the default configuration.
pub fn decrypt(
    record: &EncryptedRecord,
    params: ChaoticParams,
    sample_rate: f64,
) -> Result<SignalSegment> {
    Cipher::default().decrypt(record, params, sample_rate)
}
