//! On-disk layout of an [`EncryptedRecord`].
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HECG"
//! 4       1     version (1)
//! 5       1     mode tag (0 = Direct, 1 = MLPredicted)
//! 6       4     segment_len, u32 LE
//! 10      8     range min, f64 LE
//! 18      8     range max, f64 LE
//! 26      8     salt timestamp (ms), u64 LE
//! 34      1     device_id_len
//! 35      L     device_id
//! 35+L    16    key_id
//! 51+L    n     ciphertext
//! ```
//!
//! No padding and no checksum.

use crate::chaos::KeySalt;
use crate::cipher::{EncryptedRecord, KeyId, ModeTag, QuantizationRange};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HECG";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 4 + 1 + 1 + 4 + 8 + 8 + 8 + 1;

impl EncryptedRecord {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dev = &self.salt.device_id;
        let dev_len = u8::try_from(dev.len()).map_err(|_| {
            Error::CorruptRecord(format!("device id of {} bytes exceeds 255", dev.len()))
        })?;
        if self.ciphertext.len() != self.segment_len as usize {
            return Err(Error::CorruptRecord(
                "ciphertext length disagrees with segment_len".into(),
            ));
        }
        let mut out = Vec::with_capacity(FIXED_HEADER + dev.len() + 16 + self.ciphertext.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.mode.as_byte());
        out.extend_from_slice(&self.segment_len.to_le_bytes());
        out.extend_from_slice(&self.range.min.to_le_bytes());
        out.extend_from_slice(&self.range.max.to_le_bytes());
        out.extend_from_slice(&self.salt.timestamp_ms.to_le_bytes());
        out.push(dev_len);
        out.extend_from_slice(dev);
        out.extend_from_slice(&self.key_id.0);
        out.extend_from_slice(&self.ciphertext);
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::CorruptRecord("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::CorruptRecord(format!(
                "unsupported version {version}"
            )));
        }
        let mode = ModeTag::from_byte(r.u8()?)?;
        let segment_len = u32::from_le_bytes(r.array()?);
        let min = f64::from_le_bytes(r.array()?);
        let max = f64::from_le_bytes(r.array()?);
        let timestamp_ms = u64::from_le_bytes(r.array()?);
        let dev_len = r.u8()? as usize;
        let device_id = r.take(dev_len)?.to_vec();
        let key_id = KeyId(r.array()?);
        let ciphertext = r.take(segment_len as usize)?.to_vec();
        if r.pos != buf.len() {
            return Err(Error::CorruptRecord(format!(
                "{} trailing bytes after ciphertext",
                buf.len() - r.pos
            )));
        }
        if !(min.is_finite() && max.is_finite() && max >= min) {
            return Err(Error::CorruptRecord(format!(
                "invalid range ({min}, {max})"
            )));
        }
        Ok(EncryptedRecord {
            ciphertext,
            range: QuantizationRange { min, max },
            segment_len,
            key_id,
            salt: KeySalt {
                timestamp_ms,
                device_id,
            },
            mode,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptRecord(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EncryptedRecord {
        EncryptedRecord {
            ciphertext: vec![0xde, 0xad, 0xbe],
            range: QuantizationRange {
                min: -1.5,
                max: 2.0,
            },
            segment_len: 3,
            key_id: KeyId([7; 16]),
            salt: KeySalt {
                timestamp_ms: 0x0102_0304_0506_0708,
                device_id: b"ab".to_vec(),
            },
            mode: ModeTag::MlPredicted,
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let b = sample().to_bytes().unwrap();
        let mut want = b"HECG".to_vec();
        want.push(1);
        want.push(1);
        want.extend_from_slice(&[3, 0, 0, 0]);
        want.extend_from_slice(&(-1.5f64).to_le_bytes());
        want.extend_from_slice(&2.0f64.to_le_bytes());
        want.extend_from_slice(&[8, 7, 6, 5, 4, 3, 2, 1]);
        want.push(2);
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&[7; 16]);
        want.extend_from_slice(&[0xde, 0xad, 0xbe]);
        assert_eq!(b, want);
        assert_eq!(b.len(), 51 + 2 + 3);
    }

    #[test]
    fn rejects_damage() {
        let good = sample().to_bytes().unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(EncryptedRecord::from_bytes(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(EncryptedRecord::from_bytes(&bad_version).is_err());
        let mut bad_mode = good.clone();
        bad_mode[5] = 9;
        assert!(EncryptedRecord::from_bytes(&bad_mode).is_err());
        assert!(EncryptedRecord::from_bytes(&good[..good.len() - 1]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(EncryptedRecord::from_bytes(&long).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(ct in proptest::collection::vec(any::<u8>(), 0..600),
                     min in -1e3f64..1e3, w in 0f64..1e3, ts: u64,
                     dev in proptest::collection::vec(any::<u8>(), 0..255),
                     id: [u8; 16], ml: bool) {
            let rec = EncryptedRecord {
                segment_len: ct.len() as u32,
                ciphertext: ct,
                range: QuantizationRange { min, max: min + w },
                key_id: KeyId(id),
                salt: KeySalt { timestamp_ms: ts, device_id: dev },
                mode: if ml { ModeTag::MlPredicted } else { ModeTag::Direct },
            };
            let back = EncryptedRecord::from_bytes(&rec.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
