//! Ciphertext and key stores. Records and keys always live in separate
//! backends; a record carries only its key id.
//!
//! Directory layout of [`DirStore`]:
//!
//! ```text
//! <root>/<stream>/seg_00000000.hecg
//! <root>/<stream>/seg_00000001.hecg
//! ```
//!
//! [`FileKeyStore`] is a text file with one `key_id r x0` line per key: the
//! id as 32 lowercase hex digits, then both parameters with 17 significant
//! digits, which round-trips every `f64` exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::chaos::ChaoticParams;
use crate::cipher::{EncryptedRecord, KeyId};
use crate::error::{Error, Result};

pub trait RecordStore: Send {
    fn put(&mut self, stream: &str, index: u64, record: &EncryptedRecord) -> Result<()>;
    fn get(&self, stream: &str, index: u64) -> Result<EncryptedRecord>;
    /// Stored segment indices of `stream`, ascending.
    fn indices(&self, stream: &str) -> Result<Vec<u64>>;
}

pub trait KeyStore: Send {
    fn put(&mut self, id: KeyId, params: ChaoticParams) -> Result<()>;
    fn get(&self, id: &KeyId) -> Result<ChaoticParams>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_stream(stream: &str) -> Result<()> {
    let ok = !stream.is_empty()
        && stream != "."
        && stream != ".."
        && stream
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(Error::Store(format!("invalid stream id {stream:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, stream: &str, index: u64) -> PathBuf {
        self.root.join(stream).join(format!("seg_{index:08}.hecg"))
    }

    /// Every stream directory under the root, sorted.
    pub fn streams(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if entry.path().is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    out.push(name.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

impl RecordStore for DirStore {
    fn put(&mut self, stream: &str, index: u64, record: &EncryptedRecord) -> Result<()> {
        check_stream(stream)?;
        let dir = self.root.join(stream);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = self.record_path(stream, index);
        // write-then-rename so a reader never sees a half-written record
        let tmp = path.with_extension("hecg.tmp");
        fs::write(&tmp, record.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn get(&self, stream: &str, index: u64) -> Result<EncryptedRecord> {
        check_stream(stream)?;
        let path = self.record_path(stream, index);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        EncryptedRecord::from_bytes(&bytes)
    }

    fn indices(&self, stream: &str) -> Result<Vec<u64>> {
        check_stream(stream)?;
        let dir = self.root.join(stream);
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(idx) = name
                .strip_prefix("seg_")
                .and_then(|s| s.strip_suffix(".hecg"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                out.push(idx);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MemoryStore {
    records: HashMap<String, BTreeMap<u64, Vec<u8>>>,
}

impl RecordStore for MemoryStore {
    fn put(&mut self, stream: &str, index: u64, record: &EncryptedRecord) -> Result<()> {
        check_stream(stream)?;
        self.records
            .entry(stream.to_string())
            .or_default()
            .insert(index, record.to_bytes()?);
        Ok(())
    }

    fn get(&self, stream: &str, index: u64) -> Result<EncryptedRecord> {
        let bytes = self
            .records
            .get(stream)
            .and_then(|m| m.get(&index))
            .ok_or_else(|| Error::Store(format!("no record {stream}/{index}")))?;
        EncryptedRecord::from_bytes(bytes)
    }

    fn indices(&self, stream: &str) -> Result<Vec<u64>> {
        Ok(self
            .records
            .get(stream)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default())
    }
}

pub fn format_key_line(id: &KeyId, p: ChaoticParams) -> String {
    format!("{} {:.16e} {:.16e}", id.to_hex(), p.r(), p.x0())
}

pub fn parse_key_line(line: &str) -> Result<(KeyId, ChaoticParams)> {
    let mut it = line.split_whitespace();
    let (Some(id), Some(r), Some(x0), None) = (it.next(), it.next(), it.next(), it.next()) else {
        return Err(Error::Store(format!("malformed key line {line:?}")));
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Store(format!("bad number {s:?} in key line")))
    };
    Ok((KeyId::from_hex(id)?, ChaoticParams::new(num(r)?, num(x0)?)?))
}

/// Append-only key file, fully loaded on open.
#[derive(Debug)]
pub struct FileKeyStore {
    path: PathBuf,
    keys: HashMap<KeyId, ChaoticParams>,
    file: File,
}

impl FileKeyStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut keys = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let (id, p) = parse_key_line(&line)
                    .map_err(|e| Error::Store(format!("{}:{}: {e}", path.display(), i + 1)))?;
                keys.insert(id, p);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, keys, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl KeyStore for FileKeyStore {
    fn put(&mut self, id: KeyId, params: ChaoticParams) -> Result<()> {
        writeln!(self.file, "{}", format_key_line(&id, params))
            .map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))?;
        self.keys.insert(id, params);
        Ok(())
    }

    fn get(&self, id: &KeyId) -> Result<ChaoticParams> {
        self.keys
            .get(id)
            .copied()
            .ok_or_else(|| Error::MissingKey(id.to_hex()))
    }

    fn len(&self) -> usize {
        self.keys.len()
    }
}

#[derive(Clone, Debug, Default)]
pub struct MemoryKeyStore {
    keys: HashMap<KeyId, ChaoticParams>,
}

impl KeyStore for MemoryKeyStore {
    fn put(&mut self, id: KeyId, params: ChaoticParams) -> Result<()> {
        self.keys.insert(id, params);
        Ok(())
    }

    fn get(&self, id: &KeyId) -> Result<ChaoticParams> {
        self.keys
            .get(id)
            .copied()
            .ok_or_else(|| Error::MissingKey(id.to_hex()))
    }

    fn len(&self) -> usize {
        self.keys.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::KeySalt;
    use crate::cipher::{ModeTag, QuantizationRange};

    fn record(i: u8) -> EncryptedRecord {
        EncryptedRecord {
            ciphertext: vec![i, 2, 3],
            range: QuantizationRange { min: 0.0, max: 1.0 },
            segment_len: 3,
            key_id: KeyId([i; 16]),
            salt: KeySalt::new(5, "dev").unwrap(),
            mode: ModeTag::Direct,
        }
    }

    #[test]
    fn dir_store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = DirStore::open(dir.path()).unwrap();
        for i in [3u64, 0, 1] {
            s.put("p01", i, &record(i as u8)).unwrap();
        }
        assert_eq!(s.indices("p01").unwrap(), vec![0, 1, 3]);
        assert_eq!(s.get("p01", 3).unwrap(), record(3));
        assert!(dir.path().join("p01/seg_00000003.hecg").is_file());
        assert_eq!(s.streams().unwrap(), vec!["p01".to_string()]);
        assert!(s.put("../x", 0, &record(0)).is_err());
        assert!(s.get("p01", 9).is_err());
    }

    #[test]
    fn key_lines_are_exact() {
        let p = ChaoticParams::new(3.6 + 0.1234567890123456, 0.1 + 1.0 / 3.0).unwrap();
        let id = KeyId([0xab; 16]);
        let line = format_key_line(&id, p);
        assert!(line.starts_with("abababababababababababababababab "));
        let (id2, p2) = parse_key_line(&line).unwrap();
        assert_eq!((id2, p2), (id, p));
        assert!(parse_key_line("zz 3.7 0.5").is_err());
        assert!(parse_key_line(&format!("{} 4.5 0.5", id.to_hex())).is_err());
    }

    #[test]
    fn file_key_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys/keys.txt");
        let p = ChaoticParams::new(3.75, 0.25).unwrap();
        {
            let mut ks = FileKeyStore::open(&path).unwrap();
            ks.put(KeyId([1; 16]), p).unwrap();
        }
        let ks = FileKeyStore::open(&path).unwrap();
        assert_eq!(ks.get(&KeyId([1; 16])).unwrap(), p);
        assert!(matches!(ks.get(&KeyId([2; 16])), Err(Error::MissingKey(_))));
    }
}
