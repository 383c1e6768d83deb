//! Feature files and providers.
//!
//! The on-disk format is binary: magic `CTRLFEAT`, version u32, dimension
//! u32, count u64, then `count` records of (key length u16, key bytes,
//! little-endian f32 vector of `dimension` values). Values are f32 on disk
//! and widened to f64 in memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::synthetic::SyntheticFeatures;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"CTRLFEAT";
pub const FEATURE_VERSION: u32 = 1;

/// Which modality a provider serves; used for dimension-mismatch messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRole {
    Visual,
    Sentence,
}

impl std::fmt::Display for FeatureRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureRole::Visual => write!(f, "visual"),
            FeatureRole::Sentence => write!(f, "sentence"),
        }
    }
}

/// Write a feature file. Keys are written in the given order.
pub fn write_features(path: &Path, dimension: u32, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&dimension.to_le_bytes())?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (key, values) in entries {
        if values.len() != dimension as usize {
            return Err(Error::InvalidArgument(format!(
                "feature `{key}` has {} values, file dimension is {dimension}",
                values.len()
            )));
        }
        let bytes = key.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("feature key too long: {key}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        for &v in values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a feature file back into (dimension, ordered entries).
pub fn read_features(path: &Path) -> Result<(u32, Vec<(String, Vec<f64>)>)> {
    let bad = |message: String| Error::Format { path: path.to_path_buf(), message };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("missing CTRLFEAT magic".into()))?;
    if &magic != FEATURE_MAGIC {
        return Err(bad("missing CTRLFEAT magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header".into()))?;
    let version = u32::from_le_bytes(u32buf);
    if version != FEATURE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header".into()))?;
    let dimension = u32::from_le_bytes(u32buf);
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| bad("truncated header".into()))?;
    let count = u64::from_le_bytes(u64buf);

    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut lenbuf = [0u8; 2];
        r.read_exact(&mut lenbuf).map_err(|_| bad(format!("truncated record {i}")))?;
        let klen = u16::from_le_bytes(lenbuf) as usize;
        let mut kbytes = vec![0u8; klen];
        r.read_exact(&mut kbytes).map_err(|_| bad(format!("truncated key in record {i}")))?;
        let key = String::from_utf8(kbytes).map_err(|_| bad(format!("record {i}: bad UTF-8 key")))?;
        let mut values = Vec::with_capacity(dimension as usize);
        for _ in 0..dimension {
            let mut vbuf = [0u8; 4];
            r.read_exact(&mut vbuf).map_err(|_| bad(format!("truncated values for `{key}`")))?;
            values.push(f32::from_le_bytes(vbuf) as f64);
        }
        entries.push((key, values));
    }
    Ok((dimension, entries))
}

/// Serves fixed-dimension feature vectors by key, backed either by a file
/// loaded into memory or by a deterministic synthetic generator.
#[derive(Debug, Clone)]
pub enum FeatureProvider {
    File { role: FeatureRole, dimension: usize, map: BTreeMap<String, Vec<f64>> },
    Synthetic(SyntheticFeatures),
}

impl FeatureProvider {
    /// Load a file-backed provider, checking the header dimension when the
    /// caller already knows what it must be.
    pub fn open_file(path: &Path, role: FeatureRole, expected_dim: Option<usize>) -> Result<Self> {
        let (dimension, entries) = read_features(path)?;
        if let Some(expect) = expected_dim {
            if expect != dimension as usize {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "{role} feature dimension {dimension} does not match configured {expect}"
                    ),
                });
            }
        }
        let mut map = BTreeMap::new();
        for (key, values) in entries {
            if map.insert(key.clone(), values).is_some() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("duplicate feature key `{key}`"),
                });
            }
        }
        Ok(FeatureProvider::File { role, dimension: dimension as usize, map })
    }

    pub fn dimension(&self) -> usize {
        match self {
            FeatureProvider::File { dimension, .. } => *dimension,
            FeatureProvider::Synthetic(s) => s.dimension(),
        }
    }

    pub fn role(&self) -> FeatureRole {
        match self {
            FeatureProvider::File { role, .. } => *role,
            FeatureProvider::Synthetic(s) => s.role(),
        }
    }

    /// The vector for `key`; unknown keys are an error naming the key.
    pub fn lookup(&self, key: &str) -> Result<Vec<f64>> {
        match self {
            FeatureProvider::File { map, .. } => map.get(key).cloned().ok_or_else(|| {
                Error::UnknownKey { key: key.to_string(), suggestion: None }
            }),
            FeatureProvider::Synthetic(s) => s.lookup(key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        // values chosen to be exactly representable in f32
        let entries = vec![
            ("v0:0:64".to_string(), vec![0.5, -1.25, 3.0]),
            ("v0#s0".to_string(), vec![7.5, 0.0, -0.125]),
        ];
        write_features(&path, 3, &entries).unwrap();
        let (dim, back) = read_features(&path).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(back, entries);
    }

    #[test]
    fn provider_reports_unknown_keys_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_features(&path, 2, &[("known".into(), vec![1.0, 2.0])]).unwrap();
        let p = FeatureProvider::open_file(&path, FeatureRole::Visual, Some(2)).unwrap();
        assert_eq!(p.lookup("known").unwrap(), vec![1.0, 2.0]);
        let err = p.lookup("missing").unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
    }

    #[test]
    fn dimension_mismatch_fails_at_open_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_features(&path, 2, &[("k".into(), vec![1.0, 2.0])]).unwrap();
        let err = FeatureProvider::open_file(&path, FeatureRole::Sentence, Some(3))
            .unwrap_err()
            .to_string();
        assert!(err.contains('2') && err.contains('3'), "{err}");
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_features(&path, 2, &[("k".into(), vec![1.0, 2.0])]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_features(&path), Err(Error::Format { .. })));
    }
}
