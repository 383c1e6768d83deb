//! Binary checkpoint format for parameter stores.
//!
//! Layout: the magic string `CTRLCKPT`, a u32 format version, then repeated
//! records of (name length u16, name bytes, rank u32, dims u32 each, f64
//! little-endian payload). Optimizer moments and the step counter are stored
//! as ordinary records under the reserved `__opt__/` name prefix, so a save
//! and load round trip is bit-exact for the entire store.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autograd::store::{Moments, ParameterStore, OPT_PREFIX};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTRLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_record<W: Write>(w: &mut W, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    let bytes = name.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("record name too long: {name}")));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for name in store.names().map(str::to_string).collect::<Vec<_>>() {
        let t = store.get(&name).unwrap();
        write_record(&mut w, &name, t.shape(), t.data())?;
    }
    for (name, mom) in &store.moments {
        let shape = store.get(name).unwrap().shape().to_vec();
        write_record(&mut w, &format!("{OPT_PREFIX}m/{name}"), &shape, &mom.m)?;
        write_record(&mut w, &format!("{OPT_PREFIX}v/{name}"), &shape, &mom.v)?;
    }
    write_record(&mut w, &format!("{OPT_PREFIX}step"), &[], &[store.step as f64])?;
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    path: std::path::PathBuf,
}

impl<R: Read> Reader<R> {
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::Format { path: self.path.clone(), message: message.into() }
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<bool> {
        let mut filled = 0;
        while filled < buf.len() {
            let n = self.inner.read(&mut buf[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(false);
                }
                return Err(self.bad("truncated record"));
            }
            filled += n;
        }
        Ok(true)
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        if !self.exact(&mut b)? {
            return Err(self.bad("unexpected end of file"));
        }
        Ok(u32::from_le_bytes(b))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterStore> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?), path: path.to_path_buf() };
    let mut magic = [0u8; 8];
    if !r.exact(&mut magic)? || &magic != CHECKPOINT_MAGIC {
        return Err(r.bad("missing CTRLCKPT magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.bad(format!("unsupported version {version}")));
    }

    let mut store = ParameterStore::new();
    let mut moments_m: Vec<(String, Vec<f64>)> = Vec::new();
    let mut moments_v: Vec<(String, Vec<f64>)> = Vec::new();
    loop {
        let mut len_buf = [0u8; 2];
        if !r.exact(&mut len_buf)? {
            break;
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        if !r.exact(&mut name_bytes)? {
            return Err(r.bad("truncated record name"));
        }
        let name = String::from_utf8(name_bytes)
            .map_err(|_| r.bad("record name is not valid UTF-8"))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b = [0u8; 8];
            if !r.exact(&mut b)? {
                return Err(r.bad(format!("truncated payload for `{name}`")));
            }
            data.push(f64::from_le_bytes(b));
        }

        if let Some(rest) = name.strip_prefix(OPT_PREFIX) {
            if let Some(p) = rest.strip_prefix("m/") {
                moments_m.push((p.to_string(), data));
            } else if let Some(p) = rest.strip_prefix("v/") {
                moments_v.push((p.to_string(), data));
            } else if rest == "step" {
                store.step = data.first().copied().unwrap_or(0.0) as u64;
            } else {
                return Err(r.bad(format!("unknown optimizer record `{name}`")));
            }
        } else {
            store.insert(&name, Tensor::new(shape, data).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("record `{name}`: {e}"),
            })?)?;
        }
    }

    for (name, m) in moments_m {
        let n = store
            .get(&name)
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("moment record for unknown parameter `{name}`"),
            })?
            .numel();
        if m.len() != n {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("moment size mismatch for `{name}`"),
            });
        }
        store.moments.entry(name).or_insert_with(Moments::default).m = m;
    }
    for (name, v) in moments_v {
        match store.moments.get_mut(&name) {
            Some(mom) if v.len() == mom.m.len() => mom.v = v,
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("second-moment record mismatch for `{name}`"),
                })
            }
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::AdamParams;

    fn populated_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("layer/weight", Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 1.5, -2.5, 3.5]).unwrap())
            .unwrap();
        s.insert("layer/bias", Tensor::new(vec![1, 3], vec![1e-300, 0.0, -0.0]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact_including_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");

        let mut store = populated_store();
        store.get_mut("layer/weight").unwrap().accumulate_grad(&[1.0; 6]);
        store.get_mut("layer/bias").unwrap().accumulate_grad(&[0.5; 3]);
        store.adam_step(AdamParams::default()).unwrap();

        save_checkpoint(&store, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        assert_eq!(loaded.step_count(), store.step_count());
        for name in store.names() {
            let a = store.get(name).unwrap();
            let b = loaded.get(name).unwrap();
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "param {name}");
            }
        }
        for (name, mom) in &store.moments {
            let got = &loaded.moments[name];
            assert_eq!(mom.m, got.m);
            assert_eq!(mom.v, got.v);
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTMAGIC\x01\x00\x00\x00").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
