//! `UCKPT1` container: magic, JSON config header, then named tensors as
//! little-endian `f32`.
//!
//! Layout: `b"UCKPT1"`, `u32` header length, header bytes, `u32` tensor count,
//! then per tensor `u32` name length, name, `u32` rank, `u32` dims, data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ModelParams;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::real::Real;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"UCKPT1";

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_checkpoint<W: Write, T: Real>(w: &mut W, cfg: &ModelConfig, params: &ModelParams<T>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let header = serde_json::to_vec(cfg)?;
    put_u32(w, header.len())?;
    w.write_all(&header)?;
    let tensors = params.tensors();
    put_u32(w, tensors.len())?;
    for (name, t) in tensors {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.ndim())?;
        for &d in t.shape() {
            put_u32(w, d)?;
        }
        for v in t.iter() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a checkpoint, checking every tensor name and shape against the
/// layout implied by the stored config.
pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ModelConfig, ModelParams<f32>)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated checkpoint magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a UCKPT1 checkpoint".into()));
    }
    let hlen = get_u32(r)?;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header)?;
    let cfg: ModelConfig = serde_json::from_slice(&header)?;
    cfg.validate()?;
    let mut params = ModelParams::<f32>::init(&cfg, 0);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let count = get_u32(r)?;
    if count != expected.len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", expected.len())));
    }
    for ((name, shape), mut dst) in expected.iter().zip(params.tensors_mut()) {
        let nlen = get_u32(r)?;
        let mut nb = vec![0u8; nlen];
        r.read_exact(&mut nb)?;
        let got = String::from_utf8(nb).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if &got != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got}")));
        }
        let rank = get_u32(r)?;
        let dims = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Format(format!("tensor {name}: shape {dims:?}, expected {shape:?}")));
        }
        for v in dst.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = f32::from_le_bytes(b);
        }
    }
    Ok((cfg, params))
}

pub fn save_checkpoint<T: Real>(path: &Path, cfg: &ModelConfig, params: &ModelParams<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, cfg, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams<f32>)> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f32>::init(&cfg, 12);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        let (cfg2, p2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(p, p2);
    }

    #[test]
    fn rejects_corruption() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f32>::init(&cfg, 12);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
    }
}
