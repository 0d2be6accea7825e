//! Binary checkpoint: `ICCS` magic, u32 version, length-prefixed JSON
//! descriptor, then tensors until end of file. Every tensor record is a
//! length-prefixed name, a u32 rank, u32 dims and little-endian f64 data.
//! All integers are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{AdamState, ModelParams};
use super::{Arch, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ICCS";
pub const CHECKPOINT_VERSION: u32 = 1;

const PARAM: &str = "param/";
const BUFFER: &str = "buffer/";
const ADAM_M: &str = "adam_m/";
const ADAM_V: &str = "adam_v/";

/// Upper bound on any length field, to fail fast on garbage input.
const MAX_LEN: u32 = 1 << 28;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    arch: Arch,
    optimizer_step: u64,
}

fn ck(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Checkpoint(e.to_string())
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(ck)
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes()).map_err(ck)
}

fn put_tensor(w: &mut impl Write, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    put_str(w, name)?;
    put_u32(w, shape.len() as u32)?;
    for &d in shape {
        put_u32(w, d as u32)?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes()).map_err(ck)?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(ck)?;
    Ok(u32::from_le_bytes(b))
}

fn get_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let n = get_u32(r)?;
    if n > MAX_LEN {
        return Err(Error::Checkpoint(format!("{what} length {n} is implausible")));
    }
    Ok(n as usize)
}

fn get_str(r: &mut impl Read, what: &str) -> Result<String> {
    let n = get_len(r, what)?;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(ck)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
}

/// Reads one tensor record, or `None` at a clean end of file.
fn get_tensor(r: &mut impl Read) -> Result<Option<(String, Tensor)>> {
    let mut first = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut first[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Checkpoint("file is truncated".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(ck(e)),
        }
    }
    let name_len = u32::from_le_bytes(first);
    if name_len > MAX_LEN {
        return Err(Error::Checkpoint(format!("tensor name length {name_len} is implausible")));
    }
    let mut nb = vec![0u8; name_len as usize];
    r.read_exact(&mut nb).map_err(ck)?;
    let name = String::from_utf8(nb).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
    let rank = get_len(r, "rank")?;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(get_len(r, "dimension")?);
    }
    let len: usize = shape.iter().product();
    if len > MAX_LEN as usize {
        return Err(Error::Checkpoint(format!("tensor `{name}` is implausibly large")));
    }
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes).map_err(ck)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Some((name, Tensor::new(shape, data)?)))
}

pub fn write_checkpoint(model: &ModelParams, w: &mut impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC).map_err(ck)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    let desc = Descriptor { arch: model.arch().clone(), optimizer_step: model.optimizer().step };
    put_str(w, &serde_json::to_string(&desc)?)?;
    for (name, t) in model.params() {
        put_tensor(w, &format!("{PARAM}{name}"), t.shape(), t.data())?;
    }
    for (name, t) in model.buffers() {
        put_tensor(w, &format!("{BUFFER}{name}"), t.shape(), t.data())?;
    }
    let opt = model.optimizer();
    for (prefix, map) in [(ADAM_M, &opt.m), (ADAM_V, &opt.v)] {
        for (name, v) in map {
            put_tensor(w, &format!("{prefix}{name}"), &[v.len()], v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(ck)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let desc: Descriptor = serde_json::from_str(&get_str(r, "descriptor")?)
        .map_err(|e| Error::Checkpoint(format!("bad architecture descriptor: {e}")))?;
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    let mut opt = AdamState { step: desc.optimizer_step, ..AdamState::default() };
    while let Some((name, t)) = get_tensor(r)? {
        let dup = if let Some(n) = name.strip_prefix(PARAM) {
            params.insert(n.to_string(), t).is_some()
        } else if let Some(n) = name.strip_prefix(BUFFER) {
            buffers.insert(n.to_string(), t).is_some()
        } else if let Some(n) = name.strip_prefix(ADAM_M) {
            opt.m.insert(n.to_string(), t.into_data()).is_some()
        } else if let Some(n) = name.strip_prefix(ADAM_V) {
            opt.v.insert(n.to_string(), t.into_data()).is_some()
        } else {
            return Err(Error::Checkpoint(format!("unknown tensor `{name}`")));
        };
        if dup {
            return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
        }
    }
    ModelParams::from_parts(desc.arch, params, buffers, opt)
}

pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn bytes(model: &ModelParams) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(model, &mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let model = ModelParams::init(&Arch::miniature(8), &mut RngStream::new(5, 0)).unwrap();
        let a = bytes(&model);
        let back = read_checkpoint(&mut a.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(bytes(&back), a);
    }

    #[test]
    fn tampering_is_detected() {
        let model = ModelParams::init(&Arch::miniature(8), &mut RngStream::new(6, 0)).unwrap();
        let good = bytes(&model);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let cut = &good[..good.len() - 3];
        assert!(matches!(read_checkpoint(&mut &cut[..]), Err(Error::Checkpoint(m)) if m.contains("truncated")));
    }
}
