//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"BPTDCKPT"  u32 version  u8 model tag  u64 sweep
//! u32 ndims  u64 dims...                    (tensor dims V, A, T)
//! u32 narrays
//! per array: u32 name length, name bytes, u32 ndim, u64 shape..., f64 data...
//! ```
//!
//! Arrays appear in the order the model lists them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use bptd_core::events::TensorDims;
use bptd_core::sampler::NamedArray;
use bptd_core::ModelKind;

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"BPTDCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub sweep: u64,
    pub dims: TensorDims,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[ck.model.tag()])?;
    w.write_all(&ck.sweep.to_le_bytes())?;
    let dims = [ck.dims.countries, ck.dims.actions, ck.dims.steps];
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(ck.arrays.len() as u32).to_le_bytes())?;
    for a in &ck.arrays {
        w.write_all(&(a.name.len() as u32).to_le_bytes())?;
        w.write_all(a.name.as_bytes())?;
        w.write_all(&(a.shape.len() as u32).to_le_bytes())?;
        for &s in &a.shape {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for &x in &a.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: &str) -> AppError {
    AppError::Data(format!("corrupt checkpoint: {msg}"))
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_len<R: Read>(r: &mut R, limit: u64) -> Result<usize> {
    let n = read_u64(r)?;
    if n > limit {
        return Err(bad("implausible length"));
    }
    Ok(n as usize)
}

const MAX_ELEMENTS: u64 = 1 << 32;

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    if &read_exact::<_, 8>(&mut r)? != MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(AppError::Data(format!("unsupported checkpoint version {version}")));
    }
    let [tag] = read_exact::<_, 1>(&mut r)?;
    let model = ModelKind::from_tag(tag).ok_or_else(|| bad("unknown model tag"))?;
    let sweep = read_u64(&mut r)?;
    if read_u32(&mut r)? != 3 {
        return Err(bad("expected three tensor dims"));
    }
    let dims = TensorDims::new(
        read_len(&mut r, MAX_ELEMENTS)?,
        read_len(&mut r, MAX_ELEMENTS)?,
        read_len(&mut r, MAX_ELEMENTS)?,
    );
    let count = read_u32(&mut r)?;
    let mut arrays = Vec::with_capacity(count.min(64) as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 256 {
            return Err(bad("array name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| bad("truncated"))?;
        let name = String::from_utf8(name).map_err(|_| bad("array name is not UTF-8"))?;
        let ndim = read_u32(&mut r)?;
        if ndim > 8 {
            return Err(bad("too many array dimensions"));
        }
        let shape = (0..ndim)
            .map(|_| read_len(&mut r, MAX_ELEMENTS))
            .collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1u64, |acc, &s| acc.checked_mul(s as u64));
        let n = n.filter(|&n| n <= MAX_ELEMENTS).ok_or_else(|| bad("array too large"))? as usize;
        let data = (0..n)
            .map(|_| Ok(f64::from_le_bytes(read_exact(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        arrays.push(NamedArray::new(&name, &shape, data));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        model,
        sweep,
        dims,
        arrays,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let f = File::create(path).map_err(AppError::io(format!("creating {}", path.display())))?;
    write_checkpoint(BufWriter::new(f), ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(AppError::io(format!("opening {}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}
