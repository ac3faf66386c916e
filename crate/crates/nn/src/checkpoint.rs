//! Self-describing binary checkpoints.
//!
//! Layout, all little-endian:
//!   magic "PBCK" | version u32 | spec length u32 | spec UTF-8 key=value block
//!   | tensor count u32 | per tensor: name length u32, name bytes, rank u32,
//!   dims u32 each, f32 values.
//!
//! Tensor names carry a `param.` / `state.` / `norm.` prefix so a checkpoint
//! restores trainable parameters, running statistics, and demographic
//! normalization without guessing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, NormStats};

pub const MAGIC: &[u8; 4] = b"PBCK";
pub const VERSION: u32 = 1;

const NORM_TENSOR: &str = "norm.demographics";

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let spec = model.spec.to_text();
    write_u32(&mut buf, spec.len())?;
    buf.extend_from_slice(spec.as_bytes());
    let count = model.params.len() + model.state.len() + 1;
    write_u32(&mut buf, count)?;
    for t in model.params.iter() {
        write_tensor(&mut buf, &format!("param.{}", t.name), &t.shape, &t.values)?;
    }
    for t in model.state.iter() {
        write_tensor(&mut buf, &format!("state.{}", t.name), &t.shape, &t.values)?;
    }
    let norm: Vec<f32> = model.norm.to_array().iter().map(|&v| v as f32).collect();
    write_tensor(&mut buf, NORM_TENSOR, &[4], &norm)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(malformed("wrong magic bytes"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let spec_len = cur.u32()? as usize;
    let spec_bytes = cur.take(spec_len)?;
    let spec_text =
        std::str::from_utf8(spec_bytes).map_err(|_| malformed("spec block is not UTF-8"))?;
    let spec = ModelSpec::parse_text(spec_text)
        .map_err(|e| malformed(format!("bad spec block: {e}")))?;
    let count = cur.u32()? as usize;

    let mut model = Model::new(spec, NormStats::identity())?;
    let mut assigned = 0usize;
    let mut norm_seen = false;
    for _ in 0..count {
        let (name, shape, values) = read_tensor(&mut cur)?;
        if let Some(pname) = name.strip_prefix("param.") {
            assign(&mut model.params, pname, &shape, values)?;
            assigned += 1;
        } else if let Some(sname) = name.strip_prefix("state.") {
            assign(&mut model.state, sname, &shape, values)?;
            assigned += 1;
        } else if name == NORM_TENSOR {
            if shape != [4] {
                return Err(malformed("norm tensor must hold 4 values"));
            }
            let a: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            model.norm = NormStats::from_array([a[0], a[1], a[2], a[3]]);
            norm_seen = true;
        } else {
            return Err(malformed(format!("unexpected tensor {name}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(malformed("trailing bytes after the last tensor"));
    }
    if assigned != model.params.len() + model.state.len() || !norm_seen {
        return Err(malformed(format!(
            "checkpoint covers {assigned} of {} tensors",
            model.params.len() + model.state.len()
        )));
    }
    Ok(model)
}

fn assign(
    set: &mut crate::params::ParamSet<f32>,
    name: &str,
    shape: &[usize],
    values: Vec<f32>,
) -> Result<()> {
    let t = set
        .get_mut(name)
        .ok_or_else(|| malformed(format!("model spec implies no tensor named {name}")))?;
    if t.shape != shape {
        return Err(malformed(format!(
            "tensor {name} is {shape:?} in the file but {:?} in the spec",
            t.shape
        )));
    }
    t.values = values;
    Ok(())
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCheckpoint { msg: msg.into() }
}

fn write_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| malformed("field exceeds u32"))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn write_tensor(buf: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
    write_u32(buf, name.len())?;
    buf.extend_from_slice(name.as_bytes());
    write_u32(buf, shape.len())?;
    for &d in shape {
        write_u32(buf, d)?;
    }
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed("file truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read_tensor(cur: &mut Cursor) -> Result<(String, Vec<usize>, Vec<f32>)> {
    let name_len = cur.u32()? as usize;
    let name = std::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| malformed("tensor name is not UTF-8"))?
        .to_string();
    let rank = cur.u32()? as usize;
    if rank > 8 {
        return Err(malformed(format!("tensor {name} has implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(cur.u32()? as usize);
    }
    let n: usize = shape.iter().product();
    let raw = cur.take(n * 4)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((name, shape, values))
}
