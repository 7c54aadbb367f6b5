//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//! magic `PROBECKP`, `u32` format version, `u32` manifest length followed by
//! the manifest (the model config as key-value text), `u32` array count, then
//! per array: `u32` name length, name bytes, `u32` rank, `u64` dims, `f64` data.
//! Optimizer accumulators, when present, are stored as arrays named
//! `rmsprop/<parameter name>`.

use super::{MindModel, ModelConfig, ModelError};
use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PROBECKP";
pub const FORMAT_VERSION: u32 = 1;
const ACCUM_PREFIX: &str = "rmsprop/";

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn write_array<W: Write>(w: &mut W, name: &str, shape: &[usize], data: &[f64]) -> Result<(), ModelError> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize parameters, and optimizer accumulators when `with_optimizer`.
pub fn write_checkpoint<W: Write>(model: &MindModel, with_optimizer: bool, w: &mut W) -> Result<(), ModelError> {
    let manifest = toml::to_string(&model.config).map_err(|e| bad(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u32).to_le_bytes())?;
    w.write_all(manifest.as_bytes())?;
    let params = model.all_params();
    let accums: Vec<_> = if with_optimizer { params.iter().filter(|p| !p.accum.is_empty()).collect() } else { Vec::new() };
    w.write_all(&((params.len() + accums.len()) as u32).to_le_bytes())?;
    for p in &params {
        write_array(w, &p.name, &p.shape, &p.value)?;
    }
    for p in accums {
        write_array(w, &format!("{ACCUM_PREFIX}{}", p.name), &p.shape, &p.accum)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String, ModelError> {
    if len > 1 << 20 {
        return Err(bad("string field too long"));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("string field is not utf-8"))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<MindModel, ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let len = read_u32(r)? as usize;
    let manifest = read_string(r, len)?;
    let config: ModelConfig = toml::from_str(&manifest).map_err(|e| bad(format!("manifest: {e}")))?;
    let mut model = MindModel::new(config, 0)?;

    let count = read_u32(r)? as usize;
    let mut arrays: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let name = read_string(r, len)?;
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(bad(format!("array {name} has rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<_, _>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        arrays.insert(name, (shape, data));
    }
    for p in model.all_params_mut() {
        let (shape, data) = arrays.remove(&p.name).ok_or_else(|| bad(format!("missing array {}", p.name)))?;
        if shape != p.shape {
            return Err(bad(format!("array {} has shape {shape:?}, expected {:?}", p.name, p.shape)));
        }
        p.value = data;
        if let Some((shape, data)) = arrays.remove(&format!("{ACCUM_PREFIX}{}", p.name)) {
            if shape != p.shape {
                return Err(bad(format!("accumulator for {} has the wrong shape", p.name)));
            }
            p.accum = data;
        }
    }
    if let Some(name) = arrays.keys().next() {
        return Err(bad(format!("unexpected array {name}")));
    }
    Ok(model)
}

/// Write to `path` via a temporary sibling and a rename.
pub fn save_checkpoint(model: &MindModel, with_optimizer: bool, path: &Path) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_checkpoint(model, with_optimizer, &mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MindModel, ModelError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    read_checkpoint(&mut r)
}
