//! Model checkpoints: a fixed header plus named parameter blocks as
//! little-endian 64-bit floats, validated against the config on load.

use super::state::ModelState;
use super::{ModelConfig, ModelError};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AFDCKPT\x01";

pub fn save(state: &ModelState, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let cfg = &state.config;
    for v in [
        cfg.n_points as u64,
        cfg.obs_len as u64,
        cfg.horizon as u64,
        cfg.hidden as u64,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&cfg.dropout_rate.to_le_bytes())?;
    w.write_all(&(cfg.target_index as u64).to_le_bytes())?;
    w.write_all(&state.seed.to_le_bytes())?;

    let names = ModelState::param_names();
    let params = state.param_refs();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in names.iter().zip(&params) {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelState, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Format(format!(
            "{} is not a model checkpoint",
            path.display()
        )));
    }
    let config = ModelConfig {
        n_points: read_u64(&mut r)? as usize,
        obs_len: read_u64(&mut r)? as usize,
        horizon: read_u64(&mut r)? as usize,
        hidden: read_u64(&mut r)? as usize,
        dropout_rate: read_f64(&mut r)?,
        target_index: read_u64(&mut r)? as usize,
    };
    config.validate()?;
    let seed = read_u64(&mut r)?;

    // Template state fixes the expected block names and shapes.
    let mut state = ModelState::init(&config, seed)?;
    let expected_names = ModelState::param_names();
    let count = read_u32(&mut r)? as usize;
    if count != expected_names.len() {
        return Err(ModelError::Format(format!(
            "checkpoint has {count} parameter blocks, expected {}",
            expected_names.len()
        )));
    }
    {
        let mut params = state.param_refs_mut();
        for (expected, tensor) in expected_names.iter().zip(params.iter_mut()) {
            let name_len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| ModelError::Format("non-utf8 block name".into()))?;
            if &name != expected {
                return Err(ModelError::Format(format!(
                    "block {name:?} where {expected:?} was expected"
                )));
            }
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim)?;
            let mut shape = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                shape.push(read_u64(&mut r)? as usize);
            }
            if shape != tensor.shape() {
                return Err(ModelError::Format(format!(
                    "block {name:?} has shape {shape:?}, config implies {:?}",
                    tensor.shape()
                )));
            }
            let mut buf = [0u8; 8];
            for v in tensor.data_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
    }
    Ok(state)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, ModelError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, ModelError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
