//! Prediction artifact: target indices, the predicted future block, the
//! matching noiseless truth, and the anti-diagonal dispersions, all as
//! little-endian 64-bit floats behind a fixed header.

use afdsta_core::experiment::runners::FieldPrediction;
use afdsta_core::experiment::WindowSpec;
use anyhow::{bail, Context, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AFDPRED\x01";

#[derive(Debug, Clone)]
pub struct PredictionFile {
    pub k_set: Vec<usize>,
    pub window: WindowSpec,
    pub dt: f64,
    pub t0: f64,
    pub predictions: Vec<f64>,
    pub dispersions: Vec<f64>,
    pub truth: Vec<f64>,
}

impl From<&FieldPrediction> for PredictionFile {
    fn from(p: &FieldPrediction) -> Self {
        Self {
            k_set: p.k_set.clone(),
            window: p.window,
            dt: p.dt,
            t0: p.t0,
            predictions: p.predictions.clone(),
            dispersions: p.dispersions.clone(),
            truth: p.truth.clone(),
        }
    }
}

pub fn write_prediction(p: &PredictionFile, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(p.k_set.len() as u64).to_le_bytes())?;
    w.write_all(&(p.window.start_index as u64).to_le_bytes())?;
    w.write_all(&(p.window.obs_len as u64).to_le_bytes())?;
    w.write_all(&(p.window.horizon as u64).to_le_bytes())?;
    w.write_all(&p.dt.to_le_bytes())?;
    w.write_all(&p.t0.to_le_bytes())?;
    for &k in &p.k_set {
        w.write_all(&(k as u64).to_le_bytes())?;
    }
    for block in [&p.predictions, &p.dispersions, &p.truth] {
        for v in block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_prediction(path: &Path) -> Result<PredictionFile> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("{}", path.display()))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{} is not a prediction file", path.display());
    }
    let n_k = read_u64(&mut r)? as usize;
    let window = WindowSpec {
        start_index: read_u64(&mut r)? as usize,
        obs_len: read_u64(&mut r)? as usize,
        horizon: read_u64(&mut r)? as usize,
    };
    let dt = read_f64(&mut r)?;
    let t0 = read_f64(&mut r)?;
    let mut k_set = Vec::with_capacity(n_k);
    for _ in 0..n_k {
        k_set.push(read_u64(&mut r)? as usize);
    }
    let block = n_k * window.horizon;
    let read_block = |r: &mut BufReader<File>| -> Result<Vec<f64>> {
        let mut out = vec![0.0; block];
        for v in out.iter_mut() {
            *v = read_f64(r)?;
        }
        Ok(out)
    };
    let predictions = read_block(&mut r)?;
    let dispersions = read_block(&mut r)?;
    let truth = read_block(&mut r)?;
    Ok(PredictionFile {
        k_set,
        window,
        dt,
        t0,
        predictions,
        dispersions,
        truth,
    })
}

pub fn is_prediction_file(path: &Path) -> bool {
    let mut magic = [0u8; 8];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == MAGIC)
        .unwrap_or(false)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
