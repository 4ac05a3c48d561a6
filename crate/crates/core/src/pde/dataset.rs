//! Dataset container and CSV export.
//!
//! The container is self-describing: a fixed header (equation tag, grid
//! size, domain length, time spacing, start time, snapshot count, noise
//! intensity, rng seed) followed by the N x T value block as little-endian
//! 64-bit floats, row-major in space.

use super::{make_grid, EquationTag, FieldSeries, PdeError};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"AFDSET\x00\x01";

pub fn write_container(series: &FieldSeries, path: &Path) -> Result<(), PdeError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[match series.equation {
        EquationTag::Ks => 0u8,
        EquationTag::Brusselator => 1,
        EquationTag::SwiftHohenberg => 2,
    }])?;
    w.write_all(&(series.n_points() as u64).to_le_bytes())?;
    w.write_all(&series.grid.domain_length().to_le_bytes())?;
    w.write_all(&series.dt.to_le_bytes())?;
    w.write_all(&series.t0.to_le_bytes())?;
    w.write_all(&(series.n_times as u64).to_le_bytes())?;
    w.write_all(&series.noise_intensity.to_le_bytes())?;
    w.write_all(&series.seed.to_le_bytes())?;
    for v in series.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<FieldSeries, PdeError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PdeError::Format(format!(
            "{} is not a dataset container",
            path.display()
        )));
    }
    let mut byte = [0u8; 1];
    r.read_exact(&mut byte)?;
    let equation = match byte[0] {
        0 => EquationTag::Ks,
        1 => EquationTag::Brusselator,
        2 => EquationTag::SwiftHohenberg,
        other => return Err(PdeError::Format(format!("unknown equation tag {other}"))),
    };
    let n_points = read_u64(&mut r)? as usize;
    let domain_length = read_f64(&mut r)?;
    let dt = read_f64(&mut r)?;
    let t0 = read_f64(&mut r)?;
    let n_times = read_u64(&mut r)? as usize;
    let noise_intensity = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;

    let mut values = vec![0.0f64; n_points * n_times];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    let grid = make_grid(n_points, domain_length)?;
    let mut series = FieldSeries::new(grid, equation, t0, dt, values, noise_intensity, seed)?;
    series.noise_intensity = noise_intensity;
    series.seed = seed;
    Ok(series)
}

/// Rows are grid points, columns are times; the first row holds the time
/// coordinates and the first column the spatial coordinates.
pub fn write_csv(series: &FieldSeries, path: &Path) -> Result<(), PdeError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "x\\t")?;
    for t in series.times() {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    let xs = series.grid.grid_points();
    for (i, x) in xs.iter().enumerate() {
        write!(w, "{x}")?;
        for j in 0..series.n_times {
            write!(w, ",{}", series.value(i, j))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, PdeError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, PdeError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
