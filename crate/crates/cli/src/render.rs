//! Heatmap rendering to binary PPM (P6) with a fixed diverging colormap.
//!
//! The x axis is time, the y axis is space. The byte output depends only
//! on the input values, so renders are bit-exact across platforms; the
//! value range behind the colors goes into a sidecar text file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Cool-to-warm diverging endpoints with white at the midpoint.
const LOW: [f64; 3] = [59.0, 76.0, 192.0];
const MID: [f64; 3] = [255.0, 255.0, 255.0];
const HIGH: [f64; 3] = [180.0, 4.0, 38.0];

fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (from, to, s) = if t < 0.5 {
        (LOW, MID, t * 2.0)
    } else {
        (MID, HIGH, (t - 0.5) * 2.0)
    };
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = (from[c] + (to[c] - from[c]) * s).round() as u8;
    }
    rgb
}

/// Writes `values` (rows x cols, row-major; rows = space, cols = time) as
/// a P6 heatmap plus a `<out>.txt` sidecar with the annotated range.
pub fn write_heatmap(
    values: &[f64],
    rows: usize,
    cols: usize,
    out: &Path,
    label: &str,
) -> std::io::Result<()> {
    assert_eq!(values.len(), rows * cols);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    let span = max - min;

    let mut w = BufWriter::new(File::create(out)?);
    write!(w, "P6\n{cols} {rows}\n255\n")?;
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let t = if span > 0.0 { (v - min) / span } else { 0.5 };
            w.write_all(&colormap(t))?;
        }
    }
    w.flush()?;

    let sidecar = out.with_extension("txt");
    std::fs::write(
        &sidecar,
        format!(
            "{label}\nrows(space): {rows}\ncols(time): {cols}\nmin: {min}\nmax: {max}\n"
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_renders_one_color() {
        let dir = std::env::temp_dir().join("afdsta-render-test");
        std::fs::create_dir_all(&dir).unwrap();
        let out = dir.join("constant.ppm");
        write_heatmap(&[1.5; 12], 3, 4, &out, "test").unwrap();
        let bytes = std::fs::read(&out).unwrap();
        let header_end = bytes.iter().filter(|&&b| b == b'\n').count();
        assert!(header_end >= 3);
        let body = &bytes[bytes.len() - 36..];
        // zero span maps everything to the midpoint color
        for px in body.chunks(3) {
            assert_eq!(px, [255, 255, 255]);
        }
        std::fs::remove_file(&out).ok();
    }

    #[test]
    fn rendering_is_bit_exact() {
        let dir = std::env::temp_dir().join("afdsta-render-test");
        std::fs::create_dir_all(&dir).unwrap();
        let values: Vec<f64> = (0..20).map(|v| (v as f64 * 0.7).sin()).collect();
        let a = dir.join("a.ppm");
        let b = dir.join("b.ppm");
        write_heatmap(&values, 4, 5, &a, "a").unwrap();
        write_heatmap(&values, 4, 5, &b, "b").unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        std::fs::remove_file(&a).ok();
        std::fs::remove_file(&b).ok();
    }

    #[test]
    fn endpoints_map_to_the_diverging_extremes() {
        assert_eq!(colormap(0.0), [59, 76, 192]);
        assert_eq!(colormap(0.5), [255, 255, 255]);
        assert_eq!(colormap(1.0), [180, 4, 38]);
    }
}
