//! Abundance-map rendering: one grayscale image per endmember, values in
//! [0, 1] mapped linearly to 8-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl std::str::FromStr for ImageFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "png" => Ok(ImageFormat::Png),
            other => Err(Error::InvalidArgument(format!("unknown image format '{other}'"))),
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Render one abundance row (N values for an `height x width` grid).
pub fn render_map(
    values: &[f64],
    height: usize,
    width: usize,
    path: &Path,
    format: ImageFormat,
) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {height}x{width} map",
            values.len()
        )));
    }
    let pixels: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();
    match format {
        ImageFormat::Pgm => {
            let mut w = BufWriter::new(File::create(path)?);
            write!(w, "P5\n{width} {height}\n255\n")?;
            w.write_all(&pixels)?;
            w.flush()?;
            Ok(())
        }
        ImageFormat::Png => {
            let img = image::GrayImage::from_raw(width as u32, height as u32, pixels)
                .ok_or_else(|| Error::InvalidArgument("image buffer size mismatch".into()))?;
            img.save(path)
                .map_err(|e| Error::Format(format!("png encode: {e}")))
        }
    }
}

/// Render every row of an `M x N` abundance matrix to `out_dir`.
pub fn render_abundance_maps(
    abundances: ArrayView2<'_, f64>,
    height: usize,
    width: usize,
    out_dir: &Path,
    format: ImageFormat,
) -> Result<Vec<PathBuf>> {
    if abundances.ncols() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels for a {height}x{width} map",
            abundances.ncols()
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let ext = match format {
        ImageFormat::Pgm => "pgm",
        ImageFormat::Png => "png",
    };
    let mut paths = Vec::with_capacity(abundances.nrows());
    for (i, row) in abundances.rows().into_iter().enumerate() {
        let path = out_dir.join(format!("endmember_{i}.{ext}"));
        let values = row.to_vec();
        render_map(&values, height, width, &path, format)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
        let bytes = std::fs::read(path).unwrap();
        let header_end = bytes
            .windows(1)
            .enumerate()
            .filter(|(_, w)| w[0] == b'\n')
            .map(|(i, _)| i)
            .nth(2)
            .unwrap();
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        let mut lines = header.lines();
        assert_eq!(lines.next().unwrap(), "P5");
        let dims: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(lines.next().unwrap(), "255");
        (dims[1], dims[0], bytes[header_end + 1..].to_vec())
    }

    #[test]
    fn constant_one_renders_all_white() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.pgm");
        render_map(&[1.0; 12], 3, 4, &path, ImageFormat::Pgm).unwrap();
        let (h, w, px) = read_pgm(&path);
        assert_eq!((h, w), (3, 4));
        assert!(px.iter().all(|&p| p == 255));
    }

    #[test]
    fn constant_zero_renders_all_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        render_map(&[0.0; 12], 4, 3, &path, ImageFormat::Pgm).unwrap();
        let (_, _, px) = read_pgm(&path);
        assert!(px.iter().all(|&p| p == 0));
    }

    #[test]
    fn checkerboard_maps_to_exact_pixel_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let vals: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        render_map(&vals, 4, 4, &path, ImageFormat::Pgm).unwrap();
        let (_, _, px) = read_pgm(&path);
        for i in 0..16 {
            let expect = if (i / 4 + i % 4) % 2 == 0 { 0 } else { 255 };
            assert_eq!(px[i], expect);
        }
    }

    #[test]
    fn values_outside_unit_interval_clamp() {
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(1.5), 255);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn renders_one_file_per_endmember() {
        let dir = tempfile::tempdir().unwrap();
        let a = Array2::from_shape_fn((3, 6), |(i, j)| (i * 6 + j) as f64 / 18.0);
        let paths =
            render_abundance_maps(a.view(), 2, 3, dir.path(), ImageFormat::Pgm).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!(p.exists());
        }
    }

    #[test]
    fn png_round_trips_through_the_decoder() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let vals: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        render_map(&vals, 2, 3, &path, ImageFormat::Png).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert_eq!(img.dimensions(), (3, 2));
        for (i, &v) in vals.iter().enumerate() {
            let px = img.get_pixel((i % 3) as u32, (i / 3) as u32).0[0];
            assert_eq!(px, quantize(v));
        }
    }

    #[test]
    fn wrong_pixel_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        assert!(render_map(&[0.0; 5], 2, 3, &path, ImageFormat::Pgm).is_err());
    }
}
