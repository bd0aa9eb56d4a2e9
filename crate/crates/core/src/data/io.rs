//! Image and array files.
//!
//! Images are 16-bit grayscale PNG holding `round(65535 · clamp(v, 0, 1))`.
//! Sinograms and other non-image arrays use a raw little-endian layout:
//! the 8-byte magic `TPVRAW01`, `u32` rows, `u32` cols, then `rows · cols`
//! `f64` values in row-major order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::image::{Image, Observation, ObservationShape};

pub const RAW_MAGIC: &[u8; 8] = b"TPVRAW01";

const U16_MAX: f64 = u16::MAX as f64;

/// Quantizes to the 16-bit grid used on disk.
pub fn quantize16(img: &Image) -> Image {
    img.map(|v| (v.clamp(0.0, 1.0) * U16_MAX).round() / U16_MAX)
        .expect("quantized values are finite")
}

pub fn write_png16(path: &Path, img: &Image) -> Result<()> {
    let data: Vec<u16> = img
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * U16_MAX).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer length matches");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a grayscale PNG and rescales it to `[0, 1]` by its bit depth. Color
/// images are converted to luma first.
pub fn read_png(path: &Path) -> Result<Image> {
    let dynamic = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let values: Vec<f64> = match dynamic {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / U16_MAX).collect(),
        other => other.into_luma16().into_raw().into_iter().map(|v| v as f64 / U16_MAX).collect(),
    };
    Image::new(w, h, values)
}

/// Every `*.png` in `dir` in file-name order; other files are ignored. All
/// images must share one size.
pub fn load_image_folder(dir: &Path) -> Result<Vec<Image>> {
    Ok(load_image_folder_named(dir)?.into_iter().map(|(_, img)| img).collect())
}

pub fn load_image_folder_named(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out: Vec<(PathBuf, Image)> = Vec::with_capacity(paths.len());
    for path in paths {
        let img = read_png(&path)?;
        if let Some((first_path, first)) = out.first() {
            if !first.same_shape(&img) {
                return Err(Error::format(
                    &path,
                    format!(
                        "size {}x{} differs from {}x{} of {}",
                        img.width(),
                        img.height(),
                        first.width(),
                        first.height(),
                        first_path.display()
                    ),
                ));
            }
        }
        out.push((path, img));
    }
    Ok(out)
}

pub fn write_raw(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::shape(rows * cols, values.len()));
    }
    let (r, c) = (
        u32::try_from(rows).map_err(|_| Error::param("rows", "exceeds u32"))?,
        u32::try_from(cols).map_err(|_| Error::param("cols", "exceeds u32"))?,
    );
    let mut bytes = Vec::with_capacity(16 + 8 * values.len());
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&r.to_le_bytes());
    bytes.extend_from_slice(&c.to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Returns `(rows, cols, values)`.
pub fn read_raw(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::format(path, "missing TPVRAW01 header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != 8 * rows * cols {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes for {rows}x{cols}, found {}", 8 * rows * cols, body.len()),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, values))
}

pub fn write_observation(path: &Path, y: &Observation) -> Result<()> {
    let (rows, cols) = y.shape().rows_cols();
    write_raw(path, rows, cols, y.as_slice())
}

/// Reads a raw array and checks it against `shape`.
pub fn read_observation(path: &Path, shape: ObservationShape) -> Result<Observation> {
    let (rows, cols, values) = read_raw(path)?;
    if (rows, cols) != shape.rows_cols() {
        return Err(Error::format(
            path,
            format!("stored {rows}x{cols}, expected {:?}", shape.rows_cols()),
        ));
    }
    Observation::new(shape, values)
}
