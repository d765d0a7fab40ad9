//! Grayscale image files.
//!
//! Binary PGM (`P5`) is the exact format: a stored value `v` reads as
//! `v / maxval` and an intensity `x` writes as `round(255 x)` with maxval 255.
//! Binary PPM (`P6`) and PNG are accepted on input; colour is reduced to gray
//! by the equal-weight average of the channels.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use mcc_core::Image;
use ndarray::Array2;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "pnm" => Some(ImageFormat::Pgm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::BadImage {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(&bytes).map_err(bad)
    } else if bytes.starts_with(b"\x89PNG") {
        let img =
            image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| bad(e.to_string()))?;
        from_dynamic(img).map_err(bad)
    } else {
        Err(bad("not a binary PGM/PPM or PNG file".into()))
    }
}

/// Write by extension (`.pgm`, `.png`). The file appears only once fully written.
pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        CliError::Usage(format!(
            "cannot tell the image format of {}; use .pgm or .png",
            path.display()
        ))
    })?;
    let bytes = match format {
        ImageFormat::Pgm => encode_pgm(image),
        ImageFormat::Png => encode_png(image)?,
    };
    write_atomic(path, &bytes)
}

pub fn quantize(x: f64) -> u8 {
    (255.0 * x).round().clamp(0.0, 255.0) as u8
}

pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let (rows, cols) = image.dim();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(image.pixels().iter().map(|&x| quantize(x)));
    out
}

fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let (rows, cols) = image.dim();
    let raw: Vec<u8> = image.pixels().iter().map(|&x| quantize(x)).collect();
    let gray = image::GrayImage::from_raw(cols as u32, rows as u32, raw).expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    gray.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| CliError::Usage(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Write to a sibling temporary file and rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.partial-{}", name.to_string_lossy(), std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed {what} in header"))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Image, String> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut h = Header { bytes, pos: 2 };
    let cols = h.number("width")?;
    let rows = h.number("height")?;
    let maxval = h.number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    let raster = &bytes[h.pos + 1..];
    let width = if maxval < 256 { 1 } else { 2 };
    let need = rows * cols * channels * width;
    if raster.len() < need {
        return Err(format!("raster holds {} bytes, header promises {need}", raster.len()));
    }
    let sample = |i: usize| -> f64 {
        let v = if width == 1 {
            raster[i] as u32
        } else {
            u32::from(raster[2 * i]) << 8 | u32::from(raster[2 * i + 1])
        };
        v.min(maxval as u32) as f64 / maxval as f64
    };
    let pixels = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let base = (i * cols + j) * channels;
        (0..channels).map(|c| sample(base + c)).sum::<f64>() / channels as f64
    });
    Image::new(pixels).map_err(|e| e.to_string())
}

fn from_dynamic(img: DynamicImage) -> Result<Image, String> {
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(g) => Array2::from_shape_fn((rows, cols), |(i, j)| {
            f64::from(g.get_pixel(j as u32, i as u32)[0]) / 255.0
        }),
        DynamicImage::ImageLumaA8(g) => Array2::from_shape_fn((rows, cols), |(i, j)| {
            f64::from(g.get_pixel(j as u32, i as u32)[0]) / 255.0
        }),
        DynamicImage::ImageLuma16(g) => Array2::from_shape_fn((rows, cols), |(i, j)| {
            f64::from(g.get_pixel(j as u32, i as u32)[0]) / 65535.0
        }),
        other => {
            let rgb = other.to_rgb16();
            Array2::from_shape_fn((rows, cols), |(i, j)| {
                let p = rgb.get_pixel(j as u32, i as u32);
                (f64::from(p[0]) + f64::from(p[1]) + f64::from(p[2])) / (3.0 * 65535.0)
            })
        }
    };
    Image::new(pixels).map_err(|e| e.to_string())
}
