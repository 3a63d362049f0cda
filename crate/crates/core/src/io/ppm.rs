use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interleaved 8-bit RGB, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRgb8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(ImageRgb8 { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// `(1, 3, h, w)` tensor scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn([1, 3, self.height, self.width], |_, c, y, x| self.rgb(x, y)[c] as f32 / 255.0)
    }

    /// Inverse of [`ImageRgb8::to_tensor`] for batch item 0: values are
    /// clamped to `[0, 1]` and rounded. A single channel is replicated.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 && s.c != 1 {
            return Err(Error::shape(format!("cannot write a {} tensor as RGB", s)));
        }
        let mut pixels = Vec::with_capacity(3 * s.h * s.w);
        for y in 0..s.h {
            for x in 0..s.w {
                for c in 0..3 {
                    let v = t.at(0, c.min(s.c - 1), y, x);
                    pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        ImageRgb8::new(s.w, s.h, pixels)
    }
}

pub fn encode_ppm(img: &ImageRgb8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn save_ppm(path: impl AsRef<Path>, img: &ImageRgb8) -> Result<()> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<ImageRgb8> {
    parse_ppm(&fs::read(path)?)
}

/// Binary `P6` with maxval 255; `#` comments are allowed in the header.
pub fn parse_ppm(bytes: &[u8]) -> Result<ImageRgb8> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::parse("not a binary PPM (expected P6 magic)"));
    }
    let mut number = |what: &str| -> Result<usize> {
        let tok = header_token(bytes, &mut pos)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(format!("bad PPM {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(format!("unsupported PPM maxval {maxval} (only 255)")));
    }
    // exactly one whitespace byte separates maxval from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse("PPM header not terminated"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::parse("PPM dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::parse(format!("PPM payload truncated: {} of {need} bytes", raster.len())));
    }
    ImageRgb8::new(width, height, raster[..need].to_vec()).map_err(|e| Error::parse(e.to_string()))
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse("PPM header truncated"));
    }
    Ok(&bytes[start..*pos])
}
