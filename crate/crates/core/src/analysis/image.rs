//! Binary PPM (P6) output and input images for the analysis tools.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::data::{read_batch, IMAGE_SIDE};

/// `width x height` RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Rgb {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Gray `(128,128,128)` at 0 fading linearly to red `(255,0,0)` at 1.
pub fn heat_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let gray = 128.0 * (1.0 - v);
    [
        (128.0 + 127.0 * v).round() as u8,
        gray.round() as u8,
        gray.round() as u8,
    ]
}

pub fn gray_image(width: usize, height: usize, values: &[f64]) -> Rgb {
    Rgb {
        width,
        height,
        pixels: values
            .iter()
            .map(|&v| {
                let b = to_byte(v);
                [b, b, b]
            })
            .collect(),
    }
}

pub fn heat_image(width: usize, height: usize, values: &[f64]) -> Rgb {
    Rgb {
        width,
        height,
        pixels: values.iter().map(|&v| heat_color(v)).collect(),
    }
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Parses a maxval-255 P6 image into planar `[3, H, W]` values in `[0, 1]`.
pub fn parse_ppm(bytes: &[u8]) -> Option<(usize, usize, Vec<f32>)> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != b"P6" {
        return None;
    }
    let mut num = || -> Option<usize> {
        std::str::from_utf8(ppm_token(bytes, &mut pos)?).ok()?.parse().ok()
    };
    let (w, h, max) = (num()?, num()?, num()?);
    if max != 255 {
        return None;
    }
    let body = bytes.get(pos + 1..)?;
    if body.len() != 3 * w * h {
        return None;
    }
    let mut planar = vec![0f32; 3 * w * h];
    for (i, px) in body.chunks_exact(3).enumerate() {
        for c in 0..3 {
            planar[c * w * h + i] = px[c] as f32 / 255.0;
        }
    }
    Some((w, h, planar))
}

/// One raw `[3, 32, 32]` image in `[0, 1]`: either a 32x32 P6 file or
/// record `index` of a CIFAR batch file.
pub fn load_input(path: &Path, index: usize) -> Result<Vec<f32>> {
    let is_ppm = path.extension().is_some_and(|e| e == "ppm");
    if is_ppm {
        let bytes = std::fs::read(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        return match parse_ppm(&bytes) {
            Some((IMAGE_SIDE, IMAGE_SIDE, img)) => Ok(img),
            _ => Err(Error::Data {
                path: path.to_path_buf(),
                detail: format!("expected a {IMAGE_SIDE}x{IMAGE_SIDE} P6 image with maxval 255"),
            }),
        };
    }
    let data = read_batch(path, Some(index + 1))?;
    if index >= data.len() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            detail: format!("record {index} requested but the file holds {}", data.len()),
        });
    }
    Ok(data.image(index).to_vec())
}
