//! Binary PPM (P6) and PGM (P5), 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Decoded netpbm raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Interleaved samples, row-major.
    pub pixels: Vec<u8>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Parse a P6 or P5 byte stream.
pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(format_err("expected a binary PPM (P6) or PGM (P5) header")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each header field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("malformed header: expected a number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| format_err("header number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(
            "malformed header: missing separator before raster",
        ));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format_err("zero image extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("invalid maxval {maxval}")));
    }
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "bit depth with maxval {maxval}; only 8-bit is supported"
        )));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| format_err("image extent overflows"))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(format_err(format!(
            "truncated raster: {} of {need} bytes",
            payload.len()
        )));
    }
    Ok(Raster {
        channels,
        height,
        width,
        pixels: payload[..need].to_vec(),
    })
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let magic = if r.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width, r.height).into_bytes();
    out.extend_from_slice(&r.pixels);
    out
}

/// Planar `[C,H,W]` tensor in [0, 1].
pub fn raster_to_tensor(r: &Raster) -> Tensor {
    let plane = r.height * r.width;
    let mut data = vec![0.0; r.channels * plane];
    for p in 0..plane {
        for c in 0..r.channels {
            data[c * plane + p] = r.pixels[p * r.channels + c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[r.channels, r.height, r.width], data).unwrap()
}

/// Quantise a `[C,H,W]` (or `[1,C,H,W]`) tensor, C ∈ {1, 3}.
pub fn tensor_to_raster(t: &Tensor) -> Result<Raster> {
    let s = t.shape();
    let s = match s.len() {
        3 => s,
        4 if s[0] == 1 => &s[1..],
        _ => return Err(shape_err!("expected [C,H,W], got {s:?}")),
    };
    let (channels, height, width) = (s[0], s[1], s[2]);
    if channels != 1 && channels != 3 {
        return Err(shape_err!("cannot store {channels} channels"));
    }
    let plane = height * width;
    let d = t.data();
    let mut pixels = vec![0u8; channels * plane];
    for p in 0..plane {
        for c in 0..channels {
            pixels[p * channels + c] = (d[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(Raster {
        channels,
        height,
        width,
        pixels,
    })
}

fn read(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write(path: &Path, r: &Raster) -> Result<()> {
    fs::write(path, encode(r)).map_err(|e| Error::io(path, e))
}

/// `[3,H,W]` in [0, 1]. Grayscale files are replicated to three channels.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let r = read(path)?;
    let t = raster_to_tensor(&r);
    if r.channels == 3 {
        Ok(t)
    } else {
        Tensor::concat(&[t.clone(), t.clone(), t], 0)
    }
}

pub fn save_image(t: &Tensor, path: &Path) -> Result<()> {
    let r = tensor_to_raster(t)?;
    if r.channels != 3 {
        return Err(shape_err!("save_image expects 3 channels"));
    }
    write(path, &r)
}

/// `[1,H,W]` binary mask; samples ≥ 128 are visible.
pub fn load_mask(path: &Path) -> Result<Tensor> {
    let r = read(path)?;
    if r.channels != 1 {
        return Err(Error::Format(format!(
            "{}: masks must be PGM (P5)",
            path.display()
        )));
    }
    let data = r
        .pixels
        .iter()
        .map(|&p| if p >= 128 { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(&[1, r.height, r.width], data)
}

pub fn save_mask(mask: &Tensor, path: &Path) -> Result<()> {
    let r = tensor_to_raster(mask)?;
    if r.channels != 1 {
        return Err(shape_err!("save_mask expects 1 channel"));
    }
    write(path, &r)
}
