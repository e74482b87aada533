//! WebAssembly bindings for `www/index.html`. Every function returns a
//! [`Picture`]: RGBA bytes plus one scalar for the caption.

use hint_core::data::{generate_mask, synthetic_image, Bucket, MaskSpec};
use hint_core::mpd::{source_validity, Downsample, DownsampleKind};
use hint_core::nn::{Conv2d, ConvShape, Init};
use hint_core::scal::ScalLayer;
use hint_core::{no_grad, Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const FEATURES: usize = 8;
const HEADS: usize = 2;

#[wasm_bindgen]
pub struct Picture {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    value: f64,
}

#[wasm_bindgen]
impl Picture {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
    /// Missing fraction, drift or attention entropy, depending on the call.
    #[wasm_bindgen(getter)]
    pub fn value(&self) -> f64 {
        self.value
    }
}

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Blue-to-yellow ramp for values in [0, 1].
fn heat(v: f64) -> [u8; 4] {
    let v = v.clamp(0.0, 1.0);
    [byte(v), byte(0.2 + 0.6 * v), byte(1.0 - v), 255]
}

fn gray_picture(values: &[f64], height: usize, width: usize, value: f64) -> Picture {
    let rgba = values
        .iter()
        .flat_map(|&v| [byte(v), byte(v), byte(v), 255])
        .collect();
    Picture {
        width,
        height,
        rgba,
        value,
    }
}

fn heat_picture(values: &[f64], height: usize, width: usize, value: f64) -> Picture {
    let rgba = values.iter().flat_map(|&v| heat(v)).collect();
    Picture {
        width,
        height,
        rgba,
        value,
    }
}

fn to_mask(bits: &[u8], size: usize) -> Result<Tensor, JsValue> {
    let data = bits
        .iter()
        .map(|&b| if b > 0 { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(&[1, 1, size, size], data).map_err(js)
}

/// A random-walk stroke mask (white = visible) for `bucket`.
#[wasm_bindgen]
pub fn stroke_mask(bucket: &str, seed: u32, size: usize) -> Result<Picture, JsValue> {
    let b = Bucket::parse(bucket).map_err(js)?;
    let m = generate_mask(&MaskSpec::bucket(b, seed as u64), size, size).map_err(js)?;
    let missing = m.data().iter().filter(|&&v| v == 0.0).count() as f64 / (size * size) as f64;
    Ok(gray_picture(m.data(), size, size, missing))
}

/// Where a downsampling layer's carried mask disagrees with the true
/// validity of the packed source pixels. `mask` holds one byte per pixel
/// (non-zero = visible). The picture is the per-location mismatch rate at
/// half resolution; its value is the overall drift.
#[wasm_bindgen]
pub fn mask_drift_map(kind: &str, mask: &[u8], size: usize) -> Result<Picture, JsValue> {
    let kind = match kind {
        "mpd" => DownsampleKind::Mpd,
        "pd" => DownsampleKind::Pd,
        "cd" => DownsampleKind::Conv,
        _ => return Err(JsValue::from_str("kind must be mpd, pd or cd")),
    };
    let m = to_mask(mask, size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = Downsample::new(kind, "down", FEATURES, &mut rng).map_err(js)?;
    let x = Tensor::from_vec(&[1, 1, size, size], vec![0.5; size * size])
        .and_then(|t| t.broadcast_to(&[1, FEATURES, size, size]))
        .map_err(js)?;
    let carried = no_grad(|| layer.carried_masks(&x, &m)).map_err(js)?;
    let c = carried.shape()[1];
    let truth = source_validity(&m, c).map_err(js)?;
    let half = size / 2;
    let plane = half * half;
    let mut rate = vec![0.0; plane];
    for (i, (a, b)) in carried.data().iter().zip(truth.data()).enumerate() {
        if (a > &0.5) != (b > &0.5) {
            rate[i % plane] += 1.0 / c as f64;
        }
    }
    let drift = rate.iter().sum::<f64>() / plane as f64;
    Ok(heat_picture(&rate, half, half, drift))
}

fn attention_layer(seed: u32, gamma: f64) -> Result<(Conv2d, ScalLayer), Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let embed = Conv2d::new(
        "embed",
        ConvShape::new(3, FEATURES, 3),
        Init::KaimingUniform,
        &mut rng,
    );
    let mut layer = ScalLayer::new("scal", FEATURES, HEADS, 8, true, &mut rng)?;
    layer.temperature.set_data(vec![gamma; HEADS]);
    Ok((embed, layer))
}

fn features(seed: u32, size: usize, embed: &Conv2d) -> Result<Tensor, Error> {
    let img = synthetic_image(size, size, seed as u64).reshape(&[1, 3, size, size])?;
    embed.forward(&img)
}

/// The synthetic test image used by the attention view.
#[wasm_bindgen]
pub fn test_image(seed: u32, size: usize) -> Picture {
    let img = synthetic_image(size, size, seed as u64);
    let d = img.data();
    let plane = size * size;
    let rgba = (0..plane)
        .flat_map(|i| [byte(d[i]), byte(d[plane + i]), byte(d[2 * plane + i]), 255])
        .collect();
    Picture {
        width: size,
        height: size,
        rgba,
        value: 0.0,
    }
}

/// Channel attention maps of both heads side by side at temperature
/// `gamma`, each cell scaled by its row maximum. The value is the mean row
/// entropy in nats; it falls as `gamma` shrinks and the maps sharpen.
#[wasm_bindgen]
pub fn channel_attention(seed: u32, size: usize, gamma: f64) -> Result<Picture, JsValue> {
    let (embed, layer) = attention_layer(seed, gamma).map_err(js)?;
    let maps = no_grad(|| {
        let x = features(seed, size, &embed)?;
        layer.attention_maps(&layer.norm.forward(&x)?)
    })
    .map_err(js)?;
    let d = FEATURES / HEADS;
    let width = HEADS * d + HEADS - 1;
    let mut cells = vec![0.0; d * width];
    let mut entropy = 0.0;
    for (h, head) in maps.data().chunks(d * d).enumerate() {
        for (r, row) in head.chunks(d).enumerate() {
            let top = row.iter().cloned().fold(0.0, f64::max);
            entropy -= row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>();
            for (c, &p) in row.iter().enumerate() {
                cells[r * width + h * (d + 1) + c] = p / top;
            }
        }
    }
    Ok(heat_picture(&cells, d, width, entropy / (HEADS * d) as f64))
}

/// The spatial activation map in (0, 1); the value is its mean.
#[wasm_bindgen]
pub fn spatial_map(seed: u32, size: usize) -> Result<Picture, JsValue> {
    let (embed, layer) = attention_layer(seed, 1.0).map_err(js)?;
    let map = no_grad(|| layer.spatial_attention(&features(seed, size, &embed)?)).map_err(js)?;
    let mean = map.data().iter().sum::<f64>() / map.numel() as f64;
    Ok(heat_picture(map.data(), size, size, mean))
}
