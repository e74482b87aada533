//! Mask-aware pixel-shuffle downsampling and its two ablation baselines.
//!
//! MPD halves the spatial extent and doubles the width of a feature map
//! without discarding any pixel. The features are first projected to half
//! width, then packed 2×2 → 4 channels per source channel. The mask is packed
//! the same way, so each of the four mask channels records the validity of
//! one sub-pixel offset. Every packed feature channel `i` is interleaved with
//! the mask channel of its own offset (`i mod 4`) and each such pair is
//! encoded by its own 3×3 filter before a 1×1 mixes the pairs.

use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Error, Result};
use crate::nn::{Conv2d, ConvShape, Init, Module, Param};
use crate::tensor::Tensor;

/// Mask channel paired with packed feature channel `i`.
pub fn paired_mask_channel(i: usize) -> usize {
    i % 4
}

/// Channel order of the interleaved tensor, as indices into
/// `concat([features (2C channels), packed mask (4 channels)])`.
pub fn interleave_order(packed_channels: usize) -> Vec<usize> {
    (0..packed_channels)
        .flat_map(|i| [i, packed_channels + paired_mask_channel(i)])
        .collect()
}

/// Check a `[N, 1, H, W]` mask against `[N, C, H, W]` features.
pub fn validate_mask(x: &Tensor, mask: &Tensor) -> Result<()> {
    if x.dims() != 4 {
        return Err(shape_err!(
            "features must be [N,C,H,W], got {:?}",
            x.shape()
        ));
    }
    let s = x.shape();
    if mask.shape() != [s[0], 1, s[2], s[3]] {
        return Err(shape_err!(
            "mask {:?} does not match features {:?}",
            mask.shape(),
            s
        ));
    }
    if !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
        return Err(shape_err!(
            "downsampling needs even extents, got {}x{}",
            s[2],
            s[3]
        ));
    }
    if let Some(v) = mask.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("mask value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Per-pixel minimum over the channels of a packed mask `[N, 4, h, w]` → `[N, 1, h, w]`.
pub fn min_over_channels(packed: &Tensor) -> Tensor {
    let s = packed.shape();
    let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
    let src = packed.data();
    let mut out = vec![f64::INFINITY; n * plane];
    for b in 0..n {
        for ch in 0..c {
            for p in 0..plane {
                let v = src[(b * c + ch) * plane + p];
                let o = &mut out[b * plane + p];
                *o = o.min(v);
            }
        }
    }
    Tensor::from_vec(&[n, 1, s[2], s[3]], out).expect("shape product matches")
}

/// Top-left sample of each 2×2 block.
fn nearest_half(mask: &Tensor) -> Tensor {
    let s = mask.shape();
    let (n, h, w) = (s[0], s[2], s[3]);
    let src = mask.data();
    let mut out = Vec::with_capacity(n * h * w / 4);
    for b in 0..n {
        for y in (0..h).step_by(2) {
            for x in (0..w).step_by(2) {
                out.push(src[(b * h + y) * w + x]);
            }
        }
    }
    Tensor::from_vec(&[n, 1, h / 2, w / 2], out).expect("shape product matches")
}

fn check_channels(c: usize) -> Result<()> {
    if c < 2 || !c.is_multiple_of(2) {
        return Err(config_err!(
            "downsampling needs an even channel count >= 2, got {c}"
        ));
    }
    Ok(())
}

/// Mask-aware pixel-shuffle downsampling: `[N,C,H,W]` → `[N,2C,H/2,W/2]`.
#[derive(Debug, Clone)]
pub struct MpdLayer {
    pub channels: usize,
    /// 3×3, C → C/2, no bias.
    pub half_proj: Conv2d,
    /// Grouped 3×3 over the 4C interleaved channels: 2C groups of (feature, mask) → 1.
    pub pair_conv: Conv2d,
    /// 1×1, 2C → 2C.
    pub pointwise: Conv2d,
}

/// Intermediate tensors of one MPD pass.
#[derive(Debug, Clone)]
pub struct MpdTrace {
    /// Packed features `[N, 2C, H/2, W/2]`.
    pub packed: Tensor,
    /// Packed mask `[N, 4, H/2, W/2]`.
    pub packed_mask: Tensor,
    /// Interleaved pairs `[N, 4C, H/2, W/2]`.
    pub interleaved: Tensor,
}

impl MpdLayer {
    pub fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Result<MpdLayer> {
        check_channels(channels)?;
        let c = channels;
        Ok(MpdLayer {
            channels,
            half_proj: Conv2d::new(
                &format!("{name}.half_proj"),
                ConvShape::new(c, c / 2, 3).no_bias(),
                Init::KaimingUniform,
                rng,
            ),
            pair_conv: Conv2d::new(
                &format!("{name}.pair_conv"),
                ConvShape::new(4 * c, 2 * c, 3).groups(2 * c).no_bias(),
                Init::KaimingUniform,
                rng,
            ),
            pointwise: Conv2d::new(
                &format!("{name}.pointwise"),
                ConvShape::new(2 * c, 2 * c, 1),
                Init::KaimingUniform,
                rng,
            ),
        })
    }

    /// Projection, packing and interleaving, stopping before the pair encoder.
    pub fn trace(&self, x: &Tensor, mask: &Tensor) -> Result<MpdTrace> {
        validate_mask(x, mask)?;
        if x.shape()[1] != self.channels {
            return Err(shape_err!(
                "MPD built for {} channels, got {:?}",
                self.channels,
                x.shape()
            ));
        }
        let packed = self.half_proj.forward(x)?.pixel_unshuffle(2)?;
        let packed_mask = mask.pixel_unshuffle(2)?;
        let order = interleave_order(packed.shape()[1]);
        let interleaved =
            Tensor::concat(&[packed.clone(), packed_mask.clone()], 1)?.index_select(1, &order)?;
        Ok(MpdTrace {
            packed,
            packed_mask,
            interleaved,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        let t = self.trace(x, mask)?;
        let out = self
            .pointwise
            .forward(&self.pair_conv.forward(&t.interleaved)?)?;
        Ok((out, min_over_channels(&t.packed_mask)))
    }
}

impl Module for MpdLayer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.half_proj.visit(f);
        self.pair_conv.visit(f);
        self.pointwise.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.half_proj.visit_mut(f);
        self.pair_conv.visit_mut(f);
        self.pointwise.visit_mut(f);
    }
}

/// Plain pixel-shuffle downsampling: projection and packing, then a 3×3 conv, no mask pairing.
#[derive(Debug, Clone)]
pub struct PdLayer {
    pub channels: usize,
    pub half_proj: Conv2d,
    pub mix: Conv2d,
}

impl PdLayer {
    pub fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Result<PdLayer> {
        check_channels(channels)?;
        let c = channels;
        Ok(PdLayer {
            channels,
            half_proj: Conv2d::new(
                &format!("{name}.half_proj"),
                ConvShape::new(c, c / 2, 3).no_bias(),
                Init::KaimingUniform,
                rng,
            ),
            mix: Conv2d::new(
                &format!("{name}.mix"),
                ConvShape::new(2 * c, 2 * c, 3),
                Init::KaimingUniform,
                rng,
            ),
        })
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        validate_mask(x, mask)?;
        let packed = self.half_proj.forward(x)?.pixel_unshuffle(2)?;
        let out = self.mix.forward(&packed)?;
        Ok((out, min_over_channels(&mask.pixel_unshuffle(2)?)))
    }
}

impl Module for PdLayer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.half_proj.visit(f);
        self.mix.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.half_proj.visit_mut(f);
        self.mix.visit_mut(f);
    }
}

/// Strided-convolution downsampling: 3×3, stride 2, C → 2C.
#[derive(Debug, Clone)]
pub struct ConvDownsample {
    pub conv: Conv2d,
}

impl ConvDownsample {
    pub fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Result<ConvDownsample> {
        check_channels(channels)?;
        Ok(ConvDownsample {
            conv: Conv2d::new(
                &format!("{name}.conv"),
                ConvShape::new(channels, 2 * channels, 3).stride(2),
                Init::KaimingUniform,
                rng,
            ),
        })
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        validate_mask(x, mask)?;
        Ok((self.conv.forward(x)?, nearest_half(mask)))
    }
}

impl Module for ConvDownsample {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.conv.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_mut(f);
    }
}

/// Downsampling strategy between encoder levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsampleKind {
    Mpd,
    Pd,
    Conv,
}

impl DownsampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DownsampleKind::Mpd => "mpd",
            DownsampleKind::Pd => "pd",
            DownsampleKind::Conv => "cd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mpd" => Ok(DownsampleKind::Mpd),
            "pd" => Ok(DownsampleKind::Pd),
            "cd" | "conv" => Ok(DownsampleKind::Conv),
            other => Err(config_err!("unknown downsample kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Downsample {
    Mpd(MpdLayer),
    Pd(PdLayer),
    Conv(ConvDownsample),
}

impl Downsample {
    pub fn new(
        kind: DownsampleKind,
        name: &str,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Downsample> {
        Ok(match kind {
            DownsampleKind::Mpd => Downsample::Mpd(MpdLayer::new(name, channels, rng)?),
            DownsampleKind::Pd => Downsample::Pd(PdLayer::new(name, channels, rng)?),
            DownsampleKind::Conv => Downsample::Conv(ConvDownsample::new(name, channels, rng)?),
        })
    }

    pub fn kind(&self) -> DownsampleKind {
        match self {
            Downsample::Mpd(_) => DownsampleKind::Mpd,
            Downsample::Pd(_) => DownsampleKind::Pd,
            Downsample::Conv(_) => DownsampleKind::Conv,
        }
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        match self {
            Downsample::Mpd(l) => l.forward(x, mask),
            Downsample::Pd(l) => l.forward(x, mask),
            Downsample::Conv(l) => l.forward(x, mask),
        }
    }

    /// Whether every feature channel entering the encoder carries its own
    /// sub-pixel mask alongside it. Only MPD builds such pairs; for it the
    /// pairing is verified bit-for-bit on the given input.
    pub fn mask_pairing_holds(&self, x: &Tensor, mask: &Tensor) -> Result<bool> {
        let Downsample::Mpd(layer) = self else {
            return Ok(false);
        };
        let t = layer.trace(x, mask)?;
        Ok(pairing_is_exact(&t))
    }
}

impl Downsample {
    /// Mask value each of the 2C output-side feature channels travels with,
    /// `[N, 2C, H/2, W/2]`. MPD pairs every channel with its own sub-pixel
    /// mask; the baselines attach their single downsampled mask to all channels.
    pub fn carried_masks(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let c2 = 2 * x.shape()[1];
        match self {
            Downsample::Mpd(layer) => {
                let odd: Vec<usize> = (0..c2).map(|i| 2 * i + 1).collect();
                layer.trace(x, mask)?.interleaved.index_select(1, &odd)
            }
            _ => {
                let (_, m) = self.forward(x, mask)?;
                let s = m.shape().to_vec();
                m.broadcast_to(&[s[0], c2, s[2], s[3]])
            }
        }
    }
}

/// Validity of the pixel each packed channel was read from: channel `j` at
/// `(h, w)` holds source pixel `(2h + dy, 2w + dx)` with `dy·2 + dx = j mod 4`.
pub fn source_validity(mask: &Tensor, packed_channels: usize) -> Result<Tensor> {
    let s = mask.shape();
    if s.len() != 4 || s[1] != 1 || !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
        return Err(shape_err!("expected an even [N,1,H,W] mask, got {s:?}"));
    }
    let (n, h, w) = (s[0], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let m = mask.data();
    let mut out = Vec::with_capacity(n * packed_channels * oh * ow);
    for b in 0..n {
        for j in 0..packed_channels {
            let (dy, dx) = ((j % 4) / 2, j % 2);
            for y in 0..oh {
                for x in 0..ow {
                    out.push(m[(b * h + 2 * y + dy) * w + 2 * x + dx]);
                }
            }
        }
    }
    Tensor::from_vec(&[n, packed_channels, oh, ow], out)
}

/// Fraction of feature entries whose carried mask disagrees with the
/// validity of their source pixel.
pub fn mask_drift(layer: &Downsample, x: &Tensor, mask: &Tensor) -> Result<f64> {
    let carried = layer.carried_masks(x, mask)?;
    let truth = source_validity(mask, carried.shape()[1])?;
    let wrong = carried
        .data()
        .iter()
        .zip(truth.data().iter())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / carried.numel() as f64)
}

/// `[N,1,H,W]` checkerboard with visible pixels where `(y + x)` is even.
pub fn checkerboard(n: usize, h: usize, w: usize) -> Tensor {
    let data = (0..n * h * w)
        .map(|i| {
            if ((i / w) % h + i % w).is_multiple_of(2) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(&[n, 1, h, w], data).unwrap()
}

/// Every odd interleaved channel equals packed-mask channel `i mod 4`, and every
/// even one equals packed feature channel `i`, bit for bit.
pub fn pairing_is_exact(t: &MpdTrace) -> bool {
    let s = t.interleaved.shape();
    let (n, plane) = (s[0], s[2] * s[3]);
    let c4 = s[1];
    let c2 = t.packed.shape()[1];
    let chan = |src: &Tensor, channels: usize, b: usize, c: usize| -> Vec<u64> {
        let off = (b * channels + c) * plane;
        src.data()[off..off + plane]
            .iter()
            .map(|v| v.to_bits())
            .collect()
    };
    (0..n).all(|b| {
        (0..c2).all(|i| {
            chan(&t.interleaved, c4, b, 2 * i) == chan(&t.packed, c2, b, i)
                && chan(&t.interleaved, c4, b, 2 * i + 1)
                    == chan(&t.packed_mask, 4, b, paired_mask_channel(i))
        })
    })
}

impl Module for Downsample {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        match self {
            Downsample::Mpd(l) => l.visit(f),
            Downsample::Pd(l) => l.visit(f),
            Downsample::Conv(l) => l.visit(f),
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Downsample::Mpd(l) => l.visit_mut(f),
            Downsample::Pd(l) => l.visit_mut(f),
            Downsample::Conv(l) => l.visit_mut(f),
        }
    }
}
