//! Spatially-activated channel attention.
//!
//! Channel branch: layer-normalised input, 1×1 then depthwise 3×3 projections
//! to Q, K, V; per head the (C/n)×(C/n) map softmax(Q·Kᵀ / γ) mixes the value
//! channels. Its cost is linear in the pixel count.
//!
//! Spatial branch: adaptive average pool to P×P, a 3×3 conv block with
//! channel norm and ReLU (C → C/4), a 3×3 conv block with plane norm and
//! sigmoid (C/4 → 1), bilinear upsampling back to H×W. The single-channel map
//! rescales every channel of the channel-branch output before the 1×1 output
//! projection.

use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Result};
use crate::nn::{Conv2d, ConvShape, Init, Module, Norm, NormKind, Param};
use crate::tensor::Tensor;

/// Lower bound on |γ| in the forward pass.
pub const TEMPERATURE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
struct Projection {
    pointwise: Conv2d,
    depthwise: Conv2d,
}

impl Projection {
    fn new(name: &str, c: usize, rng: &mut ChaCha8Rng) -> Projection {
        Projection {
            pointwise: Conv2d::new(
                &format!("{name}.pw"),
                ConvShape::new(c, c, 1),
                Init::KaimingUniform,
                rng,
            ),
            depthwise: Conv2d::new(
                &format!("{name}.dw"),
                ConvShape::depthwise(c, 3),
                Init::KaimingUniform,
                rng,
            ),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.depthwise.forward(&self.pointwise.forward(x)?)
    }
}

impl Module for Projection {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.pointwise.visit(f);
        self.depthwise.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.pointwise.visit_mut(f);
        self.depthwise.visit_mut(f);
    }
}

/// Pooled-convolution spatial attention producing a `[N, 1, H, W]` map in (0, 1).
#[derive(Debug, Clone)]
pub struct SpatialBranch {
    pub pool: usize,
    pub g_conv: Conv2d,
    pub g_norm: Norm,
    pub f_conv: Conv2d,
    pub f_norm: Norm,
}

impl SpatialBranch {
    pub fn new(name: &str, channels: usize, pool: usize, rng: &mut ChaCha8Rng) -> SpatialBranch {
        let mid = (channels / 4).max(1);
        SpatialBranch {
            pool,
            g_conv: Conv2d::new(
                &format!("{name}.g.conv"),
                ConvShape::new(channels, mid, 3),
                Init::KaimingUniform,
                rng,
            ),
            g_norm: Norm::new(&format!("{name}.g.norm"), mid, NormKind::Channel),
            f_conv: Conv2d::new(
                &format!("{name}.f.conv"),
                ConvShape::new(mid, 1, 3),
                Init::KaimingUniform,
                rng,
            ),
            f_norm: Norm::new(&format!("{name}.f.norm"), 1, NormKind::Spatial),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let pooled = x.avg_pool_adaptive(self.pool.min(h), self.pool.min(w))?;
        let g = self
            .g_norm
            .forward(&self.g_conv.forward(&pooled)?)?
            .relu()?;
        let f = self.f_norm.forward(&self.f_conv.forward(&g)?)?.sigmoid()?;
        f.upsample_bilinear(h, w)
    }
}

impl Module for SpatialBranch {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.g_conv.visit(f);
        self.g_norm.visit(f);
        self.f_conv.visit(f);
        self.f_norm.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.g_conv.visit_mut(f);
        self.g_norm.visit_mut(f);
        self.f_conv.visit_mut(f);
        self.f_norm.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct ScalLayer {
    pub channels: usize,
    pub heads: usize,
    pub norm: Norm,
    query: Projection,
    key: Projection,
    value: Projection,
    /// One temperature per head.
    pub temperature: Param,
    /// `None` disables spatial modulation (channel attention only).
    pub spatial: Option<SpatialBranch>,
    /// Output projection θ (zero at init).
    pub proj: Conv2d,
}

impl ScalLayer {
    pub fn new(
        name: &str,
        channels: usize,
        heads: usize,
        pool: usize,
        spatial: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ScalLayer> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(config_err!(
                "{channels} channels cannot be split into {heads} heads"
            ));
        }
        if pool == 0 {
            return Err(config_err!("pooled extent must be positive"));
        }
        let c = channels;
        Ok(ScalLayer {
            channels,
            heads,
            norm: Norm::new(&format!("{name}.norm"), c, NormKind::Channel),
            query: Projection::new(&format!("{name}.q"), c, rng),
            key: Projection::new(&format!("{name}.k"), c, rng),
            value: Projection::new(&format!("{name}.v"), c, rng),
            temperature: Param::new(format!("{name}.temperature"), &[heads], vec![1.0; heads]),
            spatial: spatial.then(|| SpatialBranch::new(&format!("{name}.spatial"), c, pool, rng)),
            proj: Conv2d::new(
                &format!("{name}.proj"),
                ConvShape::new(c, c, 1),
                Init::Zeros,
                rng,
            ),
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.dims() != 4 || x.shape()[1] != self.channels {
            return Err(shape_err!(
                "SCAL built for {} channels, got {:?}",
                self.channels,
                x.shape()
            ));
        }
        Ok(())
    }

    /// Per-head attention maps `[N, heads, C/heads, C/heads]` for an already-normalised input.
    pub fn attention_maps(&self, x_norm: &Tensor) -> Result<Tensor> {
        self.check_input(x_norm)?;
        let q = self.split_heads(&self.query.forward(x_norm)?)?;
        let k = self.split_heads(&self.key.forward(x_norm)?)?;
        self.attention_from(&q, &k)
    }

    fn split_heads(&self, t: &Tensor) -> Result<Tensor> {
        let s = t.shape();
        t.reshape(&[s[0], self.heads, self.channels / self.heads, s[2] * s[3]])
    }

    fn attention_from(&self, q: &Tensor, k: &Tensor) -> Result<Tensor> {
        let logits = q.matmul(&k.transpose_last2()?)?;
        let d = self.channels / self.heads;
        let n = q.shape()[0];
        let temp = self
            .temperature
            .value()
            .clamp_magnitude_min(TEMPERATURE_FLOOR)?
            .reshape(&[1, self.heads, 1, 1])?
            .broadcast_to(&[n, self.heads, d, d])?;
        logits.div(&temp)?.softmax(3)
    }

    /// Channel self-attention on a normalised input; output has the input's shape.
    pub fn channel_attention(&self, x_norm: &Tensor) -> Result<Tensor> {
        self.check_input(x_norm)?;
        let q = self.split_heads(&self.query.forward(x_norm)?)?;
        let k = self.split_heads(&self.key.forward(x_norm)?)?;
        let v = self.split_heads(&self.value.forward(x_norm)?)?;
        let attn = self.attention_from(&q, &k)?;
        attn.matmul(&v)?.reshape(x_norm.shape())
    }

    /// Spatial map `[N, 1, H, W]`; all ones when the branch is disabled.
    pub fn spatial_attention(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let s = x.shape();
        match &self.spatial {
            Some(branch) => branch.forward(x),
            None => Ok(Tensor::full(&[s[0], 1, s[2], s[3]], 1.0)),
        }
    }

    /// θ(channel_attention(LN(x)) ⊙ spatial_attention(x)), without residual.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let attended = self.channel_attention(&self.norm.forward(x)?)?;
        let modulated = match &self.spatial {
            Some(branch) => attended.mul(&branch.forward(x)?.broadcast_to(x.shape())?)?,
            None => attended,
        };
        self.proj.forward(&modulated)
    }
}

impl Module for ScalLayer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.norm.visit(f);
        self.query.visit(f);
        self.key.visit(f);
        self.value.visit(f);
        f(&self.temperature);
        self.spatial.visit(f);
        self.proj.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.norm.visit_mut(f);
        self.query.visit_mut(f);
        self.key.visit_mut(f);
        self.value.visit_mut(f);
        f(&mut self.temperature);
        self.spatial.visit_mut(f);
        self.proj.visit_mut(f);
    }
}

/// Reference quadratic spatial self-attention over `[N, C, H, W]`:
/// softmax over all pixel pairs, Q = K = V = x. Used only as a cost baseline.
pub fn spatial_self_attention(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let flat = x.reshape(&[n, c, hw])?;
    let tokens = flat.transpose_last2()?;
    let attn = tokens
        .matmul(&flat)?
        .scale(1.0 / (c as f64).sqrt())?
        .softmax(2)?;
    flat.matmul(&attn.transpose_last2()?)?.reshape(s)
}
