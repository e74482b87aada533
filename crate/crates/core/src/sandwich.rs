//! Gated feed-forward network, the FFN → SCAL → FFN block and the gated embedding.

use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Result};
use crate::nn::{Conv2d, ConvShape, Init, Module, Norm, NormKind, Param};
use crate::scal::ScalLayer;
use crate::tensor::Tensor;

/// x + W_out(GELU(gate) ⊙ value), with [gate; value] = dw3×3(W_in(LN(x))).
#[derive(Debug, Clone)]
pub struct GatedFfn {
    pub channels: usize,
    pub hidden: usize,
    pub norm: Norm,
    pub expand: Conv2d,
    pub depthwise: Conv2d,
    pub project: Conv2d,
}

impl GatedFfn {
    pub fn new(
        name: &str,
        channels: usize,
        expansion: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<GatedFfn> {
        if expansion == 0 {
            return Err(config_err!("FFN expansion must be positive"));
        }
        let hidden = channels * expansion;
        Ok(GatedFfn {
            channels,
            hidden,
            norm: Norm::new(&format!("{name}.norm"), channels, NormKind::Channel),
            expand: Conv2d::new(
                &format!("{name}.expand"),
                ConvShape::new(channels, 2 * hidden, 1),
                Init::KaimingUniform,
                rng,
            ),
            depthwise: Conv2d::new(
                &format!("{name}.dw"),
                ConvShape::depthwise(2 * hidden, 3),
                Init::KaimingUniform,
                rng,
            ),
            project: Conv2d::new(
                &format!("{name}.project"),
                ConvShape::new(hidden, channels, 1),
                Init::Zeros,
                rng,
            ),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self
            .depthwise
            .forward(&self.expand.forward(&self.norm.forward(x)?)?)?;
        let gate = h.slice(1, 0, self.hidden)?.gelu()?;
        let value = h.slice(1, self.hidden, 2 * self.hidden)?;
        x.add(&self.project.forward(&gate.mul(&value)?)?)
    }
}

impl Module for GatedFfn {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.norm.visit(f);
        self.expand.visit(f);
        self.depthwise.visit(f);
        self.project.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.norm.visit_mut(f);
        self.expand.visit_mut(f);
        self.depthwise.visit_mut(f);
        self.project.visit_mut(f);
    }
}

/// Residual convolution module inserted between attention and the last FFN
/// in the Conformer-style ablation: x + W_2(GELU(dw3×3(W_1(LN(x))))).
#[derive(Debug, Clone)]
pub struct ConvModule {
    pub norm: Norm,
    pub pointwise_in: Conv2d,
    pub depthwise: Conv2d,
    pub pointwise_out: Conv2d,
}

impl ConvModule {
    pub fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> ConvModule {
        let c = channels;
        ConvModule {
            norm: Norm::new(&format!("{name}.norm"), c, NormKind::Channel),
            pointwise_in: Conv2d::new(
                &format!("{name}.pw_in"),
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
            pointwise_out: Conv2d::new(
                &format!("{name}.pw_out"),
                ConvShape::new(c, c, 1),
                Init::Zeros,
                rng,
            ),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.pointwise_in.forward(&self.norm.forward(x)?)?;
        let h = self.depthwise.forward(&h)?.gelu()?;
        x.add(&self.pointwise_out.forward(&h)?)
    }
}

impl Module for ConvModule {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.norm.visit(f);
        self.pointwise_in.visit(f);
        self.depthwise.visit(f);
        self.pointwise_out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.norm.visit_mut(f);
        self.pointwise_in.visit_mut(f);
        self.depthwise.visit_mut(f);
        self.pointwise_out.visit_mut(f);
    }
}

/// Sub-layer arrangement of a transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLayout {
    /// FFN → SCAL → FFN.
    Sandwich,
    /// SCAL → FFN.
    ScalFfn,
    /// FFN → SCAL → conv module → FFN.
    Conformer,
}

impl BlockLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockLayout::Sandwich => "sandwich",
            BlockLayout::ScalFfn => "scal-ffn",
            BlockLayout::Conformer => "conformer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sandwich" => Ok(BlockLayout::Sandwich),
            "scal-ffn" => Ok(BlockLayout::ScalFfn),
            "conformer" => Ok(BlockLayout::Conformer),
            other => Err(config_err!("unknown block layout {other:?}")),
        }
    }
}

/// Options shared by every block of one stack.
#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    pub layout: BlockLayout,
    pub expansion: usize,
    pub pool: usize,
    pub spatial: bool,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            layout: BlockLayout::Sandwich,
            expansion: 2,
            pool: 8,
            spatial: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SandwichBlock {
    pub ffn_pre: Option<GatedFfn>,
    pub scal: ScalLayer,
    pub mid_conv: Option<ConvModule>,
    pub ffn_post: GatedFfn,
}

impl SandwichBlock {
    pub fn new(
        name: &str,
        channels: usize,
        heads: usize,
        opts: BlockOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<SandwichBlock> {
        let ffn_pre = match opts.layout {
            BlockLayout::ScalFfn => None,
            _ => Some(GatedFfn::new(
                &format!("{name}.ffn_pre"),
                channels,
                opts.expansion,
                rng,
            )?),
        };
        let scal = ScalLayer::new(
            &format!("{name}.scal"),
            channels,
            heads,
            opts.pool,
            opts.spatial,
            rng,
        )?;
        let mid_conv = (opts.layout == BlockLayout::Conformer)
            .then(|| ConvModule::new(&format!("{name}.mid_conv"), channels, rng));
        let ffn_post = GatedFfn::new(&format!("{name}.ffn_post"), channels, opts.expansion, rng)?;
        Ok(SandwichBlock {
            ffn_pre,
            scal,
            mid_conv,
            ffn_post,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match &self.ffn_pre {
            Some(ffn) => ffn.forward(x)?,
            None => x.clone(),
        };
        let y = y.add(&self.scal.forward(&y)?)?;
        let y = match &self.mid_conv {
            Some(conv) => conv.forward(&y)?,
            None => y,
        };
        self.ffn_post.forward(&y)
    }
}

impl Module for SandwichBlock {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.ffn_pre.visit(f);
        self.scal.visit(f);
        self.mid_conv.visit(f);
        self.ffn_post.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.ffn_pre.visit_mut(f);
        self.scal.visit_mut(f);
        self.mid_conv.visit_mut(f);
        self.ffn_post.visit_mut(f);
    }
}

/// conv_a(x) ⊙ GELU(conv_b(x)) over the 4-channel (masked RGB, mask) input.
#[derive(Debug, Clone)]
pub struct GatedEmbedding {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
}

impl GatedEmbedding {
    pub fn new(
        name: &str,
        channels: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<GatedEmbedding> {
        if kernel.is_multiple_of(2) {
            return Err(config_err!("embedding kernel must be odd, got {kernel}"));
        }
        Ok(GatedEmbedding {
            conv_a: Conv2d::new(
                &format!("{name}.conv_a"),
                ConvShape::new(4, channels, kernel),
                Init::KaimingUniform,
                rng,
            ),
            conv_b: Conv2d::new(
                &format!("{name}.conv_b"),
                ConvShape::new(4, channels, kernel),
                Init::KaimingUniform,
                rng,
            ),
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.dims() != 4 || input.shape()[1] != 4 {
            return Err(shape_err!(
                "embedding expects [N,4,H,W] (masked RGB + mask), got {:?}",
                input.shape()
            ));
        }
        self.conv_a
            .forward(input)?
            .mul(&self.conv_b.forward(input)?.gelu()?)
    }
}

impl Module for GatedEmbedding {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.conv_a.visit(f);
        self.conv_b.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv_a.visit_mut(f);
        self.conv_b.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::randomize;
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn opts(layout: BlockLayout) -> BlockOptions {
        BlockOptions {
            layout,
            expansion: 2,
            pool: 8,
            spatial: true,
        }
    }

    #[test]
    fn ffn_is_identity_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ffn = GatedFfn::new("f", 8, 2, &mut rng).unwrap();
        for (i, shape) in [[1, 8, 4, 4], [2, 8, 3, 7], [1, 8, 9, 2]]
            .iter()
            .enumerate()
        {
            let x = random(shape, i as u64);
            let y = ffn.forward(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn every_layout_is_identity_at_init() {
        for layout in [
            BlockLayout::Sandwich,
            BlockLayout::ScalFfn,
            BlockLayout::Conformer,
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let b = SandwichBlock::new("b", 8, 2, opts(layout), &mut rng).unwrap();
            let x = random(&[1, 8, 8, 8], 5);
            assert_eq!(b.forward(&x).unwrap().data(), x.data(), "{layout:?}");
        }
    }

    #[test]
    fn scal_ffn_differs_from_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut full =
            SandwichBlock::new("b", 8, 2, opts(BlockLayout::Sandwich), &mut rng).unwrap();
        randomize(&mut full, 0.3, &mut rng);
        let mut reduced = full.clone();
        reduced.ffn_pre = None;
        let x = random(&[1, 8, 8, 8], 6);
        assert_ne!(
            full.forward(&x).unwrap().data(),
            reduced.forward(&x).unwrap().data()
        );
    }

    #[test]
    fn closed_gate_zeroes_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut emb = GatedEmbedding::new("e", 8, 3, &mut rng).unwrap();
        emb.conv_b.zero_out();
        let y = emb.forward(&random(&[1, 4, 8, 8], 1)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        for s in [32, 64] {
            assert_eq!(
                emb.forward(&random(&[1, 4, s, s], 2)).unwrap().shape(),
                &[1, 8, s, s]
            );
        }
        assert!(emb.forward(&random(&[1, 3, 8, 8], 1)).is_err());
    }
}
