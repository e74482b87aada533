//! The seven-level encoder–decoder.
//!
//! ```text
//! [masked RGB ‖ mask] → gated embedding (C)
//!   L1 (C, H)     ──────────────────────────────┐ skip
//!   ↓ downsample (mask-aware)                   │
//!   L2 (2C, H/2)  ────────────────────┐ skip    │
//!   ↓                                 │         │
//!   L3 (4C, H/4)  ──────────┐ skip    │         │
//!   ↓                       │         │         │
//!   L4 (8C, H/8)            │         │         │
//!   ↑ 1×1 + shuffle         │         │         │
//!   L5 (4C) ← reduce(cat) ←─┘         │         │
//!   ↑                                 │         │
//!   L6 (2C) ← reduce(cat) ←───────────┘         │
//!   ↑                                           │
//!   L7 (2C) ← cat (no reduction) ←──────────────┘
//!   → 3×3 projection → sigmoid
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{config_err, shape_err, Result};
use crate::kv::{join, KvDoc};
use crate::mpd::{Downsample, DownsampleKind};
use crate::nn::{Conv2d, ConvShape, Init, Module, Param};
use crate::sandwich::{BlockLayout, BlockOptions, GatedEmbedding, SandwichBlock};
use crate::tensor::Tensor;

pub const LEVELS: usize = 7;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HintConfig {
    pub base_channels: usize,
    pub depths: [usize; LEVELS],
    pub heads: [usize; LEVELS],
    pub ffn_expansion: usize,
    pub pool_extent: usize,
    pub image_size: usize,
    /// Reduce the last skip concatenation back to C with a 1×1 conv.
    pub last_skip_reduce: bool,
    pub embed_kernel: usize,
    pub downsample: DownsampleKind,
    pub block_layout: BlockLayout,
    pub spatial_branch: bool,
}

impl Default for HintConfig {
    fn default() -> Self {
        HintConfig {
            base_channels: 8,
            depths: [4, 6, 6, 8, 6, 6, 4],
            heads: [1, 2, 4, 8, 4, 2, 1],
            ffn_expansion: 2,
            pool_extent: 8,
            image_size: 32,
            last_skip_reduce: false,
            embed_kernel: 3,
            downsample: DownsampleKind::Mpd,
            block_layout: BlockLayout::Sandwich,
            spatial_branch: true,
        }
    }
}

impl HintConfig {
    /// One block and one head per level.
    pub fn tiny() -> HintConfig {
        HintConfig {
            depths: [1; LEVELS],
            heads: [1; LEVELS],
            ..HintConfig::default()
        }
    }

    /// Width used at the 256×256 scale.
    pub fn full_scale() -> HintConfig {
        HintConfig {
            base_channels: 48,
            image_size: 256,
            ..HintConfig::default()
        }
    }

    /// Working width of each level's block stack.
    pub fn level_channels(&self) -> [usize; LEVELS] {
        let c = self.base_channels;
        let last = if self.last_skip_reduce { c } else { 2 * c };
        [c, 2 * c, 4 * c, 8 * c, 4 * c, 2 * c, last]
    }

    /// Spatial extent each level operates at, for a square input of `size`.
    pub fn level_extents(size: usize) -> [usize; LEVELS] {
        [size, size / 2, size / 4, size / 8, size / 4, size / 2, size]
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if c < 2 || !c.is_multiple_of(2) {
            return Err(config_err!("base_channels must be even and >= 2, got {c}"));
        }
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return Err(config_err!(
                "image_size must be a power of two >= 16, got {}",
                self.image_size
            ));
        }
        if self.ffn_expansion == 0 || self.pool_extent == 0 {
            return Err(config_err!(
                "ffn_expansion and pool_extent must be positive"
            ));
        }
        if self.embed_kernel.is_multiple_of(2) {
            return Err(config_err!("embed_kernel must be odd"));
        }
        for (lvl, (&w, &h)) in self.level_channels().iter().zip(&self.heads).enumerate() {
            if h == 0 || w % h != 0 {
                return Err(config_err!(
                    "level {}: {h} heads do not divide {w} channels",
                    lvl + 1
                ));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::default();
        d.insert("base_channels", self.base_channels);
        d.insert("depths", join(&self.depths));
        d.insert("heads", join(&self.heads));
        d.insert("ffn_expansion", self.ffn_expansion);
        d.insert("pool_extent", self.pool_extent);
        d.insert("image_size", self.image_size);
        d.insert("last_skip_reduce", self.last_skip_reduce);
        d.insert("embed_kernel", self.embed_kernel);
        d.insert("downsample", self.downsample.as_str());
        d.insert("block_layout", self.block_layout.as_str());
        d.insert("spatial_branch", self.spatial_branch);
        d
    }

    /// Consume the model keys from `doc`, falling back to defaults.
    pub fn take_from(doc: &mut KvDoc) -> Result<HintConfig> {
        let mut c = HintConfig::default();
        if let Some(v) = doc.take("base_channels")? {
            c.base_channels = v;
        }
        if let Some(v) = doc.take_list::<usize>("depths")? {
            c.depths = v
                .try_into()
                .map_err(|_| config_err!("depths must list {LEVELS} values"))?;
        }
        if let Some(v) = doc.take_list::<usize>("heads")? {
            c.heads = v
                .try_into()
                .map_err(|_| config_err!("heads must list {LEVELS} values"))?;
        }
        if let Some(v) = doc.take("ffn_expansion")? {
            c.ffn_expansion = v;
        }
        if let Some(v) = doc.take("pool_extent")? {
            c.pool_extent = v;
        }
        if let Some(v) = doc.take("image_size")? {
            c.image_size = v;
        }
        if let Some(v) = doc.take("last_skip_reduce")? {
            c.last_skip_reduce = v;
        }
        if let Some(v) = doc.take("embed_kernel")? {
            c.embed_kernel = v;
        }
        if let Some(v) = doc.take_str("downsample") {
            c.downsample = DownsampleKind::parse(&v)?;
        }
        if let Some(v) = doc.take_str("block_layout") {
            c.block_layout = BlockLayout::parse(&v)?;
        }
        if let Some(v) = doc.take("spatial_branch")? {
            c.spatial_branch = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<HintConfig> {
        let mut doc = KvDoc::parse(text)?;
        let c = HintConfig::take_from(&mut doc)?;
        doc.finish()?;
        Ok(c)
    }
}

/// 1×1 conv to twice the width, then pixel shuffle: C → C/2 at twice the extent.
#[derive(Debug, Clone)]
pub struct Upsample {
    pub conv: Conv2d,
}

impl Upsample {
    fn new(name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Upsample {
        Upsample {
            conv: Conv2d::new(
                name,
                ConvShape::new(channels, 2 * channels, 1),
                Init::KaimingUniform,
                rng,
            ),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.conv.forward(x)?.pixel_shuffle(2)
    }
}

impl Module for Upsample {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.conv.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct HintModel {
    pub config: HintConfig,
    pub embedding: GatedEmbedding,
    pub stacks: Vec<Vec<SandwichBlock>>,
    pub downsamples: Vec<Downsample>,
    pub upsamples: Vec<Upsample>,
    /// Skip reductions for levels 5, 6 and, when enabled, 7.
    pub skip_reduce: Vec<Conv2d>,
    pub projection: Conv2d,
}

impl HintModel {
    pub fn new(config: &HintConfig, seed: u64) -> Result<HintModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HintModel::with_rng(config, &mut rng)
    }

    pub fn with_rng(config: &HintConfig, rng: &mut ChaCha8Rng) -> Result<HintModel> {
        config.validate()?;
        let c = config.base_channels;
        let widths = config.level_channels();
        let opts = BlockOptions {
            layout: config.block_layout,
            expansion: config.ffn_expansion,
            pool: config.pool_extent,
            spatial: config.spatial_branch,
        };
        let embedding = GatedEmbedding::new("embed", c, config.embed_kernel, rng)?;
        let mut stacks = Vec::with_capacity(LEVELS);
        let mut downsamples = Vec::new();
        let mut upsamples = Vec::new();
        let mut skip_reduce = Vec::new();
        for lvl in 0..LEVELS {
            if lvl >= 4 {
                let from = widths[lvl - 1];
                upsamples.push(Upsample::new(&format!("up{}", lvl + 1), from, rng));
                // after the shuffle: from/2 channels, plus an encoder skip of equal width
                let cat = from;
                let reduce = lvl < 6 || config.last_skip_reduce;
                if reduce {
                    skip_reduce.push(Conv2d::new(
                        &format!("skip{}", lvl + 1),
                        ConvShape::new(cat, widths[lvl], 1),
                        Init::KaimingUniform,
                        rng,
                    ));
                }
            }
            let stack = (0..config.depths[lvl])
                .map(|b| {
                    SandwichBlock::new(
                        &format!("level{}.block{b}", lvl + 1),
                        widths[lvl],
                        config.heads[lvl],
                        opts,
                        rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            stacks.push(stack);
            if lvl < 3 {
                downsamples.push(Downsample::new(
                    config.downsample,
                    &format!("down{}", lvl + 1),
                    widths[lvl],
                    rng,
                )?);
            }
        }
        let projection = Conv2d::new(
            "projection",
            ConvShape::new(widths[LEVELS - 1], 3, 3),
            Init::KaimingUniform,
            rng,
        );
        Ok(HintModel {
            config: config.clone(),
            embedding,
            stacks,
            downsamples,
            upsamples,
            skip_reduce,
            projection,
        })
    }

    /// Completed image in (0, 1) for a masked image `[N,3,H,W]` and mask `[N,1,H,W]` (1 = visible).
    pub fn forward(&self, masked: &Tensor, mask: &Tensor) -> Result<Tensor> {
        self.run(masked, mask, true)
    }

    /// Same pipeline with every block stack skipped.
    pub fn forward_without_blocks(&self, masked: &Tensor, mask: &Tensor) -> Result<Tensor> {
        self.run(masked, mask, false)
    }

    fn run(&self, masked: &Tensor, mask: &Tensor, with_blocks: bool) -> Result<Tensor> {
        if masked.dims() != 4 || masked.shape()[1] != 3 {
            return Err(shape_err!(
                "image must be [N,3,H,W], got {:?}",
                masked.shape()
            ));
        }
        let s = masked.shape();
        if mask.shape() != [s[0], 1, s[2], s[3]] {
            return Err(shape_err!(
                "mask {:?} does not match image {:?}",
                mask.shape(),
                s
            ));
        }
        if !s[2].is_multiple_of(8) || !s[3].is_multiple_of(8) {
            return Err(config_err!(
                "image extent {}x{} is not divisible by 8",
                s[2],
                s[3]
            ));
        }
        let stack = |lvl: usize, x: Tensor| -> Result<Tensor> {
            if !with_blocks {
                return Ok(x);
            }
            self.stacks[lvl].iter().try_fold(x, |x, b| b.forward(&x))
        };

        let input = Tensor::concat(&[masked.clone(), mask.clone()], 1)?;
        let mut x = self.embedding.forward(&input)?;
        let mut m = mask.clone();
        let mut skips = Vec::with_capacity(3);
        for lvl in 0..3 {
            x = stack(lvl, x)?;
            skips.push(x.clone());
            let (down, down_mask) = self.downsamples[lvl].forward(&x, &m)?;
            x = down;
            m = down_mask;
        }
        x = stack(3, x)?;
        for (i, lvl) in (4..LEVELS).enumerate() {
            let up = self.upsamples[i].forward(&x)?;
            let cat = Tensor::concat(&[up, skips[2 - i].clone()], 1)?;
            x = match self.skip_reduce.get(i) {
                Some(conv) => conv.forward(&cat)?,
                None => cat,
            };
            x = stack(lvl, x)?;
        }
        self.projection.forward(&x)?.sigmoid()
    }

    /// Config block plus every parameter under the `gen.` prefix.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            meta: self.config.to_kv(),
            ..Checkpoint::default()
        };
        ck.push_module(PARAM_PREFIX, self);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<HintModel> {
        let mut meta = ck.meta.clone();
        let config = HintConfig::take_from(&mut meta)?;
        let mut model = HintModel::new(&config, 0)?;
        ck.load_module(PARAM_PREFIX, &mut model)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<HintModel> {
        HintModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub const PARAM_PREFIX: &str = "gen.";

impl Module for HintModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.embedding.visit(f);
        for lvl in 0..LEVELS {
            if lvl >= 4 {
                self.upsamples[lvl - 4].visit(f);
                if let Some(c) = self.skip_reduce.get(lvl - 4) {
                    c.visit(f);
                }
            }
            self.stacks[lvl].visit(f);
            if lvl < 3 {
                self.downsamples[lvl].visit(f);
            }
        }
        self.projection.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.embedding.visit_mut(f);
        for lvl in 0..LEVELS {
            if lvl >= 4 {
                self.upsamples[lvl - 4].visit_mut(f);
                if let Some(c) = self.skip_reduce.get_mut(lvl - 4) {
                    c.visit_mut(f);
                }
            }
            self.stacks[lvl].visit_mut(f);
            if lvl < 3 {
                self.downsamples[lvl].visit_mut(f);
            }
        }
        self.projection.visit_mut(f);
    }
}

/// original ⊙ mask + output ⊙ (1 − mask), mask broadcast over channels.
pub fn composite(output: &Tensor, original: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if output.shape() != original.shape() || output.dims() != 4 {
        return Err(shape_err!(
            "composite: output {:?} vs original {:?}",
            output.shape(),
            original.shape()
        ));
    }
    let s = output.shape();
    if mask.shape() != [s[0], 1, s[2], s[3]] {
        return Err(shape_err!(
            "composite: mask {:?} for image {:?}",
            mask.shape(),
            s
        ));
    }
    let plane = s[2] * s[3];
    let (o, g, m) = (output.data(), original.data(), mask.data());
    let data = (0..output.numel())
        .map(|i| {
            let mv = m[(i / (s[1] * plane)) * plane + i % plane];
            if mv == 1.0 {
                g[i]
            } else if mv == 0.0 {
                o[i]
            } else {
                g[i] * mv + o[i] * (1.0 - mv)
            }
        })
        .collect();
    Tensor::from_vec(s, data)
}
