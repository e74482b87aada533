//! Reconstruction, style, perceptual and adversarial objectives.
//!
//! Style and perceptual terms are measured in the feature space of a small
//! frozen convolutional pyramid with fixed random weights, not a pretrained
//! classifier. The algebra (Gram matrices, L1 between features, weighting)
//! is unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Result};
use crate::kv::{float, KvDoc};
use crate::nn::{Conv2d, ConvShape, Init, Module, Param};
use crate::tensor::{no_grad, Tensor};

pub const FEATURE_SEED: u64 = 0x5EED_F00D;
const FEATURE_WIDTHS: [usize; 4] = [3, 16, 32, 64];
const DISC_WIDTHS: [usize; 5] = [3, 16, 32, 64, 1];
const DISC_SLOPE: f64 = 0.2;

/// Mean absolute difference.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    pred.sub(target)?.abs()?.mean()
}

/// Per-item F·Fᵀ / (C·h·w) for features `[N,C,h,w]`.
pub fn gram(features: &Tensor) -> Result<Tensor> {
    if features.dims() != 4 {
        return Err(shape_err!(
            "gram expects [N,C,h,w], got {:?}",
            features.shape()
        ));
    }
    let s = features.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let f = features.reshape(&[n, c, hw])?;
    f.matmul(&f.transpose_last2()?)?
        .scale(1.0 / (c * hw) as f64)
}

/// Frozen three-stage pyramid: 3×3 stride-2 conv + ReLU, 3→16→32→64.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stages: Vec<Conv2d>,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor::new(FEATURE_SEED)
    }
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> FeatureExtractor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stages = FEATURE_WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut conv = Conv2d::new(
                    &format!("features{i}"),
                    ConvShape::new(w[0], w[1], 3).stride(2),
                    Init::KaimingUniform,
                    &mut rng,
                );
                conv.visit_mut(&mut Param::freeze);
                conv
            })
            .collect();
        FeatureExtractor { stages }
    }

    /// Activations after every stage.
    pub fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut h = x.clone();
        for stage in &self.stages {
            h = stage.forward(&h)?.relu()?;
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Σ over stages of L1 between Gram matrices, and Σ of L1 between raw features.
    pub fn style_and_perceptual(&self, pred: &Tensor, target: &Tensor) -> Result<(Tensor, Tensor)> {
        if pred.shape() != target.shape() {
            return Err(shape_err!("{:?} vs {:?}", pred.shape(), target.shape()));
        }
        let fp = self.features(pred)?;
        let ft = self.features(target)?;
        let mut style = Tensor::scalar(0.0);
        let mut perceptual = Tensor::scalar(0.0);
        for (a, b) in fp.iter().zip(&ft) {
            style = style.add(&l1_loss(&gram(a)?, &gram(b)?)?)?;
            perceptual = perceptual.add(&l1_loss(a, b)?)?;
        }
        Ok((style, perceptual))
    }

    pub fn style_loss(&self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        Ok(self.style_and_perceptual(pred, target)?.0)
    }

    pub fn perceptual_loss(&self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        Ok(self.style_and_perceptual(pred, target)?.1)
    }
}

impl Module for FeatureExtractor {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.stages.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stages.visit_mut(f);
    }
}

/// Four stride-2 3×3 convs (3→16→32→64→1), LeakyReLU(0.2) between them.
/// Emits one logit per 16×16 patch.
#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    pub stages: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(seed: u64) -> PatchDiscriminator {
        PatchDiscriminator::with_rng(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(rng: &mut ChaCha8Rng) -> PatchDiscriminator {
        let stages = DISC_WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Conv2d::new(
                    &format!("disc{i}"),
                    ConvShape::new(w[0], w[1], 3).stride(2),
                    Init::KaimingUniform,
                    rng,
                )
            })
            .collect();
        PatchDiscriminator { stages }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let last = self.stages.len() - 1;
        let mut h = x.clone();
        for (i, stage) in self.stages.iter().enumerate() {
            h = stage.forward(&h)?;
            if i < last {
                h = h.leaky_relu(DISC_SLOPE)?;
            }
        }
        Ok(h)
    }
}

impl Module for PatchDiscriminator {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.stages.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stages.visit_mut(f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdversarialKind {
    #[default]
    NonSaturating,
    Hinge,
}

impl AdversarialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversarialKind::NonSaturating => "bce",
            AdversarialKind::Hinge => "hinge",
        }
    }

    pub fn parse(s: &str) -> Result<AdversarialKind> {
        match s {
            "bce" => Ok(AdversarialKind::NonSaturating),
            "hinge" => Ok(AdversarialKind::Hinge),
            _ => Err(config_err!("unknown adversarial loss {s:?} (bce, hinge)")),
        }
    }

    /// Generator term from logits on generated images.
    pub fn generator_term(self, fake_logits: &Tensor) -> Result<Tensor> {
        match self {
            AdversarialKind::NonSaturating => fake_logits.bce_with_logits(1.0),
            AdversarialKind::Hinge => fake_logits.mean()?.scale(-1.0),
        }
    }

    /// Discriminator term from logits on real and (detached) generated images.
    pub fn discriminator_term(self, real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
        match self {
            AdversarialKind::NonSaturating => real_logits
                .bce_with_logits(1.0)?
                .add(&fake_logits.bce_with_logits(0.0)?),
            AdversarialKind::Hinge => {
                let r = real_logits.scale(-1.0)?.add_scalar(1.0)?.relu()?.mean()?;
                let f = fake_logits.add_scalar(1.0)?.relu()?.mean()?;
                r.add(&f)
            }
        }
    }
}

/// `(gen_loss, disc_loss)`; the discriminator term sees `fake` detached.
pub fn adversarial_losses(
    disc: &PatchDiscriminator,
    real: &Tensor,
    fake: &Tensor,
    kind: AdversarialKind,
) -> Result<(Tensor, Tensor)> {
    if real.shape() != fake.shape() {
        return Err(shape_err!(
            "real {:?} vs fake {:?}",
            real.shape(),
            fake.shape()
        ));
    }
    let gen = kind.generator_term(&disc.forward(fake)?)?;
    let d = kind.discriminator_term(&disc.forward(real)?, &disc.forward(&fake.detach())?)?;
    Ok((gen, d))
}

/// λ for L1, style, perceptual and adversarial terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub style: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 1.0,
            style: 250.0,
            perceptual: 0.1,
            adversarial: 0.001,
        }
    }
}

impl LossWeights {
    pub fn l1_only() -> LossWeights {
        LossWeights {
            l1: 1.0,
            style: 0.0,
            perceptual: 0.0,
            adversarial: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l1, self.style, self.perceptual, self.adversarial]
    }

    pub fn from_array(w: [f64; 4]) -> Result<LossWeights> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(config_err!(
                "loss weights must be finite and non-negative, got {w:?}"
            ));
        }
        Ok(LossWeights {
            l1: w[0],
            style: w[1],
            perceptual: w[2],
            adversarial: w[3],
        })
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        let list: Vec<String> = self.as_array().iter().map(|&v| float(v)).collect();
        doc.insert("loss_weights", list.join(","));
    }
}

/// Weighted objective plus the unweighted components.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: Tensor,
    pub l1: f64,
    pub style: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 4] {
        [self.l1, self.style, self.perceptual, self.adversarial]
    }
}

/// Add `weight · f()` to `total` and return the unweighted value.
fn weighted(total: &mut Tensor, weight: f64, f: impl Fn() -> Result<Tensor>) -> Result<f64> {
    if weight == 0.0 {
        return no_grad(|| f()?.item());
    }
    let v = f()?;
    *total = total.add(&v.scale(weight)?)?;
    v.item()
}

/// The generator objective.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub weights: LossWeights,
    pub extractor: FeatureExtractor,
    pub adversarial: AdversarialKind,
}

impl Objective {
    pub fn new(weights: LossWeights) -> Objective {
        Objective {
            weights,
            ..Objective::default()
        }
    }

    /// Terms with zero weight are still evaluated for logging, without a graph.
    pub fn total_from_logits(
        &self,
        pred: &Tensor,
        target: &Tensor,
        gen_logits: &Tensor,
    ) -> Result<LossBreakdown> {
        let w = self.weights;
        let mut total = Tensor::scalar(0.0);
        let l1 = weighted(&mut total, w.l1, || l1_loss(pred, target))?;
        let (style, perceptual) = if w.style == 0.0 && w.perceptual == 0.0 {
            let (s, p) = no_grad(|| self.extractor.style_and_perceptual(pred, target))?;
            (s.item()?, p.item()?)
        } else {
            let (s, p) = self.extractor.style_and_perceptual(pred, target)?;
            total = total
                .add(&s.scale(w.style)?)?
                .add(&p.scale(w.perceptual)?)?;
            (s.item()?, p.item()?)
        };
        let adversarial = weighted(&mut total, w.adversarial, || {
            self.adversarial.generator_term(gen_logits)
        })?;
        Ok(LossBreakdown {
            total,
            l1,
            style,
            perceptual,
            adversarial,
        })
    }

    pub fn total(
        &self,
        pred: &Tensor,
        target: &Tensor,
        disc: &PatchDiscriminator,
    ) -> Result<LossBreakdown> {
        let logits = if self.weights.adversarial == 0.0 {
            no_grad(|| disc.forward(pred))?
        } else {
            disc.forward(pred)?
        };
        self.total_from_logits(pred, target, &logits)
    }
}
