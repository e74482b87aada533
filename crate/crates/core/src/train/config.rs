use std::path::Path;

use crate::data::MaskKind;
use crate::error::{config_err, Error, Result};
use crate::kv::{float, join, KvDoc};
use crate::losses::{AdversarialKind, LossWeights};
use crate::model::HintConfig;

/// Everything a training run depends on besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: HintConfig,
    pub steps: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub adversarial: AdversarialKind,
    /// Train the discriminator after every generator step.
    pub train_discriminator: bool,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    /// Missing-fraction range for generated training masks.
    pub mask_ratio: (f64, f64),
    pub mask_kind: MaskKind,
    /// Draw one mask per image up front instead of a fresh one per step.
    pub fixed_masks: bool,
    /// Masks per image and bucket in the final evaluation.
    pub eval_masks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: HintConfig::tiny(),
            steps: 1000,
            lr: 1e-4,
            batch_size: 1,
            seed: 0,
            weights: LossWeights::default(),
            adversarial: AdversarialKind::NonSaturating,
            train_discriminator: true,
            checkpoint_every: 0,
            mask_ratio: (0.05, 0.5),
            mask_kind: MaskKind::Strokes,
            fixed_masks: false,
            eval_masks: 1,
        }
    }
}

fn mask_kind_str(k: MaskKind) -> &'static str {
    match k {
        MaskKind::Strokes => "strokes",
        MaskKind::Rectangles => "rectangles",
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.steps == 0 || self.batch_size == 0 {
            return Err(config_err!("steps and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err!("lr must be positive, got {}", self.lr));
        }
        let (lo, hi) = self.mask_ratio;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(config_err!("invalid mask_ratio {lo},{hi}"));
        }
        LossWeights::from_array(self.weights.as_array())?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = self.model.to_kv();
        d.insert("steps", self.steps);
        d.insert("lr", float(self.lr));
        d.insert("batch_size", self.batch_size);
        d.insert("seed", self.seed);
        self.weights.write_kv(&mut d);
        d.insert("adversarial", self.adversarial.as_str());
        d.insert("train_discriminator", self.train_discriminator);
        d.insert("checkpoint_every", self.checkpoint_every);
        d.insert(
            "mask_ratio",
            format!("{},{}", float(self.mask_ratio.0), float(self.mask_ratio.1)),
        );
        d.insert("mask_kind", mask_kind_str(self.mask_kind));
        d.insert("fixed_masks", self.fixed_masks);
        d.insert("eval_masks", self.eval_masks);
        d
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// Consume the training and model keys from `doc`, leaving the rest.
    pub fn take_from(doc: &mut KvDoc) -> Result<TrainConfig> {
        let mut c = TrainConfig {
            model: HintConfig::take_from(doc)?,
            ..TrainConfig::default()
        };
        if let Some(v) = doc.take("steps")? {
            c.steps = v;
        }
        if let Some(v) = doc.take("lr")? {
            c.lr = v;
        }
        if let Some(v) = doc.take("batch_size")? {
            c.batch_size = v;
        }
        if let Some(v) = doc.take("seed")? {
            c.seed = v;
        }
        if let Some(v) = doc.take_list::<f64>("loss_weights")? {
            let arr: [f64; 4] = v
                .try_into()
                .map_err(|_| config_err!("loss_weights must list 4 values"))?;
            c.weights = LossWeights::from_array(arr)?;
        }
        if let Some(v) = doc.take_str("adversarial") {
            c.adversarial = AdversarialKind::parse(&v)?;
        }
        if let Some(v) = doc.take("train_discriminator")? {
            c.train_discriminator = v;
        }
        if let Some(v) = doc.take("checkpoint_every")? {
            c.checkpoint_every = v;
        }
        if let Some(v) = doc.take_list::<f64>("mask_ratio")? {
            match v[..] {
                [lo, hi] => c.mask_ratio = (lo, hi),
                _ => return Err(config_err!("mask_ratio must be `lo,hi`")),
            }
        }
        if let Some(v) = doc.take_str("mask_kind") {
            c.mask_kind = match v.as_str() {
                "strokes" => MaskKind::Strokes,
                "rectangles" => MaskKind::Rectangles,
                _ => return Err(config_err!("unknown mask_kind {v:?} (strokes, rectangles)")),
            };
        }
        if let Some(v) = doc.take("fixed_masks")? {
            c.fixed_masks = v;
        }
        if let Some(v) = doc.take("eval_masks")? {
            c.eval_masks = v;
        }
        c.validate()?;
        Ok(c)
    }

    /// Parse a complete config; unknown keys are an error.
    pub fn from_text(text: &str) -> Result<TrainConfig> {
        let mut doc = KvDoc::parse(text)?;
        let c = TrainConfig::take_from(&mut doc)?;
        doc.finish()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_text(&text)
    }
}

/// Short human-readable summary line.
pub fn describe(c: &TrainConfig) -> String {
    format!(
        "C={} depths=[{}] heads=[{}] steps={} lr={} batch={} seed={}",
        c.model.base_channels,
        join(&c.model.depths),
        join(&c.model.heads),
        c.steps,
        c.lr,
        c.batch_size,
        c.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let mut c = TrainConfig::default();
        c.weights = LossWeights::l1_only();
        c.mask_ratio = (0.25, 0.25);
        c.fixed_masks = true;
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
        assert!(matches!(
            TrainConfig::from_text("stepz = 3"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TrainConfig::from_text("loss_weights = 1,2"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            TrainConfig::from_text("lr = -1"),
            Err(Error::Config(_))
        ));
    }
}
