use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::TrainConfig;
use super::schedule::Schedule;
use crate::checkpoint::Checkpoint;
use crate::data::dataset::stack;
use crate::data::mask::missing_fraction;
use crate::data::{generate_mask, masked_l1, mean_abs, psnr, ssim, Bucket, Dataset, MaskSpec};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::losses::{Objective, PatchDiscriminator};
use crate::model::{composite, HintModel, PARAM_PREFIX};
use crate::nn::Module;
use crate::tensor::{no_grad, Tensor};

const DISC_PREFIX: &str = "disc.";

/// splitmix64 finaliser, for deriving independent seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Losses of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub total: f64,
    pub l1: f64,
    pub style: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub disc: f64,
}

impl StepLog {
    pub const CSV_HEADER: &'static str = "step,lr,total,l1,style,perceptual,adversarial,disc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.step,
            self.lr,
            self.total,
            self.l1,
            self.style,
            self.perceptual,
            self.adversarial,
            self.disc
        )
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: HintModel,
    pub disc: PatchDiscriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    /// Completed iterations.
    pub step: u64,
    pub rng: ChaCha8Rng,
    objective: Objective,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<TrainState> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = HintModel::with_rng(&config.model, &mut rng)?;
        let disc = PatchDiscriminator::with_rng(&mut rng);
        Ok(TrainState {
            opt_g: Adam::for_module(&model),
            opt_d: Adam::for_module(&disc),
            objective: objective_for(config),
            config: config.clone(),
            model,
            disc,
            step: 0,
            rng,
        })
    }

    pub fn schedule(&self) -> Schedule {
        Schedule::new(self.config.steps, self.config.lr)
    }

    fn mask_spec(&self, seed: u64) -> MaskSpec {
        let mut spec = MaskSpec::strokes(self.config.mask_ratio, seed);
        spec.kind = self.config.mask_kind;
        spec
    }

    /// The mask image `index` is trained with when masks are fixed.
    pub fn fixed_mask(&self, data: &Dataset, index: usize) -> Result<Tensor> {
        let sample = &data.samples[index];
        match &sample.mask {
            Some(m) => Ok(m.clone()),
            None => {
                let (h, w) = (sample.image.shape()[1], sample.image.shape()[2]);
                generate_mask(&self.mask_spec(mix(self.config.seed, index as u64)), h, w)
            }
        }
    }

    fn training_mask(&mut self, data: &Dataset, index: usize) -> Result<Tensor> {
        let sample = &data.samples[index];
        if sample.mask.is_some() || self.config.fixed_masks {
            return self.fixed_mask(data, index);
        }
        let (h, w) = (sample.image.shape()[1], sample.image.shape()[2]);
        let seed = self.rng.random();
        generate_mask(&self.mask_spec(seed), h, w)
    }

    /// One generator update followed by one discriminator update.
    pub fn step(&mut self, data: &Dataset) -> Result<StepLog> {
        if data.is_empty() {
            return Err(Error::Validation("empty dataset".into()));
        }
        let lr = self.schedule().lr(self.step);
        let bs = self.config.batch_size;
        let mut images = Vec::with_capacity(bs);
        let mut masks = Vec::with_capacity(bs);
        for b in 0..bs {
            let index = ((self.step as usize) * bs + b) % data.len();
            images.push(data.samples[index].image.clone());
            masks.push(self.training_mask(data, index)?);
        }
        let target = stack(&images)?;
        let mask = stack(&masks)?;
        let masked = apply_mask(&target, &mask)?;

        self.model.zero_grad();
        self.disc.zero_grad();
        let pred = self.model.forward(&masked, &mask)?;
        let losses = self.objective.total(&pred, &target, &self.disc)?;
        losses.total.backward()?;
        self.opt_g.step(&mut self.model, lr)?;

        let mut disc_loss = 0.0;
        if self.config.train_discriminator {
            self.disc.zero_grad();
            let fake = pred.detach();
            let d = self
                .objective
                .adversarial
                .discriminator_term(&self.disc.forward(&target)?, &self.disc.forward(&fake)?)?;
            d.backward()?;
            self.opt_d.step(&mut self.disc, lr)?;
            disc_loss = d.item()?;
        }
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            lr,
            total: losses.total.item()?,
            l1: losses.l1,
            style: losses.style,
            perceptual: losses.perceptual,
            adversarial: losses.adversarial,
            disc: disc_loss,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = self.config.to_kv();
        meta.insert("state.step", self.step);
        let seed: String = self
            .rng
            .get_seed()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        meta.insert("state.rng_seed", seed);
        meta.insert("state.rng_stream", self.rng.get_stream());
        meta.insert("state.rng_word_pos", self.rng.get_word_pos());
        meta.insert("state.opt_g_t", self.opt_g.t);
        meta.insert("state.opt_d_t", self.opt_d.t);
        let mut ck = Checkpoint {
            meta,
            ..Checkpoint::default()
        };
        ck.push_module(PARAM_PREFIX, &self.model);
        ck.push_module(DISC_PREFIX, &self.disc);
        push_moments(&mut ck, "opt_g", &self.opt_g, &self.model);
        push_moments(&mut ck, "opt_d", &self.opt_d, &self.disc);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<TrainState> {
        let mut meta: KvDoc = ck.meta.clone();
        let config = TrainConfig::take_from(&mut meta)?;
        let mut state = TrainState::new(&config)?;
        let missing =
            |k: &str| Error::Format(format!("checkpoint lacks {k}; not a training checkpoint"));
        state.step = meta
            .take("state.step")?
            .ok_or_else(|| missing("state.step"))?;
        let seed_hex = meta
            .take_str("state.rng_seed")
            .ok_or_else(|| missing("state.rng_seed"))?;
        let mut seed = [0u8; 32];
        if seed_hex.len() != 64 {
            return Err(Error::Format("state.rng_seed must be 64 hex digits".into()));
        }
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Format("state.rng_seed is not hex".into()))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(
            meta.take("state.rng_stream")?
                .ok_or_else(|| missing("state.rng_stream"))?,
        );
        rng.set_word_pos(
            meta.take("state.rng_word_pos")?
                .ok_or_else(|| missing("state.rng_word_pos"))?,
        );
        state.rng = rng;
        state.opt_g.t = meta
            .take("state.opt_g_t")?
            .ok_or_else(|| missing("state.opt_g_t"))?;
        state.opt_d.t = meta
            .take("state.opt_d_t")?
            .ok_or_else(|| missing("state.opt_d_t"))?;
        meta.finish()?;
        ck.load_module(PARAM_PREFIX, &mut state.model)?;
        ck.load_module(DISC_PREFIX, &mut state.disc)?;
        load_moments(ck, "opt_g", &mut state.opt_g, &state.model)?;
        load_moments(ck, "opt_d", &mut state.opt_d, &state.disc)?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<TrainState> {
        TrainState::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn objective_for(config: &TrainConfig) -> Objective {
    Objective {
        adversarial: config.adversarial,
        ..Objective::new(config.weights)
    }
}

fn trainable_names<M: Module + ?Sized>(m: &M) -> Vec<String> {
    m.parameters()
        .iter()
        .filter(|p| p.is_trainable())
        .map(|p| p.name().to_string())
        .collect()
}

fn push_moments<M: Module + ?Sized>(ck: &mut Checkpoint, prefix: &str, opt: &Adam, m: &M) {
    for (i, name) in trainable_names(m).iter().enumerate() {
        let n = opt.m[i].len();
        ck.push(format!("{prefix}.m.{name}"), &[n], opt.m[i].clone());
        ck.push(format!("{prefix}.v.{name}"), &[n], opt.v[i].clone());
    }
}

fn load_moments<M: Module + ?Sized>(
    ck: &Checkpoint,
    prefix: &str,
    opt: &mut Adam,
    m: &M,
) -> Result<()> {
    for (i, name) in trainable_names(m).iter().enumerate() {
        for (which, dst) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
            let t = ck.get(&format!("{prefix}.{which}.{name}"))?;
            if t.data.len() != dst.len() {
                return Err(Error::Shape(format!(
                    "optimizer moment for {name} has the wrong size"
                )));
            }
            dst.copy_from_slice(&t.data);
        }
    }
    Ok(())
}

/// `image ⊙ mask` with the mask broadcast over channels.
pub fn apply_mask(image: &Tensor, mask: &Tensor) -> Result<Tensor> {
    no_grad(|| image.mul(&mask.broadcast_to(image.shape())?))
}

/// Averages over one mask bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketMetrics {
    pub bucket: Bucket,
    pub images: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub masked_l1: f64,
}

impl BucketMetrics {
    pub const CSV_HEADER: &'static str = "bucket,images,psnr,ssim,l1,masked_l1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.bucket.as_str(),
            self.images,
            self.psnr,
            self.ssim,
            self.l1,
            self.masked_l1
        )
    }
}

/// Inpaint one `[3,H,W]` image; returns the composited result.
pub fn inpaint(model: &HintModel, image: &Tensor, mask: &Tensor) -> Result<Tensor> {
    no_grad(|| {
        let img = stack(std::slice::from_ref(image))?;
        let m = stack(std::slice::from_ref(mask))?;
        let out = model.forward(&apply_mask(&img, &m)?, &m)?;
        let s = image.shape();
        composite(&out, &img, &m)?.reshape(s)
    })
}

/// Metrics of composited outputs per bucket. Images with their own mask are
/// scored in the bucket that mask falls in; others get `masks_per_image`
/// generated masks for every requested bucket.
pub fn evaluate(
    model: &HintModel,
    data: &Dataset,
    buckets: &[Bucket],
    masks_per_image: usize,
    seed: u64,
) -> Result<Vec<BucketMetrics>> {
    let mut rows = Vec::with_capacity(buckets.len());
    for &bucket in buckets {
        let mut sums = [0.0; 4];
        let mut n = 0usize;
        for (i, sample) in data.samples.iter().enumerate() {
            let (h, w) = (sample.image.shape()[1], sample.image.shape()[2]);
            let masks = match &sample.mask {
                Some(m) if Bucket::of_ratio(missing_fraction(m)) == Some(bucket) => vec![m.clone()],
                Some(_) => Vec::new(),
                None => (0..masks_per_image.max(1))
                    .map(|k| {
                        let s = mix(mix(seed, bucket as u64), (i * 1000 + k) as u64);
                        generate_mask(&MaskSpec::bucket(bucket, s), h, w)
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            for m in masks {
                let out = inpaint(model, &sample.image, &m)?;
                sums[0] += psnr(&out, &sample.image, 1.0)?;
                sums[1] += ssim(&out, &sample.image)?;
                sums[2] += mean_abs(&out, &sample.image)?;
                sums[3] += masked_l1(&out, &sample.image, &m)?;
                n += 1;
            }
        }
        let avg = |s: f64| if n == 0 { f64::NAN } else { s / n as f64 };
        rows.push(BucketMetrics {
            bucket,
            images: n,
            psnr: avg(sums[0]),
            ssim: avg(sums[1]),
            l1: avg(sums[2]),
            masked_l1: avg(sums[3]),
        });
    }
    Ok(rows)
}

pub fn write_eval_csv(path: &Path, rows: &[BucketMetrics]) -> Result<()> {
    let mut text = format!("{}\n", BucketMetrics::CSV_HEADER);
    for r in rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Where a run writes its artefacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.txt")
    }
    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }
    pub fn latest(&self) -> PathBuf {
        self.dir.join("latest.ckpt")
    }
    pub fn last_good(&self) -> PathBuf {
        self.dir.join("last_good.ckpt")
    }
    pub fn final_ckpt(&self) -> PathBuf {
        self.dir.join("final.ckpt")
    }
    pub fn eval(&self) -> PathBuf {
        self.dir.join("eval.csv")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<StepLog>,
    pub eval: Vec<BucketMetrics>,
}

/// Run (or continue) training to `state.config.steps`, writing the CSV log,
/// checkpoints and final evaluation under `out_dir`. On a numerics failure
/// the state before the failing step is saved as `last_good.ckpt`.
pub fn train(
    mut state: TrainState,
    data: &Dataset,
    out_dir: &Path,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<TrainOutcome> {
    let paths = RunPaths {
        dir: out_dir.to_path_buf(),
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    fs::write(paths.config(), state.config.to_text()).map_err(|e| Error::io(paths.config(), e))?;
    let log_path = paths.log();
    let mut log_file = if state.step == 0 {
        let mut f = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        writeln!(f, "{}", StepLog::CSV_HEADER).map_err(|e| Error::io(&log_path, e))?;
        f
    } else {
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?
    };
    let mut log = Vec::new();
    while state.step < state.config.steps {
        let backup = state.clone();
        let entry = match state.step(data) {
            Ok(e) => e,
            Err(e @ Error::Numerics(_)) => {
                backup.save(&paths.last_good())?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        writeln!(log_file, "{}", entry.csv_row()).map_err(|e| Error::io(&log_path, e))?;
        on_step(&entry);
        log.push(entry);
        let every = state.config.checkpoint_every;
        if every > 0 && state.step.is_multiple_of(every) {
            state.save(&paths.latest())?;
        }
    }
    state.save(&paths.final_ckpt())?;
    let eval = evaluate(
        &state.model,
        data,
        &Bucket::ALL,
        state.config.eval_masks,
        state.config.seed,
    )?;
    write_eval_csv(&paths.eval(), &eval)?;
    Ok(TrainOutcome { state, log, eval })
}

/// Losses only, no files: the building block for determinism checks.
pub fn loss_trace(state: &mut TrainState, data: &Dataset, steps: u64) -> Result<Vec<StepLog>> {
    (0..steps).map(|_| state.step(data)).collect()
}
