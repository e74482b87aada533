//! Fast invariant checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::{psnr, ssim, Dataset};
use crate::error::Result;
use crate::gradcheck::{check_inputs, check_module, project};
use crate::losses::{LossWeights, Objective, PatchDiscriminator};
use crate::model::{HintConfig, HintModel};
use crate::mpd::{checkerboard, mask_drift, Downsample, DownsampleKind};
use crate::nn::{randomize, Module};
use crate::sandwich::{BlockOptions, GatedFfn, SandwichBlock};
use crate::scal::ScalLayer;
use crate::tensor::{Conv2dSpec, Tensor};
use crate::train::{loss_trace, Adam, TrainConfig, TrainState};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn verdict(ok: bool, detail: String) -> Result<(bool, String)> {
    Ok((ok, detail))
}

fn primitives() -> Result<(bool, String)> {
    let x = random(&[1, 4, 5, 5], 1);
    let w = random(&[4, 2, 3, 3], 2);
    let spec = Conv2dSpec {
        stride: 1,
        padding: 1,
        groups: 2,
    };
    let conv = check_inputs(
        &[x.clone(), w],
        |t| project(&t[0].conv2d(&t[1], None, spec)?, 3),
        1e-5,
        None,
        4,
    )?;
    let gamma = random(&[4], 5);
    let beta = random(&[4], 6);
    let ln = check_inputs(
        &[x.clone(), gamma, beta],
        |t| project(&t[0].layer_norm(&t[1], &t[2], 1e-5)?, 7),
        1e-5,
        None,
        8,
    )?;
    let sm = check_inputs(&[x], |t| project(&t[0].softmax(1)?, 9), 1e-5, None, 10)?;
    let worst = conv
        .max_rel_error
        .max(ln.max_rel_error)
        .max(sm.max_rel_error);
    verdict(
        worst < 1e-4,
        format!("conv2d, layer_norm, softmax: max rel. error {worst:.2e}"),
    )
}

fn blocks() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&[1, 4, 6, 6], 12);
    let mut ffn = GatedFfn::new("f", 4, 2, &mut rng)?;
    randomize(&mut ffn, 0.5, &mut rng);
    let a = check_module(&mut ffn, |m| project(&m.forward(&x)?, 13), 1e-5, 20, 14)?;
    let mut scal = ScalLayer::new("s", 4, 2, 8, true, &mut rng)?;
    randomize(&mut scal, 0.5, &mut rng);
    let b = check_module(&mut scal, |m| project(&m.forward(&x)?, 15), 1e-5, 20, 16)?;
    let worst = a.max_rel_error.max(b.max_rel_error);
    verdict(
        worst < 1e-3,
        format!("GatedFfn, SCAL: max rel. error {worst:.2e}"),
    )
}

fn mpd() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ok = true;
    for c in [2, 4, 8, 16] {
        let x = random(&[1, c, 8, 8], c as u64);
        let m = checkerboard(1, 8, 8);
        let layer = Downsample::new(DownsampleKind::Mpd, "m", c, &mut rng)?;
        ok &= layer.mask_pairing_holds(&x, &m)? && mask_drift(&layer, &x, &m)? == 0.0;
    }
    let x = random(&[1, 4, 8, 8], 22);
    let round = x.pixel_unshuffle(2)?.pixel_shuffle(2)?;
    ok &= round.data() == x.data();
    let pd = Downsample::new(DownsampleKind::Pd, "p", 4, &mut rng)?;
    let drift = mask_drift(&pd, &x, &checkerboard(1, 8, 8))?;
    verdict(
        ok && drift > 0.0,
        format!("pairing exact for C in 2,4,8,16; PD checkerboard drift {drift}"),
    )
}

fn attention() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let layer = ScalLayer::new("s", 8, 2, 8, true, &mut rng)?;
    let x = random(&[2, 8, 8, 8], 32);
    let maps = layer.attention_maps(&layer.norm.forward(&x)?)?;
    let d = maps.shape()[3];
    let worst = maps
        .data()
        .chunks(d)
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let sp = layer.spatial_attention(&x)?;
    let in_range = sp.data().iter().all(|&v| v > 0.0 && v < 1.0);
    verdict(
        worst < 1e-12 && in_range,
        format!("row-sum deviation {worst:.1e}; spatial map in (0,1): {in_range}"),
    )
}

fn identity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let block = SandwichBlock::new("b", 8, 2, BlockOptions::default(), &mut rng)?;
    let x = random(&[1, 8, 8, 8], 42);
    let same_block = block.forward(&x)?.data() == x.data();
    let model = HintModel::new(&HintConfig::tiny(), 43)?;
    let img = random(&[1, 3, 16, 16], 44).abs()?;
    let mask = checkerboard(1, 16, 16);
    let masked = img.mul(&mask.broadcast_to(img.shape())?)?;
    let same_model = model.forward(&masked, &mask)?.data()
        == model.forward_without_blocks(&masked, &mask)?.data();
    verdict(
        same_block && same_model,
        format!("block identity {same_block}; model equals block-free path {same_model}"),
    )
}

fn checkpoint() -> Result<(bool, String)> {
    let mut model = HintModel::new(&HintConfig::tiny(), 51)?;
    randomize(&mut model, 0.2, &mut ChaCha8Rng::seed_from_u64(52));
    let bytes = model.to_checkpoint().to_bytes();
    let back = HintModel::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?;
    let ok = back.to_checkpoint().to_bytes() == bytes;
    verdict(
        ok,
        format!(
            "{} bytes, {} parameters",
            bytes.len(),
            model.num_parameters()
        ),
    )
}

fn losses_and_metrics() -> Result<(bool, String)> {
    let w = LossWeights::default().as_array();
    let mut disc = PatchDiscriminator::new(61);
    disc.stages.last_mut().unwrap().zero_out();
    let img = random(&[1, 3, 16, 16], 62).abs()?;
    let total = Objective::default()
        .total(&img, &img, &disc)?
        .total
        .item()?;
    let expect = 0.001 * std::f64::consts::LN_2;
    let a = Tensor::full(&[3, 16, 16], 0.5);
    let b = Tensor::full(&[3, 16, 16], 0.6);
    let p = psnr(&a, &b, 1.0)?;
    let s = ssim(&img, &img)?;
    let ok = w == [1.0, 250.0, 0.1, 0.001]
        && (total - expect).abs() < 1e-15
        && (p - 20.0).abs() < 1e-9
        && (s - 1.0).abs() < 1e-9;
    verdict(
        ok,
        format!("weights {w:?}; total at equality {total:.6e}; PSNR {p:.9}; SSIM {s:.9}"),
    )
}

fn optimiser() -> Result<(bool, String)> {
    let mut adam = Adam::with_sizes(&[1]);
    let mut p = vec![vec![0.0]];
    adam.step_raw(&mut p, &[vec![1.0]], 1e-4)?;
    let step = -p[0][0];
    verdict(
        (step - 1e-4 / (1.0 + 1e-8)).abs() < 1e-18,
        format!("first update {step:.12e}"),
    )
}

fn determinism() -> Result<(bool, String)> {
    let mut cfg = TrainConfig::default();
    cfg.model.image_size = 16;
    cfg.steps = 4;
    let data = Dataset::synthetic(2, 16, 71);
    let mut a = TrainState::new(&cfg)?;
    let mut b = TrainState::new(&cfg)?;
    let ta = loss_trace(&mut a, &data, 2)?;
    let tb = loss_trace(&mut b, &data, 1)?;
    let mut resumed =
        TrainState::from_checkpoint(&Checkpoint::from_bytes(&b.to_checkpoint().to_bytes())?)?;
    let tr = loss_trace(&mut resumed, &data, 1)?;
    let ok = ta[0] == tb[0] && ta[1] == tr[0];
    verdict(ok, "seeded trace and resume agree bit-for-bit".to_string())
}

/// Run every check; failures of the check itself are reported as failed checks.
pub fn run_all() -> Vec<CheckResult> {
    let checks: [(&'static str, fn() -> Result<(bool, String)>); 9] = [
        ("gradients of primitives", primitives),
        ("gradients of blocks", blocks),
        ("mask pairing", mpd),
        ("attention properties", attention),
        ("identity at init", identity),
        ("checkpoint round trip", checkpoint),
        ("losses and metrics", losses_and_metrics),
        ("optimiser", optimiser),
        ("determinism and resume", determinism),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckResult {
                name,
                passed,
                detail,
            },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}
