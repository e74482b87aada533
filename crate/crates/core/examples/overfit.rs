//! Overfit a tiny model on four synthetic images and report masked-region
//! L1 and composite PSNR before and after.
//!
//! cargo run --release -p hint-core --example overfit -- [steps] [batch]

use std::time::Instant;

use hint_core::data::{masked_l1, psnr, Dataset};
use hint_core::losses::LossWeights;
use hint_core::train::trainer::inpaint;
use hint_core::train::{TrainConfig, TrainState};
use hint_core::HintModel;

fn scores(model: &HintModel, state: &TrainState, data: &Dataset) -> (f64, f64) {
    let mut l1 = 0.0;
    let mut p = 0.0;
    for (i, s) in data.samples.iter().enumerate() {
        let mask = state.fixed_mask(data, i).unwrap();
        let out = inpaint(model, &s.image, &mask).unwrap();
        l1 += masked_l1(&out, &s.image, &mask).unwrap();
        p += psnr(&out, &s.image, 1.0).unwrap();
    }
    let n = data.len() as f64;
    (l1 / n, p / n)
}

fn main() {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let mut cfg = TrainConfig::default();
    cfg.steps = *args.first().unwrap_or(&2000);
    cfg.batch_size = *args.get(1).unwrap_or(&1) as usize;
    cfg.weights = LossWeights::l1_only();
    cfg.mask_ratio = (0.25, 0.25);
    cfg.fixed_masks = true;
    cfg.train_discriminator = false;
    let data = Dataset::synthetic(4, 32, 11);
    let mut state = TrainState::new(&cfg).unwrap();
    let (l0, p0) = scores(&state.model, &state, &data);
    println!("initial masked L1 {l0:.5}  composite PSNR {p0:.2} dB");
    let t = Instant::now();
    while state.step < cfg.steps {
        let log = state.step(&data).unwrap();
        if log.step.is_multiple_of(250) {
            let (l, p) = scores(&state.model, &state, &data);
            println!(
                "step {:5}  loss {:.5}  masked L1 {l:.5}  PSNR {p:.2} dB  ({:.1}s)",
                log.step,
                log.total,
                t.elapsed().as_secs_f64()
            );
        }
    }
    let (l1, p1) = scores(&state.model, &state, &data);
    println!(
        "final masked L1 {l1:.5} ({:.3} of initial)  composite PSNR {p1:.2} dB",
        l1 / l0
    );
}
