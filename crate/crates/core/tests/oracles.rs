mod common;

use common::{
    count_parameters, mpd_index_oracle, psnr_direct, random, random_mask, random_unit,
    scripted_adam, ssim_bruteforce,
};
use hint_core::data::io::{decode, encode, raster_to_tensor, tensor_to_raster};
use hint_core::data::{psnr, ssim};
use hint_core::losses::{gram, l1_loss, FeatureExtractor};
use hint_core::model::{HintConfig, HintModel};
use hint_core::mpd::MpdLayer;
use hint_core::nn::Module;
use hint_core::train::{Adam, TrainConfig, Variant};
use hint_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ssim_and_psnr_match_references() {
    for k in 0..20u64 {
        let a = random_unit(&[3, 16, 16], 10 + k);
        let b = random_unit(&[3, 16, 16], 50 + k);
        let s = ssim(&a, &b).unwrap();
        assert!((s - ssim_bruteforce(&a, &b)).abs() < 1e-6, "pair {k}");
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - psnr_direct(a.data(), b.data(), 1.0)).abs() < 1e-9);
    }
}

#[test]
fn l1_matches_naive_sum() {
    let a = random(&[2, 3, 5, 5], 1);
    let b = random(&[2, 3, 5, 5], 2);
    let mut s = 0.0;
    for i in 0..a.numel() {
        s += (a.data()[i] - b.data()[i]).abs();
    }
    let got = l1_loss(&a, &b).unwrap().item().unwrap();
    assert!((got - s / a.numel() as f64).abs() < 1e-12);
}

#[test]
fn gram_ignores_spatial_permutation() {
    let f = random(&[1, 4, 3, 3], 3);
    let perm = [4, 0, 8, 2, 6, 1, 3, 7, 5];
    let d = f.data();
    let permuted: Vec<f64> = (0..4)
        .flat_map(|c| perm.iter().map(move |&p| d[c * 9 + p]))
        .collect();
    let g = Tensor::from_vec(&[1, 4, 3, 3], permuted).unwrap();
    let (a, b) = (gram(&f).unwrap(), gram(&g).unwrap());
    for (x, y) in a.data().iter().zip(b.data().iter()) {
        assert!((x - y).abs() < 1e-12);
    }
    let fe = FeatureExtractor::default();
    let x = random_unit(&[1, 3, 16, 16], 4);
    assert_eq!(fe.style_loss(&x, &x).unwrap().item().unwrap(), 0.0);
}

#[test]
fn bce_asymptotics() {
    for logit in [100.0, -100.0] {
        let t = Tensor::scalar(logit);
        let to_one = t.bce_with_logits(1.0).unwrap().item().unwrap();
        let to_zero = t.bce_with_logits(0.0).unwrap().item().unwrap();
        // the wrong-side loss approaches |logit|, the right side approaches 0
        let (wrong, right) = if logit > 0.0 {
            (to_zero, to_one)
        } else {
            (to_one, to_zero)
        };
        assert!((wrong - 100.0).abs() < 1e-6 && right.abs() < 1e-6);
    }
    let mut prev = f64::INFINITY;
    for k in -10..=10 {
        let v = Tensor::scalar(k as f64 * 0.5)
            .bce_with_logits(1.0)
            .unwrap()
            .item()
            .unwrap();
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn parameter_counts_match_closed_form() {
    let base = TrainConfig::default();
    for v in Variant::ALL {
        let cfg = v.apply(&base).unwrap().model;
        if cfg.downsample != hint_core::mpd::DownsampleKind::Mpd {
            continue;
        }
        let model = HintModel::new(&cfg, 0).unwrap();
        assert_eq!(
            model.num_parameters(),
            count_parameters(&cfg),
            "{}",
            v.name()
        );
    }
    let full = HintConfig::default();
    assert_eq!(
        HintModel::new(&full, 0).unwrap().num_parameters(),
        count_parameters(&full)
    );
}

#[test]
fn adam_matches_script() {
    let mut adam = Adam::with_sizes(&[1]);
    let mut p = vec![vec![1.0]];
    let reference = scripted_adam(|x| 2.0 * x, 1.0, 1e-2, 50);
    for expect in reference {
        let g = vec![vec![2.0 * p[0][0]]];
        adam.step_raw(&mut p, &g, 1e-2).unwrap();
        assert!((p[0][0] - expect).abs() < 1e-12);
    }
    assert!(p[0][0].abs() < 1.0);
    assert!(adam.v[0][0] >= 0.0);
}

#[test]
fn mpd_interleaving_matches_index_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for c in [2, 4, 8, 16] {
        let layer = MpdLayer::new("m", c, &mut rng).unwrap();
        let x = random(&[2, c, 8, 6], c as u64);
        let m = random_mask(&[2, 1, 8, 6], 0.4, c as u64 + 1);
        let projected = layer.half_proj.forward(&x).unwrap();
        let t = layer.trace(&x, &m).unwrap();
        let got: Vec<u64> = t.interleaved.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = mpd_index_oracle(&projected, &m)
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(got, want, "C = {c}");
    }
}

#[test]
fn image_round_trip_within_quantisation() {
    let x = random_unit(&[3, 7, 5], 6);
    let bytes = encode(&tensor_to_raster(&x).unwrap());
    let y = raster_to_tensor(&decode(&bytes).unwrap());
    let err = x
        .data()
        .iter()
        .zip(y.data().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1.0 / 255.0 + 1e-12);
}
