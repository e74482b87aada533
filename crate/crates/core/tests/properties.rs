mod common;

use common::{random, random_mask, random_unit};
use hint_core::checkpoint::Checkpoint;
use hint_core::data::mask::missing_fraction;
use hint_core::data::{generate_mask, psnr, ssim, Bucket, MaskSpec};
use hint_core::model::{composite, HintConfig, HintModel};
use hint_core::train::TrainConfig;
use hint_core::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn shuffle_round_trip(n in 1usize..3, c in 1usize..4, h in 1usize..4, w in 1usize..4, s in 1usize..4, seed in any::<u64>()) {
        let x = random(&[n, c, h * s, w * s], seed);
        let back = x.pixel_unshuffle(s).unwrap().pixel_shuffle(s).unwrap();
        prop_assert_eq!(back.data().to_vec(), x.data().to_vec());
        let y = random(&[n, c * s * s, h, w], seed ^ 1);
        let back = y.pixel_shuffle(s).unwrap().pixel_unshuffle(s).unwrap();
        prop_assert_eq!(back.data().to_vec(), y.data().to_vec());
    }

    #[test]
    fn composite_idempotent_and_preserves_visible(seed in any::<u64>(), p in 0.0f64..1.0) {
        let o = random_unit(&[2, 3, 6, 6], seed);
        let g = random_unit(&[2, 3, 6, 6], seed ^ 7);
        let m = random_mask(&[2, 1, 6, 6], p, seed ^ 9);
        let once = composite(&o, &g, &m).unwrap();
        let twice = composite(&once, &g, &m).unwrap();
        prop_assert_eq!(once.data().to_vec(), twice.data().to_vec());
        for b in 0..2 { for c in 0..3 { for y in 0..6 { for x in 0..6 {
            if m.at(&[b, 0, y, x]) == 1.0 {
                prop_assert_eq!(once.at(&[b, c, y, x]).to_bits(), g.at(&[b, c, y, x]).to_bits());
            }
        }}}}
    }

    #[test]
    fn psnr_symmetric_and_monotone(seed in any::<u64>(), amp in 0.01f64..0.3) {
        let a = random_unit(&[3, 8, 8], seed);
        let noise = random(&[3, 8, 8], seed ^ 3);
        let b = a.add(&noise.scale(amp).unwrap()).unwrap();
        let c = a.add(&noise.scale(amp * 1.5).unwrap()).unwrap();
        let pab = psnr(&a, &b, 1.0).unwrap();
        prop_assert!((pab - psnr(&b, &a, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!(psnr(&a, &c, 1.0).unwrap() < pab);
    }

    #[test]
    fn ssim_bounded_and_symmetric(seed in any::<u64>()) {
        let a = random_unit(&[3, 12, 12], seed);
        let b = random_unit(&[3, 12, 12], seed ^ 5);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masks_binary_and_in_bucket(seed in any::<u64>(), bucket in 0usize..3, size in prop::sample::select(vec![16usize, 32, 48])) {
        let b = Bucket::ALL[bucket];
        let m = generate_mask(&MaskSpec::bucket(b, seed), size, size).unwrap();
        prop_assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let (lo, hi) = b.range();
        let f = missing_fraction(&m);
        prop_assert!(f >= lo - 0.02 && f <= hi + 0.02, "{}", f);
    }

    #[test]
    fn checkpoint_bytes_fixpoint(values in prop::collection::vec(any::<f64>(), 0..40), steps in any::<u32>()) {
        let mut ck = Checkpoint::default();
        ck.meta.insert("steps", steps);
        let n = values.len();
        ck.push("t", &[n], values);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn config_text_round_trip(steps in 1u64..100000, lr in 1e-6f64..1.0, seed in any::<u64>(), c in 1usize..5, reduce in any::<bool>()) {
        let mut cfg = TrainConfig::default();
        cfg.steps = steps;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.model.base_channels = 2 * c;
        cfg.model.last_skip_reduce = reduce;
        prop_assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..7, scale in 0.1f64..50.0) {
        let x = random(&[rows, cols], seed).scale(scale).unwrap();
        let s = x.softmax(1).unwrap();
        for r in 0..rows {
            let sum: f64 = (0..cols).map(|c| s.at(&[r, c])).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn batch_permutation_commutes(seed in any::<u64>()) {
        let model = HintModel::new(&HintConfig::tiny(), seed).unwrap();
        let img = random_unit(&[2, 3, 16, 16], seed ^ 1);
        let mask = random_mask(&[2, 1, 16, 16], 0.3, seed ^ 2);
        let masked = img.mul(&mask.broadcast_to(img.shape()).unwrap()).unwrap();
        let out = model.forward(&masked, &mask).unwrap();
        let swap = |t: &Tensor| t.index_select(0, &[1, 0]).unwrap();
        let swapped = model.forward(&swap(&masked), &swap(&mask)).unwrap();
        prop_assert_eq!(swap(&out).data().to_vec(), swapped.data().to_vec());
    }
}
