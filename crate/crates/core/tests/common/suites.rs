//! Finite-difference gradient suites over every differentiable primitive and
//! every composite block.

use hint_core::gradcheck::{check_inputs, check_module, project, GradReport};
use hint_core::losses::{Objective, PatchDiscriminator};
use hint_core::model::{HintConfig, HintModel};
use hint_core::mpd::{Downsample, DownsampleKind};
use hint_core::nn::randomize;
use hint_core::sandwich::{BlockLayout, BlockOptions, GatedEmbedding, GatedFfn, SandwichBlock};
use hint_core::scal::ScalLayer;
use hint_core::{Conv2dSpec, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random, random_mask, random_unit};

pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const BLOCK_TOL: f64 = 1e-3;
const STEP: f64 = 1e-6;

/// Values with magnitude in [0.1, 1], away from the kinks of relu/abs.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub struct Case {
    pub name: String,
    pub report: GradReport,
}

type Unary = fn(&Tensor) -> Result<Tensor>;
type Binary = fn(&Tensor, &Tensor) -> Result<Tensor>;

fn unary(out: &mut Vec<Case>, name: &str, shapes: &[&[usize]], f: Unary) -> Result<()> {
    for (k, shape) in shapes.iter().enumerate() {
        let x = away_from_zero(shape, 100 + k as u64);
        let report = check_inputs(
            &[x],
            |t| project(&f(&t[0])?, 7 + k as u64),
            STEP,
            None,
            k as u64,
        )?;
        out.push(Case {
            name: format!("{name} {shape:?}"),
            report,
        });
    }
    Ok(())
}

fn binary(
    out: &mut Vec<Case>,
    name: &str,
    shapes: &[(&[usize], &[usize])],
    f: Binary,
) -> Result<()> {
    for (k, (sa, sb)) in shapes.iter().enumerate() {
        let a = away_from_zero(sa, 200 + k as u64);
        let b = away_from_zero(sb, 300 + k as u64);
        let report = check_inputs(
            &[a, b],
            |t| project(&f(&t[0], &t[1])?, 9 + k as u64),
            STEP,
            None,
            k as u64,
        )?;
        out.push(Case {
            name: format!("{name} {sa:?}x{sb:?}"),
            report,
        });
    }
    Ok(())
}

pub fn primitive_suite() -> Result<Vec<Case>> {
    let mut out = Vec::new();
    let flat: &[&[usize]] = &[&[5], &[2, 3], &[2, 3, 4]];
    let image: &[&[usize]] = &[&[1, 2, 4, 4], &[2, 3, 4, 6], &[1, 4, 6, 2]];
    let same: &[(&[usize], &[usize])] =
        &[(&[5], &[5]), (&[2, 3], &[2, 3]), (&[2, 3, 4], &[2, 3, 4])];

    binary(&mut out, "add", same, |a, b| a.add(b))?;
    binary(&mut out, "sub", same, |a, b| a.sub(b))?;
    binary(&mut out, "mul", same, |a, b| a.mul(b))?;
    binary(&mut out, "div", same, |a, b| a.div(b))?;
    unary(&mut out, "scale", flat, |x| x.scale(-1.7))?;
    unary(&mut out, "add_scalar", flat, |x| x.add_scalar(0.3))?;
    unary(&mut out, "gelu", flat, |x| x.gelu())?;
    unary(&mut out, "relu", flat, |x| x.relu())?;
    unary(&mut out, "leaky_relu", flat, |x| x.leaky_relu(0.2))?;
    unary(&mut out, "sigmoid", flat, |x| x.sigmoid())?;
    unary(&mut out, "tanh", flat, |x| x.tanh())?;
    unary(&mut out, "abs", flat, |x| x.abs())?;
    unary(&mut out, "clamp_magnitude_min", flat, |x| {
        x.clamp_magnitude_min(0.05)
    })?;
    unary(&mut out, "sum", flat, |x| x.mul(x)?.sum())?;
    unary(&mut out, "mean", flat, |x| x.mul(x)?.mean())?;
    unary(&mut out, "bce_with_logits(1)", flat, |x| {
        x.scale(3.0)?.bce_with_logits(1.0)
    })?;
    unary(&mut out, "bce_with_logits(0)", flat, |x| {
        x.scale(3.0)?.bce_with_logits(0.0)
    })?;
    unary(&mut out, "reshape", flat, |x| {
        x.reshape(&[x.numel()])?.tanh()
    })?;
    unary(
        &mut out,
        "transpose_last2",
        &[&[2, 3], &[2, 3, 4], &[1, 2, 3, 2]],
        |x| x.transpose_last2(),
    )?;
    unary(
        &mut out,
        "broadcast_to",
        &[&[1, 3], &[2, 1, 4], &[1, 1, 2]],
        |x| {
            let s: Vec<usize> = x
                .shape()
                .iter()
                .map(|&d| if d == 1 { 3 } else { d })
                .collect();
            x.broadcast_to(&s)?.tanh()
        },
    )?;
    binary(
        &mut out,
        "concat",
        &[
            (&[2, 3], &[2, 2]),
            (&[1, 2, 3], &[1, 4, 3]),
            (&[1, 1, 2, 2], &[1, 3, 2, 2]),
        ],
        |a, b| Tensor::concat(&[a.clone(), b.clone()], 1),
    )?;
    unary(
        &mut out,
        "slice",
        &[&[2, 5], &[1, 6, 2], &[2, 4, 3, 3]],
        |x| x.slice(1, 1, 3),
    )?;
    unary(
        &mut out,
        "index_select",
        &[&[2, 5], &[1, 6, 2], &[2, 4, 3, 3]],
        |x| x.index_select(1, &[3, 0, 0, 2]),
    )?;
    binary(
        &mut out,
        "matmul",
        &[
            (&[2, 3], &[3, 4]),
            (&[2, 2, 3], &[2, 3, 2]),
            (&[1, 2, 4, 3], &[1, 2, 3, 5]),
        ],
        |a, b| a.matmul(b),
    )?;
    unary(&mut out, "softmax(last)", flat, |x| x.softmax(x.dims() - 1))?;
    unary(&mut out, "softmax(0)", &[&[4], &[3, 2], &[3, 2, 2]], |x| {
        x.softmax(0)
    })?;

    let convs: [(&[usize], &[usize], Conv2dSpec); 4] = [
        (
            &[1, 2, 5, 5],
            &[3, 2, 3, 3],
            Conv2dSpec {
                stride: 1,
                padding: 1,
                groups: 1,
            },
        ),
        (
            &[2, 4, 6, 6],
            &[4, 2, 3, 3],
            Conv2dSpec {
                stride: 2,
                padding: 1,
                groups: 2,
            },
        ),
        (
            &[1, 3, 4, 5],
            &[3, 1, 3, 3],
            Conv2dSpec {
                stride: 1,
                padding: 0,
                groups: 3,
            },
        ),
        (&[1, 4, 5, 4], &[2, 4, 1, 1], Conv2dSpec::default()),
    ];
    for (k, (xs, ws, spec)) in convs.into_iter().enumerate() {
        let x = random(xs, 400 + k as u64);
        let w = random(ws, 500 + k as u64);
        let b = random(&[ws[0]], 600 + k as u64);
        let report = check_inputs(
            &[x, w, b],
            |t| project(&t[0].conv2d(&t[1], Some(&t[2]), spec)?, 11),
            STEP,
            None,
            1,
        )?;
        out.push(Case {
            name: format!("conv2d {xs:?} {ws:?} {spec:?}"),
            report,
        });
    }
    for (k, shape) in image.iter().enumerate() {
        let x = random(shape, 700 + k as u64);
        let g = random(&[shape[1]], 710 + k as u64);
        let b = random(&[shape[1]], 720 + k as u64);
        let ln = check_inputs(
            &[x.clone(), g.clone(), b.clone()],
            |t| project(&t[0].layer_norm(&t[1], &t[2], 1e-5)?, 12),
            STEP,
            None,
            2,
        )?;
        out.push(Case {
            name: format!("layer_norm {shape:?}"),
            report: ln,
        });
        let inn = check_inputs(
            &[x, g, b],
            |t| project(&t[0].instance_norm(&t[1], &t[2], 1e-5)?, 13),
            STEP,
            None,
            3,
        )?;
        out.push(Case {
            name: format!("instance_norm {shape:?}"),
            report: inn,
        });
    }
    unary(
        &mut out,
        "pixel_unshuffle",
        &[&[1, 1, 4, 4], &[2, 2, 4, 6], &[1, 3, 2, 2]],
        |x| x.pixel_unshuffle(2),
    )?;
    unary(
        &mut out,
        "pixel_shuffle",
        &[&[1, 4, 2, 2], &[2, 8, 3, 2], &[1, 12, 1, 1]],
        |x| x.pixel_shuffle(2),
    )?;
    unary(
        &mut out,
        "avg_pool_adaptive",
        &[&[1, 2, 6, 6], &[2, 1, 7, 5], &[1, 3, 4, 4]],
        |x| x.avg_pool_adaptive(3, 2),
    )?;
    unary(
        &mut out,
        "upsample_bilinear",
        &[&[1, 2, 2, 2], &[2, 1, 3, 2], &[1, 3, 4, 4]],
        |x| {
            let s = x.shape();
            x.upsample_bilinear(s[2] * 2 + 1, s[3] * 3)
        },
    )?;
    Ok(out)
}

fn module_case<M: hint_core::nn::Module>(
    out: &mut Vec<Case>,
    name: String,
    mut m: M,
    loss: impl Fn(&M) -> Result<Tensor>,
    probes: usize,
) -> Result<()> {
    let report = check_module(&mut m, loss, 1e-5, probes, 17)?;
    out.push(Case { name, report });
    Ok(())
}

/// Composite blocks with all parameters randomised (so zero-initialised
/// projections do not hide anything), three shapes each.
pub fn block_suite() -> Result<Vec<Case>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let shapes: [[usize; 4]; 3] = [[1, 4, 4, 4], [2, 4, 6, 6], [1, 8, 8, 6]];
    for (k, s) in shapes.iter().enumerate() {
        let x = random(s, 910 + k as u64);
        let c = s[1];

        let mut ffn = GatedFfn::new("ffn", c, 2, &mut rng)?;
        randomize(&mut ffn, 0.5, &mut rng);
        let xi = x.clone();
        module_case(
            &mut out,
            format!("GatedFfn {s:?}"),
            ffn,
            move |m| project(&m.forward(&xi)?, 1),
            12,
        )?;

        let mut scal = ScalLayer::new("scal", c, 2, 4, true, &mut rng)?;
        randomize(&mut scal, 0.5, &mut rng);
        let xi = x.clone();
        module_case(
            &mut out,
            format!("SCAL {s:?}"),
            scal,
            move |m| project(&m.forward(&xi)?, 2),
            12,
        )?;

        let layout = [
            BlockLayout::Sandwich,
            BlockLayout::ScalFfn,
            BlockLayout::Conformer,
        ][k];
        let opts = BlockOptions {
            layout,
            pool: 4,
            ..BlockOptions::default()
        };
        let mut block = SandwichBlock::new("block", c, 2, opts, &mut rng)?;
        randomize(&mut block, 0.4, &mut rng);
        let xi = x.clone();
        module_case(
            &mut out,
            format!("SandwichBlock {layout:?} {s:?}"),
            block,
            move |m| project(&m.forward(&xi)?, 3),
            12,
        )?;

        let kind = [
            DownsampleKind::Mpd,
            DownsampleKind::Pd,
            DownsampleKind::Conv,
        ][k];
        let down = Downsample::new(kind, "down", c, &mut rng)?;
        let (xi, mi) = (
            x.clone(),
            random_mask(&[s[0], 1, s[2], s[3]], 0.3, 920 + k as u64),
        );
        module_case(
            &mut out,
            format!("Downsample {kind:?} {s:?}"),
            down,
            move |m| project(&m.forward(&xi, &mi)?.0, 4),
            12,
        )?;

        let emb = GatedEmbedding::new("emb", c, 3, &mut rng)?;
        let inp = random(&[s[0], 4, s[2], s[3]], 930 + k as u64);
        module_case(
            &mut out,
            format!("GatedEmbedding {s:?}"),
            emb,
            move |m| project(&m.forward(&inp)?, 5),
            12,
        )?;
    }

    // end to end on the tiny model at 16×16: 10 random parameters
    let mut model = HintModel::new(&HintConfig::tiny(), 940)?;
    randomize(&mut model, 0.3, &mut rng);
    let img = random_unit(&[1, 3, 16, 16], 941);
    let mask = random_mask(&[1, 1, 16, 16], 0.3, 942);
    let masked = img.mul(&mask.broadcast_to(img.shape())?)?;
    module_case(
        &mut out,
        "HintModel tiny [1,3,16,16]".into(),
        model,
        move |m| project(&m.forward(&masked, &mask)?, 6),
        10,
    )?;

    // total loss with respect to the prediction, all four terms active
    let disc = PatchDiscriminator::new(950);
    let obj = Objective::default();
    for (k, size) in [16usize, 32, 16].into_iter().enumerate() {
        let n = if k == 2 { 2 } else { 1 };
        let pred = random_unit(&[n, 3, size, size], 960 + k as u64);
        let target = random_unit(&[n, 3, size, size], 970 + k as u64);
        let report = check_inputs(
            &[pred],
            |t| Ok(obj.total(&t[0], &target, &disc)?.total),
            1e-6,
            Some(40),
            k as u64,
        )?;
        out.push(Case {
            name: format!("total_loss [{n},3,{size},{size}]"),
            report,
        });
    }
    Ok(out)
}
