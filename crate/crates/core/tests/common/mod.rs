//! Helpers and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

pub mod suites;

use hint_core::data::metrics::gaussian_window;
use hint_core::model::HintConfig;
use hint_core::sandwich::BlockLayout;
use hint_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_unit(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

pub fn random_mask(shape: &[usize], p_missing: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random_bool(p_missing) { 0.0 } else { 1.0 })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// PSNR written out directly from its definition.
pub fn psnr_direct(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mut mse = 0.0;
    for i in 0..a.len() {
        mse += (a[i] - b[i]).powi(2);
    }
    mse /= a.len() as f64;
    10.0 * (peak * peak / mse).log10()
}

/// SSIM with an explicit 2-D window at every valid position.
pub fn ssim_bruteforce(a: &Tensor, b: &Tensor) -> f64 {
    let s = a.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let gray =
        |t: &Tensor, y: usize, x: usize| (0..c).map(|ch| t.at(&[ch, y, x])).sum::<f64>() / c as f64;
    let g = gaussian_window(11, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i] * g[j];
                    ma += wt * gray(a, y0 + i, x0 + j);
                    mb += wt * gray(b, y0 + i, x0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i] * g[j];
                    let da = gray(a, y0 + i, x0 + j) - ma;
                    let db = gray(b, y0 + i, x0 + j) - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn conv(cin: usize, cout: usize, k: usize, groups: usize, bias: bool) -> usize {
    cout * (cin / groups) * k * k + if bias { cout } else { 0 }
}

fn ffn(c: usize, e: usize) -> usize {
    let h = c * e;
    2 * c + conv(c, 2 * h, 1, 1, true) + conv(2 * h, 2 * h, 3, 2 * h, true) + conv(h, c, 1, 1, true)
}

fn scal(c: usize, heads: usize, spatial: bool) -> usize {
    let qkv = 3 * (conv(c, c, 1, 1, true) + conv(c, c, 3, c, true));
    let mid = (c / 4).max(1);
    let sp = if spatial {
        conv(c, mid, 3, 1, true) + 2 * mid + conv(mid, 1, 3, 1, true) + 2
    } else {
        0
    };
    2 * c + qkv + heads + sp + conv(c, c, 1, 1, true)
}

fn block(c: usize, heads: usize, cfg: &HintConfig) -> usize {
    let e = cfg.ffn_expansion;
    let mid_conv = 2 * c + conv(c, c, 1, 1, true) + conv(c, c, 3, c, true) + conv(c, c, 1, 1, true);
    let s = scal(c, heads, cfg.spatial_branch);
    match cfg.block_layout {
        BlockLayout::Sandwich => 2 * ffn(c, e) + s,
        BlockLayout::ScalFfn => ffn(c, e) + s,
        BlockLayout::Conformer => 2 * ffn(c, e) + s + mid_conv,
    }
}

/// Closed-form parameter count of a full MPD model, summed layer by layer.
pub fn count_parameters(cfg: &HintConfig) -> usize {
    let c = cfg.base_channels;
    let k = cfg.embed_kernel;
    let mut n = 2 * conv(4, c, k, 1, true);
    let widths = [
        c,
        2 * c,
        4 * c,
        8 * c,
        4 * c,
        2 * c,
        if cfg.last_skip_reduce { c } else { 2 * c },
    ];
    for l in 0..7 {
        n += cfg.depths[l] * block(widths[l], cfg.heads[l], cfg);
    }
    for &w in &widths[..3] {
        n += conv(w, w / 2, 3, 1, false)
            + conv(4 * w, 2 * w, 3, 2 * w, false)
            + conv(2 * w, 2 * w, 1, 1, true);
    }
    for l in 4..7 {
        let from = widths[l - 1];
        n += conv(from, 2 * from, 1, 1, true);
        if l < 6 || cfg.last_skip_reduce {
            n += conv(from, widths[l], 1, 1, true);
        }
    }
    n + conv(widths[6], 3, 3, 1, true)
}

/// Adam written independently for a scalar parameter.
pub fn scripted_adam(grad: impl Fn(f64) -> f64, p0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut p) = (0.0, 0.0, p0);
    let mut trace = Vec::new();
    for t in 1..=steps {
        let g = grad(p);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        p -= lr * mh / (vh.sqrt() + eps);
        trace.push(p);
    }
    trace
}

/// Expected interleaved MPD tensor from the projected features and the mask,
/// read pixel by pixel: slot 2i is packed feature i, slot 2i+1 the validity of
/// the same source pixel.
pub fn mpd_index_oracle(projected: &Tensor, mask: &Tensor) -> Vec<f64> {
    let s = projected.shape();
    let (n, ch, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let packed = 4 * ch;
    let mut out = Vec::with_capacity(n * 2 * packed * oh * ow);
    for b in 0..n {
        for slot in 0..2 * packed {
            let i = slot / 2;
            let (src_c, dy, dx) = (i / 4, (i % 4) / 2, i % 2);
            for y in 0..oh {
                for x in 0..ow {
                    let (py, px) = (2 * y + dy, 2 * x + dx);
                    out.push(if slot % 2 == 0 {
                        projected.at(&[b, src_c, py, px])
                    } else {
                        mask.at(&[b, 0, py, px])
                    });
                }
            }
        }
    }
    out
}
