//! PSNR, SSIM and L1 on images in [0, 1].

use crate::error::{config_err, shape_err, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!(
            "metric inputs differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    if a.dims() < 2 {
        return Err(shape_err!(
            "metric input must be at least 2-D, got {:?}",
            a.shape()
        ));
    }
    Ok(())
}

/// 10·log10(peak² / MSE); `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    if peak <= 0.0 {
        return Err(config_err!("peak must be positive, got {peak}"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn mean_abs(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(s / a.numel() as f64)
}

/// Mean |a − b| over missing pixels (mask 0) and all channels. Images are
/// `[C,H,W]` or `[N,C,H,W]`, the mask has one channel. Zero if nothing is missing.
pub fn masked_l1(a: &Tensor, b: &Tensor, mask: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let s = a.shape();
    let plane = s[s.len() - 2] * s[s.len() - 1];
    let channels = if s.len() >= 3 { s[s.len() - 3] } else { 1 };
    if mask.numel() * channels != a.numel() {
        return Err(shape_err!(
            "mask {:?} does not fit image {:?}",
            mask.shape(),
            s
        ));
    }
    let (ad, bd, md) = (a.data(), b.data(), mask.data());
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.numel() {
        let m = md[(i / (channels * plane)) * plane + i % plane];
        if m == 0.0 {
            sum += (ad[i] - bd[i]).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Channel-mean grayscale plane of the last three axes. Leading axes must be 1.
fn grayscale(t: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let c = t.numel() / (h * w);
    if s.len() > 3 && s[..s.len() - 3].iter().any(|&d| d != 1) {
        return Err(shape_err!("ssim takes one image, got {:?}", s));
    }
    let d = t.data();
    let gray = (0..h * w)
        .map(|p| (0..c).map(|ch| d[ch * h * w + p]).sum::<f64>() / c as f64)
        .collect();
    Ok((h, w, gray))
}

pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Valid-only separable filtering.
fn filter(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM on channel-mean grayscale with an 11×11 Gaussian window
/// (σ = 1.5), valid positions only.
pub fn ssim_with_peak(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w, ga) = grayscale(a)?;
    let (_, _, gb) = grayscale(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        ));
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter(&ga, h, w, &k);
    let mu_b = filter(&gb, h, w, &k);
    let aa = filter(&prod(&ga, &ga), h, w, &k);
    let bb = filter(&prod(&gb, &gb), h, w, &k);
    let ab = filter(&prod(&ga, &gb), h, w, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    ssim_with_peak(a, b, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let a = Tensor::full(&[3, 4, 4], 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = Tensor::full(&[3, 4, 4], 0.6);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_negation() {
        let data: Vec<f64> = (0..3 * 16 * 16)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        let a = Tensor::from_vec(&[3, 16, 16], data.clone()).unwrap();
        let neg = Tensor::from_vec(&[3, 16, 16], data.iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&a, &neg).unwrap() < 1.0);
        assert!(ssim(&Tensor::zeros(&[1, 8, 8]), &Tensor::zeros(&[1, 8, 8])).is_err());
    }

    #[test]
    fn masked_l1_counts_missing_only() {
        let a = Tensor::zeros(&[3, 2, 2]);
        let b = Tensor::from_vec(&[3, 2, 2], [1.0, 9.0, 9.0, 9.0].repeat(3)).unwrap();
        let m = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(masked_l1(&a, &b, &m).unwrap(), 1.0);
    }
}
