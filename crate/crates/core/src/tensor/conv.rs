use super::Tensor;
use crate::error::{config_err, shape_err, Result};

/// Stride, zero padding (both sides) and group count of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` is in range.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        valid_range(self.ow, self.w, self.stride, kx, self.pad)
    }

    fn valid_rows(&self, ky: usize) -> (usize, usize) {
        valid_range(self.oh, self.h, self.stride, ky, self.pad)
    }
}

fn valid_range(out: usize, inp: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // smallest o with o*stride + k >= pad
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    // largest o with o*stride + k - pad <= inp - 1
    let limit = inp + pad;
    let hi = if k + 1 > limit {
        0
    } else {
        ((limit - 1 - k) / stride + 1).min(out)
    };
    (lo.min(hi), hi)
}

impl Tensor {
    /// Cross-correlation of `[N, Cin, H, W]` with `[Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        spec: Conv2dSpec,
    ) -> Result<Tensor> {
        let g = geometry(self, weight, bias, spec)?;
        let mut out = vec![0.0; g.n * g.cout * g.oh * g.ow];
        conv_forward(self.data(), weight.data(), &mut out, &g);
        if let Some(b) = bias {
            let plane = g.oh * g.ow;
            for n in 0..g.n {
                for co in 0..g.cout {
                    let off = (n * g.cout + co) * plane;
                    out[off..off + plane]
                        .iter_mut()
                        .for_each(|v| *v += b.data()[co]);
                }
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let (x, wt) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        Tensor::from_op(
            "conv2d",
            vec![g.n, g.cout, g.oh, g.ow],
            out,
            parents,
            Box::new(move |_, gout| {
                let gx = x.requires_grad().then(|| {
                    let mut gx = vec![0.0; x.numel()];
                    conv_backward_input(gout, wt.data(), &mut gx, &g);
                    gx
                });
                let gw = wt.requires_grad().then(|| {
                    let mut gw = vec![0.0; wt.numel()];
                    conv_backward_weight(gout, x.data(), &mut gw, &g);
                    gw
                });
                let mut grads = vec![gx, gw];
                if has_bias {
                    let plane = g.oh * g.ow;
                    let mut gb = vec![0.0; g.cout];
                    for n in 0..g.n {
                        for (co, gbv) in gb.iter_mut().enumerate() {
                            let off = (n * g.cout + co) * plane;
                            *gbv += gout[off..off + plane].iter().sum::<f64>();
                        }
                    }
                    grads.push(Some(gb));
                }
                grads
            }),
        )
    }
}

fn geometry(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: Conv2dSpec) -> Result<Geometry> {
    if x.dims() != 4 || w.dims() != 4 {
        return Err(shape_err!(
            "conv2d expects 4-D input and weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        ));
    }
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, cin_g, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let groups = spec.groups;
    if groups == 0 || spec.stride == 0 {
        return Err(config_err!("conv2d: groups and stride must be positive"));
    }
    if cin % groups != 0 || cout % groups != 0 {
        return Err(config_err!(
            "conv2d: groups={groups} must divide Cin={cin} and Cout={cout}"
        ));
    }
    if cin_g != cin / groups {
        return Err(shape_err!(
            "conv2d: weight {:?} expects {} input channels per group, input has {}",
            w.shape(),
            cin_g,
            cin / groups
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(shape_err!("conv2d: bias {:?} for Cout={cout}", b.shape()));
        }
    }
    let (ph, pw) = (h + 2 * spec.padding, wd + 2 * spec.padding);
    if ph < kh || pw < kw {
        return Err(shape_err!(
            "conv2d: kernel {kh}x{kw} larger than padded input {ph}x{pw}"
        ));
    }
    Ok(Geometry {
        n,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        oh: (ph - kh) / spec.stride + 1,
        ow: (pw - kw) / spec.stride + 1,
        stride: spec.stride,
        pad: spec.padding,
        groups,
    })
}

/// Visit every (output plane, input plane, kernel tap) triple in a fixed order.
fn for_each_tap(g: &Geometry, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    for n in 0..g.n {
        for co in 0..g.cout {
            let grp = co / cout_g;
            for cl in 0..cin_g {
                let ci = grp * cin_g + cl;
                let out_plane = (n * g.cout + co) * g.oh * g.ow;
                let in_plane = (n * g.cin + ci) * g.h * g.w;
                let w_base = (co * cin_g + cl) * g.kh * g.kw;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        f(out_plane, in_plane, w_base + ky * g.kw + kx, ky, kx);
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &[f64], w: &[f64], out: &mut [f64], g: &Geometry) {
    for_each_tap(g, |op, ip, wi, ky, kx| {
        let wv = w[wi];
        if wv == 0.0 {
            return;
        }
        let (y0, y1) = g.valid_rows(ky);
        let (x0, x1) = g.valid_cols(kx);
        for oy in y0..y1 {
            let iy = oy * g.stride + ky - g.pad;
            let orow = op + oy * g.ow;
            let irow = ip + iy * g.w;
            if g.stride == 1 {
                let ix0 = x0 + kx - g.pad;
                let dst = &mut out[orow + x0..orow + x1];
                let src = &x[irow + ix0..irow + ix0 + (x1 - x0)];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            } else {
                for ox in x0..x1 {
                    out[orow + ox] += wv * x[irow + ox * g.stride + kx - g.pad];
                }
            }
        }
    });
}

fn conv_backward_input(gout: &[f64], w: &[f64], gx: &mut [f64], g: &Geometry) {
    for_each_tap(g, |op, ip, wi, ky, kx| {
        let wv = w[wi];
        if wv == 0.0 {
            return;
        }
        let (y0, y1) = g.valid_rows(ky);
        let (x0, x1) = g.valid_cols(kx);
        for oy in y0..y1 {
            let iy = oy * g.stride + ky - g.pad;
            let orow = op + oy * g.ow;
            let irow = ip + iy * g.w;
            for ox in x0..x1 {
                gx[irow + ox * g.stride + kx - g.pad] += wv * gout[orow + ox];
            }
        }
    });
}

fn conv_backward_weight(gout: &[f64], x: &[f64], gw: &mut [f64], g: &Geometry) {
    for_each_tap(g, |op, ip, wi, ky, kx| {
        let (y0, y1) = g.valid_rows(ky);
        let (x0, x1) = g.valid_cols(kx);
        let mut acc = 0.0;
        for oy in y0..y1 {
            let iy = oy * g.stride + ky - g.pad;
            let orow = op + oy * g.ow;
            let irow = ip + iy * g.w;
            for ox in x0..x1 {
                acc += gout[orow + ox] * x[irow + ox * g.stride + kx - g.pad];
            }
        }
        gw[wi] += acc;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Direct definition with explicit zero padding, independent of the tap loop.
    fn naive(x: &Tensor, w: &Tensor, spec: Conv2dSpec) -> Vec<f64> {
        let [n, cin, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [cout, cig, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
        let p = spec.padding as isize;
        let oh = (h + 2 * spec.padding - kh) / spec.stride + 1;
        let ow = (wd + 2 * spec.padding - kw) / spec.stride + 1;
        let cog = cout / spec.groups;
        let mut out = Vec::new();
        for b in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = 0.0;
                        for cl in 0..cig {
                            let ci = (co / cog) * cig + cl;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * spec.stride + ky) as isize - p;
                                    let ix = (ox * spec.stride + kx) as isize - p;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    s += x.at(&[b, ci, iy as usize, ix as usize])
                                        * w.at(&[co, cl, ky, kx]);
                                }
                            }
                        }
                        out.push(s);
                    }
                }
            }
        }
        let _ = cin;
        out
    }

    fn ramp(shape: &[usize], k: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64) * k).sin()).collect()).unwrap()
    }

    #[test]
    fn sum_of_ones() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = x.conv2d(&w, None, Conv2dSpec::default()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn depthwise_scaling() {
        let x =
            Tensor::from_vec(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::full(&[2, 1, 1, 1], 2.0);
        let spec = Conv2dSpec {
            groups: 2,
            ..Default::default()
        };
        let y = x.conv2d(&w, None, spec).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 6.0, 8.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn matches_naive_definition() {
        for &(stride, padding, groups, k) in &[
            (1, 1, 1, 3),
            (2, 1, 1, 3),
            (1, 0, 2, 3),
            (2, 3, 4, 7),
            (1, 0, 1, 1),
            (2, 1, 4, 3),
        ] {
            let x = ramp(&[2, 4, 7, 6], 0.37);
            let w = ramp(&[8, 4 / groups, k, k], 1.3);
            let spec = Conv2dSpec {
                stride,
                padding,
                groups,
            };
            let got = x.conv2d(&w, None, spec).unwrap();
            let want = naive(&x, &w, spec);
            assert_eq!(got.numel(), want.len());
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{stride} {padding} {groups} {k}");
            }
        }
    }

    #[test]
    fn bad_groups_is_config_error() {
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        let w = Tensor::zeros(&[4, 1, 3, 3]);
        let spec = Conv2dSpec {
            groups: 2,
            ..Default::default()
        };
        assert!(matches!(x.conv2d(&w, None, spec), Err(Error::Config(_))));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        assert!(matches!(
            x.conv2d(&w, None, Conv2dSpec::default()),
            Err(Error::Shape(_))
        ));
    }
}
