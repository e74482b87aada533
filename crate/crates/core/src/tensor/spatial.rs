use super::Tensor;
use crate::error::{config_err, shape_err, Result};

fn nchw(t: &Tensor, op: &str) -> Result<[usize; 4]> {
    if t.dims() != 4 {
        return Err(shape_err!("{op} expects [N,C,H,W], got {:?}", t.shape()));
    }
    let s = t.shape();
    Ok([s[0], s[1], s[2], s[3]])
}

/// For each output element, the flat input index it copies
/// (unshuffle layout: output channel c·s² + dy·s + dx at (h, w) is input channel c at (h·s+dy, w·s+dx)).
fn unshuffle_map(n: usize, c: usize, h: usize, w: usize, s: usize) -> Vec<usize> {
    let (oh, ow) = (h / s, w / s);
    let mut map = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for ch in 0..c {
            for dy in 0..s {
                for dx in 0..s {
                    for y in 0..oh {
                        for x in 0..ow {
                            map.push(((b * c + ch) * h + y * s + dy) * w + x * s + dx);
                        }
                    }
                }
            }
        }
    }
    map
}

impl Tensor {
    /// Pure rearrangement: `out[i] = self[map[i]]`, where `map` is a permutation.
    fn permute_by(&self, op: &'static str, shape: Vec<usize>, map: Vec<usize>) -> Result<Tensor> {
        let src = self.data();
        let data = map.iter().map(|&i| src[i]).collect();
        Tensor::from_op(
            op,
            shape,
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; g.len()];
                for (&i, &gv) in map.iter().zip(g) {
                    gx[i] = gv;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// `[N, C, H, W]` → `[N, C·s², H/s, W/s]`.
    pub fn pixel_unshuffle(&self, s: usize) -> Result<Tensor> {
        let [n, c, h, w] = nchw(self, "pixel_unshuffle")?;
        if s == 0 || h % s != 0 || w % s != 0 {
            return Err(shape_err!(
                "pixel_unshuffle: extents {h}x{w} not divisible by {s}"
            ));
        }
        let map = unshuffle_map(n, c, h, w, s);
        self.permute_by("pixel_unshuffle", vec![n, c * s * s, h / s, w / s], map)
    }

    /// `[N, C, H, W]` → `[N, C/s², H·s, W·s]`; inverse of [`Tensor::pixel_unshuffle`].
    pub fn pixel_shuffle(&self, s: usize) -> Result<Tensor> {
        let [n, c, h, w] = nchw(self, "pixel_shuffle")?;
        if s == 0 || c % (s * s) != 0 {
            return Err(shape_err!(
                "pixel_shuffle: {c} channels not divisible by {}",
                s * s
            ));
        }
        let co = c / (s * s);
        let forward = unshuffle_map(n, co, h * s, w * s, s);
        let mut map = vec![0; forward.len()];
        for (packed, &spatial) in forward.iter().enumerate() {
            map[spatial] = packed;
        }
        self.permute_by("pixel_shuffle", vec![n, co, h * s, w * s], map)
    }

    /// Adaptive average pooling: output cell i spans rows ⌊i·H/oh⌋ .. ⌈(i+1)·H/oh⌉.
    pub fn avg_pool_adaptive(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let [n, c, h, w] = nchw(self, "avg_pool_adaptive")?;
        if out_h == 0 || out_w == 0 {
            return Err(config_err!("avg_pool_adaptive: zero target extent"));
        }
        if out_h > h || out_w > w {
            return Err(shape_err!(
                "avg_pool_adaptive: target {out_h}x{out_w} exceeds input {h}x{w}"
            ));
        }
        let bins = |i: usize, o: usize, len: usize| (i * len / o, ((i + 1) * len).div_ceil(o));
        let src = self.data();
        let mut data = Vec::with_capacity(n * c * out_h * out_w);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..out_h {
                let (y0, y1) = bins(oy, out_h, h);
                for ox in 0..out_w {
                    let (x0, x1) = bins(ox, out_w, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        acc += src[base + y * w + x0..base + y * w + x1]
                            .iter()
                            .sum::<f64>();
                    }
                    data.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        Tensor::from_op(
            "avg_pool_adaptive",
            vec![n, c, out_h, out_w],
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; n * c * h * w];
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..out_h {
                        let (y0, y1) = bins(oy, out_h, h);
                        for ox in 0..out_w {
                            let (x0, x1) = bins(ox, out_w, w);
                            let share = g[(plane * out_h + oy) * out_w + ox]
                                / ((y1 - y0) * (x1 - x0)) as f64;
                            for y in y0..y1 {
                                gx[base + y * w + x0..base + y * w + x1]
                                    .iter_mut()
                                    .for_each(|v| *v += share);
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Bilinear resize with half-pixel centres (align-corners off).
    pub fn upsample_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let [n, c, h, w] = nchw(self, "upsample_bilinear")?;
        if out_h < h || out_w < w {
            return Err(shape_err!(
                "upsample_bilinear: target {out_h}x{out_w} smaller than input {h}x{w}"
            ));
        }
        let ys = taps(h, out_h);
        let xs = taps(w, out_w);
        let src = self.data();
        let mut data = Vec::with_capacity(n * c * out_h * out_w);
        for plane in 0..n * c {
            let base = plane * h * w;
            for &(y0, y1, ly) in &ys {
                for &(x0, x1, lx) in &xs {
                    let v = (1.0 - ly)
                        * ((1.0 - lx) * src[base + y0 * w + x0] + lx * src[base + y0 * w + x1])
                        + ly * ((1.0 - lx) * src[base + y1 * w + x0]
                            + lx * src[base + y1 * w + x1]);
                    data.push(v);
                }
            }
        }
        Tensor::from_op(
            "upsample_bilinear",
            vec![n, c, out_h, out_w],
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; n * c * h * w];
                let mut k = 0;
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for &(y0, y1, ly) in &ys {
                        for &(x0, x1, lx) in &xs {
                            let gv = g[k];
                            k += 1;
                            gx[base + y0 * w + x0] += gv * (1.0 - ly) * (1.0 - lx);
                            gx[base + y0 * w + x1] += gv * (1.0 - ly) * lx;
                            gx[base + y1 * w + x0] += gv * ly * (1.0 - lx);
                            gx[base + y1 * w + x1] += gv * ly * lx;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

/// Source neighbours and weight for each output coordinate.
fn taps(inp: usize, out: usize) -> Vec<(usize, usize, f64)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn seq(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| i as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn unshuffle_layout() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = x.pixel_unshuffle(2).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = y.pixel_shuffle(2).unwrap();
        assert_eq!(back.shape(), &[1, 1, 2, 2]);
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn stride_one_is_identity() {
        let x = seq(&[2, 3, 4, 6]);
        assert_eq!(x.pixel_unshuffle(1).unwrap().data(), x.data());
        assert_eq!(x.pixel_shuffle(1).unwrap().data(), x.data());
    }

    #[test]
    fn round_trip_both_ways() {
        let x = seq(&[2, 3, 4, 6]);
        let y = x.pixel_unshuffle(2).unwrap().pixel_shuffle(2).unwrap();
        assert_eq!(y.data(), x.data());
        let z = seq(&[2, 8, 3, 5]);
        let w = z.pixel_shuffle(2).unwrap().pixel_unshuffle(2).unwrap();
        assert_eq!(w.data(), z.data());
    }

    #[test]
    fn indivisible_extents() {
        assert!(matches!(
            seq(&[1, 1, 3, 4]).pixel_unshuffle(2),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            seq(&[1, 3, 2, 2]).pixel_shuffle(2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pooling_examples() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.avg_pool_adaptive(1, 1).unwrap().data(), &[2.5]);
        assert_eq!(x.avg_pool_adaptive(2, 2).unwrap().data(), x.data());
        let c = Tensor::full(&[1, 2, 7, 5], 3.25);
        assert!(c
            .avg_pool_adaptive(3, 2)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 3.25));
        assert!(matches!(x.avg_pool_adaptive(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn bilinear_examples() {
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = x.upsample_bilinear(1, 4).unwrap();
        for (a, b) in y.data().iter().zip([0.0, 0.25, 0.75, 1.0]) {
            assert!((a - b).abs() < 1e-6);
        }
        let c = Tensor::full(&[1, 1, 3, 3], 5.0);
        assert!(c
            .upsample_bilinear(7, 11)
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v - 5.0).abs() < 1e-12));
        let s = seq(&[1, 2, 3, 4]);
        assert_eq!(s.upsample_bilinear(3, 4).unwrap().data(), s.data());
    }
}
