use super::{numel, Tensor};
use crate::error::{shape_err, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub(crate) fn sigmoid_fwd(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Strides of a row-major layout.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn check_axis(shape: &[usize], axis: usize, op: &str) -> Result<()> {
    if axis >= shape.len() {
        return Err(shape_err!("{op}: axis {axis} out of range for {:?}", shape));
    }
    Ok(())
}

/// (outer, extent, inner) factorisation around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    fn same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err!(
                "{op}: shapes {:?} and {:?} differ (only scalar broadcasting is supported)",
                self.shape(),
                other.shape()
            ));
        }
        Ok(())
    }

    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let data = self.data().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        Tensor::from_op(
            op,
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |out, g| {
                let gx = input
                    .data()
                    .iter()
                    .zip(out)
                    .zip(g)
                    .map(|((&x, &y), &g)| g * df(x, y))
                    .collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op(
            "add",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|_, g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|_, g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |_, g| {
                let ga = g.iter().zip(b.data()).map(|(g, b)| g * b).collect();
                let gb = g.iter().zip(a.data()).map(|(g, a)| g * a).collect();
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "div")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a / b)
            .collect();
        let b = other.clone();
        Tensor::from_op(
            "div",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |out, g| {
                let ga = g.iter().zip(b.data()).map(|(g, b)| g / b).collect();
                let gb = g
                    .iter()
                    .zip(out)
                    .zip(b.data())
                    .map(|((g, y), b)| -g * y / b)
                    .collect();
                vec![Some(ga), Some(gb)]
            }),
        )
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|x| x * factor).collect();
        Tensor::from_op(
            "scale",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |_, g| vec![Some(g.iter().map(|g| g * factor).collect())]),
        )
    }

    pub fn add_scalar(&self, value: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|x| x + value).collect();
        Tensor::from_op(
            "add_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(|_, g| vec![Some(g.to_vec())]),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Result<Tensor> {
        self.unary("gelu", gelu_fwd, |x, _| gelu_grad(x))
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary(
            "relu",
            |x| x.max(0.0),
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor> {
        self.unary(
            "leaky_relu",
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", sigmoid_fwd, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    /// |x|, with subgradient 0 at the origin.
    pub fn abs(&self) -> Result<Tensor> {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// sign(x)·max(|x|, floor); the gradient is zero where the floor binds.
    pub fn clamp_magnitude_min(&self, floor: f64) -> Result<Tensor> {
        self.unary(
            "clamp_magnitude_min",
            move |x| {
                if x.abs() >= floor {
                    x
                } else if x < 0.0 {
                    -floor
                } else {
                    floor
                }
            },
            move |x, _| if x.abs() >= floor { 1.0 } else { 0.0 },
        )
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |_, g| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(shape_err!("mean of empty tensor"));
        }
        let m = self.data().iter().sum::<f64>() / n as f64;
        Tensor::from_op(
            "mean",
            vec![1],
            vec![m],
            vec![self.clone()],
            Box::new(move |_, g| vec![Some(vec![g[0] / n as f64; n])]),
        )
    }

    /// Mean binary cross-entropy of `self` (logits) against a constant label,
    /// in the overflow-free form max(x,0) − x·t + ln(1 + e^{−|x|}).
    pub fn bce_with_logits(&self, target: f64) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(shape_err!("bce of empty tensor"));
        }
        let total: f64 = self
            .data()
            .iter()
            .map(|&x| x.max(0.0) - x * target + (-x.abs()).exp().ln_1p())
            .sum();
        let input = self.clone();
        Tensor::from_op(
            "bce_with_logits",
            vec![1],
            vec![total / n as f64],
            vec![self.clone()],
            Box::new(move |_, g| {
                let scale = g[0] / n as f64;
                let gx = input
                    .data()
                    .iter()
                    .map(|&x| scale * (sigmoid_fwd(x) - target))
                    .collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(shape_err!(
                "cannot reshape {:?} into {:?}",
                self.shape(),
                shape
            ));
        }
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|_, g| vec![Some(g.to_vec())]),
        )
    }

    /// Swap the two trailing axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let d = self.dims();
        if d < 2 {
            return Err(shape_err!(
                "transpose needs rank >= 2, got {:?}",
                self.shape()
            ));
        }
        let (m, n) = (self.shape()[d - 2], self.shape()[d - 1]);
        let batch = self.numel() / (m * n).max(1);
        let data = transpose_raw(self.data(), batch, m, n);
        let mut shape = self.shape().to_vec();
        shape.swap(d - 2, d - 1);
        Tensor::from_op(
            "transpose_last2",
            shape,
            data,
            vec![self.clone()],
            Box::new(move |_, g| vec![Some(transpose_raw(g, batch, n, m))]),
        )
    }

    /// Explicit broadcast: every axis of `self` must equal the target extent or be 1.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.len() != self.dims()
            || self
                .shape()
                .iter()
                .zip(shape)
                .any(|(&s, &t)| s != t && s != 1)
        {
            return Err(shape_err!(
                "cannot broadcast {:?} to {:?}",
                self.shape(),
                shape
            ));
        }
        let src_strides = strides(self.shape());
        let eff: Vec<usize> = self
            .shape()
            .iter()
            .zip(&src_strides)
            .map(|(&s, &st)| if s == 1 { 0 } else { st })
            .collect();
        let total = numel(shape);
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..total {
            map.push(idx.iter().zip(&eff).map(|(i, s)| i * s).sum::<usize>());
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        let src = self.data();
        let data = map.iter().map(|&i| src[i]).collect();
        let n_src = self.numel();
        Tensor::from_op(
            "broadcast_to",
            shape.to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; n_src];
                for (&i, &gv) in map.iter().zip(g) {
                    gx[i] += gv;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = tensors
            .first()
            .ok_or_else(|| shape_err!("concat of zero tensors"))?;
        check_axis(first.shape(), axis, "concat")?;
        for t in tensors {
            if t.dims() != first.dims()
                || t.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(shape_err!(
                    "concat: {:?} incompatible with {:?} on axis {axis}",
                    t.shape(),
                    first.shape()
                ));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let extents: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total_axis: usize = extents.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total_axis;
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for (t, &e) in tensors.iter().zip(&extents) {
                let chunk = e * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::from_op(
            "concat",
            shape,
            data,
            tensors.to_vec(),
            Box::new(move |_, g| {
                let mut grads: Vec<Vec<f64>> = extents
                    .iter()
                    .map(|e| Vec::with_capacity(outer * e * inner))
                    .collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (gt, &e) in grads.iter_mut().zip(&extents) {
                        let chunk = e * inner;
                        gt.extend_from_slice(&g[pos..pos + chunk]);
                        pos += chunk;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        )
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        check_axis(self.shape(), axis, "slice")?;
        if start >= end || end > self.shape()[axis] {
            return Err(shape_err!(
                "slice {start}..{end} invalid for axis {axis} of {:?}",
                self.shape()
            ));
        }
        let (outer, ext, inner) = split_axis(self.shape(), axis);
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * ext * inner;
            data.extend_from_slice(&self.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = width;
        let n_src = self.numel();
        Tensor::from_op(
            "slice",
            shape,
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; n_src];
                for o in 0..outer {
                    let base = o * ext * inner;
                    gx[base + start * inner..base + end * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Gather entries along `axis` by index; indices may repeat.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Tensor> {
        check_axis(self.shape(), axis, "index_select")?;
        let (outer, ext, inner) = split_axis(self.shape(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= ext) {
            return Err(shape_err!(
                "index_select: index {bad} out of range for axis {axis} of {:?}",
                self.shape()
            ));
        }
        let k = indices.len();
        let mut data = Vec::with_capacity(outer * k * inner);
        for o in 0..outer {
            for &i in indices {
                let src = (o * ext + i) * inner;
                data.extend_from_slice(&self.data()[src..src + inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = k;
        let indices = indices.to_vec();
        let n_src = self.numel();
        Tensor::from_op(
            "index_select",
            shape,
            data,
            vec![self.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; n_src];
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let dst = (o * ext + i) * inner;
                        let src = (o * k + j) * inner;
                        for t in 0..inner {
                            gx[dst + t] += g[src + t];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Batched product of `[..., m, k]` and `[..., k, n]` with equal leading axes.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (da, db) = (self.dims(), other.dims());
        if da < 2 || db < 2 || da != db || self.shape()[..da - 2] != other.shape()[..db - 2] {
            return Err(shape_err!(
                "matmul: incompatible leading axes {:?} x {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let (m, k) = (self.shape()[da - 2], self.shape()[da - 1]);
        let (k2, n) = (other.shape()[db - 2], other.shape()[db - 1]);
        if k != k2 {
            return Err(shape_err!(
                "matmul: inner dimensions differ ({k} vs {k2}) for {:?} x {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let batch: usize = self.shape()[..da - 2].iter().product();
        let data = matmul_raw(self.data(), other.data(), batch, m, k, n);
        let mut shape = self.shape().to_vec();
        shape[da - 1] = n;
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "matmul",
            shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |_, g| {
                let ga = a.requires_grad().then(|| {
                    let bt = transpose_raw(b.data(), batch, k, n);
                    matmul_raw(g, &bt, batch, m, n, k)
                });
                let gb = b.requires_grad().then(|| {
                    let at = transpose_raw(a.data(), batch, m, k);
                    matmul_raw(&at, g, batch, k, m, n)
                });
                vec![ga, gb]
            }),
        )
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis(self.shape(), axis, "softmax")?;
        let (outer, ext, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let mut data = vec![0.0; self.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * ext + j) * inner + i;
                let max = (0..ext)
                    .map(|j| src[at(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..ext {
                    let e = (src[at(j)] - max).exp();
                    data[at(j)] = e;
                    z += e;
                }
                for j in 0..ext {
                    data[at(j)] /= z;
                }
            }
        }
        Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |y, g| {
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * ext + j) * inner + i;
                        let dot: f64 = (0..ext).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..ext {
                            gx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

pub(crate) fn transpose_raw(src: &[f64], batch: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        let off = b * m * n;
        for i in 0..m {
            for j in 0..n {
                out[off + j * m + i] = src[off + i * n + j];
            }
        }
    }
    out
}

pub(crate) fn matmul_raw(
    a: &[f64],
    b: &[f64],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let a = &a[bi * m * k..(bi + 1) * m * k];
        let b = &b[bi * k * n..(bi + 1) * k * n];
        let c = &mut out[bi * m * n..(bi + 1) * m * n];
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for (cv, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *cv += av * bv;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_by_hand() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(eye.matmul(&b).unwrap().data(), b.data());
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_examples() {
        let u = t(&[3], &[0.0, 0.0, 0.0]).softmax(0).unwrap();
        for v in u.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = t(&[2], &[1000.0, 1000.0]).softmax(0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        // e^x / sum e^x evaluated directly
        let direct: Vec<f64> = {
            let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        };
        let s = t(&[3], &[1.0, 2.0, 3.0]).softmax(0).unwrap();
        for ((got, want), frozen) in s
            .data()
            .iter()
            .zip(&direct)
            .zip([0.09003, 0.24473, 0.66524])
        {
            assert!((got - want).abs() < 1e-15);
            assert!((got - frozen).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_middle_axis_sums_to_one() {
        let x = t(
            &[2, 3, 2],
            &[0.1, -3.0, 2.0, 7.0, 0.0, 1.0, 5.0, 5.0, -1.0, 2.0, 3.0, 0.5],
        );
        let y = x.softmax(1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|j| y.at(&[o, j, i])).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_at_zero() {
        assert_eq!(t(&[1], &[0.0]).gelu().unwrap().data(), &[0.0]);
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let a = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[1, 1, 2], &[5.0, 6.0]);
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2]);
        assert_eq!(c.slice(1, 0, 2).unwrap().data(), a.data());
        assert_eq!(c.slice(1, 2, 3).unwrap().data(), b.data());
    }

    #[test]
    fn broadcasting_is_explicit() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[1, 3]);
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
        let bb = t(&[1, 3], &[1.0, 2.0, 3.0]).broadcast_to(&[2, 3]).unwrap();
        assert_eq!(bb.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn stable_bce_closed_forms() {
        let zero = Tensor::zeros(&[4]);
        let ln2 = std::f64::consts::LN_2;
        assert!((zero.bce_with_logits(1.0).unwrap().item().unwrap() - ln2).abs() < 1e-15);
        assert!((zero.bce_with_logits(0.0).unwrap().item().unwrap() - ln2).abs() < 1e-15);
        // For large |x| the loss against the wrong label tends to |x| + e^{-|x|}.
        let big = t(&[1], &[100.0]);
        let neg = t(&[1], &[-100.0]);
        let a = big.bce_with_logits(0.0).unwrap().item().unwrap();
        let b = neg.bce_with_logits(1.0).unwrap().item().unwrap();
        assert!((a - 100.0).abs() < 1e-6);
        assert!((b - 100.0).abs() < 1e-6);
        assert!(big.bce_with_logits(1.0).unwrap().item().unwrap() < 1e-40);
    }
}
