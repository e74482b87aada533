use super::Tensor;
use crate::error::{config_err, shape_err, Result};

/// How normalisation groups are laid out in an `[N, C, H, W]` buffer.
#[derive(Clone, Copy)]
enum Axis {
    /// One group per (n, pixel), spanning the C channels; affine indexed by channel.
    Channel,
    /// One group per (n, channel), spanning the H·W pixels; affine indexed by channel.
    Spatial,
}

#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    c: usize,
    hw: usize,
    axis: Axis,
}

impl Layout {
    fn groups(&self) -> usize {
        match self.axis {
            Axis::Channel => self.n * self.hw,
            Axis::Spatial => self.n * self.c,
        }
    }

    fn len(&self) -> usize {
        match self.axis {
            Axis::Channel => self.c,
            Axis::Spatial => self.hw,
        }
    }

    /// Flat index and affine index of member `j` of group `grp`.
    fn at(&self, grp: usize, j: usize) -> (usize, usize) {
        match self.axis {
            Axis::Channel => {
                let (n, p) = (grp / self.hw, grp % self.hw);
                ((n * self.c + j) * self.hw + p, j)
            }
            Axis::Spatial => (grp * self.hw + j, grp % self.c),
        }
    }
}

impl Tensor {
    /// Per-pixel normalisation across channels of `[N, C, H, W]`, then a per-channel affine.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        self.normalize("layer_norm", Axis::Channel, gamma, beta, eps)
    }

    /// Per-channel normalisation across the spatial plane of `[N, C, H, W]`, then a per-channel affine.
    pub fn instance_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        self.normalize("instance_norm", Axis::Spatial, gamma, beta, eps)
    }

    fn normalize(
        &self,
        op: &'static str,
        axis: Axis,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Tensor> {
        if eps <= 0.0 {
            return Err(config_err!("{op}: eps must be positive, got {eps}"));
        }
        if self.dims() != 4 {
            return Err(shape_err!("{op} expects [N,C,H,W], got {:?}", self.shape()));
        }
        let s = self.shape();
        let lay = Layout {
            n: s[0],
            c: s[1],
            hw: s[2] * s[3],
            axis,
        };
        if gamma.shape() != [lay.c] || beta.shape() != [lay.c] {
            return Err(shape_err!(
                "{op}: affine parameters {:?}/{:?} for {} channels",
                gamma.shape(),
                beta.shape(),
                lay.c
            ));
        }
        let x = self.data();
        let len = lay.len();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; lay.groups()];
        let mut out = vec![0.0; x.len()];
        for (grp, istd) in inv_std.iter_mut().enumerate() {
            let mean = (0..len).map(|j| x[lay.at(grp, j).0]).sum::<f64>() / len as f64;
            let var = (0..len)
                .map(|j| {
                    let d = x[lay.at(grp, j).0] - mean;
                    d * d
                })
                .sum::<f64>()
                / len as f64;
            *istd = 1.0 / (var + eps).sqrt();
            for j in 0..len {
                let (i, a) = lay.at(grp, j);
                xhat[i] = (x[i] - mean) * *istd;
                out[i] = xhat[i] * gamma.data()[a] + beta.data()[a];
            }
        }
        let gm = gamma.clone();
        Tensor::from_op(
            op,
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |_, g| {
                let mut gx = vec![0.0; g.len()];
                let mut gg = vec![0.0; lay.c];
                let mut gb = vec![0.0; lay.c];
                for (grp, &istd) in inv_std.iter().enumerate() {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..len {
                        let (i, a) = lay.at(grp, j);
                        gg[a] += g[i] * xhat[i];
                        gb[a] += g[i];
                        let d = g[i] * gm.data()[a];
                        sum_d += d;
                        sum_dx += d * xhat[i];
                    }
                    let k = istd / len as f64;
                    for j in 0..len {
                        let (i, a) = lay.at(grp, j);
                        let d = g[i] * gm.data()[a];
                        gx[i] = k * (len as f64 * d - sum_d - xhat[i] * sum_dx);
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(c: usize, g: f64, b: f64) -> (Tensor, Tensor) {
        (Tensor::full(&[c], g), Tensor::full(&[c], b))
    }

    #[test]
    fn constant_input_normalises_to_zero() {
        let x = Tensor::full(&[1, 3, 2, 2], 4.2);
        let (g, b) = affine(3, 1.0, 0.0);
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gamma_collapses_to_beta() {
        let x = Tensor::from_vec(&[1, 2, 1, 2], vec![1.0, -5.0, 3.0, 8.0]).unwrap();
        let (g, b) = affine(2, 0.0, 0.7);
        let y = x.layer_norm(&g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn per_pixel_statistics() {
        let data: Vec<f64> = (0..16).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.0).collect();
        let x = Tensor::from_vec(&[1, 4, 2, 2], data).unwrap();
        let (g, b) = affine(4, 1.0, 0.0);
        let y = x.layer_norm(&g, &b, 1e-12).unwrap();
        for p in 0..4 {
            let vals: Vec<f64> = (0..4).map(|c| y.data()[c * 4 + p]).collect();
            let mean = vals.iter().sum::<f64>() / 4.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn instance_norm_per_plane() {
        let data: Vec<f64> = (0..18).map(|i| (i as f64).sqrt()).collect();
        let x = Tensor::from_vec(&[1, 2, 3, 3], data).unwrap();
        let (g, b) = affine(2, 1.0, 0.0);
        let y = x.instance_norm(&g, &b, 1e-12).unwrap();
        for c in 0..2 {
            let plane = &y.data()[c * 9..(c + 1) * 9];
            let mean = plane.iter().sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn nonpositive_eps_rejected() {
        let x = Tensor::zeros(&[1, 2, 1, 1]);
        let (g, b) = affine(2, 1.0, 0.0);
        assert!(x.layer_norm(&g, &b, 0.0).is_err());
    }
}
