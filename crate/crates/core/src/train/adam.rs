//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::nn::Module;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed updates.
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    /// Zeroed moments for every trainable parameter of `module`.
    pub fn for_module<M: Module + ?Sized>(module: &M) -> Adam {
        let sizes: Vec<usize> = module
            .parameters()
            .iter()
            .filter(|p| p.is_trainable())
            .map(|p| p.numel())
            .collect();
        Adam::with_sizes(&sizes)
    }

    pub fn with_sizes(sizes: &[usize]) -> Adam {
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            ..Adam::default()
        }
    }

    /// One update over parallel lists of parameter buffers and gradients.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step_raw(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() || params[i].len() != g.len() {
                return Err(Error::Shape(format!(
                    "tensor {i}: size changed under the optimizer"
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerics(format!(
                    "non-finite gradient {} at tensor {i}, element {j}",
                    g[j]
                )));
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Update the trainable parameters of `module` from their gradients.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M, lr: f64) -> Result<()> {
        let mut values = Vec::new();
        let mut grads = Vec::new();
        module.visit(&mut |p| {
            if p.is_trainable() {
                values.push(p.value().to_vec());
                grads.push(p.grad_or_zeros());
            }
        });
        self.step_raw(&mut values, &grads, lr)?;
        let mut it = values.into_iter();
        module.visit_mut(&mut |p| {
            if p.is_trainable() {
                p.set_data(it.next().unwrap());
            }
        });
        Ok(())
    }
}
