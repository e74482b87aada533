//! Trainable parameters and the small set of layers the model is built from.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Conv2dSpec, Tensor};

/// Named gradient-tracking leaf. Updating replaces the leaf; graphs built
/// from the previous value are unaffected.
#[derive(Debug, Clone)]
pub struct Param {
    name: String,
    value: Tensor,
    trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Param {
        Param {
            name: name.into(),
            value: Tensor::parameter(shape, data).expect("parameter shape matches data"),
            trainable: true,
        }
    }

    /// Parameter that never records gradients.
    pub fn frozen(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Param {
        Param {
            name: name.into(),
            value: Tensor::from_vec(shape, data).expect("parameter shape matches data"),
            trainable: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.value
            .grad()
            .map(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; self.numel()])
    }

    pub fn set_data(&mut self, data: Vec<f64>) {
        let shape = self.value.shape().to_vec();
        self.value = if self.trainable {
            Tensor::parameter(&shape, data)
        } else {
            Tensor::from_vec(&shape, data)
        }
        .expect("replacement data keeps the parameter shape");
    }

    pub fn zero_grad(&self) {
        self.value.zero_grad();
    }

    /// Stop recording gradients for this parameter.
    pub fn freeze(&mut self) {
        self.value = self.value.detach();
        self.trainable = false;
    }
}

/// Anything that owns parameters, visited in declaration order.
pub trait Module {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn parameters(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.numel());
        n
    }

    fn zero_grad(&self) {
        self.visit(&mut |p| p.zero_grad());
    }
}

impl<M: Module> Module for Option<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        if let Some(m) = self {
            m.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Some(m) = self {
            m.visit_mut(f);
        }
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.iter().for_each(|m| m.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.iter_mut().for_each(|m| m.visit_mut(f));
    }
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(−1/√fan_in, 1/√fan_in) for weight and bias.
    KaimingUniform,
    /// All zeros (residual output projections).
    Zeros,
}

/// Convolution layer with optional bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub spec: Conv2dSpec,
}

/// Shape of a [`Conv2d`].
#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub bias: bool,
}

impl ConvShape {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> ConvShape {
        ConvShape {
            cin,
            cout,
            kernel,
            stride: 1,
            groups: 1,
            bias: true,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    /// Depthwise: one filter per channel.
    pub fn depthwise(channels: usize, kernel: usize) -> ConvShape {
        ConvShape::new(channels, channels, kernel).groups(channels)
    }

    pub fn param_count(&self) -> usize {
        let w = self.cout * (self.cin / self.groups) * self.kernel * self.kernel;
        w + if self.bias { self.cout } else { 0 }
    }
}

impl Conv2d {
    /// "Same" padding for odd kernels.
    pub fn new(name: &str, shape: ConvShape, init: Init, rng: &mut ChaCha8Rng) -> Conv2d {
        let cin_g = shape.cin / shape.groups;
        let k = shape.kernel;
        let wshape = [shape.cout, cin_g, k, k];
        let n: usize = wshape.iter().product();
        let fan_in = (cin_g * k * k) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let mut draw = |count: usize| -> Vec<f64> {
            match init {
                Init::KaimingUniform => (0..count)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
                Init::Zeros => vec![0.0; count],
            }
        };
        let weight = Param::new(format!("{name}.weight"), &wshape, draw(n));
        let bias = shape
            .bias
            .then(|| Param::new(format!("{name}.bias"), &[shape.cout], draw(shape.cout)));
        Conv2d {
            weight,
            bias,
            spec: Conv2dSpec {
                stride: shape.stride,
                padding: k / 2,
                groups: shape.groups,
            },
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(
            self.weight.value(),
            self.bias.as_ref().map(Param::value),
            self.spec,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Set weight and bias to zero.
    pub fn zero_out(&mut self) {
        let n = self.weight.numel();
        self.weight.set_data(vec![0.0; n]);
        if let Some(b) = &mut self.bias {
            let n = b.numel();
            b.set_data(vec![0.0; n]);
        }
    }
}

impl Module for Conv2d {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

pub const NORM_EPS: f64 = 1e-5;

/// Which axis a [`Norm`] layer normalises over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Across channels at each pixel.
    Channel,
    /// Across the spatial plane of each channel.
    Spatial,
}

/// Normalisation with per-channel affine (gamma = 1, beta = 0 at init).
#[derive(Debug, Clone)]
pub struct Norm {
    pub gamma: Param,
    pub beta: Param,
    pub kind: NormKind,
}

impl Norm {
    pub fn new(name: &str, channels: usize, kind: NormKind) -> Norm {
        Norm {
            gamma: Param::new(format!("{name}.gamma"), &[channels], vec![1.0; channels]),
            beta: Param::new(format!("{name}.beta"), &[channels], vec![0.0; channels]),
            kind,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self.kind {
            NormKind::Channel => x.layer_norm(self.gamma.value(), self.beta.value(), NORM_EPS),
            NormKind::Spatial => x.instance_norm(self.gamma.value(), self.beta.value(), NORM_EPS),
        }
    }
}

impl Module for Norm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Hash of every parameter value, for detecting unintended updates.
pub fn parameter_fingerprint<M: Module + ?Sized>(m: &M) -> u64 {
    // FNV-1a over the raw bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    m.visit(&mut |p| {
        for v in p.value().data() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    });
    h
}

/// Overwrite every parameter with small random values (tests use this to
/// escape zero-initialised output projections).
pub fn randomize<M: Module + ?Sized>(m: &mut M, scale: f64, rng: &mut ChaCha8Rng) {
    m.visit_mut(&mut |p| {
        let data = (0..p.numel())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        p.set_data(data);
    });
}
