//! Central finite-difference checks of analytic gradients.
//!
//! The numerical side only ever evaluates the forward function on perturbed
//! constant inputs, so it shares no code path with the backward rules it checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Module, Param};
use crate::tensor::{no_grad, Tensor};

/// Relative error with an absolute floor so that two tiny numbers compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// (input index, element index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradReport {
    fn record(&mut self, input: usize, elem: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((input, elem, analytic, numeric));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// Check d f / d inputs for a scalar-valued `f`, on every element or on
/// `max_probes` elements per input sampled with `seed`.
pub fn check_inputs(
    inputs: &[Tensor],
    f: impl Fn(&[Tensor]) -> Result<Tensor>,
    step: f64,
    max_probes: Option<usize>,
    seed: u64,
) -> Result<GradReport> {
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::parameter(t.shape(), t.to_vec()))
        .collect::<Result<_>>()?;
    f(&leaves)?.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| {
            l.grad()
                .map(|g| g.clone())
                .unwrap_or_else(|| vec![0.0; l.numel()])
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport::default();
    for (k, input) in inputs.iter().enumerate() {
        let probes = probe_indices(input.numel(), max_probes, &mut rng);
        for e in probes {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[e] += delta;
                let mut args: Vec<Tensor> = inputs.iter().map(Tensor::detach).collect();
                args[k] = Tensor::from_vec(input.shape(), data)?;
                no_grad(|| f(&args))?.item()
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            report.record(k, e, analytic[k][e], numeric);
        }
    }
    Ok(report)
}

/// Check d loss / d params of a module on `total_probes` parameter elements
/// drawn uniformly over all of its parameters.
pub fn check_module<M: Module>(
    module: &mut M,
    loss: impl Fn(&M) -> Result<Tensor>,
    step: f64,
    total_probes: usize,
    seed: u64,
) -> Result<GradReport> {
    module.zero_grad();
    loss(module)?.backward()?;
    let mut flat: Vec<(usize, usize, f64)> = Vec::new();
    {
        let params = module.parameters();
        for (pi, p) in params.iter().enumerate() {
            let g = p.grad_or_zeros();
            for (e, gv) in g.into_iter().enumerate() {
                flat.push((pi, e, gv));
            }
        }
    }
    module.zero_grad();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = probe_indices(flat.len(), Some(total_probes), &mut rng);
    let mut report = GradReport::default();
    for idx in chosen {
        let (pi, e, analytic) = flat[idx];
        let mut eval = |delta: f64| -> Result<f64> {
            nudge(module, pi, e, delta);
            let v = no_grad(|| loss(module)).and_then(|t| t.item());
            nudge(module, pi, e, -delta);
            v
        };
        let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
        report.record(pi, e, analytic, numeric);
    }
    Ok(report)
}

fn nudge<M: Module>(module: &mut M, param: usize, elem: usize, delta: f64) {
    let mut i = 0;
    module.visit_mut(&mut |p: &mut Param| {
        if i == param {
            let mut d = p.value().to_vec();
            d[elem] += delta;
            p.set_data(d);
        }
        i += 1;
    });
}

fn probe_indices(n: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < n => {
            let mut v = sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    }
}

/// Deterministic pseudo-random projection weights: reduces a tensor to a
/// scalar whose gradient is non-uniform.
pub fn projection(shape: &[usize], seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Σ wᵢ·tᵢ with weights from [`projection`].
pub fn project(t: &Tensor, seed: u64) -> Result<Tensor> {
    t.mul(&projection(t.shape(), seed))?.sum()
}
