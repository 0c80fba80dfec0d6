//! Multilayer perceptrons with analytic backpropagation, Adam, and finite-difference checks.
//!
//! Parameters live in one flat vector. Layer `k` stores its weight matrix row-major
//! (`fan_out × fan_in`) followed by its bias vector.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::io::{read_json, write_json};
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Layer outputs of a batched forward pass, kept for `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    /// `layers[0]` is the input, `layers[k + 1]` the post-activation output of layer `k`.
    pub layers: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("cache holds the input at least")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// A network with all parameters zero.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Dimension {
                context: "activations per layer",
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Uniform fan-in initialization in `±sqrt(1/fan_in)`.
    pub fn init<R: Rng>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for k in 0..net.layer_count() {
            let bound = (1.0 / net.sizes[k] as f64).sqrt();
            let (w, b) = net.layer_ranges(k);
            for p in &mut net.params[w.start..b.end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_parts(sizes: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(&sizes, &activations)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    /// Index ranges of the weight matrix and bias vector of layer `k`.
    pub fn layer_ranges(&self, k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.sizes[..k + 1].windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Multiplies the weights and bias of layer `k` by `factor`.
    pub fn scale_layer(&mut self, k: usize, factor: f64) {
        let (w, b) = self.layer_ranges(k);
        self.params[w.start..b.end].iter_mut().for_each(|p| *p *= factor);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, 1)?.layers.pop().expect("non-empty"))
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<ForwardCache> {
        if x.len() != batch * self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: batch * self.input_dim(),
                got: x.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(x.to_vec());
        for k in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let (w, b) = self.layer_ranges(k);
            let weights = &self.params[w];
            let bias = &self.params[b];
            let input = &layers[k];
            let mut out = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            // out[batch × fan_out] += input[batch × fan_in] · Wᵀ
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_in,
                    fan_out,
                    1.0,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    weights.as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    out.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            let act = self.activations[k];
            if act != Activation::Identity {
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            layers.push(out);
        }
        Ok(ForwardCache { batch, layers })
    }

    /// Accumulates into `grad` the gradient of `Σ upstream ⊙ output` with respect to the
    /// parameters. `upstream` is row-major `batch × output_dim`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        let batch = cache.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Dimension {
                context: "upstream gradient",
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "gradient buffer",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut delta = upstream.to_vec();
        for k in (0..self.layer_count()).rev() {
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            let act = self.activations[k];
            if act != Activation::Identity {
                for (d, y) in delta.iter_mut().zip(&cache.layers[k + 1]) {
                    *d *= act.derivative_from_output(*y);
                }
            }
            let (w, b) = self.layer_ranges(k);
            let input = &cache.layers[k];
            // dW[fan_out × fan_in] += deltaᵀ · input
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    batch,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    1.0,
                    grad[w.clone()].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let gb = &mut grad[b];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if k > 0 {
                // delta_prev[batch × fan_in] = delta · W
                let mut prev = vec![0.0; batch * fan_in];
                unsafe {
                    matrixmultiply::dgemm(
                        batch,
                        fan_out,
                        fan_in,
                        1.0,
                        delta.as_ptr(),
                        fan_out as isize,
                        1,
                        self.params[w].as_ptr(),
                        fan_in as isize,
                        1,
                        0.0,
                        prev.as_mut_ptr(),
                        fan_in as isize,
                        1,
                    );
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let net: Mlp = read_json(path)?;
        Self::from_parts(net.sizes, net.activations, net.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient as `c·θ`.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One bias-corrected Adam step. Rejects non-finite gradients without touching state.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                context: "adam update",
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i} is {}", grads[i])));
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] + c.weight_decay * params[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so that its Euclidean norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Central finite-difference gradient of `f` at `params`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_formula() {
        assert_eq!(param_count(&[12, 64, 64, 1]), 13 * 64 + 65 * 64 + 65);
        let net = Mlp::zeros(&[3, 4, 2], &[Activation::Tanh, Activation::Identity]).unwrap();
        assert_eq!(net.param_len(), 4 * 4 + 5 * 2);
        let (w, b) = net.layer_ranges(1);
        assert_eq!((w.start, w.end, b.end), (16, 24, 26));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[5, 7, 3], &[Activation::LeakyRelu, Activation::Identity]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut params = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_parts(vec![3, 3], vec![Activation::Identity], params).unwrap();
        assert_eq!(net.forward(&[0.25, -4.0, 7.5]).unwrap(), vec![0.25, -4.0, 7.5]);
    }

    #[test]
    fn leaky_relu_slope() {
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.01);
        assert_eq!(Activation::LeakyRelu.apply(2.0), 2.0);
    }

    #[test]
    fn linear_unit_gradient_is_input() {
        let net = Mlp::from_parts(vec![1, 1], vec![Activation::Identity], vec![0.7, 0.0]).unwrap();
        let cache = net.forward_batch(&[3.25], 1).unwrap();
        let mut g = vec![0.0; 2];
        net.backward(&cache, &[1.0], &mut g).unwrap();
        assert_eq!(g, vec![3.25, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&[4, 6, 2], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
        let cache = net
            .forward_batch(&[0.1, 0.2, 0.3, 0.4, -1.0, 0.0, 2.0, 1.0], 2)
            .unwrap();
        let mut g = vec![0.0; net.param_len()];
        net.backward(&cache, &[0.0; 4], &mut g).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for acts in [
            [Activation::LeakyRelu, Activation::LeakyRelu, Activation::Identity],
            [Activation::Tanh, Activation::Tanh, Activation::Identity],
        ] {
            let sizes = [3, 5, 4, 2];
            let net = Mlp::init(&sizes, &acts, &mut rng).unwrap();
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let up: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cache = net.forward_batch(&x, 3).unwrap();
            let mut g = vec![0.0; net.param_len()];
            net.backward(&cache, &up, &mut g).unwrap();
            let objective = |p: &[f64]| {
                let n = Mlp::from_parts(sizes.to_vec(), acts.to_vec(), p.to_vec()).unwrap();
                let out = n.forward_batch(&x, 3).unwrap();
                out.output().iter().zip(&up).map(|(o, u)| o * u).sum::<f64>()
            };
            let fd = finite_difference(objective, net.params(), 1e-5);
            assert!(relative_error(&g, &fd) < 1e-6, "{}", relative_error(&g, &fd));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig::new(0.01, 0.0), 2);
        let mut p = vec![1.0, -1.0];
        adam.update(&mut p, &[1.0, -3.0]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), 3);
        let mut p = vec![0.5, 2.0, -7.0];
        adam.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, 2.0, -7.0]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut adam = Adam::new(AdamConfig::new(0.1, 0.0), 2);
        let mut p = vec![0.0, 0.0];
        assert!(adam.update(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::init(&[12, 8, 1], &[Activation::LeakyRelu, Activation::Identity], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        assert_eq!(Mlp::load_json(&path).unwrap(), net);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
