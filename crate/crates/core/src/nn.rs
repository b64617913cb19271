//! Minimal dense networks with hand-written backpropagation and Adam.
//!
//! Parameters live in one flat vector so they can be hashed, checkpointed
//! and updated by a single optimizer. Layout per layer: weights row-major
//! (`out × in`) followed by biases (`out`).

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Feed-forward network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Layer activations recorded by [`Mlp::forward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `layers[0]` is the input; the last entry is the network output.
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace always holds the input")
    }
}

impl Mlp {
    /// Builds a network with scaled Gaussian initialisation. `output_gain`
    /// shrinks the last layer (small values keep fresh policies near-uniform).
    pub fn new(sizes: &[usize], activation: Activation, output_gain: f64, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n_params = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(n_params);
        let n_layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l + 1 == n_layers { output_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std.max(1e-12)).expect("finite std");
            for _ in 0..fan_in * fan_out {
                params.push(normal.sample(rng));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        }
    }

    /// All-zero network of the given shape.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        let n_params = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; n_params],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let mut x = input.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut y = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < n_layers {
                for v in &mut y {
                    *v = self.activation.apply(*v);
                }
            }
            offset += n_in * n_out + n_out;
            x = y;
        }
        x
    }

    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &layers[l];
            let mut y = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < n_layers {
                for v in &mut y {
                    *v = self.activation.apply(*v);
                }
            }
            offset += n_in * n_out + n_out;
            layers.push(y);
        }
        Trace { layers }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`,
    /// and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_layers {
                let y = &trace.layers[l + 1];
                for (d, yv) in delta.iter_mut().zip(y) {
                    *d *= self.activation.derivative_from_output(*yv);
                }
            }
            let x = &trace.layers[l];
            let offset = offsets[l];
            let w = &self.params[offset..offset + n_in * n_out];
            {
                let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        delta
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Gradient-descent step: `params -= lr * m̂ / (√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax, stable for large logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.forward(x)
            .iter()
            .zip(target)
            .map(|(y, t)| 0.5 * (y - t).powi(2))
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(11);
        for act in [Activation::Tanh, Activation::Relu] {
            let net = Mlp::new(&[3, 5, 4, 2], act, 1.0, &mut rng);
            let x = [0.3, -0.7, 1.1];
            let target = [0.5, -0.2];
            let trace = net.forward_trace(&x);
            let gout: Vec<f64> = trace.output().iter().zip(&target).map(|(y, t)| y - t).collect();
            let mut grad = vec![0.0; net.num_params()];
            let gin = net.backward(&trace, &gout, &mut grad);
            let h = 1e-6;
            for i in 0..net.num_params() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (loss(&plus, &x, &target) - loss(&minus, &x, &target)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
            }
            for j in 0..3 {
                let mut xp = x;
                xp[j] += h;
                let mut xm = x;
                xm[j] -= h;
                let fd = (loss(&net, &xp, &target) - loss(&net, &xm, &target)) / (2.0 * h);
                assert!((fd - gin[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn trace_and_forward_agree() {
        let mut rng = seeded(2);
        let net = Mlp::new(&[4, 8, 3], Activation::Tanh, 0.5, &mut rng);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x), net.forward_trace(&x).output());
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3);
    }

    #[test]
    fn softmax_is_normalised_and_stable() {
        let p = softmax(&[1000.0, 1001.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[1000.0, 1001.0]);
        assert!((lp[1] - (-(1.0f64 + (-1.0f64).exp()).ln())).abs() < 1e-12);
    }
}
