//! Fully connected ReLU network with hand-written reverse mode, and Adam.
//!
//! Parameters live in one flat vector: for each layer the weight matrix
//! (row-major, `out x in`) followed by its bias.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}

fn check(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Shape { expected, got })
    }
}

pub const HIDDEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of one forward pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |a| a.as_slice())
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Mlp::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / math::sqrt(w[0] as f64);
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = rng.random_range(-bound..bound);
            }
            off += n;
        }
        net
    }

    /// `[input, 20, 20, output]`.
    pub fn standard<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Mlp::init(&[input, HIDDEN, HIDDEN, output], rng)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
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

    pub fn forward<'c>(&self, x: &[f64], cache: &'c mut Cache) -> Result<&'c [f64], NnError> {
        check(self.input_len(), x.len())?;
        let layers = self.sizes.len() - 1;
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut z = b[j];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    z += wi * xi;
                }
                if l + 1 < layers && z < 0.0 {
                    z = 0.0;
                }
                out.push(z);
            }
        }
        Ok(cache.output())
    }

    /// Single-call convenience returning an owned output.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cache = Cache::default();
        Ok(self.forward(x, &mut cache)?.to_vec())
    }

    /// Adds d(output . dout)/d(params) into `grads`.
    pub fn backward(&self, cache: &mut Cache, dout: &[f64], grads: &mut [f64]) -> Result<(), NnError> {
        check(self.output_len(), dout.len())?;
        check(self.num_params(), grads.len())?;
        let layers = self.sizes.len() - 1;
        check(layers + 1, cache.acts.len())?;
        cache.deltas.resize_with(layers, Vec::new);
        cache.deltas[layers - 1].clear();
        cache.deltas[layers - 1].extend_from_slice(dout);
        let mut off = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let input = &cache.acts[l];
            let (lower, upper) = cache.deltas.split_at_mut(l);
            let delta = &upper[0];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                for (g, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input.iter()) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let below = &mut lower[l - 1];
                below.clear();
                below.resize(n_in, 0.0);
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    for (b, wi) in below.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *b += d * wi;
                    }
                }
                for (b, &a) in below.iter_mut().zip(input.iter()) {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    /// Bias-corrected descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        check(self.m.len(), params.len())?;
        check(self.m.len(), grads.len())?;
        self.t += 1;
        let c1 = 1.0 - math::powi(self.beta1, self.t as i32);
        let c2 = 1.0 - math::powi(self.beta2, self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn fd_check(net: &Mlp, x: &[f64], dout: &[f64]) -> f64 {
        let mut cache = Cache::default();
        net.forward(x, &mut cache).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&mut cache, dout, &mut grads).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let objective = |n: &Mlp| -> f64 { n.predict(x).unwrap().iter().zip(dout).map(|(o, d)| o * d).sum() };
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Mlp::zeros(&[5, 20, 20, 3]);
        assert_eq!(net.predict(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn single_linear_layer() {
        let mut net = Mlp::zeros(&[2, 1]);
        net.params_mut().copy_from_slice(&[2.0, -1.0, 0.5]);
        assert_eq!(net.predict(&[3.0, 4.0]).unwrap(), [2.5]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::standard(10, 6, &mut rng);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2]);
        assert_eq!(net.predict(&[1.0]), Err(NnError::Shape { expected: 3, got: 1 }));
        let mut cache = Cache::default();
        net.forward(&[1.0, 2.0, 3.0], &mut cache).unwrap();
        let mut g = vec![0.0; net.num_params()];
        assert!(net.backward(&mut cache, &[1.0], &mut g).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let net = Mlp::standard(10, 6, &mut rng);
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dout: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = fd_check(&net, &x, &dout);
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::standard(4, 3, &mut rng);
        let mut cache = Cache::default();
        net.forward(&[0.1, 0.2, 0.3, 0.4], &mut cache).unwrap();
        let mut g = vec![0.0; net.num_params()];
        net.backward(&mut cache, &[0.0; 3], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_add_over_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::standard(4, 2, &mut rng);
        let (xa, xb) = ([0.5, -0.1, 0.9, 0.0], [1.0, 1.0, -1.0, 0.3]);
        let dout = [0.7, -0.2];
        let mut cache = Cache::default();
        let mut both = vec![0.0; net.num_params()];
        for x in [&xa, &xb] {
            net.forward(x, &mut cache).unwrap();
            net.backward(&mut cache, &dout, &mut both).unwrap();
        }
        let mut ga = vec![0.0; net.num_params()];
        net.forward(&xa, &mut cache).unwrap();
        net.backward(&mut cache, &dout, &mut ga).unwrap();
        let mut gb = vec![0.0; net.num_params()];
        net.forward(&xb, &mut cache).unwrap();
        net.backward(&mut cache, &dout, &mut gb).unwrap();
        for i in 0..both.len() {
            assert!((both[i] - (ga[i] + gb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, 0.1);
        let mut p = [1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_the_sign() {
        let mut adam = Adam::new(3, 0.01);
        let mut p = [0.0; 3];
        adam.step(&mut p, &[0.5, -3.0, 1e-3]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps)
        let expected = [-0.01 * 0.5 / (0.5 + 1e-8), 0.01 * 3.0 / (3.0 + 1e-8), -0.01 * 1e-3 / (1e-3 + 1e-8)];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = Adam::new(2, 0.05);
        let mut b = a.clone();
        let (mut pa, mut pb) = ([1.0, 2.0], [1.0, 2.0]);
        for g in [[0.1, -0.4], [0.3, 0.2], [-1.0, 0.0]] {
            a.step(&mut pa, &g).unwrap();
            b.step(&mut pb, &g).unwrap();
        }
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }
}
