//! Minimal dense layers over flat parameter vectors, with hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fully connected layer whose weights (row-major, `output × input`) and then biases
/// live at `offset` inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.output * (self.input + 1)
    }

    pub fn end(&self) -> usize {
        self.offset + self.len()
    }

    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.output * self.input]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset + self.output * self.input..self.end()]
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input);
        let w = self.weights(params);
        let b = self.bias(params);
        for (o, yo) in y.iter_mut().enumerate().take(self.output) {
            let row = &w[o * self.input..(o + 1) * self.input];
            *yo = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn apply(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.output];
        self.forward(params, x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and, if given, adds the input gradient into `dx`.
    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let wi = self.offset;
        let bi = self.offset + self.output * self.input;
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[wi + o * self.input..wi + (o + 1) * self.input];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
            grad[bi + o] += g;
        }
        if let Some(dx) = dx {
            let w = self.weights(params);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * self.input..(o + 1) * self.input];
                for (d, wv) in dx.iter_mut().zip(row) {
                    *d += g * wv;
                }
            }
        }
    }

    /// Uniform initialisation in ±1/√fan_in for weights and biases.
    pub fn init<R: Rng>(&self, params: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.input as f64).sqrt();
        for p in &mut params[self.offset..self.end()] {
            *p = rng.gen_range(-bound..bound);
        }
    }
}

/// Allocates consecutive [`Dense`] blocks.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    next: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dense(&mut self, input: usize, output: usize) -> Dense {
        let d = Dense {
            input,
            output,
            offset: self.next,
        };
        self.next = d.end();
        d
    }

    pub fn len(&self) -> usize {
        self.next
    }
}

pub fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Backpropagates through `y = tanh(a)` given the activations `y`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, g)| g * (1.0 - y * y)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Adaptive-moment optimiser over a flat parameter vector.
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
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut b = LayoutBuilder::new();
        let d = b.dense(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = vec![0.0; b.len()];
        d.init(&mut p, &mut rng);
        let x = [0.3, -1.2, 0.7];
        let dy = [0.5, -2.0];
        let loss = |p: &[f64]| d.apply(p, &x).iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
        let mut g = vec![0.0; p.len()];
        let mut dx = vec![0.0; 3];
        d.backward(&p, &x, &dy, &mut g, Some(&mut dx));
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += 1e-6;
            let up = loss(&q);
            q[i] -= 2e-6;
            let num = (up - loss(&q)) / 2e-6;
            assert!((num - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut a = Adam::new(3, 1e-3);
        let mut p = vec![0.1, -0.2, 0.3];
        let before = p.clone();
        a.step(&mut p, &[0.0; 3]);
        assert_eq!(p, before);
    }
}
