//! Dense layers, activations and the logistic loss, with hand-written gradients.

use rand::Rng;

use crate::matrix::dot;

/// Fully connected layer `y = W x + b`, with `W` stored row-major as `n_out x n_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// Weights uniform in `±sqrt(3 / n_in)`, biases zero.
    pub fn init<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let mut d = Dense::zeros(n_in, n_out);
        fill_uniform(&mut d.w, n_in, rng);
        d
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        for (o, yo) in y.iter_mut().enumerate() {
            *yo = dot(&self.w[o * self.n_in..(o + 1) * self.n_in], x) + self.b[o];
        }
    }

    /// Accumulates parameter gradients into `grad` and, if asked, writes `dL/dx` into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let row = &mut grad.w[o * self.n_in..(o + 1) * self.n_in];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                for (d, wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
    }
}

pub fn fill_uniform<R: Rng>(values: &mut [f64], fan_in: usize, rng: &mut R) {
    let limit = (3.0 / fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-limit..limit);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, computed stably.
pub fn bce_with_logits(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// `d bce / d logit`.
pub fn bce_grad(logit: f64, label: f64) -> f64 {
    sigmoid(logit) - label
}
