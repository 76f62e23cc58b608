//! Finite-difference verification of the analytic gradients.

use super::layers::bce_with_logits;
use super::model::{NeuralModel, PairInput};

pub const STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Largest relative error between the analytic loss gradient and central differences
/// over every parameter, for one labelled example.
pub fn grad_check<M: NeuralModel>(model: &M, x: &PairInput, label: f64) -> f64 {
    let mut grad = model.zeros_like();
    model.accumulate(x, label, 1.0, &mut grad);
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.data.to_vec()).collect();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_tensors = model.tensors().len();
    for t in 0..n_tensors {
        let len = model.tensors()[t].data.len();
        for i in 0..len {
            let orig = probe.tensors_mut()[t][i];
            probe.tensors_mut()[t][i] = orig + STEP;
            let up = bce_with_logits(probe.logit(x), label);
            probe.tensors_mut()[t][i] = orig - STEP;
            let down = bce_with_logits(probe.logit(x), label);
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[flat], numeric));
            flat += 1;
        }
    }
    worst
}
