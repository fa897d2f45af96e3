//! Dense-network substrate: matrices, affine layers, layer normalization,
//! activations, binary cross-entropy and Adam.
//!
//! Backward passes are written by hand per layer. Each layer accumulates
//! into its own gradient buffers; callers zero them between steps.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod matrix;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_params, read_params, write_params, ParamRecord};
pub use gradcheck::{grad_check, grad_check_piecewise, relative_error, PiecewiseCheck, GRAD_CHECK_STEP};
pub use layers::{DenseLayer, NormCache, NormLayer};
pub use matrix::Matrix;

/// Lower and upper probability clamp used by [`bce_loss`].
pub const PROB_CLAMP: f64 = 1e-12;

/// One named parameter tensor with its gradient buffer.
pub struct ParamBlock<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub values: &'a mut [f64],
    pub grads: &'a mut [f64],
}

/// Anything that owns trainable parameters.
///
/// `visit_params` must always visit the same blocks in the same order;
/// optimizer state and checkpoints are keyed by that order.
pub trait Parameterized {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamBlock<'_>));

    fn zero_grads(&mut self) {
        self.visit_params(&mut |b| b.grads.fill(0.0));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |b| n += b.values.len());
        n
    }

    /// Flat copy of all parameter values in visit order.
    fn flat_params(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |b| out.extend_from_slice(b.values));
        out
    }

    fn flat_grads(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |b| out.extend_from_slice(b.grads));
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_params(&mut |b| {
            let n = b.values.len();
            b.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient through relu given the pre-activation.
pub fn relu_backward(pre: &Matrix, grad: &Matrix) -> Matrix {
    pre.zip_map(grad, |p, g| if p > 0.0 { g } else { 0.0 })
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean binary cross-entropy and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` first.
pub fn bce_loss(pred: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), labels.len());
    assert!(!pred.is_empty(), "bce_loss on empty batch");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(labels) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((-y / p + (1.0 - y) / (1.0 - p)) / n);
    }
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_on_small_inputs() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let s = softmax_rows(&Matrix::from_rows(&[vec![0.0, 0.0]]));
        assert_eq!(s.row(0), &[0.5, 0.5]);
        let r = relu(&Matrix::from_rows(&[vec![-1.0, 2.0]]));
        assert_eq!(r.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let s = softmax_rows(&Matrix::from_rows(&[vec![1000.0, 1000.0, -1000.0]]));
        assert!((s.get(0, 0) - 0.5).abs() < 1e-12);
        assert_eq!(s.get(0, 2), 0.0);
    }

    #[test]
    fn bce_reference_values() {
        let (l, _) = bce_loss(&[0.5], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_loss(&[1.0 - 1e-12], &[1.0]);
        assert!(l.abs() < 1e-11);
        // exactly 1.0 is clamped, not infinite
        let (l, _) = bce_loss(&[1.0], &[0.0]);
        assert!(l.is_finite() && l > 27.0);
    }

    #[test]
    fn bce_gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pred: Vec<f64> = (0..12).map(|_| rng.gen_range(0.05..0.95)).collect();
        let labels: Vec<f64> = (0..12).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let (_, analytic) = bce_loss(&pred, &labels);
        let err = grad_check(&mut pred, &analytic, |p| bce_loss(p, &labels).0);
        assert!(err < 1e-6, "relative error {err}");
    }
}
