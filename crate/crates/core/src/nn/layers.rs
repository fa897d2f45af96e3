use rand::Rng;

use super::{Matrix, ParamBlock};

/// Affine map `y = W x + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub grad_weights: Matrix,
    pub grad_bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_width: usize, out_width: usize) -> Self {
        DenseLayer {
            weights: Matrix::zeros(out_width, in_width),
            bias: vec![0.0; out_width],
            grad_weights: Matrix::zeros(out_width, in_width),
            grad_bias: vec![0.0; out_width],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_width: usize, out_width: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_width, out_width);
        let limit = (6.0 / (in_width + out_width) as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = rng.gen_range(-limit..=limit);
        }
        layer
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Self {
        assert_eq!(weights.rows(), bias.len());
        let (o, i) = (weights.rows(), weights.cols());
        DenseLayer {
            weights,
            bias,
            grad_weights: Matrix::zeros(o, i),
            grad_bias: vec![0.0; o],
        }
    }

    pub fn in_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, input: &Matrix) -> Matrix {
        assert_eq!(
            input.cols(),
            self.in_width(),
            "dense input width {} != layer width {}",
            input.cols(),
            self.in_width()
        );
        let (n, out_w) = (input.rows(), self.out_width());
        let mut out = Matrix::zeros(n, out_w);
        for i in 0..n {
            let x = input.row(i);
            let y = out.row_mut(i);
            for (o, yo) in y.iter_mut().enumerate() {
                let w = self.weights.row(o);
                *yo = self.bias[o] + dot(w, x);
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `input`.
    pub fn backward(&mut self, input: &Matrix, grad_out: &Matrix) -> Matrix {
        let (n, in_w, out_w) = (input.rows(), self.in_width(), self.out_width());
        assert_eq!((grad_out.rows(), grad_out.cols()), (n, out_w));
        let mut grad_in = Matrix::zeros(n, in_w);
        for i in 0..n {
            let x = input.row(i);
            let g = grad_out.row(i);
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                self.grad_bias[o] += go;
                let gw = self.grad_weights.row_mut(o);
                for (gwk, &xk) in gw.iter_mut().zip(x) {
                    *gwk += go * xk;
                }
                let w = self.weights.row(o);
                for (gik, &wk) in grad_in.row_mut(i).iter_mut().zip(w) {
                    *gik += go * wk;
                }
            }
        }
        grad_in
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamBlock<'_>)) {
        let shape = (self.weights.rows(), self.weights.cols());
        f(ParamBlock {
            name: format!("{prefix}.weights"),
            shape,
            values: self.weights.as_mut_slice(),
            grads: self.grad_weights.as_mut_slice(),
        });
        let out = self.bias.len();
        f(ParamBlock {
            name: format!("{prefix}.bias"),
            shape: (1, out),
            values: &mut self.bias,
            grads: &mut self.grad_bias,
        });
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-row layer normalization with learned gain and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub epsilon: f64,
    pub grad_gain: Vec<f64>,
    pub grad_shift: Vec<f64>,
}

/// Forward-pass state needed by [`NormLayer::backward`].
#[derive(Clone, Debug)]
pub struct NormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

impl NormLayer {
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(width: usize) -> Self {
        Self::with_epsilon(width, Self::DEFAULT_EPSILON)
    }

    pub fn with_epsilon(width: usize, epsilon: f64) -> Self {
        NormLayer {
            gain: vec![1.0; width],
            shift: vec![0.0; width],
            epsilon,
            grad_gain: vec![0.0; width],
            grad_shift: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, input: &Matrix) -> (Matrix, NormCache) {
        assert_eq!(input.cols(), self.width(), "norm width mismatch");
        let (n, w) = (input.rows(), input.cols());
        let mut normalized = Matrix::zeros(n, w);
        let mut out = Matrix::zeros(n, w);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let x = input.row(i);
            let mean = x.iter().sum::<f64>() / w as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let s = 1.0 / (var + self.epsilon).sqrt();
            inv_std.push(s);
            let xh = normalized.row_mut(i);
            for (h, &v) in xh.iter_mut().zip(x) {
                *h = (v - mean) * s;
            }
            let xh = normalized.row(i).to_vec();
            for (k, o) in out.row_mut(i).iter_mut().enumerate() {
                *o = xh[k] * self.gain[k] + self.shift[k];
            }
        }
        (
            out,
            NormCache {
                normalized,
                inv_std,
            },
        )
    }

    pub fn backward(&mut self, cache: &NormCache, grad_out: &Matrix) -> Matrix {
        let (n, w) = (grad_out.rows(), grad_out.cols());
        let mut grad_in = Matrix::zeros(n, w);
        let wf = w as f64;
        let mut dxhat = vec![0.0; w];
        for i in 0..n {
            let g = grad_out.row(i);
            let xh = cache.normalized.row(i);
            for k in 0..w {
                self.grad_gain[k] += g[k] * xh[k];
                self.grad_shift[k] += g[k];
                dxhat[k] = g[k] * self.gain[k];
            }
            let sum_d: f64 = dxhat.iter().sum();
            let sum_dx: f64 = dxhat.iter().zip(xh).map(|(d, x)| d * x).sum();
            let s = cache.inv_std[i];
            for (k, gi) in grad_in.row_mut(i).iter_mut().enumerate() {
                *gi = s / wf * (wf * dxhat[k] - sum_d - xh[k] * sum_dx);
            }
        }
        grad_in
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamBlock<'_>)) {
        let w = self.width();
        f(ParamBlock {
            name: format!("{prefix}.gain"),
            shape: (1, w),
            values: &mut self.gain,
            grads: &mut self.grad_gain,
        });
        f(ParamBlock {
            name: format!("{prefix}.shift"),
            shape: (1, w),
            values: &mut self.shift,
            grads: &mut self.grad_shift,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn dense_forward_hand_values() {
        let id = DenseLayer::from_parts(Matrix::identity(2), vec![0.0, 0.0]);
        let x = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.0, 3.0]]);
        assert_eq!(id.forward(&x), x);

        let zero = DenseLayer::from_parts(Matrix::zeros(2, 2), vec![7.0, -1.0]);
        assert_eq!(zero.forward(&x).row(1), &[7.0, -1.0]);

        let l = DenseLayer::from_parts(Matrix::from_rows(&[vec![3.0, 4.0]]), vec![1.0]);
        let y = l.forward(&Matrix::from_rows(&[vec![1.0, 2.0]]));
        assert_eq!(y.row(0), &[12.0]);
    }

    #[test]
    fn norm_forward_cases() {
        let n = NormLayer::new(3);
        let (y, _) = n.forward(&Matrix::from_rows(&[vec![2.0, 2.0, 2.0]]));
        assert_eq!(y.row(0), &[0.0, 0.0, 0.0]);

        let n = NormLayer::with_epsilon(2, 1e-14);
        let (y, _) = n.forward(&Matrix::from_rows(&[vec![-1.0, 1.0]]));
        assert!((y.get(0, 0) + 1.0).abs() < 1e-9 && (y.get(0, 1) - 1.0).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut n = NormLayer::new(6);
        for k in 0..6 {
            n.shift[k] = rng.gen_range(-1.0..1.0);
            n.gain[k] = rng.gen_range(0.5..1.5);
        }
        let x = random_matrix(1, 6, &mut rng);
        let (y, cache) = n.forward(&x);
        // mean of gain*xhat + shift == mean(shift) + mean(gain*xhat)
        let xh = cache.normalized.row(0);
        assert!(xh.iter().sum::<f64>().abs() < 1e-12);
        let expect = n.shift.iter().sum::<f64>() / 6.0
            + xh.iter().zip(&n.gain).map(|(a, b)| a * b).sum::<f64>() / 6.0;
        let got = y.row(0).iter().sum::<f64>() / 6.0;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = DenseLayer::glorot(4, 3, &mut rng);
        let x = random_matrix(5, 4, &mut rng);
        let proj = random_matrix(5, 3, &mut rng);
        let objective = |l: &DenseLayer, x: &Matrix| -> f64 {
            let y = l.forward(x);
            y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
        };
        let grad_in = layer.backward(&x, &proj);

        let analytic = layer.grad_weights.as_slice().to_vec();
        let mut w = layer.weights.as_slice().to_vec();
        let err = grad_check(&mut w, &analytic, |w| {
            let mut l = layer.clone();
            l.weights.as_mut_slice().copy_from_slice(w);
            objective(&l, &x)
        });
        assert!(err < 1e-6, "weights {err}");

        let mut xs = x.as_slice().to_vec();
        let err = grad_check(&mut xs, grad_in.as_slice(), |xs| {
            objective(&layer, &Matrix::from_vec(5, 4, xs.to_vec()))
        });
        assert!(err < 1e-6, "input {err}");
    }

    #[test]
    fn norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = NormLayer::new(5);
        for k in 0..5 {
            layer.gain[k] = rng.gen_range(0.5..1.5);
            layer.shift[k] = rng.gen_range(-0.5..0.5);
        }
        let x = random_matrix(4, 5, &mut rng);
        let proj = random_matrix(4, 5, &mut rng);
        let objective = |l: &NormLayer, x: &Matrix| -> f64 {
            let (y, _) = l.forward(x);
            y.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer.forward(&x);
        let grad_in = layer.backward(&cache, &proj);

        let mut xs = x.as_slice().to_vec();
        let err = grad_check(&mut xs, grad_in.as_slice(), |xs| {
            objective(&layer, &Matrix::from_vec(4, 5, xs.to_vec()))
        });
        assert!(err < 1e-4, "input {err}");

        let mut g = layer.gain.clone();
        let analytic = layer.grad_gain.clone();
        let err = grad_check(&mut g, &analytic, |g| {
            let mut l = layer.clone();
            l.gain.copy_from_slice(g);
            objective(&l, &x)
        });
        assert!(err < 1e-6, "gain {err}");
    }
}
