//! Layer primitives with hand-written backward passes.

use crate::tensor::{fl, Matrix, Scalar};

/// tanh-approximation GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = fl::<T>(0.7978845608028654); // sqrt(2/pi)
    let k = fl::<T>(0.044715);
    let u = c * (x + k * x * x * x);
    fl::<T>(0.5) * x * (T::one() + u.tanh())
}

/// d gelu(x) / dx for the tanh approximation.
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = fl::<T>(0.7978845608028654);
    let k = fl::<T>(0.044715);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + fl::<T>(3.0) * k * x * x);
    fl::<T>(0.5) * (T::one() + t) + fl::<T>(0.5) * x * (T::one() - t * t) * du
}

/// Numerically stable softmax over a slice, in place.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Backward through softmax for one row: given probabilities `p` and
/// upstream `dp`, writes `ds_j = p_j (dp_j - Σ_k p_k dp_k)` into `out`.
pub fn softmax_backward_row<T: Scalar>(p: &[T], dp: &[T], out: &mut [T]) {
    let dot: T = p.iter().zip(dp.iter()).map(|(&a, &b)| a * b).sum();
    for ((o, &pi), &di) in out.iter_mut().zip(p.iter()).zip(dp.iter()) {
        *o = pi * (di - dot);
    }
}

/// Affine layer `y = x·W + b` with `W: [in × out]`, `b: [1 × out]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut y = x.matmul(&self.weight);
        y.add_row_bias(self.bias.row(0));
        y
    }

    /// Returns `dx` and accumulates `dW`, `db` into `grad`.
    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut Linear<T>) -> Matrix<T> {
        grad.weight.add_assign(&x.matmul_at(dy));
        for (g, s) in grad.bias.row_mut(0).iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
        dy.matmul_bt(&self.weight)
    }
}

/// Per-position layer normalization parameters, `scale`/`shift: [1 × dim]`.
#[derive(Clone, Debug)]
pub struct LayerNorm<T> {
    pub scale: Matrix<T>,
    pub shift: Matrix<T>,
}

/// Activations cached by the layer-norm forward pass.
pub struct NormTrace<T> {
    pub normalized: Matrix<T>,
    pub inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn identity(dim: usize) -> Self {
        LayerNorm {
            scale: Matrix::filled(1, dim, T::one()),
            shift: Matrix::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Matrix<T>, eps: T) -> (Matrix<T>, NormTrace<T>) {
        let (rows, dim) = (x.rows(), x.cols());
        let inv_dim = T::one() / fl::<T>(dim as f64);
        let mut normalized = Matrix::zeros(rows, dim);
        let mut out = Matrix::zeros(rows, dim);
        let mut inv_std = vec![T::zero(); rows];
        let scale = self.scale.row(0);
        let shift = self.shift.row(0);
        for (r, slot) in inv_std.iter_mut().enumerate() {
            let row = x.row(r);
            let mean = row.iter().cloned().sum::<T>() * inv_dim;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_dim;
            let inv = T::one() / (var + eps).sqrt();
            *slot = inv;
            let n_row = normalized.row_mut(r);
            let o_row = out.row_mut(r);
            for c in 0..dim {
                let xhat = (row[c] - mean) * inv;
                n_row[c] = xhat;
                o_row[c] = scale[c] * xhat + shift[c];
            }
        }
        (
            out,
            NormTrace {
                normalized,
                inv_std,
            },
        )
    }

    /// Returns `dx` and accumulates `dscale`, `dshift` into `grad`.
    pub fn backward(
        &self,
        dy: &Matrix<T>,
        trace: &NormTrace<T>,
        grad: &mut LayerNorm<T>,
    ) -> Matrix<T> {
        let (rows, dim) = (dy.rows(), dy.cols());
        let inv_dim = T::one() / fl::<T>(dim as f64);
        let mut dx = Matrix::zeros(rows, dim);
        let scale = self.scale.row(0);
        for (r, &inv) in trace.inv_std.iter().enumerate().take(rows) {
            let dy_row = dy.row(r);
            let xhat = trace.normalized.row(r);
            // g = dy * scale; dx = inv * (g - mean(g) - xhat * mean(g * xhat))
            let mut g_mean = T::zero();
            let mut gx_mean = T::zero();
            for c in 0..dim {
                let g = dy_row[c] * scale[c];
                g_mean += g;
                gx_mean += g * xhat[c];
            }
            g_mean *= inv_dim;
            gx_mean *= inv_dim;
            let dx_row = dx.row_mut(r);
            for c in 0..dim {
                let g = dy_row[c] * scale[c];
                dx_row[c] = inv * (g - g_mean - xhat[c] * gx_mean);
            }
            let ds = grad.scale.row_mut(0);
            let db = grad.shift.row_mut(0);
            for c in 0..dim {
                ds[c] += dy_row[c] * xhat[c];
                db[c] += dy_row[c];
            }
        }
        dx
    }
}
