//! Differentiable building blocks.
//!
//! Backpropagation is hand-written per layer: every `forward` is a pure
//! function of its inputs, and the matching `backward` receives whatever
//! the caller kept from the forward pass.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to this floor before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Fully connected layer `y = x Wᵀ + b` with `W` stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
    pub grad_weight: Matrix<T>,
    pub grad_bias: Matrix<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: Matrix::zeros(1, out_dim),
            grad_weight: Matrix::zeros(out_dim, in_dim),
            grad_bias: Matrix::zeros(1, out_dim),
        }
    }

    /// He initialization: weights ~ N(0, 2 / fan_in), zero bias.
    pub fn he<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let std = (2.0 / in_dim.max(1) as f64).sqrt();
        for w in layer.weight.as_mut_slice() {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::c(z * std);
        }
        layer
    }

    /// Builds a layer from explicit weight (`out x in`) and bias values.
    pub fn from_parts(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dim("Affine::from_parts", weight.rows(), bias.len()));
        }
        let (out_dim, in_dim) = weight.shape();
        Ok(Self {
            grad_weight: Matrix::zeros(out_dim, in_dim),
            grad_bias: Matrix::zeros(1, out_dim),
            bias: Matrix::from_vec(1, out_dim, bias)?,
            weight,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let in_dim = self.in_dim();
        if x.cols() != in_dim {
            return Err(Error::dim("Affine::forward", in_dim, x.cols()));
        }
        let out_dim = self.out_dim();
        let w = self.weight.as_slice();
        let b = self.bias.as_slice();
        let mut out = Matrix::zeros(x.rows(), out_dim);
        let mut nz: Vec<(usize, T)> = Vec::with_capacity(in_dim);
        for r in 0..x.rows() {
            // Bag-of-words inputs are mostly zero; gather the support once per row.
            nz.clear();
            nz.extend(
                x.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != T::zero())
                    .map(|(i, &v)| (i, v)),
            );
            let out_row = out.row_mut(r);
            for (o, y) in out_row.iter_mut().enumerate() {
                let w_row = &w[o * in_dim..(o + 1) * in_dim];
                let mut acc = b[o];
                for &(i, v) in &nz {
                    acc += w_row[i] * v;
                }
                *y = acc;
            }
        }
        Ok(out)
    }

    /// Backward pass for `forward(x)` given `dL/dy`.
    ///
    /// Accumulates into the gradient buffers when `accumulate` is set and
    /// returns `dL/dx` when `input_grad` is set.
    pub fn backward(
        &mut self,
        x: &Matrix<T>,
        grad_out: &Matrix<T>,
        accumulate: bool,
        input_grad: bool,
    ) -> Result<Option<Matrix<T>>> {
        let (in_dim, out_dim) = (self.in_dim(), self.out_dim());
        if x.cols() != in_dim || grad_out.cols() != out_dim || x.rows() != grad_out.rows() {
            return Err(Error::dim(
                "Affine::backward",
                format!("x: b x {in_dim}, grad: b x {out_dim}"),
                format!("x: {:?}, grad: {:?}", x.shape(), grad_out.shape()),
            ));
        }
        if accumulate {
            let gw = self.grad_weight.as_mut_slice();
            let gb = self.grad_bias.as_mut_slice();
            for r in 0..x.rows() {
                let g = grad_out.row(r);
                for (o, &go) in g.iter().enumerate() {
                    gb[o] += go;
                }
                for (i, &v) in x.row(r).iter().enumerate() {
                    if v == T::zero() {
                        continue;
                    }
                    for (o, &go) in g.iter().enumerate() {
                        gw[o * in_dim + i] += go * v;
                    }
                }
            }
        }
        if !input_grad {
            return Ok(None);
        }
        Ok(Some(self.input_grad(grad_out)))
    }

    fn input_grad(&self, grad_out: &Matrix<T>) -> Matrix<T> {
        let in_dim = self.in_dim();
        let w = self.weight.as_slice();
        let mut gx = Matrix::zeros(grad_out.rows(), in_dim);
        for r in 0..grad_out.rows() {
            let gx_row = gx.row_mut(r);
            for (o, &go) in grad_out.row(r).iter().enumerate() {
                if go == T::zero() {
                    continue;
                }
                for (dst, &wv) in gx_row.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                    *dst += go * wv;
                }
            }
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(T::zero());
        self.grad_bias.fill(T::zero());
    }
}

pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] evaluated at the pre-activation `x`.
pub fn relu_backward<T: Scalar>(x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("{:?}", x.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        m.set(r, l, T::one());
    }
    m
}

/// Mean negative log-likelihood of the one-hot targets.
pub fn cross_entropy<T: Scalar>(probs: &Matrix<T>, onehot: &Matrix<T>) -> Result<T> {
    if probs.shape() != onehot.shape() {
        return Err(Error::dim(
            "cross_entropy",
            format!("{:?}", probs.shape()),
            format!("{:?}", onehot.shape()),
        ));
    }
    let labels = onehot.argmax_rows();
    Ok(cross_entropy_labels(probs, &labels))
}

/// [`cross_entropy`] with class indices instead of one-hot rows.
pub fn cross_entropy_labels<T: Scalar>(probs: &Matrix<T>, labels: &[usize]) -> T {
    if labels.is_empty() {
        return T::zero();
    }
    let floor = T::c(LOG_FLOOR);
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(floor).ln())
        .sum();
    total / T::from_count(labels.len())
}

/// Gradient of `scale * sum_rows(-ln p[label])` with respect to the logits
/// that produced `probs` through softmax.
///
/// Rows whose true-class probability sits under the clamp floor contribute
/// nothing, matching the clamped loss.
pub fn softmax_nll_grad<T: Scalar>(probs: &Matrix<T>, labels: &[usize], scale: T) -> Matrix<T> {
    let floor = T::c(LOG_FLOOR);
    let mut g = probs.scale(scale);
    for (r, &l) in labels.iter().enumerate() {
        if probs.get(r, l) < floor {
            g.row_mut(r).fill(T::zero());
        } else {
            let v = g.get(r, l) - scale;
            g.set(r, l, v);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn affine_identity_and_hand_cases() {
        let id = Affine::from_parts(Matrix::<f64>::identity(2), vec![0.0, 0.0]).unwrap();
        let y = id.forward(&Matrix::from_f64(&[[3.0, 4.0]])).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 4.0]);

        let l = Affine::from_parts(Matrix::<f64>::from_f64(&[[1.0, 1.0], [1.0, -1.0]]), vec![0.0, 0.0])
            .unwrap();
        let y = l.forward(&Matrix::from_f64(&[[2.0, 1.0]])).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = Affine::<f64>::he(5, 3, &mut rng);
        let mut layer = layer;
        for b in layer.bias.as_mut_slice() {
            *b = rng.random_range(-1.0..1.0);
        }
        let x = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap();
        let y = layer.forward(&x).unwrap();
        for b in 0..4 {
            for o in 0..3 {
                let mut acc = layer.bias.get(0, o);
                for i in 0..5 {
                    acc += layer.weight.get(o, i) * x.get(b, i);
                }
                assert!((y.get(b, o) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_rejects_wrong_width() {
        let layer = Affine::<f64>::zeros(3, 2);
        assert!(matches!(
            layer.forward(&Matrix::zeros(1, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn relu_cases() {
        let x = Matrix::<f64>::from_f64(&[[-1.0, 0.0, 2.0]]);
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);

        let neg = Matrix::<f64>::from_f64(&[[-3.0, -0.5]]);
        assert!(relu(&neg).as_slice().iter().all(|&v| v == 0.0));
        let g = relu_backward(&neg, &Matrix::filled(1, 2, 1.0)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));

        let g = relu_backward(
            &Matrix::<f64>::from_f64(&[[1.0, -1.0]]),
            &Matrix::from_f64(&[[5.0, 5.0]]),
        )
        .unwrap();
        assert_eq!(g.as_slice(), &[5.0, 0.0]);
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&Matrix::<f64>::from_f64(&[[0.0, 0.0]]));
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = softmax(&Matrix::<f64>::from_f64(&[[0.0, 0.0, 0.0, 0.0]]));
        assert_eq!(p.as_slice(), &[0.25; 4]);
        let p = softmax(&Matrix::<f64>::from_f64(&[[1000.0, 0.0]]));
        assert!(p.is_finite());
        assert!(close(p.get(0, 0), 1.0, 1e-15));
        assert!(p.get(0, 1) < 1e-300);
    }

    #[test]
    fn cross_entropy_cases() {
        let uni2 = Matrix::<f64>::from_f64(&[[0.5, 0.5], [0.5, 0.5]]);
        let ce = cross_entropy(&uni2, &one_hot(&[0, 1], 2)).unwrap();
        assert!(close(ce, 2f64.ln(), 1e-12));

        let uni4 = Matrix::<f64>::filled(1, 4, 0.25);
        let ce = cross_entropy(&uni4, &one_hot(&[3], 4)).unwrap();
        assert!(close(ce, 1.386294, 1e-6));

        let p = Matrix::<f64>::from_f64(&[[0.9, 0.1]]);
        let ce = cross_entropy(&p, &one_hot(&[0], 2)).unwrap();
        assert!(close(ce, 0.105361, 1e-6));

        let confident_wrong = Matrix::<f64>::from_f64(&[[1.0, 0.0]]);
        let ce = cross_entropy_labels(&confident_wrong, &[1]);
        assert!(close(ce, -(1e-12f64).ln(), 1e-9));
    }

    #[test]
    fn nll_grad_matches_p_minus_y() {
        let p = Matrix::<f64>::from_f64(&[[0.7, 0.2, 0.1]]);
        let g = softmax_nll_grad(&p, &[1], 1.0);
        assert_eq!(g.as_slice(), &[0.7, 0.2 - 1.0, 0.1]);
    }
}
