use std::collections::BTreeMap;

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named parameter tensor together with its gradient buffer.
pub struct ParamBlock<'a, T> {
    pub name: String,
    pub value: &'a mut Matrix<T>,
    pub grad: &'a mut Matrix<T>,
}

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam with bias correction. Moment buffers are keyed by block name, so
/// one optimizer instance can drive any fixed subset of a model.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            eps: T::c(1e-8),
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to every block and zeroes the gradients.
    ///
    /// Fails before touching anything if a gradient is non-finite.
    pub fn step(&mut self, blocks: Vec<ParamBlock<'_, T>>) -> Result<()> {
        for b in &blocks {
            if b.value.shape() != b.grad.shape() {
                return Err(Error::dim(
                    "Adam::step",
                    format!("{:?}", b.value.shape()),
                    format!("{:?} (gradient of `{}`)", b.grad.shape(), b.name),
                ));
            }
            if let Some((i, g)) = b.grad.as_slice().iter().enumerate().find(|(_, g)| !g.is_finite()) {
                return Err(Error::NonFinite {
                    block: b.name.clone(),
                    detail: format!("gradient entry {i} = {g}"),
                });
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let one = T::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);

        for b in blocks {
            let n = b.value.len();
            let mo = self
                .moments
                .entry(b.name)
                .or_insert_with(|| Moments {
                    m: vec![T::zero(); n],
                    v: vec![T::zero(); n],
                });
            for (((p, g), m), v) in b
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(b.grad.as_mut_slice().iter_mut())
                .zip(mo.m.iter_mut())
                .zip(mo.v.iter_mut())
            {
                *m = self.beta1 * *m + (one - self.beta1) * *g;
                *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                *g = T::zero();
            }
        }
        Ok(())
    }
}
