//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::adam::ParamBlock;
use crate::error::Result;
use crate::scalar::Scalar;

/// Anything exposing named parameter blocks with gradient buffers.
pub trait Parameters<T: Scalar> {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_, T>>;

    fn zero_grad(&mut self) {
        for b in self.param_blocks() {
            b.grad.fill(T::zero());
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Coordinates sampled per block (all coordinates if the block is smaller).
    pub coords_per_block: usize,
    /// Denominator floor for the relative error, guarding against 0/0.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            coords_per_block: 20,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn coordinates(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of `loss` to central finite differences.
///
/// `loss(model, true)` must return the loss and accumulate its gradient into
/// the model's gradient buffers; `loss(model, false)` only evaluates. Only
/// blocks accepted by `select` are checked. Gradient buffers are left zeroed.
pub fn gradient_check<T, M, F, S, R>(
    model: &mut M,
    mut loss: F,
    select: S,
    opts: &GradCheckOptions,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameters<T>,
    F: FnMut(&mut M, bool) -> Result<T>,
    S: Fn(&str) -> bool,
    R: Rng + ?Sized,
{
    model.zero_grad();
    loss(model, true)?;
    let analytic: Vec<(String, Vec<T>)> = model
        .param_blocks()
        .into_iter()
        .map(|b| (b.name, b.grad.as_slice().to_vec()))
        .collect();
    model.zero_grad();

    let h = T::c(opts.h);
    let mut report = GradCheckReport::default();
    for (bi, (name, grad)) in analytic.iter().enumerate() {
        if !select(name) {
            continue;
        }
        let n = grad.len();
        let coords: Vec<usize> = if n <= opts.coords_per_block {
            (0..n).collect()
        } else {
            sample(rng, n, opts.coords_per_block).into_vec()
        };
        let mut worst = 0.0f64;
        for &i in &coords {
            let orig = model.param_blocks()[bi].value.as_slice()[i];
            model.param_blocks()[bi].value.as_mut_slice()[i] = orig + h;
            let plus = loss(model, false)?;
            model.param_blocks()[bi].value.as_mut_slice()[i] = orig - h;
            let minus = loss(model, false)?;
            model.param_blocks()[bi].value.as_mut_slice()[i] = orig;
            let numeric = (plus - minus).f64() / (2.0 * opts.h);
            worst = worst.max(relative_error(grad[i].f64(), numeric, opts.floor));
        }
        report.blocks.push(BlockReport {
            name: name.clone(),
            checked: coords.len(),
            max_rel_error: worst,
        });
    }
    Ok(report)
}
