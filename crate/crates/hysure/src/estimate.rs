//! Sparse estimation: coefficient shrinkage and reconstruction.
//!
//! With orthogonal bases the penalized least-squares problem separates per
//! coefficient and is solved in closed form by soft thresholding. The
//! residual is evaluated in the coefficient domain using orthogonality; an
//! image-domain cross-check lives in the tests.

use crate::basis::ResolvedModel;
use crate::cube::{HsiCube, NoiseModel};
use crate::error::{Error, Result};
use crate::noise::restore;
use crate::scalar::Scalar;
use ndarray::{s, Array2};

/// `max(0, |b| - lambda) * sign(b)`; exact ties shrink to zero.
pub fn soft_threshold<S: Scalar>(b: S, lambda: S) -> S {
    let mag = b.abs();
    if mag > lambda {
        if b > S::zero() {
            mag - lambda
        } else {
            lambda - mag
        }
    } else {
        S::zero()
    }
}

/// Shrinkage output: thresholded coefficients, survivor count, and the
/// squared residual.
#[derive(Debug, Clone)]
pub struct ShrinkResult<S> {
    /// Thresholded coefficient matrix `W_r` (`n_rows x r`).
    pub coeffs: Array2<S>,
    /// Number of coefficients with `|b| > lambda` (strict).
    pub survivors: u64,
    /// `||Y - A W_r M_r^T||_F^2` over the transform domain.
    pub residual_sq: S,
}

/// Runs the sparse estimator at one `(lambda, r)` point.
///
/// Computes `B = A^T Y M`, soft-thresholds the first `r` columns, and returns
/// the coefficients together with the survivor count and squared residual.
/// The cube must already be whitened. For non-eigen spectral bases `r` must
/// equal the full column count.
pub fn estimate<S: Scalar>(
    cube_white: &HsiCube<S>,
    model: &ResolvedModel<S>,
    lambda: S,
    r: usize,
) -> Result<ShrinkResult<S>> {
    if lambda < S::zero() || lambda.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {lambda}"
        )));
    }
    let b_full = model.forward_full(cube_white.data())?;
    let k_cols = b_full.ncols();
    if r == 0 || r > k_cols {
        return Err(Error::RankOutOfRange {
            rank: r,
            max: k_cols,
        });
    }
    if !matches!(model.spectral(), crate::basis::SpectralOperator::Eigen(_)) && r != k_cols {
        return Err(Error::DimensionMismatch(format!(
            "spectral basis is not rank-adaptive; r must be {k_cols}, got {r}"
        )));
    }

    // Energy outside the kept columns stays in the residual untouched.
    let mut residual_sq = S::zero();
    for k in r..k_cols {
        residual_sq += b_full.column(k).iter().map(|&v| v * v).sum::<S>();
    }

    let mut coeffs = b_full.slice(s![.., ..r]).to_owned();
    let mut survivors = 0u64;
    let lambda_sq = lambda * lambda;
    for v in coeffs.iter_mut() {
        let b = *v;
        if b.abs() > lambda {
            survivors += 1;
            residual_sq += lambda_sq;
            *v = soft_threshold(b, lambda);
        } else {
            residual_sq += b * b;
            *v = S::zero();
        }
    }
    Ok(ShrinkResult {
        coeffs,
        survivors,
        residual_sq,
    })
}

/// Lifts coefficients back through the inverse operators and un-whitens.
pub fn reconstruct_signal<S: Scalar>(
    result: &ShrinkResult<S>,
    model: &ResolvedModel<S>,
    noise: &NoiseModel<S>,
) -> Result<HsiCube<S>> {
    let white = model.inverse(&result.coeffs)?;
    let (h, w) = model.original_shape();
    let cube = HsiCube::from_parts(h, w, white);
    restore(&cube, noise)
}
