//! Hyperspectral cube data model.
//!
//! A scene is held in matrix form: an `n x p` matrix with `n = height * width`
//! pixels as rows and `p` bands as columns, each column being one vectorized
//! band in row-major spatial order. The spatial shape is carried as metadata
//! and consulted only by the spatial wavelet transform.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// An `n x p` hyperspectral scene with spatial shape metadata.
///
/// Immutable after construction; every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube<S> {
    height: usize,
    width: usize,
    data: Array2<S>,
}

impl<S: Scalar> HsiCube<S> {
    /// Wraps an `n x p` matrix whose column `j` is band `j` vectorized in
    /// row-major spatial order. Validates shape and finiteness.
    pub fn new(height: usize, width: usize, data: Array2<S>) -> Result<Self> {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::DimensionMismatch("height * width overflows".into()))?;
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "height and width must be positive".into(),
            ));
        }
        if data.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows, expected height * width = {}",
                data.nrows(),
                n
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::DimensionMismatch("cube needs at least one band".into()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "cube data",
                index,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Internal constructor for transform outputs that are finite by
    /// construction. Debug builds still check.
    pub(crate) fn from_parts(height: usize, width: usize, data: Array2<S>) -> Self {
        debug_assert_eq!(height * width, data.nrows());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels `n`.
    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    /// Number of bands `p`.
    pub fn bands(&self) -> usize {
        self.data.ncols()
    }

    /// The `n x p` matrix.
    pub fn data(&self) -> &Array2<S> {
        &self.data
    }

    pub fn into_data(self) -> Array2<S> {
        self.data
    }

    /// Squared Frobenius norm of the data matrix.
    pub fn energy(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Builds a cube from a band-sequential voxel array: band 0's full image in
/// row-major order, then band 1, and so on.
pub fn cube_from_image_stack<S: Scalar>(
    height: usize,
    width: usize,
    bands: usize,
    stack: &[S],
) -> Result<HsiCube<S>> {
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::DimensionMismatch("height * width overflows".into()))?;
    if n == 0 || bands == 0 {
        return Err(Error::DimensionMismatch(
            "height, width, and bands must be positive".into(),
        ));
    }
    let expected = n
        .checked_mul(bands)
        .ok_or_else(|| Error::DimensionMismatch("voxel count overflows".into()))?;
    if stack.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "stack has {} values, expected height * width * bands = {}",
            stack.len(),
            expected
        )));
    }
    let mut data = Array2::zeros((n, bands));
    for (j, band) in stack.chunks_exact(n).enumerate() {
        for (i, &v) in band.iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    HsiCube::new(height, width, data)
}

/// Inverse of [`cube_from_image_stack`]: flattens back to band-sequential order.
pub fn cube_to_image_stack<S: Scalar>(cube: &HsiCube<S>) -> Vec<S> {
    let n = cube.pixels();
    let p = cube.bands();
    let mut stack = Vec::with_capacity(n * p);
    for j in 0..p {
        stack.extend(cube.data().column(j).iter().copied());
    }
    stack
}

/// Per-band noise variances `sigma^2_1..sigma^2_p`, the diagonal of the noise
/// covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseModel<S> {
    sigma2: Vec<S>,
}

impl<S: Scalar> NoiseModel<S> {
    /// Validates that every variance is finite and strictly positive.
    pub fn new(sigma2: Vec<S>) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(Error::InvalidParameter("noise model needs at least one band".into()));
        }
        for (i, &v) in sigma2.iter().enumerate() {
            if !v.is_finite() || v <= S::zero() {
                return Err(Error::NonPositiveVariance(i));
            }
        }
        Ok(Self { sigma2 })
    }

    /// Unit variances for `p` bands (identity whitening).
    pub fn unit(p: usize) -> Self {
        Self {
            sigma2: vec![S::one(); p],
        }
    }

    pub fn bands(&self) -> usize {
        self.sigma2.len()
    }

    /// Per-band variances.
    pub fn variances(&self) -> &[S] {
        &self.sigma2
    }

    /// Per-band standard deviations.
    pub fn std_devs(&self) -> Vec<S> {
        self.sigma2.iter().map(|&v| v.sqrt()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singleton_stack() {
        let cube = cube_from_image_stack(1, 1, 1, &[5.0f64]).unwrap();
        assert_eq!(cube.pixels(), 1);
        assert_eq!(cube.bands(), 1);
        assert_eq!(cube.data()[[0, 0]], 5.0);
    }

    #[test]
    fn single_band_reshape_is_identity() {
        let cube = cube_from_image_stack(2, 2, 1, &[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let col: Vec<f64> = cube.data().column(0).to_vec();
        assert_eq!(col, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn stack_length_mismatch_errors() {
        let err = cube_from_image_stack(2, 2, 2, &[0.0f64; 7]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn non_finite_rejected() {
        let err = cube_from_image_stack(1, 2, 1, &[1.0f64, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn zero_sized_rejected() {
        assert!(cube_from_image_stack::<f64>(0, 4, 1, &[]).is_err());
        assert!(HsiCube::new(1, 1, Array2::<f64>::zeros((1, 0))).is_err());
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(vec![1.0f64, 0.5]).is_ok());
        assert!(matches!(
            NoiseModel::new(vec![1.0f64, 0.0]).unwrap_err(),
            Error::NonPositiveVariance(1)
        ));
        assert!(NoiseModel::<f64>::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn stack_round_trip(
            h in 1usize..5,
            w in 1usize..5,
            b in 1usize..4,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let stack: Vec<f64> = (0..h * w * b).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let cube = cube_from_image_stack(h, w, b, &stack).unwrap();
            prop_assert_eq!(cube_to_image_stack(&cube), stack);
        }
    }
}
