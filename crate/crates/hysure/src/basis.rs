//! Spectral bases and the seven-model zoo.
//!
//! The spectral eigenvector basis comes from the uncentered band Gram matrix
//! of the (whitened) cube. Models pair a spatial operator (2-D wavelet or
//! identity) with a spectral operator (1-D wavelet, eigenvectors, or
//! identity) and a rank mode.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;
use crate::wavelet::{dwt1d_forward, dwt1d_inverse, mirror_index, padded_len, SpatialPlan, WaveletSpec};
use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Orthonormal spectral basis: `p x r` eigenvector columns with their
/// eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SpectralBasis<S> {
    vectors: Array2<S>,
    eigenvalues: Vec<S>,
}

impl<S: Scalar> SpectralBasis<S> {
    pub fn bands(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    /// `p x r` matrix of orthonormal columns.
    pub fn vectors(&self) -> &Array2<S> {
        &self.vectors
    }

    /// Descending, non-negative eigenvalues of the band Gram matrix.
    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    /// First `r` columns.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.rank() {
            return Err(Error::RankOutOfRange {
                rank: r,
                max: self.rank(),
            });
        }
        Ok(Self {
            vectors: self.vectors.slice(s![.., ..r]).to_owned(),
            eigenvalues: self.eigenvalues[..r].to_vec(),
        })
    }
}

/// Deterministic sign: the largest-magnitude entry of each column is positive
/// (first such entry on ties).
fn fix_signs<S: Scalar>(vectors: &mut Array2<S>) {
    let (p, k) = vectors.dim();
    for j in 0..k {
        let mut best = 0;
        let mut best_abs = S::zero();
        for i in 0..p {
            let a = vectors[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if vectors[[best, j]] < S::zero() {
            for i in 0..p {
                vectors[[i, j]] = -vectors[[i, j]];
            }
        }
    }
}

/// Full eigenvector basis of the uncentered Gram matrix `Y^T Y`.
/// All `p` columns are returned; callers truncate per rank.
pub fn full_spectral_basis<S: Scalar>(cube: &HsiCube<S>) -> Result<SpectralBasis<S>> {
    let gram = cube.data().t().dot(cube.data());
    let (values, mut vectors) = symmetric_eigen(&gram)?;
    fix_signs(&mut vectors);
    // Gram eigenvalues are non-negative up to round-off.
    let eigenvalues: Vec<S> = values.into_iter().map(|v| v.max(S::zero())).collect();
    Ok(SpectralBasis {
        vectors,
        eigenvalues,
    })
}

/// Top-`r` eigenvectors of `Y^T Y` for a (whitened) cube.
pub fn spectral_eigenvectors<S: Scalar>(cube: &HsiCube<S>, r: usize) -> Result<SpectralBasis<S>> {
    let max = cube.pixels().min(cube.bands());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    full_spectral_basis(cube)?.truncate(r)
}

/// Projects a cube onto a spectral basis: `Q = Y M_r` (`n x r`).
pub fn project_spectral<S: Scalar>(
    cube: &HsiCube<S>,
    basis: &SpectralBasis<S>,
) -> Result<Array2<S>> {
    if basis.bands() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} bands, cube has {}",
            basis.bands(),
            cube.bands()
        )));
    }
    Ok(cube.data().dot(basis.vectors()))
}

/// Lifts spectral coefficients back: `Q M_r^T` (`n x p`).
pub fn lift_spectral<S: Scalar>(coeffs: &Array2<S>, basis: &SpectralBasis<S>) -> Result<Array2<S>> {
    if coeffs.ncols() != basis.rank() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients have {} columns, basis rank is {}",
            coeffs.ncols(),
            basis.rank()
        )));
    }
    Ok(coeffs.dot(&basis.vectors().t()))
}

/// Spatial basis choice of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialBasisKind {
    Wavelet2d,
    None,
}

/// Spectral basis choice of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralBasisKind {
    Wavelet1d,
    Eigenvectors,
    None,
}

/// Whether the spectral basis is truncated to rank `r` or kept complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankMode {
    Full,
    Low,
}

/// One of the seven legal sparse models; only these combinations are
/// constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    id: usize,
    spatial: SpatialBasisKind,
    spectral: SpectralBasisKind,
    rank_mode: RankMode,
}

impl ModelSpec {
    /// | id | spatial      | spectral      | rank |
    /// |----|--------------|---------------|------|
    /// | 1  | 2-D wavelet  | 1-D wavelet   | full |
    /// | 2  | 2-D wavelet  | none          | full |
    /// | 3  | none         | 1-D wavelet   | full |
    /// | 4  | none         | eigenvectors  | full |
    /// | 5  | 2-D wavelet  | eigenvectors  | full |
    /// | 6  | none         | eigenvectors  | low  |
    /// | 7  | 2-D wavelet  | eigenvectors  | low  |
    pub fn from_id(id: usize) -> Result<Self> {
        use RankMode::*;
        use SpatialBasisKind as Sp;
        use SpectralBasisKind as Sc;
        let (spatial, spectral, rank_mode) = match id {
            1 => (Sp::Wavelet2d, Sc::Wavelet1d, Full),
            2 => (Sp::Wavelet2d, Sc::None, Full),
            3 => (Sp::None, Sc::Wavelet1d, Full),
            4 => (Sp::None, Sc::Eigenvectors, Full),
            5 => (Sp::Wavelet2d, Sc::Eigenvectors, Full),
            6 => (Sp::None, Sc::Eigenvectors, Low),
            7 => (Sp::Wavelet2d, Sc::Eigenvectors, Low),
            other => return Err(Error::InvalidModelId(other)),
        };
        Ok(Self {
            id,
            spatial,
            spectral,
            rank_mode,
        })
    }

    /// All seven models in id order.
    pub fn all() -> Vec<Self> {
        (1..=7).map(|id| Self::from_id(id).expect("ids 1..=7 are valid")).collect()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn spatial(&self) -> SpatialBasisKind {
        self.spatial
    }

    pub fn spectral(&self) -> SpectralBasisKind {
        self.spectral
    }

    pub fn rank_mode(&self) -> RankMode {
        self.rank_mode
    }
}

/// The spatial operator `A`: identity or per-band 2-D wavelet.
#[derive(Debug, Clone)]
pub enum SpatialOperator<S> {
    Identity { pixels: usize },
    Wavelet(SpatialPlan<S>),
}

impl<S: Scalar> SpatialOperator<S> {
    /// Rows of the coefficient domain (padded pixel count for wavelets).
    pub fn out_rows(&self) -> usize {
        match self {
            Self::Identity { pixels } => *pixels,
            Self::Wavelet(plan) => plan.padded_pixels(),
        }
    }

    /// Coefficients whose support touches the original extent; `None` means
    /// all of them.
    pub fn active_mask(&self) -> Option<&[bool]> {
        match self {
            Self::Identity { .. } => None,
            Self::Wavelet(plan) => plan.active_mask(),
        }
    }

    pub fn active_rows(&self) -> usize {
        match self {
            Self::Identity { pixels } => *pixels,
            Self::Wavelet(plan) => plan.active_count(),
        }
    }

    pub fn forward(&self, mat: &Array2<S>) -> Result<Array2<S>> {
        match self {
            Self::Identity { pixels } => {
                if mat.nrows() != *pixels {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix has {} rows, operator expects {}",
                        mat.nrows(),
                        pixels
                    )));
                }
                Ok(mat.clone())
            }
            Self::Wavelet(plan) => plan.forward_mat(mat),
        }
    }

    pub fn inverse(&self, coeffs: &Array2<S>) -> Result<Array2<S>> {
        match self {
            Self::Identity { pixels } => {
                if coeffs.nrows() != *pixels {
                    return Err(Error::DimensionMismatch(format!(
                        "coefficients have {} rows, operator expects {}",
                        coeffs.nrows(),
                        pixels
                    )));
                }
                Ok(coeffs.clone())
            }
            Self::Wavelet(plan) => plan.inverse_mat(coeffs),
        }
    }
}

/// The spectral operator `M`: identity, 1-D wavelet along the spectrum, or
/// eigenvector basis. Always spans the complete coefficient space; low-rank
/// models slice column prefixes.
#[derive(Debug, Clone)]
pub enum SpectralOperator<S> {
    Identity {
        bands: usize,
    },
    Wavelet {
        spec: WaveletSpec,
        bands: usize,
        padded: usize,
    },
    Eigen(SpectralBasis<S>),
}

impl<S: Scalar> SpectralOperator<S> {
    /// Number of coefficient columns `K`.
    pub fn out_cols(&self) -> usize {
        match self {
            Self::Identity { bands } => *bands,
            Self::Wavelet { padded, .. } => *padded,
            Self::Eigen(basis) => basis.rank(),
        }
    }

    pub fn bands(&self) -> usize {
        match self {
            Self::Identity { bands } => *bands,
            Self::Wavelet { bands, .. } => *bands,
            Self::Eigen(basis) => basis.bands(),
        }
    }

    /// Applies `M` on the right: rows are transformed spectra.
    pub fn forward(&self, mat: &Array2<S>) -> Result<Array2<S>> {
        if mat.ncols() != self.bands() {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, operator expects {}",
                mat.ncols(),
                self.bands()
            )));
        }
        match self {
            Self::Identity { .. } => Ok(mat.clone()),
            Self::Wavelet { spec, bands, padded } => {
                let rows: Vec<Vec<S>> = mat
                    .rows()
                    .into_iter()
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .map(|row| {
                        let mut spectrum = vec![S::zero(); *padded];
                        for (i, slot) in spectrum.iter_mut().enumerate() {
                            *slot = row[mirror_index(i, *bands)];
                        }
                        dwt1d_forward(&spectrum, spec).expect("padded length is dyadic")
                    })
                    .collect();
                let mut out = Array2::zeros((mat.nrows(), *padded));
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        out[[i, j]] = v;
                    }
                }
                Ok(out)
            }
            Self::Eigen(basis) => Ok(mat.dot(basis.vectors())),
        }
    }

    /// Applies `M_r^T` on the right for an `n x r` column prefix.
    pub fn inverse(&self, coeffs: &Array2<S>) -> Result<Array2<S>> {
        let r = coeffs.ncols();
        match self {
            Self::Identity { bands } => {
                if r != *bands {
                    return Err(Error::DimensionMismatch(format!(
                        "identity spectral basis needs all {} columns, got {}",
                        bands, r
                    )));
                }
                Ok(coeffs.clone())
            }
            Self::Wavelet { spec, bands, padded } => {
                if r != *padded {
                    return Err(Error::DimensionMismatch(format!(
                        "wavelet spectral basis needs all {} columns, got {}",
                        padded, r
                    )));
                }
                let rows: Vec<Vec<S>> = coeffs
                    .rows()
                    .into_iter()
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .map(|row| {
                        let vec: Vec<S> = row.to_vec();
                        let mut back = dwt1d_inverse(&vec, spec).expect("padded length is dyadic");
                        back.truncate(*bands);
                        back
                    })
                    .collect();
                let mut out = Array2::zeros((coeffs.nrows(), *bands));
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        out[[i, j]] = v;
                    }
                }
                Ok(out)
            }
            Self::Eigen(basis) => {
                if r == 0 || r > basis.rank() {
                    return Err(Error::RankOutOfRange {
                        rank: r,
                        max: basis.rank(),
                    });
                }
                let sub = basis.vectors().slice(s![.., ..r]);
                Ok(coeffs.dot(&sub.t()))
            }
        }
    }
}

/// A model resolved against a concrete cube: the `(A, M)` operator pair plus
/// the rank at which the estimator runs.
#[derive(Debug, Clone)]
pub struct ResolvedModel<S> {
    spec: ModelSpec,
    spatial: SpatialOperator<S>,
    spectral: SpectralOperator<S>,
    rank: usize,
    height: usize,
    width: usize,
}

impl<S: Scalar> ResolvedModel<S> {
    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    /// Spatial extent of the cube the model was resolved against.
    pub fn original_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn spatial(&self) -> &SpatialOperator<S> {
        &self.spatial
    }

    pub fn spectral(&self) -> &SpectralOperator<S> {
        &self.spectral
    }

    /// Rank at which the estimator runs (equals `K` for full-rank models).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Complete coefficient matrix `B = A^T Y M` at full column count.
    pub fn forward_full(&self, mat: &Array2<S>) -> Result<Array2<S>> {
        let c = self.spatial.forward(mat)?;
        self.spectral.forward(&c)
    }

    /// Reconstruction `A W M_r^T` of an `n_rows x r` coefficient matrix,
    /// cropped to the original extent.
    pub fn inverse(&self, coeffs: &Array2<S>) -> Result<Array2<S>> {
        let lifted = self.spectral.inverse(coeffs)?;
        self.spatial.inverse(&lifted)
    }
}

/// Builds the operator pair for a model against a whitened cube.
///
/// `rank` is required iff the model is low-rank and is ignored for full-rank
/// models. The eigenvector basis, when needed, is computed once at full rank
/// from the given cube.
pub fn resolve_model<S: Scalar>(
    spec: ModelSpec,
    cube: &HsiCube<S>,
    wavelet_spatial: &WaveletSpec,
    wavelet_spectral: &WaveletSpec,
    rank: Option<usize>,
) -> Result<ResolvedModel<S>> {
    let spatial = match spec.spatial() {
        SpatialBasisKind::None => SpatialOperator::Identity {
            pixels: cube.pixels(),
        },
        SpatialBasisKind::Wavelet2d => SpatialOperator::Wavelet(SpatialPlan::new(
            *wavelet_spatial,
            cube.height(),
            cube.width(),
        )?),
    };
    let spectral = match spec.spectral() {
        SpectralBasisKind::None => SpectralOperator::Identity {
            bands: cube.bands(),
        },
        SpectralBasisKind::Wavelet1d => {
            let padded = padded_len(cube.bands(), wavelet_spectral.block());
            SpectralOperator::Wavelet {
                spec: *wavelet_spectral,
                bands: cube.bands(),
                padded,
            }
        }
        SpectralBasisKind::Eigenvectors => SpectralOperator::Eigen(full_spectral_basis(cube)?),
    };
    let rank = match spec.rank_mode() {
        RankMode::Full => spectral.out_cols(),
        RankMode::Low => {
            let r = rank.ok_or(Error::MissingRank(spec.id()))?;
            let max = cube.pixels().min(cube.bands());
            if r == 0 || r > max {
                return Err(Error::RankOutOfRange { rank: r, max });
            }
            r
        }
    };
    Ok(ResolvedModel {
        spec,
        spatial,
        spectral,
        rank,
        height: cube.height(),
        width: cube.width(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::cube_from_image_stack;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(h: usize, w: usize, p: usize, seed: u64) -> HsiCube<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack: Vec<f64> = (0..h * w * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        cube_from_image_stack(h, w, p, &stack).unwrap()
    }

    #[test]
    fn rank_one_cube_recovers_direction() {
        let a = [1.0f64, -2.0, 0.5, 3.0];
        let mut b = [0.6f64, -0.8, 0.0];
        let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        b.iter_mut().for_each(|v| *v /= norm);
        let mut stack = Vec::new();
        for &bj in &b {
            for &ai in &a {
                stack.push(ai * bj);
            }
        }
        let cube = cube_from_image_stack(2, 2, 3, &stack).unwrap();
        let basis = spectral_eigenvectors(&cube, 1).unwrap();
        // Sign convention: largest-magnitude entry positive, so the
        // recovered direction is -b (whose largest entry 0.8 is positive).
        let v = basis.vectors().column(0);
        for (got, want) in v.iter().zip([-0.6, 0.8, 0.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn complete_basis_reconstructs() {
        let cube = random_cube(4, 4, 5, 3);
        let basis = spectral_eigenvectors(&cube, 5).unwrap();
        let q = project_spectral(&cube, &basis).unwrap();
        let back = lift_spectral(&q, &basis).unwrap();
        let err: f64 = cube
            .data()
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn rank_out_of_range_rejected() {
        let cube = random_cube(2, 2, 6, 1);
        // max rank is min(n, p) = 4 here
        assert!(matches!(
            spectral_eigenvectors(&cube, 5).unwrap_err(),
            Error::RankOutOfRange { rank: 5, max: 4 }
        ));
        assert!(spectral_eigenvectors(&cube, 0).is_err());
    }

    #[test]
    fn eigen_residual_small() {
        let cube = random_cube(8, 8, 6, 7);
        let gram = cube.data().t().dot(cube.data());
        let basis = full_spectral_basis(&cube).unwrap();
        let gm = gram.dot(basis.vectors());
        let gram_max = gram.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for j in 0..basis.rank() {
            for i in 0..basis.bands() {
                let expected = basis.vectors()[[i, j]] * basis.eigenvalues()[j];
                assert!(
                    (gm[[i, j]] - expected).abs() < 1e-6 * gram_max,
                    "residual at ({i},{j})"
                );
            }
        }
    }

    /// Brute-force oracle: eigenvalues from the characteristic polynomial.
    mod char_poly {
        use ndarray::Array2;

        /// Coefficients of det(xI - A) = x^n + c[n-1] x^{n-1} + ... + c[0]
        /// by the Faddeev-LeVerrier recurrence.
        pub fn coefficients(a: &Array2<f64>) -> Vec<f64> {
            let n = a.nrows();
            let mut c = vec![0.0f64; n];
            let mut m = Array2::<f64>::eye(n);
            for k in 1..=n {
                let am = a.dot(&m);
                let trace: f64 = (0..n).map(|i| am[[i, i]]).sum();
                let ck = -trace / k as f64;
                c[n - k] = ck;
                m = am + Array2::<f64>::eye(n) * ck;
            }
            c
        }

        pub fn eval(c: &[f64], x: f64) -> f64 {
            let mut acc = 1.0;
            for &coef in c.iter().rev() {
                acc = acc * x + coef;
            }
            acc
        }

        fn derivative(c: &[f64]) -> Vec<f64> {
            // p = x^n + sum c[k] x^k  ->  p' = n x^{n-1} + sum k c[k] x^{k-1}
            let n = c.len();
            let mut d = vec![0.0f64; n];
            d[n - 1] = n as f64;
            for k in 1..n {
                d[k - 1] = k as f64 * c[k];
            }
            d
        }

        fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
            let (flo, fhi) = (f(lo), f(hi));
            if flo == 0.0 {
                return Some(lo);
            }
            if fhi == 0.0 {
                return Some(hi);
            }
            if flo.signum() == fhi.signum() {
                return None;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    return Some(mid);
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }

        /// All real roots of a polynomial with real roots, by recursive
        /// bracketing between critical points.
        pub fn real_roots(monic_tail: &[f64]) -> Vec<f64> {
            let n = monic_tail.len();
            let bound = 1.0
                + monic_tail
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(v.abs()));
            if n == 1 {
                return vec![-monic_tail[0]];
            }
            let deriv = derivative(monic_tail);
            // Normalize derivative to monic form for recursion.
            let lead = deriv[n - 1];
            let monic_deriv: Vec<f64> = deriv[..n - 1].iter().map(|&v| v / lead).collect();
            let mut crit = real_roots(&monic_deriv);
            crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut points = vec![-bound];
            points.extend(crit);
            points.push(bound);
            let mut roots = Vec::new();
            for w in points.windows(2) {
                if let Some(r) = bisect(|x| eval(monic_tail, x), w[0], w[1]) {
                    if roots.iter().all(|&prev: &f64| (prev - r).abs() > 1e-9 * bound) {
                        roots.push(r);
                    }
                }
            }
            roots
        }
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        let cube = random_cube(2, 3, 4, 21);
        let gram = cube.data().t().dot(cube.data());
        let basis = full_spectral_basis(&cube).unwrap();
        let coeffs = char_poly::coefficients(&gram);
        let mut roots = char_poly::real_roots(&coeffs);
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(roots.len(), 4, "quartic with 4 real roots");
        let scale = basis.eigenvalues()[0].max(1.0);
        for (root, eig) in roots.iter().zip(basis.eigenvalues()) {
            assert!((root - eig).abs() < 1e-8 * scale, "{root} vs {eig}");
        }
    }

    #[test]
    fn projection_energy_monotone_in_rank() {
        let cube = random_cube(4, 4, 6, 5);
        let mut prev = 0.0f64;
        for r in 1..=6 {
            let basis = spectral_eigenvectors(&cube, r).unwrap();
            let q = project_spectral(&cube, &basis).unwrap();
            let energy: f64 = q.iter().map(|v| v * v).sum();
            assert!(energy + 1e-12 >= prev);
            prev = energy;
        }
    }

    #[test]
    fn model_zoo_construction() {
        assert_eq!(ModelSpec::all().len(), 7);
        assert!(matches!(
            ModelSpec::from_id(0).unwrap_err(),
            Error::InvalidModelId(0)
        ));
        assert!(ModelSpec::from_id(8).is_err());
        let m7 = ModelSpec::from_id(7).unwrap();
        assert_eq!(m7.spatial(), SpatialBasisKind::Wavelet2d);
        assert_eq!(m7.spectral(), SpectralBasisKind::Eigenvectors);
        assert_eq!(m7.rank_mode(), RankMode::Low);
        let m3 = ModelSpec::from_id(3).unwrap();
        assert_eq!(m3.spatial(), SpatialBasisKind::None);
        assert_eq!(m3.spectral(), SpectralBasisKind::Wavelet1d);
    }

    #[test]
    fn resolve_model_requires_rank_for_low_rank() {
        let cube = random_cube(4, 4, 8, 2);
        let spatial = WaveletSpec::daubechies(2, 2).unwrap();
        let spectral = WaveletSpec::daubechies(2, 2).unwrap();
        let err = resolve_model(
            ModelSpec::from_id(7).unwrap(),
            &cube,
            &spatial,
            &spectral,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingRank(7)));
        let ok = resolve_model(
            ModelSpec::from_id(7).unwrap(),
            &cube,
            &spatial,
            &spectral,
            Some(3),
        )
        .unwrap();
        assert_eq!(ok.rank(), 3);
        let full = resolve_model(
            ModelSpec::from_id(5).unwrap(),
            &cube,
            &spatial,
            &spectral,
            None,
        )
        .unwrap();
        assert_eq!(full.rank(), 8);
    }

    #[test]
    fn forward_full_round_trips() {
        let cube = random_cube(4, 4, 8, 17);
        let spatial = WaveletSpec::daubechies(2, 2).unwrap();
        let spectral = WaveletSpec::daubechies(2, 3).unwrap();
        for id in 1..=7 {
            let rank = matches!(ModelSpec::from_id(id).unwrap().rank_mode(), RankMode::Low)
                .then_some(8);
            let model = resolve_model(
                ModelSpec::from_id(id).unwrap(),
                &cube,
                &spatial,
                &spectral,
                rank,
            )
            .unwrap();
            let b = model.forward_full(cube.data()).unwrap();
            let back = model.inverse(&b).unwrap();
            for (a, v) in cube.data().iter().zip(back.iter()) {
                assert!((a - v).abs() < 1e-9, "model {id}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn projection_contracts(seed in 0u64..200, r in 1usize..5) {
            let cube = random_cube(3, 3, 5, seed);
            let basis = spectral_eigenvectors(&cube, r).unwrap();
            let q = project_spectral(&cube, &basis).unwrap();
            let qe: f64 = q.iter().map(|v| v * v).sum();
            prop_assert!(qe <= cube.energy() + 1e-9);
        }
    }
}
