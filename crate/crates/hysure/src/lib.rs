//! Hyperspectral subspace identification by SURE minimization.
//!
//! A hyperspectral scene is modeled as a sparse coefficient matrix between an
//! orthogonal spatial basis (2-D wavelet) and a spectral basis (1-D wavelet
//! or data eigenvectors), observed in band-dependent Gaussian noise. Soft
//! thresholding solves the penalized least-squares estimate in closed form,
//! and Stein's unbiased risk estimate selects the subspace rank `r` and the
//! sparsity threshold `lambda` simultaneously by a grid search.
//!
//! The crate provides:
//!
//! - [`cube`]: the `n x p` cube data model and matricization
//! - [`wavelet`]: orthogonal Daubechies transforms (the spatial/spectral bases)
//! - [`noise`]: multiple-regression noise estimation and whitening
//! - [`basis`]: spectral eigenvectors and the seven-model zoo
//! - [`estimate`]: soft-thresholding estimator and reconstruction
//! - [`sure`]: risk surfaces, rank selection, model comparison
//! - [`sim`]: linear-mixture scene simulation at controlled SNR
//! - [`io`]: raster/JSON/CSV formats
//!
//! All numeric code is generic over the scalar type ([`Scalar`]: f32 or
//! f64); the aliases below pin f64, which the command-line tools use.

pub mod basis;
pub mod cube;
mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod noise;
mod scalar;
pub mod sim;
pub mod sure;
pub mod wavelet;

pub use basis::{
    lift_spectral, project_spectral, resolve_model, spectral_eigenvectors, ModelSpec, RankMode,
    ResolvedModel, SpatialBasisKind, SpectralBasis, SpectralBasisKind,
};
pub use cube::{cube_from_image_stack, cube_to_image_stack, HsiCube, NoiseModel};
pub use error::{Error, Result};
pub use estimate::{estimate, reconstruct_signal, soft_threshold, ShrinkResult};
pub use noise::{estimate_noise, restore, whiten};
pub use scalar::Scalar;
pub use sim::{
    band_noise_profile, generate_abundances, generate_abundances_smooth, generate_endmembers,
    simulate_scene, simulate_scene_with, AbundanceMode, Scene, SceneConfig,
};
pub use sure::{
    default_lambda_grid, model_select, mse_oracle, mse_surface, risk_surface, select_rank,
    sure_value, HysureConfig, ModelOutcome, RiskSurface, SelectionReport,
};
pub use wavelet::{
    apply_spatial_basis, dwt1d_forward, dwt1d_inverse, dwt2d_forward, dwt2d_inverse, Direction,
    SpatialPlan, WaveletSpec,
};

/// f64 cube, the type the command-line tools operate on.
pub type Cube = HsiCube<f64>;
/// f64 noise model.
pub type Noise = NoiseModel<f64>;
/// f64 risk surface.
pub type Surface = RiskSurface<f64>;
/// f64 selection report.
pub type Report = SelectionReport<f64>;
/// f64 grid-search configuration.
pub type Config = HysureConfig<f64>;
/// f32 cube, for memory-constrained pipelines.
pub type CubeF32 = HsiCube<f32>;
