//! SURE risk evaluation, the `(r, lambda)` grid search, and model comparison.
//!
//! The unbiased risk estimate for the shrinkage estimator is
//! `||E||_F^2 + 2 ed(r, lambda) - n p`, where `ed` counts coefficients above
//! the threshold inside the rank-`r` subspace. The full coefficient matrix is
//! computed once per cube and model; every grid cell then reduces to counting
//! and partial sums over column prefixes, so the whole surface costs little
//! more than one transform.

use crate::basis::{resolve_model, ModelSpec, RankMode, ResolvedModel};
use crate::cube::{HsiCube, NoiseModel};
use crate::error::{Error, Result};
use crate::noise::{estimate_noise, whiten};
use crate::scalar::Scalar;
use crate::wavelet::WaveletSpec;
use ndarray::Array2;
use rayon::prelude::*;

/// Grid-search and transform configuration.
///
/// Defaults: five-level Daubechies wavelets with eight taps spatially and two
/// taps spectrally, 201 thresholds evenly spaced on `[0, 4]`, and every rank
/// from 1 to `min(n, p)`.
#[derive(Debug, Clone)]
pub struct HysureConfig<S> {
    pub spatial_wavelet: WaveletSpec,
    pub spectral_wavelet: WaveletSpec,
    /// Ascending thresholds, all non-negative.
    pub lambda_grid: Vec<S>,
    /// Ascending ranks for low-rank models; `None` means `1..=min(n, p)`.
    pub rank_grid: Option<Vec<usize>>,
    /// Known noise model; `None` estimates it by multiple regression.
    pub noise: Option<NoiseModel<S>>,
    /// Attach the full risk surface to reports.
    pub keep_surface: bool,
}

impl<S: Scalar> Default for HysureConfig<S> {
    fn default() -> Self {
        Self {
            spatial_wavelet: WaveletSpec::daubechies(8, 5).expect("valid default"),
            spectral_wavelet: WaveletSpec::daubechies(2, 5).expect("valid default"),
            lambda_grid: default_lambda_grid(),
            rank_grid: None,
            noise: None,
            keep_surface: false,
        }
    }
}

/// 201 evenly spaced thresholds on `[0, 4]`.
pub fn default_lambda_grid<S: Scalar>() -> Vec<S> {
    (0..=200)
        .map(|i| S::from_f64_lossy(i as f64 * 4.0 / 200.0))
        .collect()
}

/// The grid minimum of a risk surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Argmin<S> {
    pub rank: usize,
    pub lambda: S,
    pub risk: S,
    pub ed: u64,
    pub rank_index: usize,
    pub lambda_index: usize,
}

/// SURE values over the `(rank, lambda)` grid, with effective
/// dimensionalities and the argmin.
#[derive(Debug, Clone)]
pub struct RiskSurface<S> {
    pub lambda_grid: Vec<S>,
    pub rank_grid: Vec<usize>,
    /// `|rank_grid| x |lambda_grid|` SURE values.
    pub risk: Array2<S>,
    /// Survivor counts per cell.
    pub ed: Array2<u64>,
    pub argmin: Argmin<S>,
    /// Observed-value count `n * p` entering the SURE constant.
    pub np: u64,
}

/// `residual_sq + 2 * survivors - n * p`.
pub fn sure_value<S: Scalar>(residual_sq: S, survivors: u64, n: usize, p: usize) -> S {
    residual_sq + S::from_f64_lossy(2.0 * survivors as f64)
        - S::from_f64_lossy((n as f64) * (p as f64))
}

/// Squared Frobenius distance between two cubes of the same shape.
pub fn mse_oracle<S: Scalar>(estimate: &HsiCube<S>, truth: &HsiCube<S>) -> Result<S> {
    if estimate.pixels() != truth.pixels() || estimate.bands() != truth.bands() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.pixels(),
            estimate.bands(),
            truth.pixels(),
            truth.bands()
        )));
    }
    Ok(estimate
        .data()
        .iter()
        .zip(truth.data().iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}

/// Per-column sorted statistics over active rows.
struct ColumnStats<S> {
    /// Active rows ordered by ascending `|b|`.
    order: Vec<u32>,
    sorted_abs: Vec<S>,
    /// `prefix_energy[i]` = sum of the first `i` squared values.
    prefix_energy: Vec<S>,
    energy: S,
}

/// Shared per-(cube, model) state for grid evaluation.
pub(crate) struct RiskEngine<S> {
    model: ResolvedModel<S>,
    b: Array2<S>,
    n_active: usize,
    /// Largest admissible rank: `min(n, p)` for low-rank models, the full
    /// column count otherwise.
    rank_cap: usize,
    cols: Vec<ColumnStats<S>>,
    /// `suffix_energy[r]` = energy of columns `r..K` over active rows.
    suffix_energy: Vec<S>,
}

impl<S: Scalar> RiskEngine<S> {
    /// Builds the engine from an already whitened cube.
    pub(crate) fn new(
        white: &HsiCube<S>,
        spec: ModelSpec,
        cfg: &HysureConfig<S>,
    ) -> Result<Self> {
        let resolve_rank = match spec.rank_mode() {
            RankMode::Full => None,
            RankMode::Low => Some(white.pixels().min(white.bands())),
        };
        let model = resolve_model(
            spec,
            white,
            &cfg.spatial_wavelet,
            &cfg.spectral_wavelet,
            resolve_rank,
        )?;
        let b = model.forward_full(white.data())?;
        let active_idx: Option<Vec<u32>> = model.spatial().active_mask().map(|mask| {
            mask.iter()
                .enumerate()
                .filter_map(|(i, &a)| a.then_some(i as u32))
                .collect()
        });
        let n_active = active_idx
            .as_ref()
            .map_or(b.nrows(), |idx| idx.len());
        let k_cols = b.ncols();
        let cols: Vec<ColumnStats<S>> = (0..k_cols)
            .into_par_iter()
            .map(|k| {
                let col = b.column(k);
                let mut order: Vec<u32> = match &active_idx {
                    None => (0..b.nrows() as u32).collect(),
                    Some(idx) => idx.clone(),
                };
                order.sort_by(|&a, &bb| {
                    let va = col[a as usize].abs();
                    let vb = col[bb as usize].abs();
                    va.partial_cmp(&vb).expect("finite coefficients")
                });
                let sorted_abs: Vec<S> = order.iter().map(|&t| col[t as usize].abs()).collect();
                let mut prefix_energy = Vec::with_capacity(sorted_abs.len() + 1);
                let mut acc = S::zero();
                prefix_energy.push(acc);
                for &v in &sorted_abs {
                    acc += v * v;
                    prefix_energy.push(acc);
                }
                ColumnStats {
                    order,
                    sorted_abs,
                    prefix_energy,
                    energy: acc,
                }
            })
            .collect();
        let mut suffix_energy = vec![S::zero(); k_cols + 1];
        for k in (0..k_cols).rev() {
            suffix_energy[k] = suffix_energy[k + 1] + cols[k].energy;
        }
        let rank_cap = match spec.rank_mode() {
            RankMode::Full => k_cols,
            RankMode::Low => white.pixels().min(white.bands()),
        };
        Ok(Self {
            model,
            b,
            n_active,
            rank_cap,
            cols,
            suffix_energy,
        })
    }

    pub(crate) fn k_cols(&self) -> usize {
        self.b.ncols()
    }

    fn np(&self) -> u64 {
        (self.n_active as u64) * (self.k_cols() as u64)
    }

    fn validate_grids(&self, lambda_grid: &[S], rank_grid: &[usize]) -> Result<()> {
        if lambda_grid.is_empty() {
            return Err(Error::InvalidParameter("empty threshold grid".into()));
        }
        for pair in lambda_grid.windows(2) {
            // partial_cmp also rejects NaN entries
            if pair[1].partial_cmp(&pair[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidParameter(
                    "threshold grid must be strictly ascending".into(),
                ));
            }
        }
        if !lambda_grid[0].is_finite() || lambda_grid[0] < S::zero() {
            return Err(Error::InvalidParameter(
                "thresholds must be finite and non-negative".into(),
            ));
        }
        if !lambda_grid[lambda_grid.len() - 1].is_finite() {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        if rank_grid.is_empty() {
            return Err(Error::InvalidParameter("empty rank grid".into()));
        }
        for pair in rank_grid.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidParameter(
                    "rank grid must be strictly ascending".into(),
                ));
            }
        }
        let max = self.rank_cap;
        let top = *rank_grid.last().expect("non-empty");
        if rank_grid[0] == 0 || top > max {
            return Err(Error::RankOutOfRange { rank: top, max });
        }
        Ok(())
    }

    /// Evaluates the SURE surface over the given grids.
    pub(crate) fn surface(&self, lambda_grid: &[S], rank_grid: &[usize]) -> Result<RiskSurface<S>> {
        self.validate_grids(lambda_grid, rank_grid)?;
        let nj = lambda_grid.len();
        let k_need = *rank_grid.last().expect("non-empty");

        // Per-column survivor counts and sub-threshold energies at each
        // threshold.
        let per_col: Vec<(Vec<S>, Vec<u64>)> = self.cols[..k_need]
            .par_iter()
            .map(|stats| {
                let mut dead = Vec::with_capacity(nj);
                let mut surv = Vec::with_capacity(nj);
                for &lam in lambda_grid {
                    let idx = stats.sorted_abs.partition_point(|&v| v <= lam);
                    dead.push(stats.prefix_energy[idx]);
                    surv.push((stats.sorted_abs.len() - idx) as u64);
                }
                (dead, surv)
            })
            .collect();

        let mut risk = Array2::zeros((rank_grid.len(), nj));
        let mut ed = Array2::zeros((rank_grid.len(), nj));
        let mut cum_dead = vec![S::zero(); nj];
        let mut cum_surv = vec![0u64; nj];
        let mut cursor = 0usize;
        for (i, &r) in rank_grid.iter().enumerate() {
            while cursor < r {
                let (dead, surv) = &per_col[cursor];
                for j in 0..nj {
                    cum_dead[j] += dead[j];
                    cum_surv[j] += surv[j];
                }
                cursor += 1;
            }
            let out_energy = self.suffix_energy[r];
            for (j, &lam) in lambda_grid.iter().enumerate() {
                let residual = out_energy
                    + cum_dead[j]
                    + lam * lam * S::from_f64_lossy(cum_surv[j] as f64);
                risk[[i, j]] = sure_value(residual, cum_surv[j], self.n_active, self.k_cols());
                ed[[i, j]] = cum_surv[j];
            }
        }

        // Argmin with parsimonious tie-breaking: smallest rank, then smallest
        // threshold (row-major scan keeps the first strict minimum).
        let mut best = (0usize, 0usize);
        let mut best_risk = risk[[0, 0]];
        for i in 0..rank_grid.len() {
            for j in 0..nj {
                if risk[[i, j]] < best_risk {
                    best_risk = risk[[i, j]];
                    best = (i, j);
                }
            }
        }
        let argmin = Argmin {
            rank: rank_grid[best.0],
            lambda: lambda_grid[best.1],
            risk: best_risk,
            ed: ed[[best.0, best.1]],
            rank_index: best.0,
            lambda_index: best.1,
        };
        Ok(RiskSurface {
            lambda_grid: lambda_grid.to_vec(),
            rank_grid: rank_grid.to_vec(),
            risk,
            ed,
            argmin,
            np: self.np(),
        })
    }

    /// Projects a whitened truth cube into the model's coefficient domain and
    /// precomputes the prefix sums needed to evaluate the squared error at
    /// any grid cell.
    pub(crate) fn truth_stats(&self, truth_white: &HsiCube<S>) -> Result<TruthStats<S>> {
        let bx = self.model.forward_full(truth_white.data())?;
        if bx.dim() != self.b.dim() {
            return Err(Error::DimensionMismatch(
                "truth does not match data shape".into(),
            ));
        }
        let cols: Vec<TruthColumn<S>> = self
            .cols
            .par_iter()
            .enumerate()
            .map(|(k, stats)| {
                let b_col = self.b.column(k);
                let x_col = bx.column(k);
                let m = stats.order.len();
                let mut pb2 = Vec::with_capacity(m + 1);
                let mut pd2 = Vec::with_capacity(m + 1);
                let mut pds = Vec::with_capacity(m + 1);
                let (mut ab2, mut ad2, mut ads) = (S::zero(), S::zero(), S::zero());
                pb2.push(ab2);
                pd2.push(ad2);
                pds.push(ads);
                for &t in &stats.order {
                    let b = b_col[t as usize];
                    let x = x_col[t as usize];
                    let diff = x - b;
                    ab2 += x * x;
                    ad2 += diff * diff;
                    ads += diff * b.signum();
                    pb2.push(ab2);
                    pd2.push(ad2);
                    pds.push(ads);
                }
                TruthColumn {
                    pb2,
                    pd2,
                    pds,
                    energy: ab2,
                }
            })
            .collect();
        let mut suffix_energy = vec![S::zero(); cols.len() + 1];
        for k in (0..cols.len()).rev() {
            suffix_energy[k] = suffix_energy[k + 1] + cols[k].energy;
        }
        Ok(TruthStats {
            cols,
            suffix_energy,
        })
    }

    /// Squared error surface `||X - X_hat||_F^2` (whitened domain) on the
    /// same grid layout as [`RiskEngine::surface`].
    pub(crate) fn mse_surface(
        &self,
        truth: &TruthStats<S>,
        lambda_grid: &[S],
        rank_grid: &[usize],
    ) -> Result<Array2<S>> {
        self.validate_grids(lambda_grid, rank_grid)?;
        let nj = lambda_grid.len();
        let k_need = *rank_grid.last().expect("non-empty");

        // Per-column contributions split at the threshold index:
        // below it the estimate is zero (error x^2); above it the estimate is
        // b -/+ lambda (error (x-b)^2 + 2 lambda (x-b) sign(b) + lambda^2).
        let per_col: Vec<Vec<(S, S, u64)>> = (0..k_need)
            .into_par_iter()
            .map(|k| {
                let stats = &self.cols[k];
                let tc = &truth.cols[k];
                let m = stats.sorted_abs.len();
                let mut out = Vec::with_capacity(nj);
                for &lam in lambda_grid {
                    let idx = stats.sorted_abs.partition_point(|&v| v <= lam);
                    let base = tc.pb2[idx] + (tc.pd2[m] - tc.pd2[idx]);
                    let cross = tc.pds[m] - tc.pds[idx];
                    out.push((base, cross, (m - idx) as u64));
                }
                out
            })
            .collect();

        let mut mse = Array2::zeros((rank_grid.len(), nj));
        let mut cum_base = vec![S::zero(); nj];
        let mut cum_cross = vec![S::zero(); nj];
        let mut cum_surv = vec![0u64; nj];
        let mut cursor = 0usize;
        for (i, &r) in rank_grid.iter().enumerate() {
            while cursor < r {
                for (j, &(base, cross, surv)) in per_col[cursor].iter().enumerate() {
                    cum_base[j] += base;
                    cum_cross[j] += cross;
                    cum_surv[j] += surv;
                }
                cursor += 1;
            }
            let out_energy = truth.suffix_energy[r];
            for (j, &lam) in lambda_grid.iter().enumerate() {
                mse[[i, j]] = out_energy
                    + cum_base[j]
                    + S::from_f64_lossy(2.0) * lam * cum_cross[j]
                    + lam * lam * S::from_f64_lossy(cum_surv[j] as f64);
            }
        }
        Ok(mse)
    }
}

/// Truth-side prefix sums aligned with the engine's per-column sort order.
pub(crate) struct TruthStats<S> {
    cols: Vec<TruthColumn<S>>,
    suffix_energy: Vec<S>,
}

struct TruthColumn<S> {
    pb2: Vec<S>,
    pd2: Vec<S>,
    pds: Vec<S>,
    energy: S,
}

fn rank_grid_for<S: Scalar>(
    spec: ModelSpec,
    engine: &RiskEngine<S>,
    cube: &HsiCube<S>,
    cfg: &HysureConfig<S>,
) -> Vec<usize> {
    match spec.rank_mode() {
        RankMode::Full => vec![engine.k_cols()],
        RankMode::Low => cfg
            .rank_grid
            .clone()
            .unwrap_or_else(|| (1..=cube.pixels().min(cube.bands())).collect()),
    }
}

/// SURE surface for one model over the configured grids.
///
/// Whitening is applied internally with the given noise model. Full-rank
/// models use the single-point rank grid `[K]`; low-rank models use
/// `cfg.rank_grid` or every rank up to `min(n, p)`.
pub fn risk_surface<S: Scalar>(
    cube: &HsiCube<S>,
    model: ModelSpec,
    cfg: &HysureConfig<S>,
    noise: &NoiseModel<S>,
) -> Result<RiskSurface<S>> {
    let white = whiten(cube, noise)?;
    let engine = RiskEngine::new(&white, model, cfg)?;
    let ranks = rank_grid_for(model, &engine, cube, cfg);
    engine.surface(&cfg.lambda_grid, &ranks)
}

/// Squared-error surface against a known clean cube, on the same grid layout
/// as [`risk_surface`]. Both cubes are whitened with the same noise model, so
/// the values are comparable with SURE cell for cell.
pub fn mse_surface<S: Scalar>(
    cube: &HsiCube<S>,
    model: ModelSpec,
    cfg: &HysureConfig<S>,
    noise: &NoiseModel<S>,
    truth: &HsiCube<S>,
) -> Result<Array2<S>> {
    let white = whiten(cube, noise)?;
    let truth_white = whiten(truth, noise)?;
    let engine = RiskEngine::new(&white, model, cfg)?;
    let stats = engine.truth_stats(&truth_white)?;
    let ranks = rank_grid_for(model, &engine, cube, cfg);
    engine.mse_surface(&stats, &cfg.lambda_grid, &ranks)
}

/// One model's grid minimum.
#[derive(Debug, Clone)]
pub struct ModelOutcome<S> {
    pub model_id: usize,
    pub rank: usize,
    pub lambda: S,
    pub sure: S,
    pub ed: u64,
    /// Whitened-domain squared error at the argmin, when truth was supplied.
    pub mse: Option<S>,
    pub surface: Option<RiskSurface<S>>,
}

/// Result of rank selection or model comparison.
#[derive(Debug, Clone)]
pub struct SelectionReport<S> {
    pub outcomes: Vec<ModelOutcome<S>>,
    chosen: usize,
}

impl<S: Scalar> SelectionReport<S> {
    /// The outcome with the smallest minimum SURE.
    pub fn best(&self) -> &ModelOutcome<S> {
        &self.outcomes[self.chosen]
    }

    pub fn chosen_model_id(&self) -> usize {
        self.outcomes[self.chosen].model_id
    }
}

fn resolve_noise<S: Scalar>(cube: &HsiCube<S>, cfg: &HysureConfig<S>) -> Result<NoiseModel<S>> {
    match &cfg.noise {
        Some(noise) => {
            if noise.bands() != cube.bands() {
                return Err(Error::DimensionMismatch(format!(
                    "noise model has {} bands, cube has {}",
                    noise.bands(),
                    cube.bands()
                )));
            }
            Ok(noise.clone())
        }
        None => estimate_noise(cube),
    }
}

fn run_models<S: Scalar>(
    cube: &HsiCube<S>,
    models: &[ModelSpec],
    cfg: &HysureConfig<S>,
    truth: Option<&HsiCube<S>>,
) -> Result<SelectionReport<S>> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("no models to compare".into()));
    }
    let noise = resolve_noise(cube, cfg)?;
    let white = whiten(cube, &noise)?;
    let truth_white = truth.map(|t| whiten(t, &noise)).transpose()?;

    let mut outcomes = Vec::with_capacity(models.len());
    for &spec in models {
        let engine = RiskEngine::new(&white, spec, cfg)?;
        let ranks = rank_grid_for(spec, &engine, cube, cfg);
        let surface = engine.surface(&cfg.lambda_grid, &ranks)?;
        let mse = match &truth_white {
            None => None,
            Some(tw) => {
                let stats = engine.truth_stats(tw)?;
                let cell = engine.mse_surface(
                    &stats,
                    &[surface.argmin.lambda],
                    &[surface.argmin.rank],
                )?;
                Some(cell[[0, 0]])
            }
        };
        outcomes.push(ModelOutcome {
            model_id: spec.id(),
            rank: surface.argmin.rank,
            lambda: surface.argmin.lambda,
            sure: surface.argmin.risk,
            ed: surface.argmin.ed,
            mse,
            surface: cfg.keep_surface.then_some(surface),
        });
    }
    let mut chosen = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        if o.sure < outcomes[chosen].sure {
            chosen = i;
        }
    }
    Ok(SelectionReport { outcomes, chosen })
}

/// The full pipeline at model 7: noise estimation (unless supplied),
/// whitening, and the `(r, lambda)` grid search.
pub fn select_rank<S: Scalar>(
    cube: &HsiCube<S>,
    cfg: &HysureConfig<S>,
) -> Result<SelectionReport<S>> {
    run_models(cube, &[ModelSpec::from_id(7)?], cfg, None)
}

/// Compares models by their minimum SURE over the grid. With `truth`, each
/// outcome also carries the whitened-domain squared error at its argmin.
pub fn model_select<S: Scalar>(
    cube: &HsiCube<S>,
    models: &[ModelSpec],
    cfg: &HysureConfig<S>,
    truth: Option<&HsiCube<S>>,
) -> Result<SelectionReport<S>> {
    run_models(cube, models, cfg, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::cube_from_image_stack;
    use crate::estimate::estimate;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_cube(h: usize, w: usize, p: usize, seed: u64) -> HsiCube<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack: Vec<f64> = (0..h * w * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        cube_from_image_stack(h, w, p, &stack).unwrap()
    }

    fn small_cfg(lambdas: Vec<f64>) -> HysureConfig<f64> {
        HysureConfig {
            spatial_wavelet: WaveletSpec::daubechies(2, 2).unwrap(),
            spectral_wavelet: WaveletSpec::daubechies(2, 2).unwrap(),
            lambda_grid: lambdas,
            rank_grid: None,
            noise: None,
            keep_surface: false,
        }
    }

    #[test]
    fn sure_value_arithmetic() {
        assert_eq!(sure_value(100.0f64, 10, 8, 4), 88.0);
        // total shrinkage: risk of the zero estimator
        assert_eq!(sure_value(50.0f64, 0, 5, 2), 40.0);
    }

    #[test]
    fn mse_oracle_basics() {
        let a = random_cube(2, 2, 2, 1);
        assert_eq!(mse_oracle(&a, &a).unwrap(), 0.0);
        let ones = cube_from_image_stack(2, 2, 2, &[1.0f64; 8]).unwrap();
        let shifted = cube_from_image_stack(
            2,
            2,
            2,
            &[2.0f64, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0],
        )
        .unwrap();
        assert_eq!(mse_oracle(&shifted, &ones).unwrap(), 8.0);
        // matches an element-wise loop
        let b = random_cube(2, 2, 2, 2);
        let manual: f64 = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        assert_eq!(mse_oracle(&a, &b).unwrap(), manual);
        let wrong = random_cube(2, 2, 3, 3);
        assert!(mse_oracle(&a, &wrong).is_err());
    }

    #[test]
    fn full_rank_zero_threshold_risk_is_np() {
        let cube = random_cube(4, 4, 4, 5);
        let cfg = small_cfg(vec![0.0]);
        let noise = NoiseModel::unit(4);
        let surface =
            risk_surface(&cube, ModelSpec::from_id(5).unwrap(), &cfg, &noise).unwrap();
        let np = (16 * 4) as f64;
        assert_eq!(surface.rank_grid, vec![4]);
        assert!(
            (surface.risk[[0, 0]] - np).abs() < 1e-6 * np,
            "risk {} vs np {np}",
            surface.risk[[0, 0]]
        );
    }

    #[test]
    fn surface_matches_pointwise_estimator() {
        // Dual route: the incremental surface agrees with the one-shot
        // estimator at every sampled cell, and survivor counts match exactly.
        let cube = random_cube(4, 4, 6, 8);
        let noise = NoiseModel::new(vec![0.5, 1.0, 2.0, 0.7, 1.3, 0.9]).unwrap();
        let mut cfg = small_cfg(vec![0.0, 0.3, 0.9, 2.5]);
        cfg.rank_grid = Some(vec![1, 3, 6]);
        let spec = ModelSpec::from_id(7).unwrap();
        let surface = risk_surface(&cube, spec, &cfg, &noise).unwrap();
        let white = whiten(&cube, &noise).unwrap();
        let wav = WaveletSpec::daubechies(2, 2).unwrap();
        let model = resolve_model(spec, &white, &wav, &wav, Some(6)).unwrap();
        for (i, &r) in surface.rank_grid.iter().enumerate() {
            for (j, &lam) in surface.lambda_grid.iter().enumerate() {
                let shrink = estimate(&white, &model, lam, r).unwrap();
                assert_eq!(shrink.survivors, surface.ed[[i, j]], "cell ({r}, {lam})");
                let expected = sure_value(shrink.residual_sq, shrink.survivors, 16, 6);
                let scale = expected.abs().max(1.0);
                assert!(
                    (surface.risk[[i, j]] - expected).abs() < 1e-9 * scale,
                    "cell ({r}, {lam}): {} vs {expected}",
                    surface.risk[[i, j]]
                );
            }
        }
    }

    #[test]
    fn ed_monotone_in_lambda_and_rank() {
        let cube = random_cube(4, 4, 5, 4);
        let mut cfg = small_cfg(vec![0.0, 0.2, 0.5, 1.0, 2.0, 4.0]);
        cfg.rank_grid = Some(vec![1, 2, 3, 4, 5]);
        let noise = NoiseModel::unit(5);
        let surface =
            risk_surface(&cube, ModelSpec::from_id(7).unwrap(), &cfg, &noise).unwrap();
        for i in 0..surface.rank_grid.len() {
            for j in 1..surface.lambda_grid.len() {
                assert!(surface.ed[[i, j]] <= surface.ed[[i, j - 1]]);
            }
        }
        for j in 0..surface.lambda_grid.len() {
            for i in 1..surface.rank_grid.len() {
                assert!(surface.ed[[i, j]] >= surface.ed[[i - 1, j]]);
            }
        }
    }

    #[test]
    fn pixel_permutation_invariant_without_spatial_basis() {
        let cube = random_cube(4, 4, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut perm: Vec<usize> = (0..16).collect();
        perm.shuffle(&mut rng);
        let mut permuted = Array2::zeros((16, 5));
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..5 {
                permuted[[dst, j]] = cube.data()[[src, j]];
            }
        }
        let permuted_cube = HsiCube::new(4, 4, permuted).unwrap();
        let mut cfg = small_cfg(vec![0.0, 0.4, 1.1]);
        cfg.rank_grid = Some(vec![1, 2, 5]);
        let noise = NoiseModel::unit(5);
        for id in [3usize, 4, 6] {
            let spec = ModelSpec::from_id(id).unwrap();
            let a = risk_surface(&cube, spec, &cfg, &noise).unwrap();
            let b = risk_surface(&permuted_cube, spec, &cfg, &noise).unwrap();
            assert_eq!(a.ed, b.ed, "model {id}");
            for (x, y) in a.risk.iter().zip(b.risk.iter()) {
                assert!((x - y).abs() < 1e-9, "model {id}");
            }
        }
    }

    #[test]
    fn argmin_reproducible() {
        let cube = random_cube(8, 8, 6, 10);
        let cfg = small_cfg((0..=40).map(|i| i as f64 * 0.1).collect());
        let noise = NoiseModel::unit(6);
        let a = risk_surface(&cube, ModelSpec::from_id(7).unwrap(), &cfg, &noise).unwrap();
        let b = risk_surface(&cube, ModelSpec::from_id(7).unwrap(), &cfg, &noise).unwrap();
        assert_eq!(a.argmin.rank, b.argmin.rank);
        assert_eq!(a.argmin.lambda.to_bits(), b.argmin.lambda.to_bits());
        assert_eq!(a.argmin.risk.to_bits(), b.argmin.risk.to_bits());
    }

    #[test]
    fn rank_one_cube_selects_rank_one() {
        // rank-1 signal with tiny noise (SNR ~60 dB)
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (h, w, p) = (16usize, 16usize, 8usize);
        let n = h * w;
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let v: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..1.5)).collect();
        let signal_energy: f64 =
            u.iter().map(|a| a * a).sum::<f64>() * v.iter().map(|b| b * b).sum::<f64>();
        let noise_scale = (signal_energy / (n * p) as f64 * 1e-6).sqrt();
        let mut stack = Vec::with_capacity(n * p);
        for &bj in &v {
            for &ai in &u {
                let eps: f64 = StandardNormal.sample(&mut rng);
                stack.push(ai * bj + noise_scale * eps);
            }
        }
        let cube = cube_from_image_stack(h, w, p, &stack).unwrap();
        let cfg = small_cfg(default_lambda_grid());
        let report = select_rank(&cube, &cfg).unwrap();
        assert_eq!(report.chosen_model_id(), 7);
        assert_eq!(report.best().rank, 1);
    }

    #[test]
    fn pure_noise_keeps_almost_nothing() {
        // Needs enough samples that the SURE gain of dropping a pure-noise
        // column clears sampling fluctuation.
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let (h, w, p) = (64usize, 64usize, 64usize);
        let stack: Vec<f64> = (0..h * w * p)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let cube = cube_from_image_stack(h, w, p, &stack).unwrap();
        let cfg = small_cfg(default_lambda_grid());
        let report = select_rank(&cube, &cfg).unwrap();
        let np = (h * w * p) as f64;
        assert!(
            (report.best().ed as f64) < 0.01 * np,
            "survivors {} vs np {np}",
            report.best().ed
        );
    }

    #[test]
    fn single_model_selection_is_that_model() {
        let cube = random_cube(4, 4, 4, 3);
        let cfg = small_cfg(vec![0.0, 0.5, 1.0]);
        let report =
            model_select(&cube, &[ModelSpec::from_id(2).unwrap()], &cfg, None).unwrap();
        assert_eq!(report.chosen_model_id(), 2);
        assert_eq!(report.outcomes.len(), 1);
    }

    #[test]
    fn mse_surface_matches_reconstruction() {
        let truth = random_cube(4, 4, 5, 44);
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let noisy_stack: Vec<f64> = crate::cube::cube_to_image_stack(&truth)
            .iter()
            .map(|&v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + 0.3 * e
            })
            .collect();
        let cube = cube_from_image_stack(4, 4, 5, &noisy_stack).unwrap();
        let noise = NoiseModel::new(vec![0.09f64; 5]).unwrap();
        let mut cfg = small_cfg(vec![0.0, 0.7, 1.9]);
        cfg.rank_grid = Some(vec![2, 4]);
        let spec = ModelSpec::from_id(7).unwrap();
        let mse = mse_surface(&cube, spec, &cfg, &noise, &truth).unwrap();

        let white = whiten(&cube, &noise).unwrap();
        let truth_white = whiten(&truth, &noise).unwrap();
        let wav = WaveletSpec::daubechies(2, 2).unwrap();
        let model = resolve_model(spec, &white, &wav, &wav, Some(5)).unwrap();
        for (i, &r) in [2usize, 4].iter().enumerate() {
            for (j, &lam) in [0.0f64, 0.7, 1.9].iter().enumerate() {
                let shrink = estimate(&white, &model, lam, r).unwrap();
                let rebuilt =
                    crate::estimate::reconstruct_signal(&shrink, &model, &NoiseModel::unit(5))
                        .unwrap();
                let expected = mse_oracle(&rebuilt, &truth_white).unwrap();
                let scale = expected.abs().max(1.0);
                assert!(
                    (mse[[i, j]] - expected).abs() < 1e-6 * scale,
                    "cell ({r}, {lam}): {} vs {expected}",
                    mse[[i, j]]
                );
            }
        }
    }

    #[test]
    fn mse_overlay_close_for_fixed_basis_models() {
        // With fixed wavelet bases the realized squared error tracks the
        // SURE minimum closely (within 5% at this scale). Data-adaptive
        // eigenvector bases deviate more because the basis is re-estimated
        // per draw.
        let scene = crate::sim::simulate_scene::<f64>(&crate::sim::SceneConfig {
            height: 64,
            width: 64,
            bands: 224,
            rank: 10,
            mode: crate::sim::AbundanceMode::DirichletSum1,
            eta: 0.0,
            snr_db: 15.0,
            seed: 17,
        })
        .unwrap();
        let cfg = HysureConfig::<f64>::default();
        let models: Vec<ModelSpec> = [1usize, 2, 3]
            .iter()
            .map(|&id| ModelSpec::from_id(id).unwrap())
            .collect();
        let report = model_select(&scene.noisy, &models, &cfg, Some(&scene.clean)).unwrap();
        for o in &report.outcomes {
            let mse = o.mse.expect("truth supplied");
            let rel = (mse - o.sure).abs() / o.sure.abs();
            assert!(
                rel < 0.05,
                "model {}: sure {} vs mse {} ({:.1}%)",
                o.model_id,
                o.sure,
                mse,
                rel * 100.0
            );
        }
    }

    #[test]
    fn shrinkage_reduces_reconstruction_error() {
        // At SNR 15 the selected threshold beats no thresholding at all.
        let scene = crate::sim::simulate_scene::<f64>(&crate::sim::SceneConfig {
            height: 32,
            width: 32,
            bands: 64,
            rank: 10,
            mode: crate::sim::AbundanceMode::DirichletSum1,
            eta: 0.0,
            snr_db: 15.0,
            seed: 23,
        })
        .unwrap();
        let cfg = HysureConfig::<f64>::default();
        let noise = crate::noise::estimate_noise(&scene.noisy).unwrap();
        let spec = ModelSpec::from_id(5).unwrap();
        let surface = risk_surface(&scene.noisy, spec, &cfg, &noise).unwrap();
        let lambda_hat = surface.argmin.lambda;
        assert!(lambda_hat > 0.0, "thresholding selected");
        let mut two_point = cfg.clone();
        two_point.lambda_grid = vec![0.0, lambda_hat];
        let mse = mse_surface(&scene.noisy, spec, &two_point, &noise, &scene.clean).unwrap();
        assert!(
            mse[[0, 1]] < mse[[0, 0]],
            "mse at lambda_hat {} vs at 0 {}",
            mse[[0, 1]],
            mse[[0, 0]]
        );
    }

    #[test]
    fn grid_validation() {
        let cube = random_cube(4, 4, 4, 2);
        let noise = NoiseModel::unit(4);
        let spec = ModelSpec::from_id(7).unwrap();
        let mut cfg = small_cfg(vec![]);
        assert!(risk_surface(&cube, spec, &cfg, &noise).is_err());
        cfg.lambda_grid = vec![0.5, 0.5];
        assert!(risk_surface(&cube, spec, &cfg, &noise).is_err());
        cfg.lambda_grid = vec![0.0, 0.5];
        cfg.rank_grid = Some(vec![1, 9]);
        assert!(risk_surface(&cube, spec, &cfg, &noise).is_err());
        // low-rank grids are capped at min(n, p) even when p exceeds n
        let tall = random_cube(2, 2, 6, 12);
        cfg.rank_grid = Some(vec![1, 5]);
        assert!(matches!(
            risk_surface(&tall, spec, &cfg, &NoiseModel::unit(6)).unwrap_err(),
            Error::RankOutOfRange { rank: 5, max: 4 }
        ));
    }
}
