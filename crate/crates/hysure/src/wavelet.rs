//! Orthogonal discrete wavelet transforms.
//!
//! 1-D and separable 2-D Daubechies transforms with periodic (circular)
//! boundary handling, which keeps the discrete transform exactly orthogonal.
//! The 2-D transform acts as the spatial basis on each band of a cube; the
//! 1-D transform acts as the spectral basis on each pixel spectrum.
//!
//! Non-dyadic extents are handled by symmetric extension up to the next
//! multiple of `2^levels`; [`SpatialPlan`] tracks the original extent and a
//! mask of coefficients whose support touches it.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Daubechies extremal-phase scaling (low-pass) filters, rounded to f64 from
/// a 60-digit spectral factorization so orthonormality holds to machine
/// precision.
const DB1: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB2: [f64; 4] = [
    0.48296291314453416,
    0.8365163037378079,
    0.2241438680420134,
    -0.12940952255126037,
];
const DB3: [f64; 6] = [
    0.33267055295008263,
    0.8068915093110925,
    0.45987750211849154,
    -0.13501102001025458,
    -0.08544127388202666,
    0.03522629188570953,
];
const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];
const DB5: [f64; 10] = [
    0.16010239797419293,
    0.6038292697971896,
    0.7243085284377729,
    0.13842814590132074,
    -0.24229488706638203,
    -0.032244869584638375,
    0.07757149384004572,
    -0.006241490212798274,
    -0.012580751999081999,
    0.0033357252854737712,
];

/// Wavelet family. Only Daubechies extremal-phase filters are built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveletFamily {
    Daubechies,
}

/// Boundary rule. Periodic wrapping is the only rule that keeps the discrete
/// transform exactly orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryRule {
    Periodic,
}

/// Orthogonal wavelet configuration: family, tap count and decomposition depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub taps: usize,
    pub levels: usize,
    pub boundary: BoundaryRule,
}

impl WaveletSpec {
    /// A Daubechies wavelet with the given tap count (2 = Haar) and depth.
    pub fn daubechies(taps: usize, levels: usize) -> Result<Self> {
        scaling_filter_f64(taps)?;
        // 2^levels must stay a sane block size
        if levels == 0 || levels > 24 {
            return Err(Error::InvalidParameter(format!(
                "decomposition depth must be in 1..=24, got {levels}"
            )));
        }
        Ok(Self {
            family: WaveletFamily::Daubechies,
            taps,
            levels,
            boundary: BoundaryRule::Periodic,
        })
    }

    /// Required divisor of transform lengths: `2^levels`.
    pub fn block(&self) -> usize {
        1 << self.levels
    }

    pub(crate) fn filters<S: Scalar>(&self) -> Result<FilterPair<S>> {
        let h_f64 = scaling_filter_f64(self.taps)?;
        let h: Vec<S> = h_f64.iter().map(|&c| S::from_f64_lossy(c)).collect();
        let g = quadrature_mirror(&h);
        Ok(FilterPair { h, g })
    }
}

fn scaling_filter_f64(taps: usize) -> Result<&'static [f64]> {
    match taps {
        2 => Ok(&DB1),
        4 => Ok(&DB2),
        6 => Ok(&DB3),
        8 => Ok(&DB4),
        10 => Ok(&DB5),
        other => Err(Error::UnsupportedWavelet(other)),
    }
}

/// High-pass from low-pass: `g_k = (-1)^k h_{taps-1-k}`.
fn quadrature_mirror<S: Scalar>(h: &[S]) -> Vec<S> {
    let taps = h.len();
    (0..taps)
        .map(|k| {
            let v = h[taps - 1 - k];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

pub(crate) struct FilterPair<S> {
    pub h: Vec<S>,
    pub g: Vec<S>,
}

fn check_divisible(len: usize, levels: usize) -> Result<()> {
    if len == 0 || !len.is_multiple_of(1usize << levels) {
        return Err(Error::NotDyadic { len, levels });
    }
    Ok(())
}

/// One analysis step: periodic convolution and downsampling by two.
/// `x` has even length; approximation and detail each get half.
fn step_forward<S: Scalar>(x: &[S], f: &FilterPair<S>, approx: &mut [S], detail: &mut [S]) {
    let m = x.len();
    let half = m / 2;
    for i in 0..half {
        let mut a = S::zero();
        let mut d = S::zero();
        for k in 0..f.h.len() {
            let idx = (2 * i + k) % m;
            a += f.h[k] * x[idx];
            d += f.g[k] * x[idx];
        }
        approx[i] = a;
        detail[i] = d;
    }
}

/// One synthesis step, the exact transpose of [`step_forward`].
fn step_inverse<S: Scalar>(approx: &[S], detail: &[S], f: &FilterPair<S>, out: &mut [S]) {
    let half = approx.len();
    let m = 2 * half;
    for v in out.iter_mut().take(m) {
        *v = S::zero();
    }
    for i in 0..half {
        let a = approx[i];
        let d = detail[i];
        for k in 0..f.h.len() {
            let idx = (2 * i + k) % m;
            out[idx] += f.h[k] * a + f.g[k] * d;
        }
    }
}

/// Multi-level in-place analysis of `data`, using `scratch` of the same length.
/// Final layout: `[a_L | d_L | d_{L-1} | ... | d_1]`.
fn transform_forward<S: Scalar>(data: &mut [S], scratch: &mut [S], f: &FilterPair<S>, levels: usize) {
    let mut cur = data.len();
    for _ in 0..levels {
        let (sa, sd) = scratch[..cur].split_at_mut(cur / 2);
        step_forward(&data[..cur], f, sa, sd);
        data[..cur].copy_from_slice(&scratch[..cur]);
        cur /= 2;
    }
}

fn transform_inverse<S: Scalar>(data: &mut [S], scratch: &mut [S], f: &FilterPair<S>, levels: usize) {
    let mut cur = data.len() >> levels;
    for _ in 0..levels {
        let m = 2 * cur;
        let (a, d) = data[..m].split_at(cur);
        step_inverse(a, d, f, &mut scratch[..m]);
        data[..m].copy_from_slice(&scratch[..m]);
        cur = m;
    }
}

/// Forward 1-D transform. The output has the same length as the input, laid
/// out coarsest-first. Length must be divisible by `2^levels`.
pub fn dwt1d_forward<S: Scalar>(signal: &[S], spec: &WaveletSpec) -> Result<Vec<S>> {
    check_divisible(signal.len(), spec.levels)?;
    let f = spec.filters::<S>()?;
    let mut data = signal.to_vec();
    let mut scratch = vec![S::zero(); signal.len()];
    transform_forward(&mut data, &mut scratch, &f, spec.levels);
    Ok(data)
}

/// Inverse of [`dwt1d_forward`].
pub fn dwt1d_inverse<S: Scalar>(coeffs: &[S], spec: &WaveletSpec) -> Result<Vec<S>> {
    check_divisible(coeffs.len(), spec.levels)?;
    let f = spec.filters::<S>()?;
    let mut data = coeffs.to_vec();
    let mut scratch = vec![S::zero(); coeffs.len()];
    transform_inverse(&mut data, &mut scratch, &f, spec.levels);
    Ok(data)
}

fn rows_then_cols<S: Scalar>(
    image: &mut Array2<S>,
    f: &FilterPair<S>,
    levels: usize,
    forward: bool,
) {
    let (h, w) = image.dim();
    let mut line = vec![S::zero(); h.max(w)];
    let mut scratch = vec![S::zero(); h.max(w)];
    let level_dims = |level: usize| (h >> level, w >> level);
    let order: Vec<usize> = if forward {
        (0..levels).collect()
    } else {
        (0..levels).rev().collect()
    };
    for level in order {
        let (bh, bw) = level_dims(level);
        // One analysis/synthesis level on the top-left block: rows, then columns.
        for r in 0..bh {
            for c in 0..bw {
                line[c] = image[[r, c]];
            }
            if forward {
                transform_forward(&mut line[..bw], &mut scratch[..bw], f, 1);
            } else {
                transform_inverse(&mut line[..bw], &mut scratch[..bw], f, 1);
            }
            for c in 0..bw {
                image[[r, c]] = line[c];
            }
        }
        for c in 0..bw {
            for r in 0..bh {
                line[r] = image[[r, c]];
            }
            if forward {
                transform_forward(&mut line[..bh], &mut scratch[..bh], f, 1);
            } else {
                transform_inverse(&mut line[..bh], &mut scratch[..bh], f, 1);
            }
            for r in 0..bh {
                image[[r, c]] = line[r];
            }
        }
    }
}

/// Forward separable 2-D transform (rows then columns per level). Both extents
/// must be divisible by `2^levels`.
pub fn dwt2d_forward<S: Scalar>(image: &Array2<S>, spec: &WaveletSpec) -> Result<Array2<S>> {
    check_divisible(image.nrows(), spec.levels)?;
    check_divisible(image.ncols(), spec.levels)?;
    let f = spec.filters::<S>()?;
    let mut out = image.clone();
    rows_then_cols(&mut out, &f, spec.levels, true);
    Ok(out)
}

/// Inverse of [`dwt2d_forward`].
pub fn dwt2d_inverse<S: Scalar>(coeffs: &Array2<S>, spec: &WaveletSpec) -> Result<Array2<S>> {
    check_divisible(coeffs.nrows(), spec.levels)?;
    check_divisible(coeffs.ncols(), spec.levels)?;
    let f = spec.filters::<S>()?;
    let mut out = coeffs.clone();
    rows_then_cols(&mut out, &f, spec.levels, false);
    Ok(out)
}

/// Half-sample symmetric extension index: `[a b c] -> a b c | c b a | a b c ...`
pub(crate) fn mirror_index(i: usize, len: usize) -> usize {
    let period = 2 * len;
    let j = i % period;
    if j < len {
        j
    } else {
        period - 1 - j
    }
}

/// Next multiple of `block` at or above `len`.
pub(crate) fn padded_len(len: usize, block: usize) -> usize {
    len.div_ceil(block) * block
}

/// Support length in samples of a level-`level` synthesis atom with `taps`-tap
/// filters: `2^level * (taps - 1) - taps + 2`.
fn support_len(taps: usize, level: usize) -> usize {
    (1usize << level) * (taps - 1) + 2 - taps
}

/// Dyadic band of a 1-D coefficient index in the coarsest-first layout:
/// returns `(level, position_within_band)`.
fn coeff_band(t: usize, len: usize, levels: usize) -> (usize, usize) {
    for level in 1..=levels {
        let band_start = len >> level;
        if t >= band_start {
            return (level, t - band_start);
        }
    }
    (levels, t)
}

/// Whether the support of a 1-D coefficient touches `[0, orig)` on a periodic
/// axis of length `len`.
fn coeff_touches_original(t: usize, len: usize, levels: usize, taps: usize, orig: usize) -> bool {
    let (level, pos) = coeff_band(t, len, levels);
    let support = support_len(taps, level);
    if support >= len {
        return true;
    }
    let start = (pos << level) % len;
    // Wrapping support re-enters at index 0, which is always inside the
    // original extent.
    start < orig || start + support > len
}

/// The 2-D wavelet operator for a fixed spatial shape: pads non-dyadic extents
/// by symmetric extension, transforms each band, and knows which coefficients
/// have support inside the original extent.
#[derive(Debug, Clone)]
pub struct SpatialPlan<S> {
    spec: WaveletSpec,
    orig_h: usize,
    orig_w: usize,
    pad_h: usize,
    pad_w: usize,
    /// `None` when no padding was needed (every coefficient active).
    mask: Option<Vec<bool>>,
    filters_h: Vec<S>,
}

impl<S: Scalar> SpatialPlan<S> {
    pub fn new(spec: WaveletSpec, height: usize, width: usize) -> Result<Self> {
        let f = spec.filters::<S>()?; // validates taps
        let block = spec.block();
        let pad_h = padded_len(height, block);
        let pad_w = padded_len(width, block);
        let mask = if pad_h == height && pad_w == width {
            None
        } else {
            let mut m = Vec::with_capacity(pad_h * pad_w);
            let rows: Vec<bool> = (0..pad_h)
                .map(|y| coeff_touches_original(y, pad_h, spec.levels, spec.taps, height))
                .collect();
            let cols: Vec<bool> = (0..pad_w)
                .map(|x| coeff_touches_original(x, pad_w, spec.levels, spec.taps, width))
                .collect();
            for &ry in &rows {
                for &cx in &cols {
                    m.push(ry && cx);
                }
            }
            Some(m)
        };
        Ok(Self {
            spec,
            orig_h: height,
            orig_w: width,
            pad_h,
            pad_w,
            mask,
            filters_h: f.h,
        })
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    pub fn padded_pixels(&self) -> usize {
        self.pad_h * self.pad_w
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.pad_h, self.pad_w)
    }

    pub fn original_shape(&self) -> (usize, usize) {
        (self.orig_h, self.orig_w)
    }

    /// Row-major mask over padded coefficient positions; `None` when no
    /// padding was applied.
    pub fn active_mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn active_count(&self) -> usize {
        match &self.mask {
            None => self.pad_h * self.pad_w,
            Some(m) => m.iter().filter(|&&b| b).count(),
        }
    }

    fn band_image(&self, column: &[S]) -> Array2<S> {
        let mut img = Array2::zeros((self.pad_h, self.pad_w));
        for y in 0..self.pad_h {
            let sy = mirror_index(y, self.orig_h);
            for x in 0..self.pad_w {
                let sx = mirror_index(x, self.orig_w);
                img[[y, x]] = column[sy * self.orig_w + sx];
            }
        }
        img
    }

    /// Transforms every column of an `n x p` matrix (bands of a cube).
    /// Output is `n_pad x p`.
    pub fn forward_mat(&self, mat: &Array2<S>) -> Result<Array2<S>> {
        if mat.nrows() != self.orig_h * self.orig_w {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows, plan expects {}",
                mat.nrows(),
                self.orig_h * self.orig_w
            )));
        }
        let f = FilterPair {
            h: self.filters_h.clone(),
            g: quadrature_mirror(&self.filters_h),
        };
        let p = mat.ncols();
        let n_pad = self.padded_pixels();
        let cols: Vec<Vec<S>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let col: Vec<S> = mat.column(j).to_vec();
                let mut img = self.band_image(&col);
                rows_then_cols(&mut img, &f, self.spec.levels, true);
                img.into_raw_vec_and_offset().0
            })
            .collect();
        let mut out = Array2::zeros((n_pad, p));
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }

    /// Inverse transform of an `n_pad x p` coefficient matrix, cropped back to
    /// the original extent.
    pub fn inverse_mat(&self, coeffs: &Array2<S>) -> Result<Array2<S>> {
        if coeffs.nrows() != self.padded_pixels() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient matrix has {} rows, plan expects {}",
                coeffs.nrows(),
                self.padded_pixels()
            )));
        }
        let f = FilterPair {
            h: self.filters_h.clone(),
            g: quadrature_mirror(&self.filters_h),
        };
        let p = coeffs.ncols();
        let cols: Vec<Vec<S>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let col: Vec<S> = coeffs.column(j).to_vec();
                let mut img = Array2::from_shape_vec((self.pad_h, self.pad_w), col)
                    .expect("padded shape matches");
                rows_then_cols(&mut img, &f, self.spec.levels, false);
                let mut out = Vec::with_capacity(self.orig_h * self.orig_w);
                for y in 0..self.orig_h {
                    for x in 0..self.orig_w {
                        out.push(img[[y, x]]);
                    }
                }
                out
            })
            .collect();
        let mut out = Array2::zeros((self.orig_h * self.orig_w, p));
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// Transform direction for [`apply_spatial_basis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Transforms each band of a cube by the 2-D wavelet.
///
/// Forward pads non-dyadic extents symmetrically; the output records the
/// padded shape. Inverse treats the cube extent as the (already padded)
/// transform domain and does not crop; use [`SpatialPlan`] when the original
/// extent must be restored.
pub fn apply_spatial_basis<S: Scalar>(
    cube: &HsiCube<S>,
    spec: &WaveletSpec,
    direction: Direction,
) -> Result<HsiCube<S>> {
    match direction {
        Direction::Forward => {
            let plan = SpatialPlan::new(*spec, cube.height(), cube.width())?;
            let data = plan.forward_mat(cube.data())?;
            let (h, w) = plan.padded_shape();
            Ok(HsiCube::from_parts(h, w, data))
        }
        Direction::Inverse => {
            check_divisible(cube.height(), spec.levels)?;
            check_divisible(cube.width(), spec.levels)?;
            let plan = SpatialPlan::new(*spec, cube.height(), cube.width())?;
            let data = plan.inverse_mat(cube.data())?;
            Ok(HsiCube::from_parts(cube.height(), cube.width(), data))
        }
    }
}
