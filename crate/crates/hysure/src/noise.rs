//! Per-band noise estimation and whitening.
//!
//! Noise variance is estimated band by band with multiple regression: each
//! band is regressed on all other bands and the residual power gives the
//! variance. The regression is solved through the Gram matrix with a small
//! ridge term, using the partitioned-inverse identity so a single `p x p`
//! inverse serves every band.

use crate::cube::{HsiCube, NoiseModel};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_inverse};
use crate::scalar::Scalar;
use ndarray::Array2;

/// Ridge scale relative to `trace(Z^T Z)/p`.
const RIDGE_REL: f64 = 1e-6;
/// Variance floor relative to mean data power.
const FLOOR_REL: f64 = 1e-12;

/// Estimates per-band noise variances by regressing each band on all others.
///
/// Requires `p >= 2` and `n > p`; variances are floored at
/// `1e-12 * mean data power` so whitening stays defined on noiseless inputs.
pub fn estimate_noise<S: Scalar>(cube: &HsiCube<S>) -> Result<NoiseModel<S>> {
    let n = cube.pixels();
    let p = cube.bands();
    if p < 2 {
        return Err(Error::InvalidParameter(
            "noise regression needs at least two bands".into(),
        ));
    }
    if n <= p {
        return Err(Error::IllPosedRegression { n, p });
    }
    let z = cube.data();
    let gram = z.t().dot(z);
    let trace: S = (0..p).map(|i| gram[[i, i]]).sum();
    let ridge = S::from_f64_lossy(RIDGE_REL) * trace / S::from_count(p);
    let mut ridged = gram.clone();
    for i in 0..p {
        ridged[[i, i]] += ridge;
    }
    let l = cholesky(&ridged)?;
    let hinv = cholesky_inverse(&l);

    // Column i of `beta` holds the coefficients for regressing band i on the
    // other bands; its own entry is exactly zero by the partitioned-inverse
    // identity.
    let mut beta = Array2::zeros((p, p));
    let mut g = vec![S::zero(); p];
    for i in 0..p {
        for (j, slot) in g.iter_mut().enumerate() {
            *slot = if j == i { S::zero() } else { gram[[j, i]] };
        }
        let mut u = vec![S::zero(); p];
        for (r, slot) in u.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (c, &gc) in g.iter().enumerate() {
                acc += hinv[[r, c]] * gc;
            }
            *slot = acc;
        }
        let correction = u[i] / hinv[[i, i]];
        for r in 0..p {
            beta[[r, i]] = u[r] - hinv[[r, i]] * correction;
        }
        beta[[i, i]] = S::zero();
    }

    // Residuals for every band in one product: R = Z - Z * beta.
    let fitted = z.dot(&beta);
    let floor = S::from_f64_lossy(FLOOR_REL) * trace / (S::from_count(n) * S::from_count(p));
    let inv_n = S::one() / S::from_count(n);
    let sigma2: Vec<S> = (0..p)
        .map(|i| {
            let mut rss = S::zero();
            for r in 0..n {
                let diff = z[[r, i]] - fitted[[r, i]];
                rss += diff * diff;
            }
            (rss * inv_n).max(floor)
        })
        .collect();
    NoiseModel::new(sigma2)
}

/// Scales each band by its inverse noise standard deviation.
pub fn whiten<S: Scalar>(cube: &HsiCube<S>, noise: &NoiseModel<S>) -> Result<HsiCube<S>> {
    scale_bands(cube, noise, true)
}

/// Exact inverse of [`whiten`]: scales each band by its noise standard
/// deviation.
pub fn restore<S: Scalar>(cube: &HsiCube<S>, noise: &NoiseModel<S>) -> Result<HsiCube<S>> {
    scale_bands(cube, noise, false)
}

fn scale_bands<S: Scalar>(
    cube: &HsiCube<S>,
    noise: &NoiseModel<S>,
    inverse: bool,
) -> Result<HsiCube<S>> {
    if noise.bands() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "noise model has {} bands, cube has {}",
            noise.bands(),
            cube.bands()
        )));
    }
    let mut data = cube.data().clone();
    for (j, &var) in noise.variances().iter().enumerate() {
        let sd = var.sqrt();
        let factor = if inverse { S::one() / sd } else { sd };
        for v in data.column_mut(j).iter_mut() {
            *v *= factor;
        }
    }
    Ok(HsiCube::from_parts(cube.height(), cube.width(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::cube_from_image_stack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn unit_noise_whitening_is_identity() {
        let cube = cube_from_image_stack(2, 2, 2, &[1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        let noise = NoiseModel::unit(2);
        let white = whiten(&cube, &noise).unwrap();
        assert_eq!(white.data(), cube.data());
    }

    #[test]
    fn scalar_whitening() {
        let cube = cube_from_image_stack(1, 2, 1, &[2.0f64, 2.0]).unwrap();
        let noise = NoiseModel::new(vec![4.0f64]).unwrap();
        let white = whiten(&cube, &noise).unwrap();
        assert!(white.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn restore_scales_by_std_dev() {
        let cube = cube_from_image_stack(1, 2, 3, &[1.0f64; 6]).unwrap();
        let noise = NoiseModel::new(vec![1.0f64, 4.0, 9.0]).unwrap();
        let restored = restore(&cube, &noise).unwrap();
        for (j, expected) in [1.0, 2.0, 3.0].iter().enumerate() {
            for &v in restored.data().column(j) {
                assert!((v - expected).abs() < 1e-15);
            }
        }
        let zero = cube_from_image_stack(1, 2, 3, &[0.0f64; 6]).unwrap();
        let restored_zero = restore(&zero, &noise).unwrap();
        assert!(restored_zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whiten_restore_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack: Vec<f64> = (0..4 * 4 * 3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cube = cube_from_image_stack(4, 4, 3, &stack).unwrap();
        let noise = NoiseModel::new(vec![0.5f64, 2.0, 7.0]).unwrap();
        let back = restore(&whiten(&cube, &noise).unwrap(), &noise).unwrap();
        for (a, b) in cube.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        let back2 = whiten(&restore(&cube, &noise).unwrap(), &noise).unwrap();
        for (a, b) in cube.data().iter().zip(back2.data().iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn iid_noise_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (n, p) = (4096usize, 20usize);
        let stack: Vec<f64> = (0..n * p).map(|_| normal(&mut rng)).collect();
        let cube = cube_from_image_stack(64, 64, p, &stack).unwrap();
        let noise = estimate_noise(&cube).unwrap();
        for &v in noise.variances() {
            assert!((0.9..=1.1).contains(&v), "variance {v}");
        }
    }

    #[test]
    fn duplicated_band_variance_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, p) = (4096usize, 6usize);
        let mut stack: Vec<f64> = (0..n * p).map(|_| normal(&mut rng)).collect();
        // band 1 = band 0 + N(0, 0.01)
        for i in 0..n {
            stack[n + i] = stack[i] + 0.1 * normal(&mut rng);
        }
        let cube = cube_from_image_stack(64, 64, p, &stack).unwrap();
        let noise = estimate_noise(&cube).unwrap();
        let v = noise.variances()[1];
        assert!((v - 0.01).abs() < 0.2 * 0.01, "variance {v}");
    }

    #[test]
    fn noiseless_rank_one_hits_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 256;
        let p = 4;
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let b: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..1.5)).collect();
        let mut stack = Vec::with_capacity(n * p);
        for &bj in &b {
            for &ui in &u {
                stack.push(ui * bj);
            }
        }
        let cube = cube_from_image_stack(16, 16, p, &stack).unwrap();
        let power: f64 = stack.iter().map(|v| v * v).sum::<f64>() / (n * p) as f64;
        let floor = 1e-12 * power;
        let noise = estimate_noise(&cube).unwrap();
        for &v in noise.variances() {
            assert!((v - floor).abs() <= 1e-6 * floor, "variance {v} vs floor {floor}");
        }
    }

    #[test]
    fn ill_posed_regression_rejected() {
        let cube = cube_from_image_stack(1, 3, 4, &[1.0f64; 12]).unwrap();
        assert!(matches!(
            estimate_noise(&cube).unwrap_err(),
            Error::IllPosedRegression { n: 3, p: 4 }
        ));
    }

    #[test]
    fn whitened_noise_has_unit_variance() {
        // Cube with known band-dependent noise: after whitening, the per-band
        // sample variance of the noise is 1 within 10%.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, w, p) = (64usize, 64usize, 8usize);
        let n = h * w;
        let sigmas = [0.1f64, 0.3, 1.0, 2.0, 0.5, 4.0, 0.05, 1.5];
        let mut clean = Vec::with_capacity(n * p);
        for j in 0..p {
            for i in 0..n {
                clean.push(((i % 17) as f64 * 0.1 + j as f64).sin());
            }
        }
        let mut noisy = clean.clone();
        for (j, &s) in sigmas.iter().enumerate() {
            for i in 0..n {
                noisy[j * n + i] += s * normal(&mut rng);
            }
        }
        let clean_cube = cube_from_image_stack(h, w, p, &clean).unwrap();
        let noisy_cube = cube_from_image_stack(h, w, p, &noisy).unwrap();
        let noise = NoiseModel::new(sigmas.iter().map(|&s| s * s).collect()).unwrap();
        let wn = whiten(&noisy_cube, &noise).unwrap();
        let wc = whiten(&clean_cube, &noise).unwrap();
        for j in 0..p {
            let var: f64 = wn
                .data()
                .column(j)
                .iter()
                .zip(wc.data().column(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            assert!((var - 1.0).abs() < 0.1, "band {j}: whitened variance {var}");
        }
    }
}
