//! Dense symmetric linear algebra: eigendecomposition and Cholesky solves.
//!
//! The eigensolver is the classic Householder tridiagonalization (tred2)
//! followed by the implicit-shift QL iteration (tql2), accumulating the
//! orthogonal transform. Band counts are small (p <= a few hundred), so a
//! dense O(p^3) solver is the right tool.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::Array2;

/// Eigenvalues (descending) and matching orthonormal eigenvectors (columns)
/// of a real symmetric matrix.
pub fn symmetric_eigen<S: Scalar>(matrix: &Array2<S>) -> Result<(Vec<S>, Array2<S>)> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut v = matrix.clone();
    let mut d = vec![S::zero(); n];
    let mut e = vec![S::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    // Sort eigenpairs by descending eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("finite eigenvalues"));
    let values: Vec<S> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, dst]] = v[[row, src]];
        }
    }
    Ok((values, vectors))
}

/// Householder reduction to tridiagonal form with transform accumulation.
fn tred2<S: Scalar>(v: &mut Array2<S>, d: &mut [S], e: &mut [S]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        let mut scale = S::zero();
        let mut h = S::zero();
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == S::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = S::zero();
                v[[j, i]] = S::zero();
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > S::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = S::zero();
            }

            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = S::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let delta = f * e[k] + g * d[k];
                    v[[k, j]] -= delta;
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = S::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = S::one();
        let h = d[i + 1];
        if h != S::zero() {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = S::zero();
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    let delta = g * d[k];
                    v[[k, j]] -= delta;
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = S::zero();
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = S::zero();
    }
    v[[n - 1, n - 1]] = S::one();
    e[0] = S::zero();
}

/// Implicit-shift QL iteration on the tridiagonal form.
fn tql2<S: Scalar>(v: &mut Array2<S>, d: &mut [S], e: &mut [S]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = S::zero();

    let two = S::from_f64_lossy(2.0);
    let mut f = S::zero();
    let mut tst1 = S::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= S::epsilon() * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 50 {
                    return Err(Error::InvalidParameter(
                        "eigendecomposition failed to converge".into(),
                    ));
                }

                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(S::one());
                if p < S::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = S::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = S::zero();
                let mut s2 = S::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= S::epsilon() * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = S::zero();
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<S: Scalar>(matrix: &Array2<S>) -> Result<Array2<S>> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch(
            "Cholesky needs a square matrix".into(),
        ));
    }
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= S::zero() {
                    return Err(Error::InvalidParameter(
                        "matrix is not positive definite".into(),
                    ));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` in place given the Cholesky factor `L`.
pub fn cholesky_solve<S: Scalar>(l: &Array2<S>, b: &mut [S]) {
    let n = b.len();
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * b[k];
        }
        b[i] = sum / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * b[k];
        }
        b[i] = sum / l[[i, i]];
    }
}

/// Full inverse from the Cholesky factor (solves against unit columns).
pub fn cholesky_inverse<S: Scalar>(l: &Array2<S>) -> Array2<S> {
    let n = l.nrows();
    let mut inv = Array2::zeros((n, n));
    let mut col = vec![S::zero(); n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = S::zero());
        col[j] = S::one();
        cholesky_solve(l, &mut col);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        &a + &a.t()
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = random_symmetric(12, 1);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        // A v_i = lambda_i v_i
        for (i, &lam) in vals.iter().enumerate() {
            let v = vecs.column(i).to_owned();
            let av = a.dot(&v);
            for k in 0..12 {
                assert!((av[k] - lam * v[k]).abs() < 1e-9, "pair {i}");
            }
        }
        // descending order
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigen_vectors_orthonormal() {
        let a = random_symmetric(24, 9);
        let (_, vecs) = symmetric_eigen(&a).unwrap();
        let gram = vecs.t().dot(&vecs);
        for i in 0..24 {
            for j in 0..24 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eigen_handles_huge_spread() {
        // diag(1e12, 1e6, 1) rotated by a random orthogonal basis.
        let (_, q) = symmetric_eigen(&random_symmetric(3, 4)).unwrap();
        let d = Array2::from_diag(&ndarray::arr1(&[1e12f64, 1e6, 1.0]));
        let a = q.dot(&d).dot(&q.t());
        let (vals, _) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1e12).abs() < 1e-2);
        assert!((vals[1] - 1e6).abs() < 1e-6 * 1e6);
        assert!((vals[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cholesky_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Array2::from_shape_fn((8, 8), |_| rng.gen_range(-1.0..1.0));
        let spd = b.t().dot(&b) + Array2::<f64>::eye(8) * 0.5;
        let l = cholesky(&spd).unwrap();
        let mut x: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let rhs = x.clone();
        cholesky_solve(&l, &mut x);
        let xa = ndarray::arr1(&x);
        let back = spd.dot(&xa);
        for i in 0..8 {
            assert!((back[i] - rhs[i]).abs() < 1e-10);
        }
        let inv = cholesky_inverse(&l);
        let ident = spd.dot(&inv);
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ident[[i, j]] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = ndarray::arr2(&[[1.0f64, 2.0], [2.0, 1.0]]);
        assert!(cholesky(&a).is_err());
    }
}
