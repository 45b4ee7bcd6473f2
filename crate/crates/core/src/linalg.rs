//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetrizes in place: `a <- (a + a^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Inverse of the lower Cholesky factor of an SPD matrix, so that
/// `x^T a^{-1} x = |L^{-1} x|^2`.
pub fn inverse_cholesky_factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l();
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let inv = l.solve_lower_triangular(&id)?;
    if inv.iter().all(|v| v.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Squared column norms of `m`.
pub fn column_sq_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm_squared()).collect()
}

/// `(1/n) sum_i w_i x_i x_i^T` over the columns of `x`.
pub fn weighted_gram(x: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    debug_assert_eq!(x.ncols(), weights.len());
    let n = x.ncols().max(1) as f64;
    let mut scaled = x.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
        col *= w / n;
    }
    let mut out = &scaled * x.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric square root `V diag(sqrt(lambda)) V^T` of an SPD matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| v.sqrt()),
    );
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Relative spectral-norm distance `|a - b| / |a|` for symmetric matrices.
pub fn relative_spectral_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    sym_spectral_norm(&(a - b)) / sym_spectral_norm(a)
}

/// Columns per work item in the chunked kernels below.
const CHUNK_COLS: usize = 256;

/// Quadratic forms `x_i^T a^{-1} x_i / scale` for every column of `x`, from one
/// Cholesky factorization of `a`. `None` if `a` is not numerically SPD.
pub fn quadratic_forms(a: &DMatrix<f64>, x: &DMatrix<f64>, scale: f64) -> Option<Vec<f64>> {
    let linv = inverse_cholesky_factor(a)?;
    let ranges = crate::par::chunk_ranges(x.ncols(), CHUNK_COLS);
    let parts = crate::par::map_slice(&ranges, |r| {
        let w = &linv * x.columns(r.start, r.len());
        w.column_iter()
            .map(|c| c.norm_squared() / scale)
            .collect::<Vec<_>>()
    });
    let q: Vec<f64> = parts.into_iter().flatten().collect();
    q.iter().all(|v| v.is_finite()).then_some(q)
}

/// Chunked variant of [`weighted_gram`]; partial sums are formed per chunk.
pub fn weighted_gram_chunked(x: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let (dim, n) = (x.nrows(), x.ncols());
    if n <= CHUNK_COLS {
        return weighted_gram(x, weights);
    }
    let ranges = crate::par::chunk_ranges(n, CHUNK_COLS);
    let parts = crate::par::map_slice(&ranges, |r| {
        let block = x.columns(r.start, r.len());
        let mut scaled = block.clone_owned();
        for (mut col, &w) in scaled.column_iter_mut().zip(&weights[r.clone()]) {
            col *= w;
        }
        scaled * block.transpose()
    });
    let mut out = DMatrix::zeros(dim, dim);
    for p in parts {
        out += p;
    }
    out /= n as f64;
    symmetrize(&mut out);
    out
}
