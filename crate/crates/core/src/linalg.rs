//! Dense linear-algebra helpers: numerical rank, pseudoinverse least squares,
//! and symmetric PSD utilities.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Singular-value summary of a matrix, using the cutoff
/// `max(rows, cols) * eps * sigma_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankInfo {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Smallest of the first `min(rows, cols)` singular values.
    pub min_singular_value: f64,
    pub max_singular_value: f64,
}

impl RankInfo {
    /// True when the matrix has full row rank.
    pub fn full_row_rank(&self) -> bool {
        self.rank == self.rows
    }

    fn from_singular_values(rows: usize, cols: usize, sv: &DVector<f64>) -> Self {
        let max = sv.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = rank_cutoff(rows, cols, max);
        let rank = sv.iter().filter(|&&s| s > cutoff).count();
        let min = if rows > cols {
            0.0
        } else {
            sv.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        RankInfo {
            rows,
            cols,
            rank,
            min_singular_value: if min.is_finite() { min } else { 0.0 },
            max_singular_value: max,
        }
    }
}

pub(crate) fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank of `m` with the standard singular-value cutoff.
pub fn numerical_rank(m: &DMatrix<f64>) -> RankInfo {
    if m.is_empty() {
        return RankInfo {
            rows: m.nrows(),
            cols: m.ncols(),
            rank: 0,
            min_singular_value: 0.0,
            max_singular_value: 0.0,
        };
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    RankInfo::from_singular_values(m.nrows(), m.ncols(), &sv)
}

/// Solves `min_theta || target - theta * regressor ||_F` and returns
/// `target * regressor^T (regressor * regressor^T)^+`, evaluated as
/// `target * pinv(regressor)` from a thin SVD of the regressor.
pub fn lstsq_right(
    target: &DMatrix<f64>,
    regressor: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, RankInfo)> {
    if target.ncols() != regressor.ncols() {
        return Err(Error::dim(
            "least-squares sample count",
            regressor.ncols(),
            target.ncols(),
        ));
    }
    let p = regressor.nrows();
    if regressor.ncols() == 0 || p == 0 {
        let info = numerical_rank(regressor);
        return Ok((DMatrix::zeros(target.nrows(), p), info));
    }
    // Work with the tall orientation: regressor^T = U S V^T  =>  pinv(regressor) = U S^+ V^T.
    let tall = regressor.transpose();
    let svd = SVD::new(tall, true, true);
    let info = RankInfo::from_singular_values(p, regressor.ncols(), &svd.singular_values);
    let cutoff = rank_cutoff(p, regressor.ncols(), info.max_singular_value);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    // target * U : q x k
    let mut tu = target * u;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let scale = if s > cutoff { 1.0 / s } else { 0.0 };
        tu.column_mut(j).scale_mut(scale);
    }
    Ok((tu * v_t, info))
}

/// Pseudoinverse of a symmetric PSD matrix through its eigendecomposition,
/// discarding eigenvalues below `dim * eps * lambda_max`. Returns the
/// pseudoinverse and the retained rank.
pub fn pinv_symmetric(gram: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = gram.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let eig = SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rank_cutoff(n, n, lmax);
    let mut rank = 0;
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l > cutoff {
            rank += 1;
            1.0 / l
        } else {
            0.0
        };
        scaled.column_mut(j).scale_mut(inv);
    }
    (scaled * eig.eigenvectors.transpose(), rank)
}

/// Largest absolute difference between `m` and its transpose.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Square-root factor `L` with `L L^T = m` for a symmetric PSD matrix.
/// Eigenvalues in `[-tol * scale, 0)` are clipped to zero; anything more
/// negative is rejected.
pub fn psd_factor(m: &DMatrix<f64>, name: &str, tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::dim(
            "psd factor",
            format!("{n}x{n}"),
            format!("{}x{}", n, m.ncols()),
        ));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            name: name.to_string(),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &l| a.max(l.abs()));
    let mut factor = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -tol * scale {
            return Err(Error::NotPsd {
                name: name.to_string(),
                min_eigenvalue: l,
            });
        }
        factor.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    Ok(factor)
}

/// `||estimate - truth||_F / ||truth||_F`, or the absolute error when the
/// truth is zero.
pub fn relative_frobenius(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let diff = (estimate - truth).norm();
    let denom = truth.norm();
    if denom > 0.0 {
        diff / denom
    } else {
        diff
    }
}

/// `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// True when `(A, B)` passes the Kalman rank test.
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    numerical_rank(&controllability_matrix(a, b)).rank == a.nrows()
}

/// Deterministic pairwise (cascade) summation of equally shaped vectors fed
/// in order. The combination tree depends only on the number of items.
#[derive(Debug, Clone)]
pub struct PairwiseSum {
    len: usize,
    count: usize,
    // (level, sum of 2^level consecutive items), levels strictly decreasing
    stack: Vec<(u32, DVector<f64>)>,
}

impl PairwiseSum {
    pub fn new(len: usize) -> Self {
        PairwiseSum {
            len,
            count: 0,
            stack: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, item: DVector<f64>) {
        debug_assert_eq!(item.len(), self.len);
        let mut cur = (0_u32, item);
        while let Some((level, _)) = self.stack.last() {
            if *level != cur.0 {
                break;
            }
            let (level, top) = self.stack.pop().expect("non-empty");
            cur = (level + 1, top + cur.1);
        }
        self.stack.push(cur);
        self.count += 1;
    }

    /// Sum of everything pushed so far, combining partial blocks from the
    /// smallest upwards.
    pub fn total(&self) -> DVector<f64> {
        let mut acc: Option<DVector<f64>> = None;
        for (_, block) in self.stack.iter().rev() {
            acc = Some(match acc {
                None => block.clone(),
                Some(a) => block + a,
            });
        }
        acc.unwrap_or_else(|| DVector::zeros(self.len))
    }
}
