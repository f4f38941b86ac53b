//! Vectorization, Kronecker products, the block reshaping operators `F` and
//! `G`, and the symmetry maps `P`, `Q`, `T` that remove duplicated entries
//! from vectorized symmetric matrices.
//!
//! All vectorization is column-major: `vec(M)[j * rows + i] = M[(i, j)]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column-major vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: reshapes a `p*q` vector into a `p x q` matrix.
pub fn unvec(v: &DVector<f64>, p: usize, q: usize) -> Result<DMatrix<f64>> {
    if v.len() != p * q {
        return Err(Error::dim("unvec", p * q, v.len()));
    }
    Ok(DMatrix::from_column_slice(p, q, v.as_slice()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Block layout of a matrix made of `m x n` blocks, each `p x q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReshapeSig {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

impl ReshapeSig {
    pub fn new(m: usize, n: usize, p: usize, q: usize) -> Result<Self> {
        if m == 0 || n == 0 || p == 0 || q == 0 {
            return Err(Error::Config(format!(
                "reshape signature needs positive dimensions, got ({m}, {n}, {p}, {q})"
            )));
        }
        Ok(ReshapeSig { m, n, p, q })
    }

    /// Signature relating `E{Ā ⊗ Ā}` (n² x n²) to `E{vec Ā vec Āᵀ}`.
    pub fn square(n: usize) -> Self {
        ReshapeSig {
            m: n,
            n,
            p: n,
            q: n,
        }
    }

    /// Signature relating `E{B̄ ⊗ B̄}` (n² x m²) to `E{vec B̄ vec B̄ᵀ}` (nm x nm).
    pub fn input(n: usize, m: usize) -> Self {
        ReshapeSig {
            m: n,
            n: m,
            p: n,
            q: m,
        }
    }

    /// Shape of the block matrix, `(m p, n q)`.
    pub fn block_shape(&self) -> (usize, usize) {
        (self.m * self.p, self.n * self.q)
    }

    /// Shape of the stacked-vec matrix, `(m n, p q)`.
    pub fn stacked_shape(&self) -> (usize, usize) {
        (self.m * self.n, self.p * self.q)
    }
}

fn check_shape(ctx: &'static str, b: &DMatrix<f64>, (r, c): (usize, usize)) -> Result<()> {
    if b.shape() != (r, c) {
        return Err(Error::dim(
            ctx,
            format!("{r}x{c}"),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}

/// `F(B, m, n, p, q)`: row `j m + i` of the output is `vec(B_ij)ᵀ`, where
/// `B_ij` is the `(i, j)` block of `B`. `F(A ⊗ A) = vec(A) vec(A)ᵀ`.
pub fn reshape_f(b: &DMatrix<f64>, sig: ReshapeSig) -> Result<DMatrix<f64>> {
    check_shape("reshape F input", b, sig.block_shape())?;
    let ReshapeSig { m, n, p, q } = sig;
    let mut out = DMatrix::zeros(m * n, p * q);
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            for c in 0..q {
                for r in 0..p {
                    out[(row, c * p + r)] = b[(i * p + r, j * q + c)];
                }
            }
        }
    }
    Ok(out)
}

/// `G(B, m, n, p, q)`, the inverse permutation of [`reshape_f`]:
/// `G(vec(A) vec(A)ᵀ) = A ⊗ A`.
pub fn reshape_g(b: &DMatrix<f64>, sig: ReshapeSig) -> Result<DMatrix<f64>> {
    check_shape("reshape G input", b, sig.stacked_shape())?;
    let ReshapeSig { m, n, p, q } = sig;
    let mut out = DMatrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            for c in 0..q {
                for r in 0..p {
                    out[(i * p + r, j * q + c)] = b[(row, c * p + r)];
                }
            }
        }
    }
    Ok(out)
}

/// Number of distinct entries of an `n x n` symmetric matrix.
pub const fn half_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Elimination (`P`), duplication (`Q`) and symmetrization (`T = Q P`)
/// matrices for vectorized symmetric `dim x dim` matrices.
///
/// `P` keeps the lower-triangle entries (row ≥ column) in vec order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryMaps {
    dim: usize,
    /// vec indices kept by `P`, ascending
    kept: Vec<usize>,
    /// for each vec index, its position in `kept` after symmetrization
    position: Vec<usize>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    t: DMatrix<f64>,
}

impl SymmetryMaps {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_dim(&self) -> usize {
        self.kept.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// vec indices retained by `P`.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Position in the half-vector of entry `(row, col)`, symmetric in its
    /// arguments.
    pub fn half_index(&self, row: usize, col: usize) -> usize {
        self.position[col * self.dim + row]
    }

    /// `P v` by selection.
    pub fn eliminate(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.kept.len(), self.kept.iter().map(|&k| v[k]))
    }

    /// `Q h` by selection.
    pub fn duplicate(&self, h: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.position.len(), self.position.iter().map(|&k| h[k]))
    }

    /// `P vec(S)`.
    pub fn half_vec(&self, s: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.kept.len(), self.kept.iter().map(|&k| s.as_slice()[k]))
    }

    /// `unvec(Q h)`, the symmetric matrix described by a half-vector.
    pub fn from_half_vec(&self, h: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| h[self.half_index(i, j)])
    }
}

/// Builds `P`, `Q`, `T` for dimension `n`.
///
/// `T` replaces every row `j n + i` with `i < j` (upper triangle) of the
/// identity by the unit row of the mirrored entry `i n + j`; `P` drops those
/// rows and `Q` drops the same columns of `T`.
pub fn symmetry_maps(n: usize) -> SymmetryMaps {
    let nn = n * n;
    let is_upper = |k: usize| (k % n) < (k / n);
    let kept: Vec<usize> = (0..nn).filter(|&k| !is_upper(k)).collect();
    let mut slot = vec![usize::MAX; nn];
    for (pos, &k) in kept.iter().enumerate() {
        slot[k] = pos;
    }
    let position: Vec<usize> = (0..nn)
        .map(|k| {
            let (row, col) = (k % n, k / n);
            if row < col {
                slot[row * n + col]
            } else {
                slot[k]
            }
        })
        .collect();

    let h = kept.len();
    let mut p = DMatrix::zeros(h, nn);
    for (r, &k) in kept.iter().enumerate() {
        p[(r, k)] = 1.0;
    }
    let mut t = DMatrix::zeros(nn, nn);
    for k in 0..nn {
        let (row, col) = (k % n, k / n);
        let target = if row < col { row * n + col } else { k };
        t[(k, target)] = 1.0;
    }
    let mut q = DMatrix::zeros(nn, h);
    for (k, &pos) in position.iter().enumerate() {
        q[(k, pos)] = 1.0;
    }
    SymmetryMaps {
        dim: n,
        kept,
        position,
        p,
        q,
        t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn vec_is_column_major() {
        let a = m(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec(&a).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            vec(&DMatrix::identity(2, 2)).as_slice(),
            &[1.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn vec_index_arithmetic() {
        let a = DMatrix::from_fn(3, 2, |i, j| (10 * i + j) as f64 + 0.5);
        let v = vec(&a);
        for j in 0..2 {
            for i in 0..3 {
                assert_eq!(v[j * 3 + i], a[(i, j)]);
            }
        }
    }

    #[test]
    fn unvec_inverts_vec() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&v, 2, 2).unwrap(), m(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(
            unvec(&DVector::zeros(6), 2, 3).unwrap(),
            DMatrix::zeros(2, 3)
        );
        assert!(unvec(&v, 3, 2).is_err());
    }

    #[test]
    fn kron_small_cases() {
        assert_eq!(
            kron(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2)),
            DMatrix::identity(4, 4)
        );
        let b = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(kron(&m(1, 1, &[2.0]), &b), &b * 2.0);
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 6));
        for bi in 0..2 {
            for bj in 0..2 {
                let block = k.view((bi * 2, bj * 3), (2, 3));
                assert_eq!(block.into_owned(), &b * a[(bi, bj)]);
            }
        }
    }

    #[test]
    fn f_of_kron_is_outer_product_of_vecs() {
        let a = m(3, 2, &[0.5, -1.0, 2.0, 0.25, -3.0, 1.5]);
        let sig = ReshapeSig::new(3, 2, 3, 2).unwrap();
        let f = reshape_f(&kron(&a, &a), sig).unwrap();
        let va = vec(&a);
        assert_eq!(f, &va * va.transpose());
    }

    #[test]
    fn f_degenerates_to_vec() {
        // p = q = 1: each block is a scalar; rows are vec order of B.
        let b = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = reshape_f(&b, ReshapeSig::new(2, 3, 1, 1).unwrap()).unwrap();
        assert_eq!(f.shape(), (6, 1));
        assert_eq!(f.column(0).into_owned(), vec(&b));
    }

    #[test]
    fn f_and_g_of_zero() {
        let sig = ReshapeSig::new(2, 3, 2, 2).unwrap();
        let f = reshape_f(&DMatrix::zeros(4, 6), sig).unwrap();
        assert_eq!(f, DMatrix::zeros(6, 4));
        assert_eq!(reshape_g(&f, sig).unwrap(), DMatrix::zeros(4, 6));
    }

    #[test]
    fn g_of_outer_product_is_kron() {
        let a = m(2, 2, &[-0.2, 0.3, -0.4, 0.8]);
        let va = vec(&a);
        let g = reshape_g(&(&va * va.transpose()), ReshapeSig::square(2)).unwrap();
        assert_eq!(g, kron(&a, &a));
    }

    #[test]
    fn reshape_rejects_bad_shapes() {
        let sig = ReshapeSig::new(2, 2, 2, 2).unwrap();
        assert!(reshape_f(&DMatrix::zeros(3, 4), sig).is_err());
        assert!(reshape_g(&DMatrix::zeros(4, 3), sig).is_err());
        assert!(ReshapeSig::new(0, 1, 1, 1).is_err());
    }

    #[test]
    fn symmetry_maps_two_by_two() {
        let s = symmetry_maps(2);
        assert_eq!(
            s.p(),
            &m(
                3,
                4,
                &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
            )
        );
        assert_eq!(
            s.q(),
            &m(
                4,
                3,
                &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
            )
        );
        assert_eq!(
            s.t(),
            &m(
                4,
                4,
                &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
            )
        );
    }

    #[test]
    fn symmetry_maps_scalar() {
        let s = symmetry_maps(1);
        let one = DMatrix::identity(1, 1);
        assert_eq!(s.p(), &one);
        assert_eq!(s.q(), &one);
        assert_eq!(s.t(), &one);
    }

    #[test]
    fn symmetry_maps_three_round_trip() {
        let s = symmetry_maps(3);
        let a = m(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]);
        let sym = &a + a.transpose();
        let h = s.p() * vec(&sym);
        assert_eq!(h.len(), 6);
        assert_eq!(s.q() * &h, vec(&sym));
        assert_eq!(s.half_vec(&sym), h);
        assert_eq!(s.duplicate(&h), vec(&sym));
        assert_eq!(s.eliminate(&vec(&sym)), h);
        assert_eq!(s.from_half_vec(&h), sym);
        assert_eq!(s.t(), &(s.q() * s.p()));
        assert_eq!(s.p() * s.q(), DMatrix::identity(6, 6));
    }

    #[test]
    fn p_rows_are_unit_rows() {
        for n in 1..=5 {
            let s = symmetry_maps(n);
            for r in 0..s.half_dim() {
                let row = s.p().row(r);
                assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), n * n - 1);
            }
        }
    }
}
