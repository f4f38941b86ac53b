//! Covariances consistent with given simplified covariances.
//!
//! The simplified dynamics only see `Σ̃′`, so every
//! `Σ_A(α) = F(Q₁ Σ̃′_A Q₃ᵀ + E_α)` with `Q₃ = D_n Q₁` produces the same
//! second moments. `E_α` is a sum of `α_{ij,kl} (e_ij − e_ji)(e_kl − e_lk)ᵀ`
//! over `i < j`, `k < l`; `D_n` halves the off-diagonal vec indices.
//! `Σ_B(β)` is built the same way with `Q₄ = D_m Q₂` on the input side.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::reshape::{reshape_f, symmetry_maps, ReshapeSig};

/// Largest negative eigenvalue accepted as PSD.
pub const PSD_SELECT_TOLERANCE: f64 = 1e-8;

/// `base + Σ_p params[p] · generators[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily {
    pub base: DMatrix<f64>,
    pub generators: Vec<DMatrix<f64>>,
    /// `(i, j, k, l)` of each parameter
    pub labels: Vec<(usize, usize, usize, usize)>,
}

/// A PSD member of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdWitness {
    pub matrix: DMatrix<f64>,
    pub params: Vec<f64>,
    pub min_eigenvalue: f64,
}

impl AffineFamily {
    pub fn num_params(&self) -> usize {
        self.generators.len()
    }

    /// The member at `params`.
    pub fn at(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        if params.len() != self.generators.len() {
            return Err(Error::dim(
                "family parameters",
                self.generators.len(),
                params.len(),
            ));
        }
        let mut out = self.base.clone();
        for (g, &p) in self.generators.iter().zip(params) {
            out += g * p;
        }
        Ok(out)
    }

    /// Searches for a member with minimum eigenvalue ≥ −1e-8 by supergradient
    /// ascent on the minimum eigenvalue, starting at zero, for at most
    /// `budget` eigendecompositions.
    pub fn psd_select(&self, budget: usize) -> Option<PsdWitness> {
        let k = self.num_params();
        let mut params = vec![0.0; k];
        let scale = self.base.amax().max(f64::MIN_POSITIVE);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for iter in 0..budget.max(1) {
            let m = self.at(&params).expect("parameter count matches");
            let eig = SymmetricEigen::new(m.clone());
            let (idx, lmin) = eig.eigenvalues.iter().cloned().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, l)| if l < acc.1 { (i, l) } else { acc },
            );
            if lmin >= -PSD_SELECT_TOLERANCE {
                return Some(PsdWitness {
                    matrix: m,
                    params,
                    min_eigenvalue: lmin,
                });
            }
            if best.as_ref().is_none_or(|(b, _)| lmin > *b) {
                best = Some((lmin, params.clone()));
            }
            if k == 0 {
                break;
            }
            let v = eig.eigenvectors.column(idx);
            let grad: Vec<f64> = self
                .generators
                .iter()
                .map(|g| (v.transpose() * g * v)[(0, 0)])
                .collect();
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let step = scale / ((iter + 1) as f64).sqrt();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p += step * g / norm;
            }
        }
        None
    }
}

/// Families of `Σ_A` and `Σ_B` matching given simplified covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFamily {
    pub sigma_a: AffineFamily,
    pub sigma_b: AffineFamily,
}

impl CovarianceFamily {
    pub fn sigma_a_at(&self, alpha: &[f64]) -> Result<DMatrix<f64>> {
        self.sigma_a.at(alpha)
    }

    pub fn sigma_b_at(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        self.sigma_b.at(beta)
    }
}

/// `D_k Q` for the symmetry maps of size `k`.
fn halved_duplication(k: usize) -> DMatrix<f64> {
    let maps = symmetry_maps(k);
    let mut q = maps.q().clone();
    for idx in 0..k * k {
        if idx % k != idx / k {
            q.row_mut(idx).scale_mut(0.5);
        }
    }
    q
}

fn antisymmetric_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            out.push((i, j));
        }
    }
    out
}

fn antisym_vec(k: usize, i: usize, j: usize) -> nalgebra::DVector<f64> {
    let mut v = nalgebra::DVector::zeros(k * k);
    v[i * k + j] = 1.0;
    v[j * k + i] = -1.0;
    v
}

fn family(
    tilde: &DMatrix<f64>,
    row_dim: usize,
    col_dim: usize,
    sig: ReshapeSig,
) -> Result<AffineFamily> {
    let rows = symmetry_maps(row_dim);
    let q_cols = halved_duplication(col_dim);
    let (hr, hc) = (rows.half_dim(), q_cols.ncols());
    if tilde.shape() != (hr, hc) {
        return Err(Error::dim(
            "simplified covariance",
            format!("{hr}x{hc}"),
            format!("{:?}", tilde.shape()),
        ));
    }
    let base = reshape_f(&(rows.q() * tilde * q_cols.transpose()), sig)?;
    let mut generators = Vec::new();
    let mut labels = Vec::new();
    for &(i, j) in &antisymmetric_pairs(row_dim) {
        let e = antisym_vec(row_dim, i, j);
        for &(k, l) in &antisymmetric_pairs(col_dim) {
            let f = antisym_vec(col_dim, k, l);
            generators.push(reshape_f(&(&e * f.transpose()), sig)?);
            labels.push((i, j, k, l));
        }
    }
    Ok(AffineFamily {
        base,
        generators,
        labels,
    })
}

/// The families `Σ_A(α)` and `Σ_B(β)` for simplified covariances of a system
/// with `n` states and `m` inputs.
pub fn covariance_family(
    tilde_sigma_a: &DMatrix<f64>,
    tilde_sigma_b: &DMatrix<f64>,
    n: usize,
    m: usize,
) -> Result<CovarianceFamily> {
    Ok(CovarianceFamily {
        sigma_a: family(tilde_sigma_a, n, n, ReshapeSig::square(n))?,
        sigma_b: family(tilde_sigma_b, n, m, ReshapeSig::input(n, m))?,
    })
}
