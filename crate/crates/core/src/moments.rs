//! First- and second-moment dynamics.
//!
//! With `X̃_t = P₁ vec E{x_t x_tᵀ}` and `Ũ_t = P₂ vec E{u_t u_tᵀ}`:
//!
//! ```text
//! μ_{t+1} = A μ_t + B ν_t
//! X̃_{t+1} = (Ã + Σ̃′_A) X̃_t + (B̃ + Σ̃′_B) Ũ_t + K_BA W_t + K_AB W′_t
//! ```
//!
//! where `Ã = P₁(A⊗A)Q₁`, `B̃ = P₁(B⊗B)Q₂`, `K_BA = P₁(B⊗A)`,
//! `K_AB = P₁(A⊗B)`, `W_t = vec E{x_t u_tᵀ}` and `W′_t = vec E{u_t x_tᵀ}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, min_eigenvalue};
use crate::reshape::{kron, reshape_f, reshape_g, symmetry_maps, vec, ReshapeSig, SymmetryMaps};
use crate::system::SystemModel;

/// Tolerance on `E{xxᵀ}` eigenvalues, relative to its trace.
pub const MOMENT_PSD_TOLERANCE: f64 = 1e-8;
const SYMMETRY_TOLERANCE: f64 = 1e-10;
const EQUIVALENCE_TOLERANCE: f64 = 1e-10;

/// Operators of the simplified second-moment recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOps {
    pub n: usize,
    pub m: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub tilde_a: DMatrix<f64>,
    pub tilde_b: DMatrix<f64>,
    pub k_ba: DMatrix<f64>,
    pub k_ab: DMatrix<f64>,
    pub tilde_sigma_a: DMatrix<f64>,
    pub tilde_sigma_b: DMatrix<f64>,
    pub state_maps: SymmetryMaps,
    pub input_maps: SymmetryMaps,
}

impl LiftedOps {
    /// Attaches simplified noise covariances to noise-free operators.
    pub fn with_noise(
        mut self,
        tilde_sigma_a: DMatrix<f64>,
        tilde_sigma_b: DMatrix<f64>,
    ) -> Result<Self> {
        let (hn, hm) = (self.state_maps.half_dim(), self.input_maps.half_dim());
        if tilde_sigma_a.shape() != (hn, hn) {
            return Err(Error::dim(
                "simplified SigmaA'",
                format!("{hn}x{hn}"),
                format!("{:?}", tilde_sigma_a.shape()),
            ));
        }
        if tilde_sigma_b.shape() != (hn, hm) {
            return Err(Error::dim(
                "simplified SigmaB'",
                format!("{hn}x{hm}"),
                format!("{:?}", tilde_sigma_b.shape()),
            ));
        }
        self.tilde_sigma_a = tilde_sigma_a;
        self.tilde_sigma_b = tilde_sigma_b;
        Ok(self)
    }

    /// Exact operators of a known model.
    pub fn from_model(model: &SystemModel) -> Result<Self> {
        let (n, m) = (model.n(), model.m());
        let sp_a = sigma_prime_from_cov(model.sigma_a(), ReshapeSig::square(n))?;
        let sp_b = sigma_prime_from_cov(model.sigma_b(), ReshapeSig::input(n, m))?;
        let (ta, tb) = simplify_sigma(&sp_a, &sp_b, n, m)?;
        lift_ops(model.a(), model.b())?.with_noise(ta, tb)
    }

    /// `Ã + Σ̃′_A`.
    pub fn state_operator(&self) -> DMatrix<f64> {
        &self.tilde_a + &self.tilde_sigma_a
    }

    /// `B̃ + Σ̃′_B`.
    pub fn input_operator(&self) -> DMatrix<f64> {
        &self.tilde_b + &self.tilde_sigma_b
    }
}

/// Noise-free lifted operators of `(A, B)`.
pub fn lift_ops(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LiftedOps> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::dim(
            "lift_ops",
            "A n x n and B n x m",
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    let m = b.ncols();
    let sn = symmetry_maps(n);
    let sm = symmetry_maps(m);
    let tilde_a = sn.p() * kron(a, a) * sn.q();
    let tilde_b = sn.p() * kron(b, b) * sm.q();
    let k_ba = sn.p() * kron(b, a);
    let k_ab = sn.p() * kron(a, b);
    let (hn, hm) = (sn.half_dim(), sm.half_dim());
    Ok(LiftedOps {
        n,
        m,
        a: a.clone(),
        b: b.clone(),
        tilde_a,
        tilde_b,
        k_ba,
        k_ab,
        tilde_sigma_a: DMatrix::zeros(hn, hn),
        tilde_sigma_b: DMatrix::zeros(hn, hm),
        state_maps: sn,
        input_maps: sm,
    })
}

/// `Σ′ = G(Σ)`, so that `F(Σ′) = Σ`. For `Σ = E{vec Ā vec Āᵀ}` this is
/// `E{Ā ⊗ Ā}`.
pub fn sigma_prime_from_cov(sigma: &DMatrix<f64>, sig: ReshapeSig) -> Result<DMatrix<f64>> {
    let asym = max_asymmetry(sigma);
    if asym > SYMMETRY_TOLERANCE * sigma.amax().max(1.0) {
        return Err(Error::NotSymmetric {
            name: "covariance".into(),
            asymmetry: asym,
        });
    }
    reshape_g(sigma, sig)
}

/// `(P₁ Σ′_A Q₁, P₁ Σ′_B Q₂)`.
pub fn simplify_sigma(
    sigma_prime_a: &DMatrix<f64>,
    sigma_prime_b: &DMatrix<f64>,
    n: usize,
    m: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if sigma_prime_a.shape() != (n * n, n * n) {
        return Err(Error::dim(
            "SigmaA'",
            format!("{}x{}", n * n, n * n),
            format!("{:?}", sigma_prime_a.shape()),
        ));
    }
    if sigma_prime_b.shape() != (n * n, m * m) {
        return Err(Error::dim(
            "SigmaB'",
            format!("{}x{}", n * n, m * m),
            format!("{:?}", sigma_prime_b.shape()),
        ));
    }
    let sn = symmetry_maps(n);
    let sm = symmetry_maps(m);
    Ok((
        sn.p() * sigma_prime_a * sn.q(),
        sn.p() * sigma_prime_b * sm.q(),
    ))
}

/// `μ_0, ..., μ_ℓ` for inputs `ν_0, ..., ν_{ℓ-1}`.
pub fn propagate_first(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mu0: &DVector<f64>,
    nus: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let mut mu = Vec::with_capacity(nus.len() + 1);
    mu.push(mu0.clone());
    for (t, nu) in nus.iter().enumerate() {
        let next = a * &mu[t] + b * nu;
        mu.push(next);
    }
    mu
}

/// `X̃_0, ..., X̃_ℓ` of the simplified recursion, driven by `Ũ_t`, `W_t`,
/// `W′_t` for `t < ℓ`.
pub fn propagate_second(
    ops: &LiftedOps,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
    wp: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    if u.len() != w.len() || u.len() != wp.len() {
        return Err(Error::dim(
            "second-moment drive lengths",
            u.len(),
            format!("{} / {}", w.len(), wp.len()),
        ));
    }
    if x0.len() != ops.state_maps.half_dim() {
        return Err(Error::dim("X0", ops.state_maps.half_dim(), x0.len()));
    }
    let sa = ops.state_operator();
    let sb = ops.input_operator();
    let mut xs = Vec::with_capacity(u.len() + 1);
    xs.push(x0.clone());
    for t in 0..u.len() {
        let next = &sa * &xs[t] + &sb * &u[t] + &ops.k_ba * &w[t] + &ops.k_ab * &wp[t];
        xs.push(next);
    }
    Ok(xs)
}

/// Exact moment sequences of a rollout population.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    /// `μ_0..μ_ℓ`
    pub mu: Vec<DVector<f64>>,
    /// `X̃_0..X̃_ℓ`
    pub x: Vec<DVector<f64>>,
    /// `W_0..W_{ℓ-1}`
    pub w: Vec<DVector<f64>>,
    /// `W′_0..W′_{ℓ-1}`
    pub wp: Vec<DVector<f64>>,
    /// `Ũ_0..Ũ_{ℓ-1}`
    pub u: Vec<DVector<f64>>,
}

impl MomentTrajectory {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }
}

/// `vec(μ νᵀ)` and `vec(ν μᵀ)`.
pub fn cross_moments(mu: &DVector<f64>, nu: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    (vec(&(mu * nu.transpose())), vec(&(nu * mu.transpose())))
}

/// `P₂ vec(Ū + ν νᵀ)`.
pub fn input_second_moment(
    maps: &SymmetryMaps,
    nu: &DVector<f64>,
    ubar: &DMatrix<f64>,
) -> DVector<f64> {
    maps.half_vec(&(ubar + nu * nu.transpose()))
}

/// Propagates both moments from the initial mean and second moment under
/// inputs with means `nus` and covariances `ubars`, independent of the state.
pub fn moment_trajectory(
    ops: &LiftedOps,
    mu0: &DVector<f64>,
    second0: &DMatrix<f64>,
    nus: &[DVector<f64>],
    ubars: &[DMatrix<f64>],
) -> Result<MomentTrajectory> {
    if nus.len() != ubars.len() {
        return Err(Error::dim("input schedule", nus.len(), ubars.len()));
    }
    let mu = propagate_first(&ops.a, &ops.b, mu0, nus);
    let (w, wp): (Vec<_>, Vec<_>) = mu
        .iter()
        .zip(nus)
        .map(|(m, nu)| cross_moments(m, nu))
        .unzip();
    let u: Vec<_> = nus
        .iter()
        .zip(ubars)
        .map(|(nu, ub)| input_second_moment(&ops.input_maps, nu, ub))
        .collect();
    let x0 = ops.state_maps.half_vec(second0);
    let x = propagate_second(ops, &x0, &u, &w, &wp)?;
    Ok(MomentTrajectory { mu, x, w, wp, u })
}

/// True when `E{xxᵀ}` described by the half-vector `x` is PSD within
/// [`MOMENT_PSD_TOLERANCE`] of its trace.
pub fn second_moment_is_psd(maps: &SymmetryMaps, x: &DVector<f64>) -> bool {
    let s = maps.from_half_vec(x);
    let scale = s.trace().abs().max(f64::MIN_POSITIVE);
    min_eigenvalue(&s) >= -MOMENT_PSD_TOLERANCE * scale
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Whether two pairs `(Σ′_A, Σ′_B)` produce the same simplified
/// covariances, ignoring positive semidefiniteness.
pub fn same_simplified(
    s1a: &DMatrix<f64>,
    s1b: &DMatrix<f64>,
    s2a: &DMatrix<f64>,
    s2b: &DMatrix<f64>,
    n: usize,
    m: usize,
) -> Result<bool> {
    let (t1a, t1b) = simplify_sigma(s1a, s1b, n, m)?;
    let (t2a, t2b) = simplify_sigma(s2a, s2b, n, m)?;
    Ok(max_abs_diff(&t1a, &t2a) <= EQUIVALENCE_TOLERANCE
        && max_abs_diff(&t1b, &t2b) <= EQUIVALENCE_TOLERANCE)
}

/// Whether `(S1A, S1B)` and `(S2A, S2B)` lie in the same equivalence class:
/// identical simplified covariances and PSD reshapes `F(·)` for all four.
pub fn equivalence_class_check(
    s1a: &DMatrix<f64>,
    s1b: &DMatrix<f64>,
    s2a: &DMatrix<f64>,
    s2b: &DMatrix<f64>,
    n: usize,
    m: usize,
) -> Result<bool> {
    if !same_simplified(s1a, s1b, s2a, s2b, n, m)? {
        return Ok(false);
    }
    for (s, sig) in [
        (s1a, ReshapeSig::square(n)),
        (s2a, ReshapeSig::square(n)),
        (s1b, ReshapeSig::input(n, m)),
        (s2b, ReshapeSig::input(n, m)),
    ] {
        let cov = reshape_f(s, sig)?;
        let scale = cov.amax().max(1.0);
        if max_asymmetry(&cov) > EQUIVALENCE_TOLERANCE * scale
            || min_eigenvalue(&cov) < -EQUIVALENCE_TOLERANCE * scale
        {
            return Ok(false);
        }
    }
    Ok(true)
}
