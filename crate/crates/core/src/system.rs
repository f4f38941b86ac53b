//! Linear systems with multiplicative noise,
//! `x_{t+1} = (A + Ā_t) x_t + (B + B̄_t) u_t`, and their simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, psd_factor};
use crate::reshape::{unvec, vec};

/// Eigenvalues of the noise covariances may dip this far below zero
/// (relative to the largest eigenvalue) before a model is rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Tolerance for factorizing covariances when building a sampler.
pub const FACTOR_TOLERANCE: f64 = 1e-8;
/// State norm at which a rollout is declared to have exploded.
pub const EXPLOSION_NORM: f64 = 1e150;

/// Nominal matrices `(A, B)` and the covariances of `vec(Ā_t)` and `vec(B̄_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma_a: DMatrix<f64>,
    sigma_b: DMatrix<f64>,
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            name: name.to_string(),
        })
    }
}

fn check_covariance(name: &str, s: &DMatrix<f64>) -> Result<()> {
    check_finite(name, s)?;
    let scale = s.amax().max(1.0);
    let asym = max_asymmetry(s);
    if asym > PSD_TOLERANCE * scale {
        return Err(Error::NotSymmetric {
            name: name.to_string(),
            asymmetry: asym,
        });
    }
    psd_factor(s, name, PSD_TOLERANCE)?;
    Ok(())
}

impl SystemModel {
    /// Validates dimensions, finiteness, symmetry and positive
    /// semidefiniteness of the covariances.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma_a: DMatrix<f64>,
        sigma_b: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dim(
                "A",
                "square n x n with n > 0",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::dim(
                "B",
                format!("{n} x m with m > 0"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        if sigma_a.shape() != (n * n, n * n) {
            return Err(Error::dim(
                "SigmaA",
                format!("{}x{}", n * n, n * n),
                format!("{}x{}", sigma_a.nrows(), sigma_a.ncols()),
            ));
        }
        if sigma_b.shape() != (n * m, n * m) {
            return Err(Error::dim(
                "SigmaB",
                format!("{}x{}", n * m, n * m),
                format!("{}x{}", sigma_b.nrows(), sigma_b.ncols()),
            ));
        }
        check_finite("A", &a)?;
        check_finite("B", &b)?;
        check_covariance("SigmaA", &sigma_a)?;
        check_covariance("SigmaB", &sigma_b)?;
        Ok(SystemModel {
            a,
            b,
            sigma_a,
            sigma_b,
        })
    }

    /// A model without multiplicative noise.
    pub fn noiseless(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (a.nrows(), b.ncols());
        Self::new(
            a,
            b,
            DMatrix::zeros(n * n, n * n),
            DMatrix::zeros(n * m, n * m),
        )
    }

    /// The two-state, one-input benchmark system.
    pub fn benchmark() -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[-0.2, 0.3, -0.4, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[-1.8, -0.8]);
        #[rustfmt::skip]
        let sigma_a = DMatrix::from_row_slice(4, 4, &[
             8.0, -2.0, 0.0, 0.0,
            -2.0, 16.0, 2.0, 0.0,
             0.0,  2.0, 2.0, 0.0,
             0.0,  0.0, 0.0, 8.0,
        ]) / 100.0;
        let sigma_b = DMatrix::from_row_slice(2, 2, &[5.0, -2.0, -2.0, 20.0]) / 100.0;
        Self::new(a, b, sigma_a, sigma_b).expect("benchmark system is valid")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_a(&self) -> &DMatrix<f64> {
        &self.sigma_a
    }

    pub fn sigma_b(&self) -> &DMatrix<f64> {
        &self.sigma_b
    }

    /// `[A B]`.
    pub fn nominal(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut ab = DMatrix::zeros(n, n + m);
        ab.view_mut((0, 0), (n, n)).copy_from(&self.a);
        ab.view_mut((0, n), (n, m)).copy_from(&self.b);
        ab
    }
}

/// Noise written as a sum of fixed directions scaled by independent scalar
/// variables: `Ā_t = Σ_i A_i p_{i,t}`, `B̄_t = Σ_j B_j q_{j,t}`, with
/// `E p_i² = σ_i²` and `E q_j² = δ_j²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenNoise {
    n: usize,
    m: usize,
    directions_a: Vec<DMatrix<f64>>,
    variances_a: Vec<f64>,
    directions_b: Vec<DMatrix<f64>>,
    variances_b: Vec<f64>,
}

impl EigenNoise {
    pub fn new(
        n: usize,
        m: usize,
        directions_a: Vec<DMatrix<f64>>,
        variances_a: Vec<f64>,
        directions_b: Vec<DMatrix<f64>>,
        variances_b: Vec<f64>,
    ) -> Result<Self> {
        if directions_a.len() != variances_a.len() {
            return Err(Error::dim(
                "state noise variances",
                directions_a.len(),
                variances_a.len(),
            ));
        }
        if directions_b.len() != variances_b.len() {
            return Err(Error::dim(
                "input noise variances",
                directions_b.len(),
                variances_b.len(),
            ));
        }
        for d in &directions_a {
            if d.shape() != (n, n) {
                return Err(Error::dim(
                    "state noise direction",
                    format!("{n}x{n}"),
                    format!("{}x{}", d.nrows(), d.ncols()),
                ));
            }
        }
        for d in &directions_b {
            if d.shape() != (n, m) {
                return Err(Error::dim(
                    "input noise direction",
                    format!("{n}x{m}"),
                    format!("{}x{}", d.nrows(), d.ncols()),
                ));
            }
        }
        for (name, vars) in [
            ("state noise variances", &variances_a),
            ("input noise variances", &variances_b),
        ] {
            if vars.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        Ok(EigenNoise {
            n,
            m,
            directions_a,
            variances_a,
            directions_b,
            variances_b,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn directions_a(&self) -> &[DMatrix<f64>] {
        &self.directions_a
    }

    pub fn variances_a(&self) -> &[f64] {
        &self.variances_a
    }

    pub fn directions_b(&self) -> &[DMatrix<f64>] {
        &self.directions_b
    }

    pub fn variances_b(&self) -> &[f64] {
        &self.variances_b
    }
}

fn weighted_outer_sum(dim: usize, dirs: &[DMatrix<f64>], vars: &[f64]) -> DMatrix<f64> {
    let mut sigma = DMatrix::zeros(dim, dim);
    for (d, &v) in dirs.iter().zip(vars) {
        let vd = vec(d);
        sigma.ger(v, &vd, &vd, 1.0);
    }
    sigma
}

/// `Σ_A = Σ_i σ_i² vec(A_i) vec(A_i)ᵀ` and likewise `Σ_B`.
pub fn cov_from_eigen(e: &EigenNoise) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        weighted_outer_sum(e.n * e.n, &e.directions_a, &e.variances_a),
        weighted_outer_sum(e.n * e.m, &e.directions_b, &e.variances_b),
    )
}

/// Draws zero-mean Gaussian noise matrices with prescribed vec-covariances
/// from square-root factors.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    n: usize,
    m: usize,
    factor_a: DMatrix<f64>,
    factor_b: DMatrix<f64>,
}

fn drop_zero_columns(f: DMatrix<f64>) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..f.ncols())
        .filter(|&j| f.column(j).amax() > 0.0)
        .collect();
    f.select_columns(keep.iter())
}

impl NoiseSampler {
    /// Factorizes `Σ_A` and `Σ_B` through their eigendecompositions.
    pub fn from_model(model: &SystemModel) -> Result<Self> {
        let factor_a = psd_factor(model.sigma_a(), "SigmaA", FACTOR_TOLERANCE)?;
        let factor_b = psd_factor(model.sigma_b(), "SigmaB", FACTOR_TOLERANCE)?;
        Ok(NoiseSampler {
            n: model.n(),
            m: model.m(),
            factor_a: drop_zero_columns(factor_a),
            factor_b: drop_zero_columns(factor_b),
        })
    }

    /// Uses the known directions: one Gaussian scalar per direction.
    pub fn from_eigen(e: &EigenNoise) -> Self {
        let build = |rows: usize, dirs: &[DMatrix<f64>], vars: &[f64]| {
            let mut f = DMatrix::zeros(rows, dirs.len());
            for (j, (d, &v)) in dirs.iter().zip(vars).enumerate() {
                f.column_mut(j).copy_from(&(vec(d) * v.sqrt()));
            }
            drop_zero_columns(f)
        };
        NoiseSampler {
            n: e.n,
            m: e.m,
            factor_a: build(e.n * e.n, &e.directions_a, &e.variances_a),
            factor_b: build(e.n * e.m, &e.directions_b, &e.variances_b),
        }
    }

    fn draw<R: Rng + ?Sized>(
        factor: &DMatrix<f64>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> DMatrix<f64> {
        if factor.ncols() == 0 {
            return DMatrix::zeros(rows, cols);
        }
        let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        unvec(&(factor * z), rows, cols).expect("factor rows match the noise shape")
    }

    /// One draw of `Ā`.
    pub fn sample_a<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        Self::draw(&self.factor_a, self.n, self.n, rng)
    }

    /// One draw of `B̄`.
    pub fn sample_b<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        Self::draw(&self.factor_b, self.n, self.m, rng)
    }
}

/// Draws an independent pair `(Ā, B̄)` from the model's covariances.
pub fn sample_noise_pair<R: Rng + ?Sized>(
    model: &SystemModel,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sampler = NoiseSampler::from_model(model)?;
    let a = sampler.sample_a(rng);
    let b = sampler.sample_b(rng);
    Ok((a, b))
}

/// Gaussian distribution of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl InitialState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::dim(
                "initial covariance",
                format!("{n}x{n}"),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: "initial mean".into(),
            });
        }
        let factor = drop_zero_columns(psd_factor(&cov, "initial covariance", PSD_TOLERANCE)?);
        Ok(InitialState { mean, cov, factor })
    }

    /// `x_0 ~ N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n)).expect("identity is PSD")
    }

    /// A fixed initial state.
    pub fn fixed(x0: DVector<f64>) -> Self {
        let n = x0.len();
        Self::new(x0, DMatrix::zeros(n, n)).expect("zero covariance is PSD")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `E{x_0 x_0ᵀ}`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.cov + &self.mean * self.mean.transpose()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.factor.ncols() == 0 {
            return self.mean.clone();
        }
        let z = DVector::from_fn(self.factor.ncols(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        &self.mean + &self.factor * z
    }
}

/// One trajectory `x_0..x_ℓ` and the inputs `u_0..u_{ℓ-1}` that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Rollout {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Runs the noisy recursion with a fresh noise pair at every step.
/// `rng_a` and `rng_b` feed the state and input noise respectively.
///
/// Fails with [`Error::Explosion`] (rollout index 0) once the state norm
/// exceeds [`EXPLOSION_NORM`] or becomes non-finite.
pub fn simulate_rollout<R: Rng + ?Sized>(
    model: &SystemModel,
    sampler: &NoiseSampler,
    x0: DVector<f64>,
    inputs: Vec<DVector<f64>>,
    rng_a: &mut R,
    rng_b: &mut R,
) -> Result<Rollout> {
    let (n, m) = (model.n(), model.m());
    if x0.len() != n {
        return Err(Error::dim("initial state", n, x0.len()));
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != m) {
        return Err(Error::dim("input", m, u.len()));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0);
    for (t, u) in inputs.iter().enumerate() {
        let x = &states[t];
        let abar = sampler.sample_a(rng_a);
        let bbar = sampler.sample_b(rng_b);
        let next = (model.a() + abar) * x + (model.b() + bbar) * u;
        let norm = next.norm();
        if !norm.is_finite() || norm > EXPLOSION_NORM {
            return Err(Error::Explosion {
                rollout: 0,
                step: t + 1,
                norm,
            });
        }
        states.push(next);
    }
    Ok(Rollout { states, inputs })
}
