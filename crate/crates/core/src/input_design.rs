//! Exploratory inputs: per-step Gaussian means `ν_t` and Wishart second
//! moments `Ū_t`, fixed once drawn, plus horizon bounds and rank
//! certificates for the regressors built from exact moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{regressor_d, regressor_z};
use crate::linalg::{numerical_rank, psd_factor};
use crate::moments::{moment_trajectory, propagate_first, LiftedOps};
use crate::rng::{global_stream, Source};
use crate::system::{InitialState, PSD_TOLERANCE};

/// Smallest horizon for which the first-moment regressor `Z` has full row
/// rank almost surely: `m n (n + 1) / 2 + m + 1`.
pub fn min_horizon_first(n: usize, m: usize) -> usize {
    m * n * (n + 1) / 2 + m + 1
}

/// Smallest horizon for which the second-moment regressor `D` has full row
/// rank almost surely: `m² n² (n² + 1) / 2 + m² + 1`.
pub fn min_horizon_second(n: usize, m: usize) -> usize {
    let (n2, m2) = (n * n, m * m);
    m2 * n2 * (n2 + 1) / 2 + m2 + 1
}

/// Fixed input statistics over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSchedule {
    nus: Vec<DVector<f64>>,
    ubars: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    seed: u64,
}

impl InputSchedule {
    /// Builds a schedule from explicit means and covariances.
    pub fn from_parts(nus: Vec<DVector<f64>>, ubars: Vec<DMatrix<f64>>, seed: u64) -> Result<Self> {
        if nus.len() != ubars.len() {
            return Err(Error::dim("schedule length", nus.len(), ubars.len()));
        }
        if nus.is_empty() {
            return Err(Error::Config("schedule horizon must be at least 1".into()));
        }
        let m = nus[0].len();
        let mut factors = Vec::with_capacity(ubars.len());
        for (t, (nu, ub)) in nus.iter().zip(&ubars).enumerate() {
            if nu.len() != m || ub.shape() != (m, m) {
                return Err(Error::dim(
                    "schedule step",
                    format!("{m} / {m}x{m}"),
                    format!("t = {t}"),
                ));
            }
            if nu.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    name: format!("nu[{t}]"),
                });
            }
            factors.push(psd_factor(ub, &format!("Ubar[{t}]"), PSD_TOLERANCE)?);
        }
        Ok(InputSchedule {
            nus,
            ubars,
            factors,
            seed,
        })
    }

    /// Same statistics at every step.
    pub fn constant(nu: DVector<f64>, ubar: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::from_parts(vec![nu; horizon], vec![ubar; horizon], 0)
    }

    pub fn horizon(&self) -> usize {
        self.nus.len()
    }

    pub fn m(&self) -> usize {
        self.nus[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nus(&self) -> &[DVector<f64>] {
        &self.nus
    }

    pub fn ubars(&self) -> &[DMatrix<f64>] {
        &self.ubars
    }
}

/// Draws `ν_t ~ N(0, mean_cov)` and `Ū_t = G Gᵀ` with `G` made of
/// `wishart_dof` columns from `N(0, wishart_scale)`, for `t < horizon`.
pub fn design_schedule(
    m: usize,
    horizon: usize,
    mean_cov: &DMatrix<f64>,
    wishart_scale: &DMatrix<f64>,
    wishart_dof: usize,
    seed: u64,
) -> Result<InputSchedule> {
    if horizon == 0 {
        return Err(Error::Config("schedule horizon must be at least 1".into()));
    }
    if mean_cov.shape() != (m, m) || wishart_scale.shape() != (m, m) {
        return Err(Error::dim(
            "schedule covariances",
            format!("{m}x{m}"),
            format!("{:?} / {:?}", mean_cov.shape(), wishart_scale.shape()),
        ));
    }
    if wishart_dof < m {
        return Err(Error::DegenerateDesign(format!(
            "Wishart degrees of freedom {wishart_dof} < input dimension {m}"
        )));
    }
    let mean_factor = psd_factor(mean_cov, "mean covariance", PSD_TOLERANCE)?;
    let scale_factor = psd_factor(wishart_scale, "Wishart scale", PSD_TOLERANCE)?;
    if numerical_rank(mean_cov).rank < m {
        return Err(Error::DegenerateDesign("singular mean covariance".into()));
    }
    if numerical_rank(wishart_scale).rank < m {
        return Err(Error::DegenerateDesign("singular Wishart scale".into()));
    }
    let mut rng = global_stream(seed, Source::Schedule);
    let mut normal = |rows: usize, cols: usize| {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let mut nus = Vec::with_capacity(horizon);
    let mut ubars = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let nu = &mean_factor * normal(m, 1);
        let g = &scale_factor * normal(m, wishart_dof);
        nus.push(nu.column(0).into_owned());
        ubars.push(&g * g.transpose());
    }
    InputSchedule::from_parts(nus, ubars, seed)
}

/// The defaults used for the benchmark: `ν_t ~ N(0, I)`, `Ū_t ~ W(0.1 I, m)`.
pub fn default_schedule(m: usize, horizon: usize, seed: u64) -> Result<InputSchedule> {
    design_schedule(
        m,
        horizon,
        &DMatrix::identity(m, m),
        &(DMatrix::identity(m, m) * 0.1),
        m,
        seed,
    )
}

/// Initial state design `x_0 ~ N(μ_0, I_n)` with the mean drawn once per
/// seed from `N(0, I_n)`. A nonzero mean excites state directions that the
/// inputs reach only weakly.
pub fn design_initial_state(n: usize, seed: u64) -> InitialState {
    let mut rng = global_stream(seed, Source::InitialDesign);
    let mean = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    InitialState::new(mean, DMatrix::identity(n, n)).expect("identity is PSD")
}

/// Draws `u_t ~ N(ν_t, Ū_t)`.
pub fn sample_input<R: Rng + ?Sized>(
    schedule: &InputSchedule,
    t: usize,
    rng: &mut R,
) -> DVector<f64> {
    let f = &schedule.factors[t];
    let z = DVector::from_fn(f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    &schedule.nus[t] + f * z
}

/// Which regressor a certificate describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regressor {
    /// first-moment regressor `[μ; ν]`
    Z,
    /// second-moment regressor `[X̃; Ũ]`
    D,
    /// known-direction variance regressor
    V,
}

/// Numerical full-row-rank check of a regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub matrix: Regressor,
    pub required_rank: usize,
    pub computed_rank: usize,
    pub min_singular_value: f64,
    pub full_rank: bool,
    /// Horizon below the proven almost-sure bound.
    pub below_proven_horizon: bool,
}

impl RankCertificate {
    pub(crate) fn new(
        matrix: Regressor,
        required_rank: usize,
        computed_rank: usize,
        min_sv: f64,
        below: bool,
    ) -> Self {
        RankCertificate {
            matrix,
            required_rank,
            computed_rank,
            min_singular_value: min_sv,
            full_rank: computed_rank == required_rank,
            below_proven_horizon: below,
        }
    }

    pub(crate) fn from_matrix(matrix: Regressor, regressor: &DMatrix<f64>, below: bool) -> Self {
        let info = numerical_rank(regressor);
        Self::new(
            matrix,
            regressor.nrows(),
            info.rank,
            info.min_singular_value,
            below,
        )
    }
}

/// Rank of `Z = [μ_0..μ_{ℓ-1}; ν_0..ν_{ℓ-1}]` from exact first moments.
pub fn rank_certificate_z(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mu0: &DVector<f64>,
    schedule: &InputSchedule,
) -> RankCertificate {
    let mu = propagate_first(a, b, mu0, schedule.nus());
    let z = regressor_z(&mu[..schedule.horizon()], schedule.nus());
    let below = schedule.horizon() < min_horizon_first(a.nrows(), b.ncols());
    RankCertificate::from_matrix(Regressor::Z, &z, below)
}

/// Rank of `D = [X̃_0..X̃_{ℓ-1}; Ũ_0..Ũ_{ℓ-1}]` from exact moments.
pub fn rank_certificate_d(
    ops: &LiftedOps,
    initial: &InitialState,
    schedule: &InputSchedule,
) -> Result<RankCertificate> {
    let traj = moment_trajectory(
        ops,
        initial.mean(),
        &initial.second_moment(),
        schedule.nus(),
        schedule.ubars(),
    )?;
    let d = regressor_d(&traj.x[..schedule.horizon()], &traj.u);
    let below = schedule.horizon() < min_horizon_second(ops.n, ops.m);
    Ok(RankCertificate::from_matrix(Regressor::D, &d, below))
}
