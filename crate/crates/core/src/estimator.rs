//! Two-stage moment least squares.
//!
//! Stage 1 regresses `μ̂_{t+1}` on `[μ̂_t; ν_t]` for `(Â, B̂)`. Stage 2
//! regresses the residual `Ĉ_t = X̂_{t+1} − ẪX̂_t − K̂_BA Ŵ_t − K̂_AB Ŵ′_t − B̂̃U_t`
//! on `[X̂_t; U_t]` for the simplified covariances. With known noise
//! directions the second stage shrinks to one unknown per direction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::{RolloutBatch, RolloutSource, CHUNK};
use crate::error::{Error, Result};
use crate::input_design::{
    min_horizon_first, min_horizon_second, InputSchedule, RankCertificate, Regressor,
};
use crate::linalg::{lstsq_right, pinv_symmetric, relative_frobenius, PairwiseSum};
use crate::moments::{cross_moments, input_second_moment, lift_ops, LiftedOps, MomentTrajectory};
use crate::reshape::symmetry_maps;
use crate::system::{EigenNoise, Rollout, SystemModel};

/// Sample moments of a rollout population plus the exact input moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub n_r: usize,
    /// `μ̂_0..μ̂_ℓ`
    pub mu: Vec<DVector<f64>>,
    /// `X̂_0..X̂_ℓ`
    pub x: Vec<DVector<f64>>,
    /// `Ŵ_0..Ŵ_{ℓ-1}`
    pub w: Vec<DVector<f64>>,
    /// `Ŵ′_0..Ŵ′_{ℓ-1}`
    pub wp: Vec<DVector<f64>>,
    /// `U_0..U_{ℓ-1}`
    pub u: Vec<DVector<f64>>,
}

impl MomentEstimates {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn n(&self) -> usize {
        self.mu[0].len()
    }

    /// Exact moments in place of sample averages.
    pub fn from_exact(traj: &MomentTrajectory) -> Self {
        MomentEstimates {
            n_r: 0,
            mu: traj.mu.clone(),
            x: traj.x.clone(),
            w: traj.w.clone(),
            wp: traj.wp.clone(),
            u: traj.u.clone(),
        }
    }

    fn from_sums(n: usize, n_r: usize, sum: &DVector<f64>, schedule: &InputSchedule) -> Self {
        let maps = symmetry_maps(n);
        let h = maps.half_dim();
        let stride = n + h;
        let horizon = schedule.horizon();
        let scale = 1.0 / n_r as f64;
        let mut mu = Vec::with_capacity(horizon + 1);
        let mut x = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let base = t * stride;
            mu.push(sum.rows(base, n) * scale);
            x.push(sum.rows(base + n, h) * scale);
        }
        let input_maps = symmetry_maps(schedule.m());
        let (w, wp) = mu
            .iter()
            .zip(schedule.nus())
            .map(|(m, nu)| cross_moments(m, nu))
            .unzip();
        let u = schedule
            .nus()
            .iter()
            .zip(schedule.ubars())
            .map(|(nu, ub)| input_second_moment(&input_maps, nu, ub))
            .collect();
        MomentEstimates {
            n_r,
            mu,
            x,
            w,
            wp,
            u,
        }
    }
}

/// Streaming sample moments. Rollouts are folded in the order they are
/// pushed by a fixed pairwise tree, so equal inputs give equal bits and the
/// running total after `k` pushes equals the batch aggregate of the first
/// `k` rollouts.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    n: usize,
    /// `(row, col)` of each half-vec entry
    pairs: Vec<(usize, usize)>,
    schedule: InputSchedule,
    sum: PairwiseSum,
}

impl MomentAccumulator {
    pub fn new(n: usize, schedule: &InputSchedule) -> Self {
        let maps = symmetry_maps(n);
        let len = (schedule.horizon() + 1) * (n + maps.half_dim());
        let pairs = maps.kept().iter().map(|&k| (k % n, k / n)).collect();
        MomentAccumulator {
            n,
            pairs,
            schedule: schedule.clone(),
            sum: PairwiseSum::new(len),
        }
    }

    pub fn count(&self) -> usize {
        self.sum.count()
    }

    /// Per-rollout statistics `[x_t; P₁vec(x_t x_tᵀ)]` for every `t`, stacked.
    pub fn summarize(&self, rollout: &Rollout) -> Result<DVector<f64>> {
        let horizon = self.schedule.horizon();
        if rollout.horizon() != horizon || rollout.states.len() != horizon + 1 {
            return Err(Error::HorizonMismatch {
                expected: horizon,
                actual: rollout.horizon(),
            });
        }
        let (n, h) = (self.n, self.pairs.len());
        let mut out = DVector::zeros((horizon + 1) * (n + h));
        for (t, x) in rollout.states.iter().enumerate() {
            if x.len() != n {
                return Err(Error::dim("rollout state", n, x.len()));
            }
            let base = t * (n + h);
            out.rows_mut(base, n).copy_from(x);
            for (idx, &(r, c)) in self.pairs.iter().enumerate() {
                out[base + n + idx] = x[r] * x[c];
            }
        }
        Ok(out)
    }

    /// Adds a summary from [`summarize`](Self::summarize).
    pub fn push_summary(&mut self, summary: DVector<f64>) {
        self.sum.push(summary);
    }

    pub fn push(&mut self, rollout: &Rollout) -> Result<()> {
        let s = self.summarize(rollout)?;
        self.push_summary(s);
        Ok(())
    }

    /// Moment estimates from everything pushed so far.
    pub fn estimates(&self) -> Result<MomentEstimates> {
        if self.count() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(MomentEstimates::from_sums(
            self.n,
            self.count(),
            &self.sum.total(),
            &self.schedule,
        ))
    }
}

/// Sample moments of a batch driven by `schedule`.
pub fn aggregate(batch: &RolloutBatch, schedule: &InputSchedule) -> Result<MomentEstimates> {
    if batch.horizon() != schedule.horizon() {
        return Err(Error::HorizonMismatch {
            expected: schedule.horizon(),
            actual: batch.horizon(),
        });
    }
    let n = batch.rollouts()[0].states[0].len();
    let mut acc = MomentAccumulator::new(n, schedule);
    for r in batch.rollouts() {
        acc.push(r)?;
    }
    acc.estimates()
}

/// Simulates rollouts `0..max(grid)` and returns moment estimates over each
/// prefix length in `grid` (strictly increasing, all ≥ 1).
pub fn prefix_estimates(
    source: &RolloutSource<'_>,
    grid: &[usize],
) -> Result<Vec<MomentEstimates>> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "rollout grid must be strictly increasing and start at 1 or more".into(),
        ));
    }
    let mut acc = MomentAccumulator::new(source.model.n(), source.schedule);
    let total = *grid.last().expect("non-empty");
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    let mut k = 0;
    while k < total {
        let end = (k + CHUNK).min(grid[next]).min(total);
        let summaries = source.map_ordered(k as u64..end as u64, |r| acc.summarize(&r))?;
        for s in summaries {
            acc.push_summary(s);
        }
        k = end;
        if k == grid[next] {
            out.push(acc.estimates()?);
            next += 1;
        }
    }
    Ok(out)
}

/// `[μ_0 .. μ_{ℓ-1}; ν_0 .. ν_{ℓ-1}]`.
pub fn regressor_z(mu: &[DVector<f64>], nus: &[DVector<f64>]) -> DMatrix<f64> {
    stack_columns(mu, nus)
}

/// `[X̃_0 .. X̃_{ℓ-1}; Ũ_0 .. Ũ_{ℓ-1}]`.
pub fn regressor_d(x: &[DVector<f64>], u: &[DVector<f64>]) -> DMatrix<f64> {
    stack_columns(x, u)
}

fn stack_columns(top: &[DVector<f64>], bottom: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = top.len().min(bottom.len());
    let p = top.first().map_or(0, |v| v.len());
    let q = bottom.first().map_or(0, |v| v.len());
    let mut out = DMatrix::zeros(p + q, cols);
    for t in 0..cols {
        out.view_mut((0, t), (p, 1)).copy_from(&top[t]);
        out.view_mut((p, t), (q, 1)).copy_from(&bottom[t]);
    }
    out
}

fn columns(v: &[DVector<f64>]) -> DMatrix<f64> {
    let p = v.first().map_or(0, |x| x.len());
    DMatrix::from_fn(p, v.len(), |i, j| v[j][i])
}

/// Stage-1 output.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalEstimate {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub cert: RankCertificate,
}

/// `(Â, B̂) = Ŷ Ẑᵀ (Ẑ Ẑᵀ)†` with `Ŷ = [μ̂_1 .. μ̂_ℓ]`.
pub fn estimate_nominal(
    est: &MomentEstimates,
    schedule: &InputSchedule,
) -> Result<NominalEstimate> {
    let horizon = est.horizon();
    if horizon < 2 {
        return Err(Error::Config(format!(
            "horizon must be at least 2, got {horizon}"
        )));
    }
    if schedule.horizon() != horizon {
        return Err(Error::HorizonMismatch {
            expected: schedule.horizon(),
            actual: horizon,
        });
    }
    let (n, m) = (est.n(), schedule.m());
    let y = columns(&est.mu[1..]);
    let z = regressor_z(&est.mu[..horizon], schedule.nus());
    let (theta, info) = lstsq_right(&y, &z)?;
    check_finite("stage-1 estimate", &theta)?;
    let cert = RankCertificate::new(
        Regressor::Z,
        info.rows,
        info.rank,
        info.min_singular_value,
        horizon < min_horizon_first(n, m),
    );
    Ok(NominalEstimate {
        a: theta.columns(0, n).into_owned(),
        b: theta.columns(n, m).into_owned(),
        cert,
    })
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { name: name.into() })
    }
}

/// `Ĉ_t = X̂_{t+1} − Ã X̂_t − K_BA Ŵ_t − K_AB Ŵ′_t − B̃ U_t` for the
/// noise-free lifted operators `ops`.
pub fn residuals(est: &MomentEstimates, ops: &LiftedOps) -> Vec<DVector<f64>> {
    (0..est.horizon())
        .map(|t| {
            &est.x[t + 1]
                - &ops.tilde_a * &est.x[t]
                - &ops.k_ba * &est.w[t]
                - &ops.k_ab * &est.wp[t]
                - &ops.tilde_b * &est.u[t]
        })
        .collect()
}

/// Stage-2 output.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub tilde_sigma_a: DMatrix<f64>,
    pub tilde_sigma_b: DMatrix<f64>,
    pub cert: RankCertificate,
}

/// `[Σ̂̃′_A Σ̂̃′_B] = Ĉ D̂ᵀ (D̂ D̂ᵀ)†`.
pub fn estimate_covariance(
    est: &MomentEstimates,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
) -> Result<CovarianceEstimate> {
    let ops = lift_ops(a_hat, b_hat)?;
    let horizon = est.horizon();
    let c = columns(&residuals(est, &ops));
    let d = regressor_d(&est.x[..horizon], &est.u);
    let (theta, info) = lstsq_right(&c, &d)?;
    check_finite("stage-2 estimate", &theta)?;
    let hn = ops.state_maps.half_dim();
    let hm = ops.input_maps.half_dim();
    let cert = RankCertificate::new(
        Regressor::D,
        info.rows,
        info.rank,
        info.min_singular_value,
        horizon < min_horizon_second(ops.n, ops.m),
    );
    Ok(CovarianceEstimate {
        tilde_sigma_a: theta.columns(0, hn).into_owned(),
        tilde_sigma_b: theta.columns(hn, hm).into_owned(),
        cert,
    })
}

/// Estimated noise variances along known directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult {
    pub sigma2: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Some raw estimate is below zero.
    pub negative: bool,
    pub cert: RankCertificate,
}

impl VarianceResult {
    /// Copy with negative estimates replaced by zero.
    pub fn clipped(&self) -> Self {
        let clip = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect();
        VarianceResult {
            sigma2: clip(&self.sigma2),
            delta2: clip(&self.delta2),
            negative: false,
            cert: self.cert.clone(),
        }
    }
}

/// Solves `Ĉ_t ≈ Σ_i σ_i² Ã_i X̂_t + Σ_j δ_j² B̃_j U_t` over all `t`, with
/// `Ã_i = P₁(A_i⊗A_i)Q₁` and `B̃_j = P₁(B_j⊗B_j)Q₂`.
///
/// The normal equations only need `Σ_t X̂_t X̂_tᵀ`, `Σ_t X̂_t U_tᵀ`,
/// `Σ_t U_t U_tᵀ`, `Σ_t Ĉ_t X̂_tᵀ` and `Σ_t Ĉ_t U_tᵀ`, so the regressor with
/// `ℓ · n(n+1)/2` rows is never formed.
pub fn estimate_variances_known_directions(
    est: &MomentEstimates,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    eigen: &EigenNoise,
) -> Result<VarianceResult> {
    let ops = lift_ops(a_hat, b_hat)?;
    if eigen.n() != ops.n || eigen.m() != ops.m {
        return Err(Error::dim(
            "noise directions",
            format!("n = {}, m = {}", ops.n, ops.m),
            format!("n = {}, m = {}", eigen.n(), eigen.m()),
        ));
    }
    let (sn, sm) = (&ops.state_maps, &ops.input_maps);
    let lift = |d: &DMatrix<f64>, q: &DMatrix<f64>| sn.p() * crate::reshape::kron(d, d) * q;
    let lifted: Vec<DMatrix<f64>> = eigen
        .directions_a()
        .iter()
        .map(|d| lift(d, sn.q()))
        .chain(eigen.directions_b().iter().map(|d| lift(d, sm.q())))
        .collect();
    let r = eigen.directions_a().len();
    let k = lifted.len();

    let (hn, hm) = (sn.half_dim(), sm.half_dim());
    let horizon = est.horizon();
    let res = residuals(est, &ops);
    let mut xx = DMatrix::zeros(hn, hn);
    let mut xu = DMatrix::zeros(hn, hm);
    let mut uu = DMatrix::zeros(hm, hm);
    let mut cx = DMatrix::zeros(hn, hn);
    let mut cu = DMatrix::zeros(hn, hm);
    for ((x, u), c) in est.x[..horizon].iter().zip(&est.u).zip(&res) {
        xx.ger(1.0, x, x, 1.0);
        xu.ger(1.0, x, u, 1.0);
        uu.ger(1.0, u, u, 1.0);
        cx.ger(1.0, c, x, 1.0);
        cu.ger(1.0, c, u, 1.0);
    }
    // Column i of the regressor at time t is L_i z_t with z_t = X̂_t or U_t.
    let inner = |li: &DMatrix<f64>, i_state: bool, lj: &DMatrix<f64>, j_state: bool| -> f64 {
        let m = li.transpose() * lj;
        let s = match (i_state, j_state) {
            (true, true) => xx.clone(),
            (true, false) => xu.clone(),
            (false, true) => xu.transpose(),
            (false, false) => uu.clone(),
        };
        m.dot(&s)
    };
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for i in 0..k {
        let si = i < r;
        for j in i..k {
            let g = inner(&lifted[i], si, &lifted[j], j < r);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
        rhs[i] = if si {
            lifted[i].dot(&cx)
        } else {
            lifted[i].dot(&cu)
        };
    }
    let (pinv, rank) = pinv_symmetric(&gram);
    let theta = pinv * rhs;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            name: "variance estimate".into(),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(gram.clone()).eigenvalues;
    let min_sv = eig
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt();
    let cert = RankCertificate::new(
        Regressor::V,
        k,
        rank,
        if k == 0 { 0.0 } else { min_sv },
        false,
    );
    let sigma2: Vec<f64> = theta.rows(0, r).iter().cloned().collect();
    let delta2: Vec<f64> = theta.rows(r, k - r).iter().cloned().collect();
    let negative = theta.iter().any(|&v| v < 0.0);
    Ok(VarianceResult {
        sigma2,
        delta2,
        negative,
        cert,
    })
}

/// Both stages on one set of moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MalsEstimate {
    pub nominal: NominalEstimate,
    pub covariance: CovarianceEstimate,
}

pub fn estimate_mals(est: &MomentEstimates, schedule: &InputSchedule) -> Result<MalsEstimate> {
    let nominal = estimate_nominal(est, schedule)?;
    let covariance = estimate_covariance(est, &nominal.a, &nominal.b)?;
    Ok(MalsEstimate {
        nominal,
        covariance,
    })
}

/// Normalized variance errors `|σ² − σ̂²| / σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceErrors {
    /// `None` where the true variance is zero.
    pub sigma: Vec<Option<f64>>,
    pub delta: Vec<Option<f64>>,
    pub mean_sigma: Option<f64>,
    pub max_sigma: Option<f64>,
    pub mean_delta: Option<f64>,
    pub max_delta: Option<f64>,
    /// Some true variance is zero and its error was omitted.
    pub zero_truth: bool,
}

fn normalized(est: &[f64], truth: &[f64]) -> Result<Vec<Option<f64>>> {
    if est.len() != truth.len() {
        return Err(Error::dim("variance estimate", truth.len(), est.len()));
    }
    Ok(est
        .iter()
        .zip(truth)
        .map(|(&e, &t)| {
            if t > 0.0 {
                Some((t - e).abs() / t)
            } else {
                None
            }
        })
        .collect())
}

fn mean_max(v: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let vals: Vec<f64> = v.iter().flatten().cloned().collect();
    if vals.is_empty() {
        return (None, None);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (Some(mean), Some(max))
}

/// Compares variance estimates with their true values.
pub fn variance_errors(result: &VarianceResult, truth: &EigenNoise) -> Result<VarianceErrors> {
    let sigma = normalized(&result.sigma2, truth.variances_a())?;
    let delta = normalized(&result.delta2, truth.variances_b())?;
    let (mean_sigma, max_sigma) = mean_max(&sigma);
    let (mean_delta, max_delta) = mean_max(&delta);
    let zero_truth = sigma.iter().chain(&delta).any(Option::is_none);
    Ok(VarianceErrors {
        sigma,
        delta,
        mean_sigma,
        max_sigma,
        mean_delta,
        max_delta,
        zero_truth,
    })
}

/// Relative Frobenius errors of a two-stage estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rel_err_ab: f64,
    pub rel_err_sigma_a: f64,
    pub rel_err_sigma_b: f64,
}

/// Errors of `[Â B̂]` and the simplified covariances against `truth`. A zero
/// true block is compared in absolute terms.
pub fn error_metrics(estimate: &MalsEstimate, truth: &SystemModel) -> Result<ErrorMetrics> {
    let ops = LiftedOps::from_model(truth)?;
    let (n, m) = (truth.n(), truth.m());
    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(&estimate.nominal.a);
    ab.columns_mut(n, m).copy_from(&estimate.nominal.b);
    Ok(ErrorMetrics {
        rel_err_ab: relative_frobenius(&ab, &truth.nominal()),
        rel_err_sigma_a: relative_frobenius(&estimate.covariance.tilde_sigma_a, &ops.tilde_sigma_a),
        rel_err_sigma_b: relative_frobenius(&estimate.covariance.tilde_sigma_b, &ops.tilde_sigma_b),
    })
}
