//! Experiment drivers: the consistency curve on the benchmark system, the
//! known-direction variance study on a random network, and the full
//! pipeline on a user-supplied system.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::RolloutSource;
use crate::error::{Error, Result};
use crate::estimator::{
    error_metrics, estimate_mals, estimate_nominal, estimate_variances_known_directions,
    prefix_estimates, variance_errors, ErrorMetrics, MalsEstimate, VarianceErrors, VarianceResult,
};
use crate::input_design::{
    design_initial_state, design_schedule, min_horizon_second, InputSchedule, RankCertificate,
};
use crate::io::{read_json, ScheduleDoc, SystemDoc};
use crate::linalg::{is_controllable, relative_frobenius};
use crate::network::{build_network_system, NetworkSpec};
use crate::system::{InitialState, NoiseSampler, SystemModel};

/// Horizon of the benchmark experiment.
pub const SIMPLE_HORIZON: usize = 12;
/// Rollouts per seed in the network study.
pub const NETWORK_ROLLOUTS: usize = 7;
/// Nodes of the default network.
pub const NETWORK_NODES: usize = 8;
/// Points of the default rollout grid.
pub const GRID_POINTS: usize = 100;
/// Largest rollout count of the default grid.
pub const GRID_MAX: usize = 100_000;
/// Smallest rollout count of the default grid.
pub const GRID_MIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simple,
    Network,
    Custom,
}

/// A system given inline or as a path to a system document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Path(PathBuf),
    Inline(SystemDoc),
}

/// A schedule given inline or as a path to a schedule document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSource {
    Path(PathBuf),
    Inline(ScheduleDoc),
}

/// Distribution of the designed inputs: `ν_t ~ N(0, mean_scale I)` and
/// `Ū_t ~ W(wishart_scale I, wishart_dof)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDesign {
    #[serde(default = "one")]
    pub mean_scale: f64,
    #[serde(default = "tenth")]
    pub wishart_scale: f64,
    /// Defaults to the input dimension.
    #[serde(default)]
    pub wishart_dof: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

impl Default for InputDesign {
    fn default() -> Self {
        InputDesign {
            mean_scale: 1.0,
            wishart_scale: 0.1,
            wishart_dof: None,
        }
    }
}

impl InputDesign {
    pub fn schedule(&self, m: usize, horizon: usize, seed: u64) -> Result<InputSchedule> {
        let id = DMatrix::identity(m, m);
        design_schedule(
            m,
            horizon,
            &(&id * self.mean_scale),
            &(&id * self.wishart_scale),
            self.wishart_dof.unwrap_or(m),
            seed,
        )
    }
}

/// Initial state distribution `N(mean, cov)`. When absent, each seed draws
/// its own mean (see [`design_initial_state`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDoc {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Experiment settings read from a JSON document. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    /// System for `custom`.
    #[serde(default)]
    pub system: Option<SystemSource>,
    /// Network for `network`.
    #[serde(default)]
    pub network: Option<NetworkSpec>,
    /// Fixed schedule for `custom`; overrides `input`.
    #[serde(default)]
    pub schedule: Option<ScheduleSource>,
    #[serde(default)]
    pub input: InputDesign,
    #[serde(default)]
    pub initial_state: Option<InitialDoc>,
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Explicit rollout grid.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    /// Size of the log-spaced grid when `grid` is absent.
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// Largest rollout count of the log-spaced grid, or the rollout count
    /// of the network study.
    #[serde(default)]
    pub rollouts: Option<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Clip negative variance estimates at zero before scoring.
    #[serde(default)]
    pub clip_negative: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(SystemSource::Path(p)) = &mut cfg.system {
            *p = base.join(&*p);
        }
        if let Some(ScheduleSource::Path(p)) = &mut cfg.schedule {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![0])
    }

    /// The rollout grid: explicit, or log-spaced from 10 (or fewer) to
    /// `rollouts`.
    pub fn rollout_grid(&self) -> Result<Vec<usize>> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => {
                let max = self.rollouts.unwrap_or(GRID_MAX);
                log_grid(
                    GRID_MIN.min(max),
                    max,
                    self.grid_points.unwrap_or(GRID_POINTS),
                )
            }
        };
        if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "rollout grid must be strictly increasing and positive, got {grid:?}"
            )));
        }
        Ok(grid)
    }

    fn check_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.experiment {
            Some(k) if k != kind => {
                Err(Error::Config(format!("config is for {k:?}, not {kind:?}")))
            }
            _ => Ok(()),
        }
    }

    fn horizon_or(&self, default: usize) -> Result<usize> {
        let h = self.horizon.unwrap_or(default);
        if h < 2 {
            return Err(Error::Config(format!(
                "horizon must be at least 2, got {h}"
            )));
        }
        Ok(h)
    }

    /// The configured initial state, or the designed one for `seed`.
    fn initial(&self, n: usize, seed: u64) -> Result<InitialState> {
        match &self.initial_state {
            None => Ok(design_initial_state(n, seed)),
            Some(doc) => {
                if doc.mean.len() != n {
                    return Err(Error::Config(format!(
                        "initial_state.mean needs {n} entries, got {}",
                        doc.mean.len()
                    )));
                }
                let cov = crate::io::from_rows(&doc.cov, Some(n))
                    .map_err(|e| Error::Config(format!("initial_state.cov: {e}")))?;
                if cov.shape() != (n, n) {
                    return Err(Error::Config(format!("initial_state.cov must be {n}x{n}")));
                }
                InitialState::new(nalgebra::DVector::from_column_slice(&doc.mean), cov)
            }
        }
    }
}

/// About `points` log-spaced integers from `lo` to `hi`, rounded and
/// deduplicated.
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if points <= 1 || lo >= hi {
        return vec![hi.max(1)];
    }
    let (a, b) = ((lo.max(1) as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    *out.last_mut().expect("points > 1") = hi;
    out.dedup();
    out
}

/// One point of an error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n_r: usize,
    pub seed: u64,
    pub rel_err_ab: f64,
    pub rel_err_sigma_a: f64,
    pub rel_err_sigma_b: f64,
    pub full_rank_z: bool,
    pub full_rank_d: bool,
    /// `ok`, or why a number in the row should not be trusted.
    pub flag: String,
}

/// Estimation errors against the number of rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub horizon: usize,
    pub rows: Vec<CurveRow>,
}

impl ErrorCurve {
    /// Median over seeds of each error at each grid point, in grid order.
    pub fn medians(&self) -> Vec<(usize, ErrorMetrics)> {
        let mut grid: Vec<usize> = self.rows.iter().map(|r| r.n_r).collect();
        grid.sort_unstable();
        grid.dedup();
        grid.into_iter()
            .map(|n_r| {
                let rows: Vec<&CurveRow> = self.rows.iter().filter(|r| r.n_r == n_r).collect();
                let med = |f: fn(&CurveRow) -> f64| median(rows.iter().map(|r| f(r)).collect());
                (
                    n_r,
                    ErrorMetrics {
                        rel_err_ab: med(|r| r.rel_err_ab),
                        rel_err_sigma_a: med(|r| r.rel_err_sigma_a),
                        rel_err_sigma_b: med(|r| r.rel_err_sigma_b),
                    },
                )
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn row_flag(fit: &MalsEstimate, err: &ErrorMetrics) -> String {
    let mut flags = Vec::new();
    if ![err.rel_err_ab, err.rel_err_sigma_a, err.rel_err_sigma_b]
        .iter()
        .all(|v| v.is_finite())
    {
        flags.push("nonfinite");
    }
    if !fit.nominal.cert.full_rank {
        flags.push("rank_deficient_z");
    }
    if !fit.covariance.cert.full_rank {
        flags.push("rank_deficient_d");
    }
    if flags.is_empty() {
        "ok".into()
    } else {
        flags.join(";")
    }
}

/// Full estimate with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub seed: u64,
    pub n_r: usize,
    pub horizon: usize,
    #[serde(with = "crate::io::rows")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "crate::io::rows")]
    pub b_hat: DMatrix<f64>,
    #[serde(with = "crate::io::rows")]
    pub tilde_sigma_a_hat: DMatrix<f64>,
    #[serde(with = "crate::io::rows")]
    pub tilde_sigma_b_hat: DMatrix<f64>,
    pub cert_z: RankCertificate,
    pub cert_d: RankCertificate,
    pub errors: Option<ErrorMetrics>,
}

impl EstimationResult {
    pub fn new(
        fit: &MalsEstimate,
        seed: u64,
        n_r: usize,
        horizon: usize,
        errors: Option<ErrorMetrics>,
    ) -> Self {
        EstimationResult {
            seed,
            n_r,
            horizon,
            a_hat: fit.nominal.a.clone(),
            b_hat: fit.nominal.b.clone(),
            tilde_sigma_a_hat: fit.covariance.tilde_sigma_a.clone(),
            tilde_sigma_b_hat: fit.covariance.tilde_sigma_b.clone(),
            cert_z: fit.nominal.cert.clone(),
            cert_d: fit.covariance.cert.clone(),
            errors,
        }
    }
}

/// Error curve of one system, one seed per entry of `seeds`, plus the
/// estimate at the largest grid point for each seed.
pub fn consistency_curve(
    model: &SystemModel,
    initial_for: &dyn Fn(u64) -> Result<InitialState>,
    schedule_for: &dyn Fn(u64) -> Result<InputSchedule>,
    grid: &[usize],
    seeds: &[u64],
) -> Result<(ErrorCurve, Vec<EstimationResult>)> {
    let sampler = NoiseSampler::from_model(model)?;
    let mut rows = Vec::new();
    let mut finals = Vec::new();
    let mut horizon = 0;
    for &seed in seeds {
        let schedule = schedule_for(seed)?;
        let initial = initial_for(seed)?;
        horizon = schedule.horizon();
        let source = RolloutSource {
            model,
            sampler: &sampler,
            initial: &initial,
            schedule: &schedule,
            seed,
        };
        let prefixes = prefix_estimates(&source, grid)?;
        for est in &prefixes {
            let fit = estimate_mals(est, &schedule)?;
            let err = error_metrics(&fit, model)?;
            rows.push(CurveRow {
                n_r: est.n_r,
                seed,
                rel_err_ab: err.rel_err_ab,
                rel_err_sigma_a: err.rel_err_sigma_a,
                rel_err_sigma_b: err.rel_err_sigma_b,
                full_rank_z: fit.nominal.cert.full_rank,
                full_rank_d: fit.covariance.cert.full_rank,
                flag: row_flag(&fit, &err),
            });
            if est.n_r == *grid.last().expect("non-empty grid") {
                finals.push(EstimationResult::new(
                    &fit,
                    seed,
                    est.n_r,
                    horizon,
                    Some(err),
                ));
            }
        }
    }
    Ok((ErrorCurve { horizon, rows }, finals))
}

/// Consistency curve of the two-state benchmark system.
pub fn run_simple(config: &ExperimentConfig) -> Result<ErrorCurve> {
    config.check_kind(ExperimentKind::Simple)?;
    let model = SystemModel::benchmark();
    let horizon = config.horizon_or(SIMPLE_HORIZON)?;
    let grid = config.rollout_grid()?;
    let initial_for = |seed| config.initial(model.n(), seed);
    let design = config.input.clone();
    let schedule_for = |seed| design.schedule(model.m(), horizon, seed);
    Ok(consistency_curve(&model, &initial_for, &schedule_for, &grid, &config.seeds())?.0)
}

/// Output of [`run_custom`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomReport {
    pub curve: ErrorCurve,
    pub results: Vec<EstimationResult>,
}

/// The full pipeline on the system named in the config.
pub fn run_custom(config: &ExperimentConfig) -> Result<CustomReport> {
    config.check_kind(ExperimentKind::Custom)?;
    let model = match &config.system {
        None => return Err(Error::Config("custom experiment needs a `system`".into())),
        Some(SystemSource::Path(p)) => read_json::<SystemDoc>(p)?.to_model()?,
        Some(SystemSource::Inline(doc)) => doc.to_model()?,
    };
    let fixed = match &config.schedule {
        None => None,
        Some(ScheduleSource::Path(p)) => Some(read_json::<ScheduleDoc>(p)?.to_schedule()?),
        Some(ScheduleSource::Inline(doc)) => Some(doc.to_schedule()?),
    };
    if let Some(s) = &fixed {
        if s.m() != model.m() {
            return Err(Error::Config(format!(
                "schedule has {} inputs, system has {}",
                s.m(),
                model.m()
            )));
        }
        if config.horizon.is_some_and(|h| h != s.horizon()) {
            return Err(Error::Config(
                "horizon differs from the schedule length".into(),
            ));
        }
    }
    let horizon = match &fixed {
        Some(s) => config.horizon_or(s.horizon())?,
        None => config.horizon_or(min_horizon_second(model.n(), model.m()).max(2))?,
    };
    let grid = config.rollout_grid()?;
    let initial_for = |seed| config.initial(model.n(), seed);
    let design = config.input.clone();
    let schedule_for = |seed| match &fixed {
        Some(s) => Ok(s.clone()),
        None => design.schedule(model.m(), horizon, seed),
    };
    let (curve, results) =
        consistency_curve(&model, &initial_for, &schedule_for, &grid, &config.seeds())?;
    Ok(CustomReport { curve, results })
}

/// One seed of the network study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRun {
    pub seed: u64,
    pub nodes: usize,
    pub edges: usize,
    pub step: f64,
    pub horizon: usize,
    pub rollouts: usize,
    pub controllable: bool,
    pub rel_err_ab: f64,
    pub cert_z: RankCertificate,
    pub variances: VarianceResult,
    pub true_sigma2: Vec<f64>,
    pub true_delta2: Vec<f64>,
    pub errors: VarianceErrors,
}

/// Network study over all configured seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub runs: Vec<NetworkRun>,
}

/// CSV row of the network study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRow {
    pub seed: u64,
    pub nodes: usize,
    pub edges: usize,
    pub horizon: usize,
    pub rollouts: usize,
    pub mean_sigma: Option<f64>,
    pub max_sigma: Option<f64>,
    pub mean_delta: Option<f64>,
    pub max_delta: Option<f64>,
    pub rel_err_ab: f64,
    pub controllable: bool,
    pub full_rank: bool,
    pub negative_estimates: bool,
    pub zero_truth: bool,
}

impl NetworkReport {
    pub fn rows(&self) -> Vec<NetworkRow> {
        self.runs
            .iter()
            .map(|r| NetworkRow {
                seed: r.seed,
                nodes: r.nodes,
                edges: r.edges,
                horizon: r.horizon,
                rollouts: r.rollouts,
                mean_sigma: r.errors.mean_sigma,
                max_sigma: r.errors.max_sigma,
                mean_delta: r.errors.mean_delta,
                max_delta: r.errors.max_delta,
                rel_err_ab: r.rel_err_ab,
                controllable: r.controllable,
                full_rank: r.variances.cert.full_rank,
                negative_estimates: r.variances.negative,
                zero_truth: r.errors.zero_truth,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Known-direction variance estimation on one random network.
pub fn network_run(spec: &NetworkSpec, config: &ExperimentConfig, seed: u64) -> Result<NetworkRun> {
    let net = build_network_system(spec)?;
    let (n, m) = (net.model.n(), net.model.m());
    let horizon = config.horizon_or(min_horizon_second(n, m))?;
    let rollouts = config.rollouts.unwrap_or(NETWORK_ROLLOUTS);
    if rollouts == 0 {
        return Err(Error::Config(
            "network study needs at least one rollout".into(),
        ));
    }
    let schedule = config.input.schedule(m, horizon, seed)?;
    let initial = config.initial(n, seed)?;
    let sampler = NoiseSampler::from_eigen(&net.noise);
    let source = RolloutSource {
        model: &net.model,
        sampler: &sampler,
        initial: &initial,
        schedule: &schedule,
        seed,
    };
    let est = prefix_estimates(&source, &[rollouts])?
        .pop()
        .expect("one grid point");
    let nominal = estimate_nominal(&est, &schedule)?;
    let raw = estimate_variances_known_directions(&est, &nominal.a, &nominal.b, &net.noise)?;
    let variances = if config.clip_negative {
        raw.clipped()
    } else {
        raw
    };
    let errors = variance_errors(&variances, &net.noise)?;
    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(&nominal.a);
    ab.columns_mut(n, m).copy_from(&nominal.b);
    Ok(NetworkRun {
        seed,
        nodes: n,
        edges: net.edges.len(),
        step: net.step,
        horizon,
        rollouts,
        controllable: is_controllable(net.model.a(), net.model.b()),
        rel_err_ab: relative_frobenius(&ab, &net.model.nominal()),
        cert_z: nominal.cert,
        variances,
        true_sigma2: net.noise.variances_a().to_vec(),
        true_delta2: net.noise.variances_b().to_vec(),
        errors,
    })
}

/// The network study. The graph of each run is drawn from the run seed,
/// replacing any `network.seed` in the config.
pub fn run_network(config: &ExperimentConfig) -> Result<NetworkReport> {
    config.check_kind(ExperimentKind::Network)?;
    let mut runs = Vec::new();
    for seed in config.seeds() {
        let spec = match &config.network {
            Some(s) => NetworkSpec { seed, ..s.clone() },
            None => NetworkSpec::with_nodes(NETWORK_NODES, seed),
        };
        runs.push(network_run(&spec, config, seed)?);
    }
    Ok(NetworkReport { runs })
}
