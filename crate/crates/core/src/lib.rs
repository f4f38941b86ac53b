//! Identification of linear systems with multiplicative noise,
//!
//! ```text
//! x_{t+1} = (A + Ā_t) x_t + (B + B̄_t) u_t,
//! ```
//!
//! from many independent rollouts. Sample first and second moments are
//! regressed on the designed input statistics in two least-squares stages:
//! first `(A, B)`, then the simplified noise covariances `(Σ̃′_A, Σ̃′_B)`
//! that govern the second-moment dynamics. When the noise directions are
//! known, the second stage estimates one variance per direction.
//!
//! ```
//! use mals::{default_schedule, estimate_mals, error_metrics, prefix_estimates};
//! use mals::{InitialState, NoiseSampler, RolloutSource, SystemModel};
//!
//! let model = SystemModel::benchmark();
//! let sampler = NoiseSampler::from_model(&model)?;
//! let initial = InitialState::standard(model.n());
//! let schedule = default_schedule(model.m(), 12, 0)?;
//! let source = RolloutSource { model: &model, sampler: &sampler, initial: &initial, schedule: &schedule, seed: 0 };
//! let est = prefix_estimates(&source, &[2000])?.remove(0);
//! let fit = estimate_mals(&est, &schedule)?;
//! assert!(error_metrics(&fit, &model)?.rel_err_ab < 0.5);
//! # Ok::<(), mals::Error>(())
//! ```

pub mod batch;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod family;
pub mod input_design;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod reshape;
pub mod rng;
pub mod system;

pub use batch::{RolloutBatch, RolloutSource};
pub use error::{Error, Result};
pub use estimator::{
    aggregate, error_metrics, estimate_covariance, estimate_mals, estimate_nominal,
    estimate_variances_known_directions, prefix_estimates, variance_errors, MomentAccumulator,
    MomentEstimates, VarianceResult,
};
pub use experiment::{run_custom, run_network, run_simple, ErrorCurve, ExperimentConfig, Format};
pub use family::{covariance_family, CovarianceFamily};
pub use input_design::{
    default_schedule, design_initial_state, design_schedule, min_horizon_first, min_horizon_second,
    rank_certificate_d, rank_certificate_z, InputSchedule, RankCertificate,
};
pub use moments::{lift_ops, moment_trajectory, LiftedOps};
pub use network::{build_network_system, NetworkSpec};
pub use reshape::{
    kron, reshape_f, reshape_g, symmetry_maps, unvec, vec, ReshapeSig, SymmetryMaps,
};
pub use system::{EigenNoise, InitialState, NoiseSampler, Rollout, SystemModel};
