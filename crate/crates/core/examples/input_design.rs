//! Designed input schedules and the rank certificates that show they excite
//! both moment regressions.

use mals::{
    default_schedule, design_initial_state, min_horizon_first, min_horizon_second,
    rank_certificate_d, rank_certificate_z, InputSchedule, LiftedOps, SystemModel,
};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::benchmark();
    let ops = LiftedOps::from_model(&model)?;
    let (n, m) = (model.n(), model.m());
    println!(
        "proven horizons: first stage {}, second stage {}",
        min_horizon_first(n, m),
        min_horizon_second(n, m)
    );

    let initial = design_initial_state(n, 1);
    let schedule = default_schedule(m, min_horizon_second(n, m), 1)?;
    let z = rank_certificate_z(model.a(), model.b(), initial.mean(), &schedule);
    let d = rank_certificate_d(&ops, &initial, &schedule)?;
    println!(
        "Z: rank {}/{} (σ_min {:.3e})",
        z.computed_rank, z.required_rank, z.min_singular_value
    );
    println!(
        "D: rank {}/{} (σ_min {:.3e})",
        d.computed_rank, d.required_rank, d.min_singular_value
    );
    assert!(z.full_rank && d.full_rank);

    // Without excitation neither regressor has full rank.
    let quiet = InputSchedule::constant(DVector::zeros(m), DMatrix::zeros(m, m), 12)?;
    let z0 = rank_certificate_z(model.a(), model.b(), &DVector::zeros(n), &quiet);
    println!(
        "Z with zero inputs: rank {}/{}",
        z0.computed_rank, z0.required_rank
    );
    assert!(!z0.full_rank);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
