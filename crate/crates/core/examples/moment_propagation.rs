//! Exact first and second moments of the benchmark under a designed
//! schedule.

use mals::moments::second_moment_is_psd;
use mals::{default_schedule, moment_trajectory, InitialState, LiftedOps, SystemModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::benchmark();
    let ops = LiftedOps::from_model(&model)?;
    let initial = InitialState::standard(2);
    let schedule = default_schedule(1, 12, 3)?;
    let traj = moment_trajectory(
        &ops,
        initial.mean(),
        &initial.second_moment(),
        schedule.nus(),
        schedule.ubars(),
    )?;
    println!("Σ̃′_A =\n{}", ops.tilde_sigma_a);
    println!("Σ̃′_B =\n{}", ops.tilde_sigma_b);
    for t in [0, 4, 8, 12] {
        let second = ops.state_maps.from_half_vec(&traj.x[t]);
        let cov = &second - &traj.mu[t] * traj.mu[t].transpose();
        println!(
            "t = {t:2}: μ = {:?}, tr Cov = {:.4}",
            traj.mu[t].as_slice(),
            cov.trace()
        );
        assert!(second_moment_is_psd(&ops.state_maps, &traj.x[t]));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
