//! Simulates rollouts of the two-state benchmark and compares the sample
//! mean with the exact first moment.

use mals::input_design::sample_input;
use mals::moments::propagate_first;
use mals::rng::{substream, Source};
use mals::system::simulate_rollout;
use mals::{default_schedule, design_initial_state, NoiseSampler, RolloutSource, SystemModel};
use nalgebra::DVector;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::benchmark();
    let sampler = NoiseSampler::from_model(&model)?;
    let initial = design_initial_state(2, 7);
    let schedule = default_schedule(1, 12, 7)?;

    // One rollout by hand.
    let mut rng_u = substream(7, 0, Source::Input);
    let inputs = (0..12)
        .map(|t| sample_input(&schedule, t, &mut rng_u))
        .collect();
    let x0 = DVector::from_vec(vec![1.0, -1.0]);
    let r = simulate_rollout(
        &model,
        &sampler,
        x0,
        inputs,
        &mut substream(7, 0, Source::NoiseA),
        &mut substream(7, 0, Source::NoiseB),
    )?;
    println!("x_12 of a single rollout: {}", r.states[12].transpose());

    // Many rollouts, generated in parallel but reproducibly.
    let source = RolloutSource {
        model: &model,
        sampler: &sampler,
        initial: &initial,
        schedule: &schedule,
        seed: 7,
    };
    let batch = source.batch(0..20_000)?;
    let mut mean = DVector::zeros(2);
    for r in batch.rollouts() {
        mean += &r.states[12];
    }
    mean /= batch.len() as f64;
    let exact = propagate_first(model.a(), model.b(), initial.mean(), schedule.nus());
    println!("sample mean of x_12: {}", mean.transpose());
    println!("exact mean of x_12:  {}", exact[12].transpose());
    assert!((mean - &exact[12]).amax() < 0.1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
