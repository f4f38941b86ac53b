//! Every covariance in the family below produces the same second moments.
//! `psd_select` looks for a member that is a valid covariance.

use mals::moments::{same_simplified, sigma_prime_from_cov};
use mals::{covariance_family, reshape_g, LiftedOps, ReshapeSig, SystemModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::benchmark();
    let ops = LiftedOps::from_model(&model)?;
    let family = covariance_family(&ops.tilde_sigma_a, &ops.tilde_sigma_b, 2, 1)?;
    println!("Σ_A has {} free parameter(s)", family.sigma_a.num_params());

    let sig = ReshapeSig::square(2);
    let base = family.sigma_a_at(&[0.0])?;
    let moved = family.sigma_a_at(&[0.05])?;
    let sb = sigma_prime_from_cov(model.sigma_b(), ReshapeSig::input(2, 1))?;
    assert!(same_simplified(
        &reshape_g(&base, sig)?,
        &sb,
        &reshape_g(&moved, sig)?,
        &sb,
        2,
        1
    )?);
    println!("Σ_A(0) =\n{base}");
    println!("true Σ_A =\n{}", model.sigma_a());

    let witness = family
        .sigma_a
        .psd_select(200)
        .ok_or("no PSD member found")?;
    println!(
        "PSD member at α = {:?} (min eigenvalue {:.2e})",
        witness.params, witness.min_eigenvalue
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
