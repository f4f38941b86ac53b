//! Writes a system file and a config, then runs the `custom` pipeline on
//! them.

use mals::io::save_system;
use mals::{run_custom, ExperimentConfig, SystemModel};
use nalgebra::DMatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("mals-custom-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
    let mut sigma_a = DMatrix::zeros(4, 4);
    sigma_a[(0, 0)] = 0.02;
    sigma_a[(3, 3)] = 0.01;
    let sigma_b = DMatrix::from_diagonal_element(2, 2, 0.01);
    let model = SystemModel::new(a, b, sigma_a, sigma_b)?;
    save_system(&model, &dir.join("system.json"))?;

    let config = r#"{
        "experiment": "custom",
        "system": "system.json",
        "grid": [1000, 20000],
        "seeds": [4]
    }"#;
    std::fs::write(dir.join("config.json"), config)?;

    let report = run_custom(&ExperimentConfig::load(&dir.join("config.json"))?)?;
    for row in &report.curve.rows {
        println!(
            "n_r {:>6}: AB {:.4}, SigmaA {:.4}, SigmaB {:.4}",
            row.n_r, row.rel_err_ab, row.rel_err_sigma_a, row.rel_err_sigma_b
        );
    }
    println!("Â =\n{}", report.results[0].a_hat);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
