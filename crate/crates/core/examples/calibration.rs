//! Calibrate the simulation intercepts to a target treated rate and mean
//! outcome.

use fairbni::simulation::{calibrate_intercepts, generate_structure, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let config = SimConfig {
        treated_rate: 0.3,
        mean_outcome: 1.0,
        ..SimConfig::desk()
    };
    let structure = generate_structure(&config)?;
    let c = calibrate_intercepts(&config, &structure)?;
    println!(
        "propensity intercept {:.4} -> {:.4}; mean propensity {:.4}",
        config.gamma0[0], c.gamma0[0], c.mean_propensity
    );
    println!(
        "baseline intercept {:.4} -> {:.4}; mean outcome {:.4}",
        config.theta0[0], c.theta0[0], c.mean_outcome
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
