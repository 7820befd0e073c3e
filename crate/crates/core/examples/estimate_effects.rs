//! Fit the propensity and outcome models on a simulated dataset and
//! summarize the per-plant total effects.

use fairbni::estimation::estimate_effects;
use fairbni::simulation::{generate_dataset, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let (dataset, study) = generate_dataset(&SimConfig::desk())?;
    let fit = estimate_effects(&dataset)?;
    println!(
        "propensity: intercept {:.3}, {} IRLS iterations",
        fit.propensity.intercept, fit.propensity.iterations
    );
    println!("fitted beta: {:.3?}", fit.outcome.beta);
    println!("true beta:   {:.3?}", study.true_outcome_model().beta);
    let s = fit.effects.summary();
    println!(
        "mean effect: group 0 {:.3}, group 1 {:.3}, overall {:.3}",
        s.mean_group0, s.mean_group1, s.mean_overall
    );
    println!(
        "protective share: group 0 {:.2}, group 1 {:.2}, overall {:.2}",
        s.protective_group0, s.protective_group1, s.protective_overall
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
