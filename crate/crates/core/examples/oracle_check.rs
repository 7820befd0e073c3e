//! Check the fair LP against exhaustive enumeration of binary policies.

use fairbni::fair::{solve_fair, SolveConfig};
use fairbni::oracle::fair_binary_optimum;
use fairbni::simulation::{EffectSource, SimConfig, Study};

pub fn run_example() -> fairbni::Result<()> {
    let config = SimConfig {
        effects: EffectSource::Oracle,
        ..SimConfig::with_dims(400, 10, 3, 3)?
    };
    let study = Study::new(&config)?;
    let dataset = study.replicate(0)?.dataset;
    let solve = SolveConfig {
        k: Some(8),
        lambda: 0.2,
        ..SolveConfig::with_budget_fraction(0.4)
    };
    let grid = solve.build_grid(&study.truth, &dataset)?;
    let lp = solve_fair(&study.truth, &dataset, &grid, &solve)?;
    let class = solve.policy_class(&dataset)?;
    match fair_binary_optimum(&study.truth, &grid, &class, None)? {
        Some(best) => println!(
            "LP disparity {:.6}; best of {} binary policies {:.6} (gridpoint {})",
            lp.objective.unwrap_or(f64::NAN),
            best.candidates,
            best.disparity,
            best.gridpoint
        ),
        None => println!("no binary policy meets a frontier constraint"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
