//! Learn fair, welfare-maximizing, optimal and factual policies at one
//! budget and compare their subgroup welfare.

use fairbni::estimation::estimate_effects;
use fairbni::fair::{
    evaluate_factual, solve_fair, solve_optimal, solve_welfare_max_default, SolveConfig,
};
use fairbni::simulation::{generate_dataset, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let (dataset, _) = generate_dataset(&SimConfig::desk())?;
    let effects = estimate_effects(&dataset)?.effects;
    let config = SolveConfig::with_budget_fraction(0.3);
    let grid = config.build_grid(&effects, &dataset)?;
    let reports = [
        solve_fair(&effects, &dataset, &grid, &config)?,
        solve_welfare_max_default(&effects, &dataset, &config)?,
        solve_optimal(&effects, &dataset, &config)?,
        evaluate_factual(&effects, &dataset)?,
    ];
    for r in reports {
        let w = r.report.expect("clean-slate learners are always feasible");
        println!(
            "{:<12} W0 {:+.4}  W1 {:+.4}  disparity {:.4}  cost {:.2}",
            r.method.name(),
            w.w0,
            w.w1,
            w.disparity,
            w.cost
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
