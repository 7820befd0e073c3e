//! Extend the installed treatments with a budget for new units only, keep
//! group-0 welfare at least as good as welfare-max at a reference budget,
//! and round the result to a binary policy.

use fairbni::estimation::estimate_effects;
use fairbni::fair::{
    min_welfare_reference, solve_fair, Budget, BudgetAccounting, Mode, Rounding, SolveConfig,
};
use fairbni::simulation::{generate_dataset, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let (dataset, _) = generate_dataset(&SimConfig::desk())?;
    let effects = estimate_effects(&dataset)?.effects;
    let mut config = SolveConfig {
        mode: Mode::Augmentation,
        accounting: BudgetAccounting::NewOnly,
        rounding: Rounding::ThresholdRepair,
        lambda: 0.1,
        ..SolveConfig::with_budget_fraction(0.3)
    };
    config.min_welfare_target = Some(min_welfare_reference(
        &effects,
        &dataset,
        &config,
        Budget::Fraction(0.1),
    )?);
    let grid = config.build_grid(&effects, &dataset)?;
    let report = solve_fair(&effects, &dataset, &grid, &config)?;
    if !report.feasible {
        println!("no policy meets the group-0 welfare target");
        return Ok(());
    }
    let policy = report.policy.as_ref().unwrap();
    let installed = dataset.factual_treatments().iter().filter(|&&a| a).count();
    println!(
        "{installed} installed units kept; fractional policy treats {:.2} units in total",
        policy.as_slice().iter().sum::<f64>()
    );
    let rounded = report.rounded.unwrap();
    println!(
        "rounded: {} units, disparity {:.4}, W0 {:.4} (target {:.4})",
        rounded.policy.treated_count(),
        rounded.report.disparity,
        rounded.report.w0,
        config.min_welfare_target.unwrap()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
