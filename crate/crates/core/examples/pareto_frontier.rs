//! Trace the discretized Pareto frontier of subgroup welfare under a budget.

use fairbni::estimation::EffectTable;
use fairbni::model::{Dataset, InterferenceMap, InterventionUnit, OutcomeUnit};
use fairbni::welfare::{build_pareto_grid, PolicyClass};

pub fn run_example() -> fairbni::Result<()> {
    let costs = [1.0, 2.0, 1.5, 0.5];
    let dataset = Dataset::new(
        (0..2)
            .map(|i| OutcomeUnit {
                id: format!("o{i}"),
                covariates: vec![i as f64],
                subgroup: i as u8,
                outcome: 0.0,
            })
            .collect(),
        costs
            .iter()
            .enumerate()
            .map(|(k, &cost)| InterventionUnit {
                id: format!("p{k}"),
                covariates: vec![k as f64],
                factual_treatment: false,
                cost,
            })
            .collect(),
        InterferenceMap::from_dense(2, 4, vec![1.0; 8])?,
    )?;
    // Treating plant 0 helps group 0 a lot and harms group 1; plant 3 is
    // mildly good for both.
    let effects = EffectTable::from_groups(
        vec![-2.0, -1.0, 0.5, -0.4],
        vec![1.0, -0.5, -1.2, -0.3],
        [0.6, 0.4],
    )?;
    let class = PolicyClass::new(&dataset, Some(2.5), None)?;
    let grid = build_pareto_grid(&effects, 7, 1.0, &class)?;
    for (nu, wbar) in grid.weights.iter().zip(&grid.wbar) {
        println!("nu = {nu:.3}: min scalarized welfare {wbar:.4}");
    }
    println!("frontier slack per gridpoint: {:.4}", grid.tolerance());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
