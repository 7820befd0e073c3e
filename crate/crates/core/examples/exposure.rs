//! Build a small bipartite dataset by hand and compute exposures, the
//! summary functional and policy costs.

use fairbni::model::{
    exposure, expected_exposure, policy_cost, summary_functional, Dataset, InterferenceMap,
    InterventionUnit, OutcomeUnit, Policy,
};

pub fn run_example() -> fairbni::Result<()> {
    let outcome_units = vec![
        OutcomeUnit { id: "zip-a".into(), covariates: vec![0.2], subgroup: 0, outcome: 1.1 },
        OutcomeUnit { id: "zip-b".into(), covariates: vec![-0.4], subgroup: 1, outcome: 0.7 },
        OutcomeUnit { id: "zip-c".into(), covariates: vec![1.3], subgroup: 1, outcome: 2.0 },
    ];
    let intervention_units = vec![
        InterventionUnit { id: "plant-1".into(), covariates: vec![0.5], factual_treatment: true, cost: 4.0 },
        InterventionUnit { id: "plant-2".into(), covariates: vec![-1.0], factual_treatment: false, cost: 1.5 },
    ];
    // Plant 1 reaches every zip code; plant 2 only the last two.
    let h = InterferenceMap::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8], vec![0.2, 1.4]])?;
    let dataset = Dataset::new(outcome_units, intervention_units, h)?;

    println!("factual exposure: {:?}", exposure(&dataset, &dataset.factual_treatments())?);
    println!("expected exposure at e = (0.3, 0.6): {:?}", expected_exposure(&dataset, &[0.3, 0.6])?);
    for j in 0..dataset.j() {
        println!("summary functional of plant {j}: {:?}", summary_functional(&dataset, j)?);
    }
    let half = Policy::new(vec![0.5, 1.0])?;
    println!(
        "policy cost {} of universal cost {}",
        policy_cost(&dataset, &half)?,
        dataset.universal_cost()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
