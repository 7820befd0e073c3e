//! A short Monte Carlo budget sweep comparing fair and welfare-max policies.

use fairbni::fair::Method;
use fairbni::simulation::{run_monte_carlo, SimConfig};

pub fn run_example() -> fairbni::Result<()> {
    let config = SimConfig {
        replications: 20,
        ..SimConfig::desk()
    };
    let budgets = [0.1, 0.3, 0.5, 0.7, 0.9];
    let result = run_monte_carlo(&config, &[Method::Fair, Method::WelfareMax], &budgets, None)?;
    println!("budget  fair-disparity  wm-disparity  fair-welfare  wm-welfare");
    for b in budgets {
        let f = result.aggregate(Method::Fair, b, None).unwrap();
        let w = result.aggregate(Method::WelfareMax, b, None).unwrap();
        println!(
            "{b:>6}  {:>14.4}  {:>12.4}  {:>12.4}  {:>10.4}",
            f.disparity.mean, w.disparity.mean, f.population.mean, w.population.mean
        );
    }
    println!("{} failed replications", result.failures);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
