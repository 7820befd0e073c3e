//! Use the bounded-variable simplex solver directly.

use fairbni::lp::{solve_lp, LinearProgram};

pub fn run_example() -> fairbni::Result<()> {
    // maximize 3x + 2y  s.t.  x + y <= 4,  x + 3y <= 6,  0 <= x <= 3,  0 <= y <= 5
    let mut lp = LinearProgram::new(vec![-3.0, -2.0], vec![0.0, 0.0], vec![3.0, 5.0])?;
    lp.add_le(vec![1.0, 1.0], 4.0)?;
    lp.add_le(vec![1.0, 3.0], 6.0)?;
    let sol = solve_lp(&lp)?;
    println!("status {:?}, x = {:?}, objective {}", sol.status, sol.values, -sol.objective_value);

    lp.add_le(vec![-1.0, -1.0], -5.0)?;
    println!("with x + y >= 5: {:?}", solve_lp(&lp)?.status);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fairbni::Result<()> {
    run_example()
}
