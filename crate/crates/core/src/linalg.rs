use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers above this are treated as rank deficiency.
pub const MAX_CONDITION: f64 = 1e12;

/// Solves `a x = b` by LU after an SVD conditioning check, refusing
/// ill-conditioned systems.
///
/// On failure the error names the columns carrying weight in the right
/// singular vector of the smallest singular value.
pub fn solve_checked(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    column_name: impl Fn(usize) -> String,
) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let (imin, smin) = sv.argmin();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let null = v_t.row(imin);
        let peak = null.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let columns = null
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() >= 0.1 * peak)
            .map(|(k, _)| column_name(k))
            .collect();
        return Err(Error::RankDeficient {
            condition,
            columns,
        });
    }
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Internal("LU solve of a well-conditioned system failed".into()))?;
    // One step of iterative refinement.
    let r = b - a * &x;
    let dx = lu.solve(&r).expect("same factorization");
    Ok(x + dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_well_conditioned() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = solve_checked(&a, &b, |k| k.to_string()).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn names_collinear_columns() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        match solve_checked(&a, &b, |k| format!("c{k}")) {
            Err(Error::RankDeficient { columns, .. }) => {
                assert_eq!(columns, vec!["c0".to_string(), "c1".to_string()]);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
