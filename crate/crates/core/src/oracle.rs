//! Exhaustive search over binary policies, for checking the LP learners on
//! small instances.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::EffectTable;
use crate::model::Policy;
use crate::welfare::{welfares, ParetoGrid, PolicyClass};

/// Largest `J` accepted by the enumerators.
pub const MAX_ENUMERATION_J: usize = 20;

/// Every binary policy in `class`, in increasing bitmask order
/// (bit `j` set means unit `j` is treated).
pub fn binary_policies(class: &PolicyClass) -> Result<Vec<Vec<f64>>> {
    let j = class.j();
    if j > MAX_ENUMERATION_J {
        return Err(Error::validation(format!(
            "enumeration limited to J <= {MAX_ENUMERATION_J}, got {j}"
        )));
    }
    let policies = (0u32..1 << j)
        .map(|mask| {
            (0..j)
                .map(|k| if mask >> k & 1 == 1 { 1.0 } else { 0.0 })
                .collect::<Vec<f64>>()
        })
        .filter(|p| class.contains(p, 1e-12))
        .collect();
    Ok(policies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryOptimum {
    pub policy: Policy,
    pub disparity: f64,
    /// Lowest zero-based gridpoint whose frontier constraint holds.
    pub gridpoint: usize,
    /// Binary policies in the class.
    pub candidates: usize,
}

/// Minimum disparity over binary policies in `class` that meet at least
/// one frontier constraint of `grid` (and the group-0 welfare bound, if
/// any). `None` when no binary policy qualifies.
pub fn fair_binary_optimum(
    effects: &EffectTable,
    grid: &ParetoGrid,
    class: &PolicyClass,
    min_welfare_target: Option<f64>,
) -> Result<Option<BinaryOptimum>> {
    check_len("policy class", effects.j(), class.j())?;
    let candidates = binary_policies(class)?;
    let count = candidates.len();
    let mut best: Option<BinaryOptimum> = None;
    for p in candidates {
        let [w0, w1] = welfares(effects, &p);
        if min_welfare_target.is_some_and(|t| w0 > t) {
            continue;
        }
        let Some(k) = (0..grid.k()).find(|&k| {
            let nu = grid.weights[k];
            nu * w0 + (1.0 - nu) * w1 <= grid.wbar[k] + grid.tolerance()
        }) else {
            continue;
        };
        let disparity = (w0 - w1).abs();
        if best.as_ref().is_none_or(|b| disparity < b.disparity) {
            best = Some(BinaryOptimum {
                policy: Policy::new(p)?,
                disparity,
                gridpoint: k,
                candidates: count,
            });
        }
    }
    Ok(best)
}

/// Minimum of `nu * W_0 + (1 - nu) * W_1` over binary policies in `class`.
pub fn welfare_binary_optimum(
    effects: &EffectTable,
    nu: f64,
    class: &PolicyClass,
) -> Result<(Policy, f64)> {
    check_len("policy class", effects.j(), class.j())?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in binary_policies(class)? {
        let [w0, w1] = welfares(effects, &p);
        let v = nu * w0 + (1.0 - nu) * w1;
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((p, v));
        }
    }
    let (p, v) = best.ok_or_else(|| Error::Infeasible("no binary policy in the class".into()))?;
    Ok((Policy::new(p)?, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::dataset_with_h;

    #[test]
    fn enumerates_budget_feasible_policies() {
        // costs 1, 2, 3
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let class = PolicyClass::new(&ds, Some(3.0), None).unwrap();
        let all = binary_policies(&class).unwrap();
        // {}, {0}, {1}, {2}, {0,1}
        assert_eq!(all.len(), 5);
        let pinned = PolicyClass::new(&ds, Some(3.0), Some(&[false, false, true])).unwrap();
        assert_eq!(binary_policies(&pinned).unwrap(), vec![vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn welfare_optimum_picks_best_subset() {
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let e = EffectTable::from_groups(vec![-3.0, -2.0, -6.0], vec![-3.0, -2.0, -6.0], [0.5, 0.5])
            .unwrap();
        let class = PolicyClass::new(&ds, Some(3.0), None).unwrap();
        let (p, v) = welfare_binary_optimum(&e, 0.5, &class).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 0.0, 1.0]);
        assert!((v + 2.0).abs() < 1e-15);
    }
}
