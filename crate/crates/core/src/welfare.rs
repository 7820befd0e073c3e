//! Subgroup welfare, disparity and the discretized Pareto frontier.
//!
//! Welfare is linear in the policy: `W_s(pi) = (1/J) sum_j pi_j TE_j(s)`.
//! Lower is better throughout. The frontier is traced by Negishi weights
//! `nu_k = k / (K + 1)`, `k = 1..=K`, on group 0 (and `1 - nu_k` on group 1);
//! `wbar[k]` is the minimum of the scalarized welfare over the admissible
//! policy class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::EffectTable;
use crate::lp::{solve_lp, LinearProgram};
use crate::model::{policy_cost, Dataset, Policy};

/// Default slack numerator; the frontier constraint is loosened by `lambda / K`.
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_K_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub w0: f64,
    pub w1: f64,
    pub disparity: f64,
    pub cost: f64,
}

impl WelfareReport {
    /// Population welfare `p0 * w0 + p1 * w1`.
    pub fn population(&self, p_s: [f64; 2]) -> f64 {
        p_s[0] * self.w0 + p_s[1] * self.w1
    }
}

/// `(1/J) * TE_j(s)` for each `j`: the coefficients of `W_s` in `pi`.
pub fn welfare_coefficients(effects: &EffectTable, s: usize) -> Vec<f64> {
    let j = effects.j() as f64;
    effects.group(s).iter().map(|t| t / j).collect()
}

/// `W_s(pi)` for `s = 0, 1`.
pub fn welfares(effects: &EffectTable, policy: &[f64]) -> [f64; 2] {
    let j = effects.j() as f64;
    let w = |s: usize| {
        effects
            .group(s)
            .iter()
            .zip(policy)
            .map(|(t, p)| t * p)
            .sum::<f64>()
            / j
    };
    // `+ 0.0` turns a negative zero into zero.
    [w(0) + 0.0, w(1) + 0.0]
}

pub fn evaluate_policy(
    effects: &EffectTable,
    dataset: &Dataset,
    policy: &Policy,
) -> Result<WelfareReport> {
    check_len("policy", effects.j(), policy.len())?;
    let [w0, w1] = welfares(effects, policy.as_slice());
    Ok(WelfareReport {
        w0,
        w1,
        disparity: (w0 - w1).abs(),
        cost: policy_cost(dataset, policy)?,
    })
}

/// `nu0 * W_0(pi) + (1 - nu0) * W_1(pi)`.
pub fn scalarized_welfare(effects: &EffectTable, nu0: f64, policy: &[f64]) -> f64 {
    let [w0, w1] = welfares(effects, policy);
    nu0 * w0 + (1.0 - nu0) * w1
}

/// The admissible policy set: the unit box with some coordinates pinned
/// to 1 and an optional budget on `sum_j pi_j * budget_costs_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    pub pinned: Vec<bool>,
    pub budget: Option<f64>,
    pub budget_costs: Vec<f64>,
}

impl PolicyClass {
    /// Box `[0,1]^J` with an optional budget over the dataset's costs and
    /// optionally pinned coordinates.
    pub fn new(dataset: &Dataset, budget: Option<f64>, pinned: Option<&[bool]>) -> Result<Self> {
        let pinned = match pinned {
            Some(p) => {
                check_len("pinned units", dataset.j(), p.len())?;
                p.to_vec()
            }
            None => vec![false; dataset.j()],
        };
        let class = PolicyClass {
            pinned,
            budget,
            budget_costs: dataset.costs(),
        };
        class.validate()?;
        Ok(class)
    }

    pub fn j(&self) -> usize {
        self.pinned.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_len("budget costs", self.pinned.len(), self.budget_costs.len())?;
        if let Some(b) = self.budget {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::validation(format!("budget {b} must be finite and >= 0")));
            }
            let committed = self.pinned_cost();
            if committed > b * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::Infeasible(format!(
                    "pinned units cost {committed} which exceeds the budget {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn pinned_cost(&self) -> f64 {
        self.pinned
            .iter()
            .zip(&self.budget_costs)
            .filter(|(p, _)| **p)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.pinned.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        vec![1.0; self.j()]
    }

    /// Spend counted against the budget.
    pub fn spend(&self, policy: &[f64]) -> f64 {
        policy.iter().zip(&self.budget_costs).map(|(p, c)| p * c).sum()
    }

    pub fn contains(&self, policy: &[f64], tol: f64) -> bool {
        policy.len() == self.j()
            && policy
                .iter()
                .zip(&self.pinned)
                .all(|(&p, &pin)| (0.0..=1.0).contains(&p) && (!pin || p == 1.0))
            && self
                .budget
                .is_none_or(|b| self.spend(policy) <= b + tol * b.abs().max(1.0))
    }

    /// An LP over `pi` (plus `extra` trailing variables with the given
    /// bounds) carrying this class's box and budget.
    pub fn program(
        &self,
        objective: Vec<f64>,
        extra: &[(f64, f64)],
    ) -> Result<LinearProgram> {
        let mut lower = self.lower_bounds();
        let mut upper = self.upper_bounds();
        for &(l, u) in extra {
            lower.push(l);
            upper.push(u);
        }
        let mut lp = LinearProgram::new(objective, lower, upper)?;
        if let Some(b) = self.budget {
            let mut row = self.budget_costs.clone();
            row.resize(self.j() + extra.len(), 0.0);
            lp.add_le(row, b)?;
        }
        Ok(lp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoGrid {
    /// Weight on group 0 at each gridpoint, strictly increasing in (0, 1).
    pub weights: Vec<f64>,
    /// Minimum scalarized welfare at each gridpoint.
    pub wbar: Vec<f64>,
    /// Slack numerator `lambda`; the frontier constraint uses `lambda / K`.
    pub slack: f64,
    /// Policy class the minima were taken over.
    pub class: PolicyClass,
}

impl ParetoGrid {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Additive slack on each frontier constraint.
    pub fn tolerance(&self) -> f64 {
        self.slack / self.k() as f64
    }
}

/// `ceil(sqrt(n))`, capped and at least one.
pub fn default_k(n: usize, cap: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).clamp(1, cap.max(1))
}

pub fn grid_weights(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

pub fn build_pareto_grid(
    effects: &EffectTable,
    k: usize,
    lambda: f64,
    class: &PolicyClass,
) -> Result<ParetoGrid> {
    if k == 0 {
        return Err(Error::validation("grid needs K >= 1"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::validation(format!("slack lambda {lambda} must be >= 0")));
    }
    check_len("policy class", effects.j(), class.j())?;
    class.validate()?;

    let c0 = welfare_coefficients(effects, 0);
    let c1 = welfare_coefficients(effects, 1);
    let weights = grid_weights(k);
    let wbar = weights
        .par_iter()
        .map(|&nu| {
            let objective = c0
                .iter()
                .zip(&c1)
                .map(|(a, b)| nu * a + (1.0 - nu) * b)
                .collect();
            let sol = solve_lp(&class.program(objective, &[])?)?;
            if !sol.is_optimal() {
                return Err(Error::Infeasible(
                    "policy class is empty under the given budget and pinned units".into(),
                ));
            }
            Ok(sol.objective_value)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(ParetoGrid {
        weights,
        wbar,
        slack: lambda,
        class: class.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::dataset_with_h;

    fn effects(te0: Vec<f64>, te1: Vec<f64>) -> EffectTable {
        EffectTable::from_groups(te0, te1, [0.5, 0.5]).unwrap()
    }

    #[test]
    fn zero_policy_report() {
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let e = effects(vec![-1.0, 2.0, 0.5], vec![0.3, -0.2, 1.0]);
        let r = evaluate_policy(&e, &ds, &Policy::zeros(3)).unwrap();
        assert_eq!(r, WelfareReport { w0: 0.0, w1: 0.0, disparity: 0.0, cost: 0.0 });
    }

    #[test]
    fn full_treatment_is_mean_effect() {
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let e = effects(vec![-1.0, 2.0, 0.5], vec![0.3, -0.2, 1.0]);
        let r = evaluate_policy(&e, &ds, &Policy::ones(3)).unwrap();
        assert!((r.w0 - 0.5).abs() < 1e-15);
        assert!((r.w1 - 1.1 / 3.0).abs() < 1e-15);
        assert!((r.disparity - (r.w0 - r.w1).abs()).abs() < 1e-15);
        assert_eq!(r.cost, 6.0);
    }

    #[test]
    fn do_nothing_is_optimal_when_treatment_never_helps() {
        let ds = dataset_with_h(&[vec![1.0; 4], vec![1.0; 4]]);
        let e = effects(vec![0.1, 0.0, 2.0, 0.3], vec![1.0, 0.5, 0.0, 0.2]);
        let class = PolicyClass::new(&ds, None, None).unwrap();
        let grid = build_pareto_grid(&e, 5, 1.0, &class).unwrap();
        assert_eq!(grid.wbar, vec![0.0; 5]);
        assert_eq!(grid.weights, vec![1.0 / 6.0, 2.0 / 6.0, 0.5, 4.0 / 6.0, 5.0 / 6.0]);
        assert!((grid.tolerance() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_beneficial_unit() {
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let e = effects(vec![-1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]);
        let class = PolicyClass::new(&ds, Some(1.0), None).unwrap();
        let grid = build_pareto_grid(&e, 4, 0.5, &class).unwrap();
        for w in grid.wbar {
            assert!((w + 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_pins_are_rejected() {
        let ds = dataset_with_h(&[vec![1.0; 3], vec![1.0; 3]]);
        let pins = [true, true, false];
        assert!(matches!(
            PolicyClass::new(&ds, Some(2.5), Some(&pins)),
            Err(Error::Infeasible(_))
        ));
        assert!(PolicyClass::new(&ds, Some(3.0), Some(&pins)).is_ok());
    }

    #[test]
    fn default_k_rounds_up_and_caps() {
        assert_eq!(default_k(2000, 200), 45);
        assert_eq!(default_k(35_036, 200), 188);
        assert_eq!(default_k(100_000, 200), 200);
        assert_eq!(default_k(0, 200), 1);
    }
}
