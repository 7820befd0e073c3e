//! Fair policy program and the comparison learners.
//!
//! The fair program minimizes `|W_1(pi) - W_0(pi)|` over budget-feasible
//! policies lying within `lambda / K` of at least one gridpoint of the
//! discretized Pareto frontier. Requiring at least one active gridpoint is
//! handled by solving one LP per gridpoint and keeping the best: activating
//! further gridpoints only adds constraints. Each LP linearizes the absolute
//! value with an epigraph variable `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::EffectTable;
use crate::lp::{solve_lp, LinearProgram, LpSolution};
use crate::model::{Dataset, Policy};
use crate::welfare::{
    build_pareto_grid, default_k, evaluate_policy, welfare_coefficients, ParetoGrid,
    PolicyClass, WelfareReport, DEFAULT_K_CAP, DEFAULT_LAMBDA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Start from no installed treatments.
    CleanSlate,
    /// Factually treated units stay treated.
    Augmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Fraction of the cost of treating every intervention unit.
    Fraction(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAccounting {
    /// The budget covers every treated unit, including pinned ones.
    Total,
    /// Only units treated beyond the pinned set count against the budget.
    NewOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    None,
    ThresholdRepair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierClass {
    /// Frontier minima respect the budget.
    Budgeted,
    /// Frontier minima ignore the budget.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub budget: Budget,
    pub mode: Mode,
    pub accounting: BudgetAccounting,
    /// Upper bound on group-0 welfare.
    pub min_welfare_target: Option<f64>,
    /// Upper bound on disparity, applied by the welfare-maximizing learners.
    pub disparity_cap: Option<f64>,
    /// Gridpoints; `ceil(sqrt(n))` capped at `k_cap` when `None`.
    pub k: Option<usize>,
    pub k_cap: usize,
    pub lambda: f64,
    pub rounding: Rounding,
    pub frontier: FrontierClass,
    /// Group-0 weight of the welfare-maximizing learner; `p0` when `None`.
    pub nu: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            budget: Budget::Fraction(1.0),
            mode: Mode::CleanSlate,
            accounting: BudgetAccounting::Total,
            min_welfare_target: None,
            disparity_cap: None,
            k: None,
            k_cap: DEFAULT_K_CAP,
            lambda: DEFAULT_LAMBDA,
            rounding: Rounding::None,
            frontier: FrontierClass::Budgeted,
            nu: None,
        }
    }
}

impl SolveConfig {
    pub fn with_budget_fraction(fraction: f64) -> Self {
        SolveConfig {
            budget: Budget::Fraction(fraction),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.budget {
            Budget::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::validation(format!(
                    "budget fraction {f} must lie in (0, 1]"
                )))
            }
            Budget::Absolute(b) if !(b.is_finite() && b > 0.0) => {
                return Err(Error::validation(format!("budget {b} must be positive")))
            }
            _ => {}
        }
        if self.k == Some(0) || self.k_cap == 0 {
            return Err(Error::validation("K must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::validation(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        if let Some(nu) = self.nu {
            if !(0.0..=1.0).contains(&nu) {
                return Err(Error::validation(format!("nu {nu} must lie in [0, 1]")));
            }
        }
        for (name, v) in [
            ("min-welfare target", self.min_welfare_target),
            ("disparity cap", self.disparity_cap),
        ] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name} must be finite")));
            }
        }
        if self.disparity_cap.is_some_and(|c| c < 0.0) {
            return Err(Error::validation("disparity cap must be >= 0"));
        }
        Ok(())
    }

    pub fn resolved_budget(&self, dataset: &Dataset) -> f64 {
        match self.budget {
            Budget::Fraction(f) => f * dataset.universal_cost(),
            Budget::Absolute(b) => b,
        }
    }

    pub fn resolved_k(&self, dataset: &Dataset) -> usize {
        self.k.unwrap_or_else(|| default_k(dataset.n(), self.k_cap))
    }

    fn class_with_budget(&self, dataset: &Dataset, budget: Option<f64>) -> Result<PolicyClass> {
        let pinned = match self.mode {
            Mode::CleanSlate => vec![false; dataset.j()],
            Mode::Augmentation => dataset.factual_treatments(),
        };
        let budget_costs = dataset
            .costs()
            .into_iter()
            .zip(&pinned)
            .map(|(c, &p)| {
                if p && self.accounting == BudgetAccounting::NewOnly {
                    0.0
                } else {
                    c
                }
            })
            .collect();
        let class = PolicyClass {
            pinned,
            budget,
            budget_costs,
        };
        class.validate()?;
        Ok(class)
    }

    /// Policies admissible for every learner under this configuration.
    pub fn policy_class(&self, dataset: &Dataset) -> Result<PolicyClass> {
        self.validate()?;
        self.class_with_budget(dataset, Some(self.resolved_budget(dataset)))
    }

    /// Class the frontier minima are computed over.
    pub fn frontier_class(&self, dataset: &Dataset) -> Result<PolicyClass> {
        self.validate()?;
        match self.frontier {
            FrontierClass::Budgeted => self.policy_class(dataset),
            FrontierClass::Unconstrained => self.class_with_budget(dataset, None),
        }
    }

    pub fn build_grid(&self, effects: &EffectTable, dataset: &Dataset) -> Result<ParetoGrid> {
        build_pareto_grid(
            effects,
            self.resolved_k(dataset),
            self.lambda,
            &self.frontier_class(dataset)?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fair,
    WelfareMax,
    Optimal,
    Factual,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Fair,
        Method::WelfareMax,
        Method::Optimal,
        Method::Factual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fair => "fair",
            Method::WelfareMax => "welfare_max",
            Method::Optimal => "optimal",
            Method::Factual => "factual",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "fair" => Ok(Method::Fair),
            "welfare_max" => Ok(Method::WelfareMax),
            "optimal" => Ok(Method::Optimal),
            "factual" => Ok(Method::Factual),
            other => Err(Error::validation(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridpointOutcome {
    /// Zero-based gridpoint index.
    pub k: usize,
    pub feasible: bool,
    /// Optimal disparity at this gridpoint when feasible.
    pub disparity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedPolicy {
    pub policy: Policy,
    pub report: WelfareReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairSolveReport {
    pub method: Method,
    pub feasible: bool,
    pub policy: Option<Policy>,
    pub report: Option<WelfareReport>,
    /// Optimal LP objective: the disparity bound `t` for the fair program,
    /// the scalarized welfare for the welfare-maximizing learners.
    pub objective: Option<f64>,
    /// Zero-based gridpoint whose frontier constraint the policy satisfies.
    pub active_gridpoint: Option<usize>,
    pub per_gridpoint: Vec<GridpointOutcome>,
    /// Absolute budget; `None` for the factual policy.
    pub budget: Option<f64>,
    pub rounded: Option<RoundedPolicy>,
}

impl FairSolveReport {
    fn infeasible(method: Method, budget: f64, per_gridpoint: Vec<GridpointOutcome>) -> Self {
        FairSolveReport {
            method,
            feasible: false,
            policy: None,
            report: None,
            objective: None,
            active_gridpoint: None,
            per_gridpoint,
            budget: Some(budget),
            rounded: None,
        }
    }
}

/// The fair LP with the frontier constraints of every gridpoint in
/// `active` imposed together. Variables are `(pi_1..pi_J, t)`.
pub fn fair_program(
    effects: &EffectTable,
    grid: &ParetoGrid,
    class: &PolicyClass,
    min_welfare_target: Option<f64>,
    active: &[usize],
) -> Result<LinearProgram> {
    let j = effects.j();
    check_len("policy class", j, class.j())?;
    let c0 = welfare_coefficients(effects, 0);
    let c1 = welfare_coefficients(effects, 1);
    let t_max = c0
        .iter()
        .zip(&c1)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        .max(1e-12);

    let mut objective = vec![0.0; j + 1];
    objective[j] = 1.0;
    let mut lp = class.program(objective, &[(0.0, t_max)])?;

    let mut up: Vec<f64> = c1.iter().zip(&c0).map(|(a, b)| a - b).collect();
    up.push(-1.0);
    lp.add_le(up, 0.0)?;
    let mut down: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a - b).collect();
    down.push(-1.0);
    lp.add_le(down, 0.0)?;

    for &k in active {
        if k >= grid.k() {
            return Err(Error::IndexOutOfRange {
                what: "gridpoints",
                index: k,
                len: grid.k(),
            });
        }
        let nu = grid.weights[k];
        let mut row: Vec<f64> = c0
            .iter()
            .zip(&c1)
            .map(|(a, b)| nu * a + (1.0 - nu) * b)
            .collect();
        row.push(0.0);
        lp.add_le(row, grid.wbar[k] + grid.tolerance())?;
    }
    if let Some(target) = min_welfare_target {
        let mut row = c0.clone();
        row.push(0.0);
        lp.add_le(row, target)?;
    }
    Ok(lp)
}

pub fn solve_fair(
    effects: &EffectTable,
    dataset: &Dataset,
    grid: &ParetoGrid,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    config.validate()?;
    if grid.k() == 0 {
        return Err(Error::validation("empty Pareto grid"));
    }
    check_len("effect table", dataset.j(), effects.j())?;
    let expected = config.frontier_class(dataset)?;
    if grid.class != expected {
        return Err(Error::validation(
            "Pareto grid was built over a different policy class than this configuration",
        ));
    }
    let class = config.policy_class(dataset)?;
    let budget = class.budget.expect("policy class carries a budget");
    let j = dataset.j();

    let solutions: Vec<LpSolution> = (0..grid.k())
        .into_par_iter()
        .map(|k| {
            let lp = fair_program(effects, grid, &class, config.min_welfare_target, &[k])?;
            solve_lp(&lp)
        })
        .collect::<Result<_>>()?;

    let per_gridpoint: Vec<GridpointOutcome> = solutions
        .iter()
        .enumerate()
        .map(|(k, s)| GridpointOutcome {
            k,
            feasible: s.is_optimal(),
            disparity: s.is_optimal().then_some(s.objective_value),
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, s) in solutions.iter().enumerate() {
        if !s.is_optimal() {
            continue;
        }
        match best {
            Some(b) if solutions[b].objective_value <= s.objective_value => {}
            _ => best = Some(k),
        }
    }
    let Some(k) = best else {
        return Ok(FairSolveReport::infeasible(Method::Fair, budget, per_gridpoint));
    };

    let sol = &solutions[k];
    let policy = Policy::clamped(&sol.values[..j]);
    finish(
        Method::Fair,
        effects,
        dataset,
        config,
        &class,
        policy,
        sol.objective_value,
        Some(k),
        per_gridpoint,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    method: Method,
    effects: &EffectTable,
    dataset: &Dataset,
    config: &SolveConfig,
    class: &PolicyClass,
    policy: Policy,
    objective: f64,
    active_gridpoint: Option<usize>,
    per_gridpoint: Vec<GridpointOutcome>,
) -> Result<FairSolveReport> {
    let report = evaluate_policy(effects, dataset, &policy)?;
    let rounded = match config.rounding {
        Rounding::None => None,
        Rounding::ThresholdRepair => {
            let p = round_policy(&policy, effects, class)?;
            let r = evaluate_policy(effects, dataset, &p)?;
            Some(RoundedPolicy { policy: p, report: r })
        }
    };
    Ok(FairSolveReport {
        method,
        feasible: true,
        policy: Some(policy),
        report: Some(report),
        objective: Some(objective),
        active_gridpoint,
        per_gridpoint,
        budget: class.budget,
        rounded,
    })
}

/// Minimizes `nu * W_0 + (1 - nu) * W_1` over the admissible class, with
/// the optional group-0 welfare bound and disparity cap of `config`.
pub fn solve_welfare_max(
    effects: &EffectTable,
    dataset: &Dataset,
    nu: f64,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::validation(format!("nu {nu} must lie in [0, 1]")));
    }
    let c0 = welfare_coefficients(effects, 0);
    let c1 = welfare_coefficients(effects, 1);
    let objective = c0
        .iter()
        .zip(&c1)
        .map(|(a, b)| nu * a + (1.0 - nu) * b)
        .collect();
    utilitarian(Method::WelfareMax, effects, dataset, objective, config)
}

/// Welfare maximization for the whole population: the objective is the
/// overall total effect, i.e. `nu = p0`.
pub fn solve_optimal(
    effects: &EffectTable,
    dataset: &Dataset,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    let j = effects.j() as f64;
    let objective = effects.overall().iter().map(|t| t / j).collect();
    utilitarian(Method::Optimal, effects, dataset, objective, config)
}

fn utilitarian(
    method: Method,
    effects: &EffectTable,
    dataset: &Dataset,
    objective: Vec<f64>,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    check_len("effect table", dataset.j(), effects.j())?;
    let class = config.policy_class(dataset)?;
    let budget = class.budget.expect("policy class carries a budget");
    let mut lp = class.program(objective, &[])?;
    let c0 = welfare_coefficients(effects, 0);
    let c1 = welfare_coefficients(effects, 1);
    if let Some(target) = config.min_welfare_target {
        lp.add_le(c0.clone(), target)?;
    }
    if let Some(cap) = config.disparity_cap {
        lp.add_le(c1.iter().zip(&c0).map(|(a, b)| a - b).collect(), cap)?;
        lp.add_le(c0.iter().zip(&c1).map(|(a, b)| a - b).collect(), cap)?;
    }
    let sol = solve_lp(&lp)?;
    if !sol.is_optimal() {
        return Ok(FairSolveReport::infeasible(method, budget, Vec::new()));
    }
    let policy = Policy::clamped(&sol.values);
    finish(
        method,
        effects,
        dataset,
        config,
        &class,
        policy,
        sol.objective_value,
        None,
        Vec::new(),
    )
}

/// Welfare-max learner at its configured weight (`p0` by default).
pub fn solve_welfare_max_default(
    effects: &EffectTable,
    dataset: &Dataset,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    let nu = config.nu.unwrap_or(effects.p_s[0]);
    solve_welfare_max(effects, dataset, nu, config)
}

/// The observed treatment assignment, evaluated.
pub fn evaluate_factual(effects: &EffectTable, dataset: &Dataset) -> Result<FairSolveReport> {
    let policy = Policy::from_binary(&dataset.factual_treatments());
    let report = evaluate_policy(effects, dataset, &policy)?;
    Ok(FairSolveReport {
        method: Method::Factual,
        feasible: true,
        policy: Some(policy),
        report: Some(report),
        objective: None,
        active_gridpoint: None,
        per_gridpoint: Vec::new(),
        budget: None,
        rounded: None,
    })
}

/// Group-0 welfare reached by the welfare-maximizing learner at a
/// reference budget, for use as `min_welfare_target`.
pub fn min_welfare_reference(
    effects: &EffectTable,
    dataset: &Dataset,
    config: &SolveConfig,
    reference: Budget,
) -> Result<f64> {
    let reference_config = SolveConfig {
        budget: reference,
        min_welfare_target: None,
        disparity_cap: None,
        rounding: Rounding::None,
        ..config.clone()
    };
    let report = solve_welfare_max_default(effects, dataset, &reference_config)?;
    report
        .report
        .map(|r| r.w0)
        .ok_or_else(|| Error::Infeasible("reference welfare-max solve is infeasible".into()))
}

/// Maps a fractional policy to a binary, budget-feasible one: threshold at
/// 0.5, then, while over budget, drop the treated unpinned unit with the
/// smallest `|overall effect| / cost` (lowest index on ties).
pub fn round_policy(policy: &Policy, effects: &EffectTable, class: &PolicyClass) -> Result<Policy> {
    check_len("policy", class.j(), policy.len())?;
    check_len("effect table", class.j(), effects.j())?;
    let mut treated: Vec<bool> = policy
        .as_slice()
        .iter()
        .zip(&class.pinned)
        .map(|(&p, &pin)| pin || p >= 0.5)
        .collect();
    if let Some(budget) = class.budget {
        let mut spend: f64 = treated
            .iter()
            .zip(&class.budget_costs)
            .filter(|(t, _)| **t)
            .map(|(_, c)| c)
            .sum();
        while spend > budget {
            let victim = (0..class.j())
                .filter(|&j| treated[j] && !class.pinned[j])
                .min_by(|&a, &b| {
                    let ratio = |j: usize| effects.overall()[j].abs() / class.budget_costs[j];
                    ratio(a).total_cmp(&ratio(b)).then(a.cmp(&b))
                });
            let Some(j) = victim else {
                return Err(Error::Infeasible(
                    "pinned units alone exceed the budget".into(),
                ));
            };
            treated[j] = false;
            spend -= class.budget_costs[j];
        }
    }
    Ok(Policy::from_binary(&treated))
}
