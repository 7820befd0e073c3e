//! Shared instance generators and brute-force oracles for integration tests.
#![allow(dead_code)]

use fairbni::estimation::EffectTable;
use fairbni::lp::{LinearProgram, LpStatus};
use fairbni::model::{Dataset, InterferenceMap, InterventionUnit, OutcomeUnit};
use fairbni::simulation::SimConfig;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A dataset whose only relevant parts are costs and factual treatments.
/// Two outcome units, one per subgroup, see every intervention unit.
pub fn dataset_with_costs(costs: &[f64], treated: &[bool]) -> Dataset {
    let j = costs.len();
    let outcome_units = (0..2)
        .map(|i| OutcomeUnit {
            id: format!("o{i}"),
            covariates: vec![i as f64],
            subgroup: i as u8,
            outcome: 0.0,
        })
        .collect();
    let intervention_units = costs
        .iter()
        .zip(treated)
        .enumerate()
        .map(|(k, (&cost, &t))| InterventionUnit {
            id: format!("j{k}"),
            covariates: vec![k as f64],
            factual_treatment: t,
            cost,
        })
        .collect();
    Dataset::new(
        outcome_units,
        intervention_units,
        InterferenceMap::from_dense(2, j, vec![1.0; 2 * j]).unwrap(),
    )
    .unwrap()
}

/// Group effects with group 0 mostly protected and group 1 mostly harmed.
pub fn random_effects(rng: &mut impl Rng, j: usize) -> EffectTable {
    let te0 = (0..j).map(|_| rng.random_range(-2.0..0.5)).collect();
    let te1 = (0..j).map(|_| rng.random_range(-0.5..2.0)).collect();
    let p0 = rng.random_range(0.2..0.8);
    EffectTable::from_groups(te0, te1, [p0, 1.0 - p0]).unwrap()
}

pub fn random_costs(rng: &mut impl Rng, j: usize) -> Vec<f64> {
    (0..j).map(|_| rng.random_range(0.5..2.0)).collect()
}

/// Minimum of `objective` over the polytope by enumerating every basic
/// solution: each choice of `n` tight constraints among the rows and the
/// bounds. `None` when no basic solution is feasible.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // Every constraint as (a, b) meaning a.x <= b.
    let mut rows: Vec<(Vec<f64>, f64)> = lp.constraints().map(|(a, b)| (a.to_vec(), b)).collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e.clone(), lp.upper()[k]));
        e[k] = -1.0;
        rows.push((e, -lp.lower()[k]));
    }
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(n);
    subsets(rows.len(), n, 0, &mut chosen, &mut |idx| {
        let a = DMatrix::from_fn(n, n, |r, c| rows[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[idx[r]].1);
        let Some(x) = a.lu().solve(&b) else { return };
        let feasible = rows.iter().all(|(row, rhs)| {
            let lhs: f64 = row.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            lhs <= rhs + 1e-9 * (1.0 + rhs.abs())
        });
        if feasible {
            let v: f64 = lp.objective().iter().zip(x.iter()).map(|(c, q)| c * q).sum();
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    });
    best
}

fn subsets(
    total: usize,
    size: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == size {
        visit(chosen);
        return;
    }
    for k in start..total {
        chosen.push(k);
        subsets(total, size, k + 1, chosen, visit);
        chosen.pop();
    }
}

pub fn lp_status_matches(status: LpStatus, oracle: Option<f64>) -> bool {
    matches!(
        (status, oracle),
        (LpStatus::Optimal, Some(_)) | (LpStatus::Infeasible, None)
    )
}

/// Fractional knapsack: fill the most negative cost-effectiveness first.
pub fn greedy_knapsack(values: &[f64], costs: &[f64], budget: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).filter(|&j| values[j] < 0.0).collect();
    order.sort_by(|&a, &b| (values[a] / costs[a]).total_cmp(&(values[b] / costs[b])));
    let mut left = budget;
    let mut total = 0.0;
    for j in order {
        let take = (left / costs[j]).min(1.0);
        if take <= 0.0 {
            break;
        }
        total += take * values[j];
        left -= take * costs[j];
    }
    total
}

/// `(W_0, W_1)` computed directly from the group effects.
pub fn group_welfare(effects: &EffectTable, policy: &[f64]) -> (f64, f64) {
    let j = policy.len() as f64;
    let w = |s: usize| -> f64 {
        effects.group(s).iter().zip(policy).map(|(t, p)| t * p).sum::<f64>() / j
    };
    (w(0), w(1))
}

/// Smallest disparity over budget-feasible binary policies that satisfy at
/// least one frontier constraint `nu_k W_0 + (1 - nu_k) W_1 <= wbar_k + slack`.
pub fn brute_force_fair(
    effects: &EffectTable,
    costs: &[f64],
    budget: f64,
    weights: &[f64],
    wbar: &[f64],
    slack: f64,
) -> Option<(f64, Vec<f64>)> {
    let j = costs.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..1 << j {
        let p: Vec<f64> = (0..j).map(|k| f64::from(mask >> k & 1)).collect();
        let spend: f64 = p.iter().zip(costs).map(|(a, c)| a * c).sum();
        if spend > budget * (1.0 + 1e-12) {
            continue;
        }
        let (w0, w1) = group_welfare(effects, &p);
        let on_frontier = weights
            .iter()
            .zip(wbar)
            .any(|(nu, wb)| nu * w0 + (1.0 - nu) * w1 <= wb + slack);
        if !on_frontier {
            continue;
        }
        let d = (w0 - w1).abs();
        if best.as_ref().is_none_or(|b| d < b.0) {
            best = Some((d, p));
        }
    }
    best
}

/// The regime in which the exposure map is local enough for the
/// effect-modification slopes to be well identified at J = 40.
pub fn identified_regime(n: usize) -> SimConfig {
    SimConfig {
        length_scale: 0.05,
        ..SimConfig::with_dims(n, 40, 5, 5).unwrap()
    }
}

/// Root mean squared error of the fitted `beta` over replications that
/// did not fail, and the number of failures.
pub fn beta_rmse(config: &SimConfig) -> (f64, usize) {
    let study = fairbni::simulation::Study::new(config).unwrap();
    let beta = study.true_outcome_model().beta;
    let (mut se, mut fits, mut failures) = (0.0, 0usize, 0usize);
    for r in 0..config.replications {
        let realization = study.replicate(r).unwrap();
        match study.estimate(&realization.dataset) {
            Ok((_, Some(model))) => {
                se += model
                    .beta
                    .iter()
                    .zip(&beta)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                fits += 1;
            }
            Ok((_, None)) => unreachable!("estimation mode"),
            Err(_) => failures += 1,
        }
    }
    ((se / (fits * beta.len()) as f64).sqrt(), failures)
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Up to 6 variables and 4 rows; a share of instances is infeasible.
pub fn random_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=4);
    let objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper = lower
        .iter()
        .map(|&l| if rng.random_bool(0.1) { l } else { l + rng.random_range(0.1..3.0) })
        .collect();
    let mut lp = LinearProgram::new(objective, lower, upper).unwrap();
    for _ in 0..m {
        let row = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        lp.add_le(row, rng.random_range(-1.5..1.5)).unwrap();
    }
    lp
}

/// The simplex solver against vertex enumeration on one random instance.
pub fn check_lp_instance(seed: u64) -> Result<(), String> {
    let lp = random_lp(&mut rng(seed));
    let sol = fairbni::lp::solve_lp(&lp).map_err(|e| e.to_string())?;
    let oracle = vertex_enumeration(&lp);
    if !lp_status_matches(sol.status, oracle) {
        return Err(format!("seed {seed}: status {:?} vs oracle {oracle:?}", sol.status));
    }
    if let Some(v) = oracle {
        if (sol.objective_value - v).abs() > 1e-8 {
            return Err(format!("seed {seed}: objective {} vs {v}", sol.objective_value));
        }
        if lp.max_violation(&sol.values) > 1e-9 {
            return Err(format!("seed {seed}: returned point violates constraints"));
        }
    }
    Ok(())
}

/// Welfare-max LP at a random budget against the greedy knapsack, J = 10.
pub fn check_knapsack_instance(seed: u64) -> Result<(), String> {
    use fairbni::fair::{solve_welfare_max, SolveConfig};
    let mut rng = rng(seed);
    let j = 10;
    let effects = random_effects(&mut rng, j);
    let costs = random_costs(&mut rng, j);
    let ds = dataset_with_costs(&costs, &[false; 10]);
    let fraction = rng.random_range(0.05..1.0);
    let nu = rng.random_range(0.0..1.0);
    let config = SolveConfig::with_budget_fraction(fraction);
    let report = solve_welfare_max(&effects, &ds, nu, &config).map_err(|e| e.to_string())?;
    let values: Vec<f64> = effects
        .group(0)
        .iter()
        .zip(effects.group(1))
        .map(|(a, b)| (nu * a + (1.0 - nu) * b) / j as f64)
        .collect();
    let budget = fraction * costs.iter().sum::<f64>();
    let greedy = greedy_knapsack(&values, &costs, budget);
    let lp = report.objective.ok_or("welfare-max infeasible")?;
    if (lp - greedy).abs() > 1e-9 {
        return Err(format!("seed {seed}: LP {lp} vs greedy {greedy}"));
    }
    Ok(())
}

/// Fair LP against enumeration of all binary policies, J = 8, K = 6.
pub fn check_fair_instance(seed: u64) -> Result<(), String> {
    use fairbni::fair::{solve_fair, SolveConfig};
    let mut rng = rng(seed);
    let j = 8;
    let effects = random_effects(&mut rng, j);
    let costs = random_costs(&mut rng, j);
    let ds = dataset_with_costs(&costs, &[false; 8]);
    let config = SolveConfig {
        k: Some(6),
        lambda: rng.random_range(0.005..0.3),
        ..SolveConfig::with_budget_fraction(rng.random_range(0.2..0.9))
    };
    let grid = config.build_grid(&effects, &ds).map_err(|e| e.to_string())?;
    let report = solve_fair(&effects, &ds, &grid, &config).map_err(|e| e.to_string())?;
    let budget = config.resolved_budget(&ds);
    let binary = brute_force_fair(
        &effects,
        &costs,
        budget,
        &grid.weights,
        &grid.wbar,
        grid.tolerance(),
    );
    let Some((binary_min, _)) = binary else {
        // No binary policy meets any frontier constraint.
        return Ok(());
    };
    let lp = report.objective.ok_or(format!("seed {seed}: fair LP infeasible"))?;
    if lp > binary_min + 1e-9 {
        return Err(format!("seed {seed}: LP {lp} exceeds binary minimum {binary_min}"));
    }
    let policy = report.policy.expect("feasible report has a policy");
    let integral = policy.as_slice().iter().all(|&p| p.abs() < 1e-9 || (p - 1.0).abs() < 1e-9);
    if integral {
        let (w0, w1) = group_welfare(&effects, policy.as_slice());
        if ((w0 - w1).abs() - binary_min).abs() > 1e-9 {
            return Err(format!(
                "seed {seed}: integral LP disparity {} differs from binary minimum {binary_min}",
                (w0 - w1).abs()
            ));
        }
    }
    Ok(())
}

/// Activating every nonempty subset of gridpoints at once never beats the
/// best single gridpoint, and the best subset equals it.
pub fn check_u_enumeration(seed: u64) -> Result<(), String> {
    use fairbni::fair::{fair_program, SolveConfig};
    use fairbni::lp::solve_lp;
    let mut rng = rng(seed);
    let j = rng.random_range(2..=6);
    let k = rng.random_range(1..=4);
    let effects = random_effects(&mut rng, j);
    let costs = random_costs(&mut rng, j);
    let ds = dataset_with_costs(&costs, &vec![false; j]);
    let config = SolveConfig {
        k: Some(k),
        lambda: rng.random_range(0.005..0.3),
        ..SolveConfig::with_budget_fraction(rng.random_range(0.2..0.9))
    };
    let grid = config.build_grid(&effects, &ds).map_err(|e| e.to_string())?;
    let class = config.policy_class(&ds).map_err(|e| e.to_string())?;
    let solve = |active: &[usize]| -> Result<Option<f64>, String> {
        let lp = fair_program(&effects, &grid, &class, None, active).map_err(|e| e.to_string())?;
        let sol = solve_lp(&lp).map_err(|e| e.to_string())?;
        Ok(sol.is_optimal().then_some(sol.objective_value))
    };
    let mut single: Option<f64> = None;
    for g in 0..k {
        if let Some(v) = solve(&[g])? {
            single = Some(single.map_or(v, |s: f64| s.min(v)));
        }
    }
    let mut patterns: Option<f64> = None;
    for mask in 1u32..1 << k {
        let active: Vec<usize> = (0..k).filter(|g| mask >> g & 1 == 1).collect();
        if let Some(v) = solve(&active)? {
            patterns = Some(patterns.map_or(v, |s: f64| s.min(v)));
        }
    }
    match (single, patterns) {
        (Some(a), Some(b)) if (a - b).abs() <= 1e-9 => Ok(()),
        (None, None) => Ok(()),
        other => Err(format!("seed {seed}: single {:?} vs patterns {:?}", other.0, other.1)),
    }
}

/// A random dataset with both subgroups present and a nonnegative map.
pub fn random_dataset(rng: &mut impl Rng) -> Dataset {
    let n = rng.random_range(4..30);
    let j = rng.random_range(1..7);
    let p = rng.random_range(1..4);
    let outcome_units = (0..n)
        .map(|i| OutcomeUnit {
            id: format!("o{i}"),
            covariates: (0..p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            // First two units fix both subgroups as present.
            subgroup: if i < 2 { i as u8 } else { u8::from(rng.random_bool(0.5)) },
            outcome: rng.random_range(-1.0..1.0),
        })
        .collect();
    let intervention_units = (0..j)
        .map(|k| InterventionUnit {
            id: format!("j{k}"),
            covariates: vec![rng.random_range(-1.0..1.0)],
            factual_treatment: rng.random_bool(0.4),
            cost: rng.random_range(0.1..5.0),
        })
        .collect();
    let h = (0..n * j)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) })
        .collect();
    Dataset::new(outcome_units, intervention_units, InterferenceMap::from_dense(n, j, h).unwrap())
        .unwrap()
}

/// `p0 TE(0) + p1 TE(1) = TE` bit for bit, and each group effect matches a
/// direct evaluation of its defining sum.
pub fn check_mixture_identity(seed: u64) -> Result<(), String> {
    use fairbni::estimation::{total_effects, OutcomeModel};
    let mut rng = rng(seed);
    let ds = random_dataset(&mut rng);
    let p = ds.p();
    let model = OutcomeModel {
        alpha: (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect(),
        beta: (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let te = total_effects(&ds, &model).map_err(|e| e.to_string())?;
    let (p0, p1) = ds.subgroup_fractions();
    for j in 0..ds.j() {
        let mixed = p0 * te.group(0)[j] + p1 * te.group(1)[j];
        if mixed.to_bits() != te.overall()[j].to_bits() {
            return Err(format!("seed {seed}: unit {j}: {mixed} != {}", te.overall()[j]));
        }
        for s in 0..2u8 {
            let share = if s == 0 { p0 } else { p1 };
            let direct: f64 = ds
                .outcome_units()
                .iter()
                .enumerate()
                .filter(|(_, u)| u.subgroup == s)
                .map(|(i, u)| {
                    let fa = model.beta[0]
                        + u.covariates.iter().zip(&model.beta[1..]).map(|(x, b)| x * b).sum::<f64>();
                    ds.interference().get(i, j) * fa
                })
                .sum::<f64>()
                / (ds.n() as f64 * share);
            let got = te.group(s as usize)[j];
            if (direct - got).abs() > 1e-12 * (1.0 + direct.abs()) {
                return Err(format!("seed {seed}: TE_{j}({s}) {got} vs direct {direct}"));
            }
        }
    }
    Ok(())
}

fn random_solve_config(rng: &mut impl Rng, j: usize) -> fairbni::fair::SolveConfig {
    use fairbni::fair::{BudgetAccounting, Mode, Rounding, SolveConfig};
    SolveConfig {
        mode: if rng.random_bool(0.5) { Mode::Augmentation } else { Mode::CleanSlate },
        accounting: if rng.random_bool(0.5) {
            BudgetAccounting::NewOnly
        } else {
            BudgetAccounting::Total
        },
        k: Some(rng.random_range(1..=j.max(2))),
        lambda: rng.random_range(0.0..0.5),
        rounding: Rounding::ThresholdRepair,
        ..SolveConfig::with_budget_fraction(rng.random_range(0.05..1.0))
    }
}

fn learned_policies(
    effects: &EffectTable,
    ds: &Dataset,
    config: &fairbni::fair::SolveConfig,
) -> Result<Vec<Vec<f64>>, fairbni::Error> {
    use fairbni::fair::{solve_fair, solve_optimal, solve_welfare_max_default};
    let grid = config.build_grid(effects, ds)?;
    let reports = [
        solve_fair(effects, ds, &grid, config)?,
        solve_welfare_max_default(effects, ds, config)?,
        solve_optimal(effects, ds, config)?,
    ];
    let mut out = Vec::new();
    for r in reports {
        if let Some(p) = r.policy {
            out.push(p.as_slice().to_vec());
        }
        if let Some(rounded) = r.rounded {
            out.push(rounded.policy.as_slice().to_vec());
        }
    }
    Ok(out)
}

/// Every learned policy, fractional or rounded, stays within the budget.
pub fn check_budget_feasibility(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let j = rng.random_range(2..=10);
    let effects = random_effects(&mut rng, j);
    let costs = random_costs(&mut rng, j);
    let treated: Vec<bool> = (0..j).map(|_| rng.random_bool(0.3)).collect();
    let ds = dataset_with_costs(&costs, &treated);
    let config = random_solve_config(&mut rng, j);
    let class = match config.policy_class(&ds) {
        Ok(c) => c,
        Err(fairbni::Error::Infeasible(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let budget = class.budget.unwrap();
    for p in learned_policies(&effects, &ds, &config).map_err(|e| e.to_string())? {
        let spend = class.spend(&p);
        if spend > budget * (1.0 + 1e-9) + 1e-12 {
            return Err(format!("seed {seed}: spend {spend} exceeds budget {budget}"));
        }
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(format!("seed {seed}: policy outside [0, 1]"));
        }
    }
    Ok(())
}

/// In augmentation mode every factually treated unit stays treated.
pub fn check_augmentation_pinning(seed: u64) -> Result<(), String> {
    use fairbni::fair::{BudgetAccounting, Mode};
    let mut rng = rng(seed);
    let j = rng.random_range(2..=10);
    let effects = random_effects(&mut rng, j);
    let costs = random_costs(&mut rng, j);
    let treated: Vec<bool> = (0..j).map(|_| rng.random_bool(0.4)).collect();
    let ds = dataset_with_costs(&costs, &treated);
    let mut config = random_solve_config(&mut rng, j);
    config.mode = Mode::Augmentation;
    config.accounting = BudgetAccounting::NewOnly;
    for p in learned_policies(&effects, &ds, &config).map_err(|e| e.to_string())? {
        if let Some(k) = (0..j).find(|&k| treated[k] && p[k] != 1.0) {
            return Err(format!("seed {seed}: pinned unit {k} has pi = {}", p[k]));
        }
    }
    Ok(())
}

/// Two runs of the same configuration serialize identically.
pub fn check_seeded_determinism(seed: u64) -> Result<(), String> {
    use fairbni::fair::Method;
    use fairbni::simulation::run_monte_carlo;
    let config = SimConfig {
        seed,
        replications: 2,
        treated_rate: 0.5,
        ..SimConfig::with_dims(30, 16, 1, 1).unwrap()
    };
    let run = || {
        let r = run_monte_carlo(&config, &[Method::Fair, Method::WelfareMax], &[0.3, 0.7], None);
        match r {
            Ok(result) => serde_json::to_string(&result).unwrap(),
            Err(e) => format!("error: {e}"),
        }
    };
    let (a, b) = (run(), run());
    if a == b {
        Ok(())
    } else {
        Err(format!("seed {seed}: two runs differ"))
    }
}
