//! Propensity, heterogeneous outcome and total-effect estimation.
//!
//! The outcome model is linear in the exposure:
//!
//! ```text
//! Y_i = f0(X_i; alpha) + Abar_i * fA(X_i; beta) + eps_i
//! f0(x) = alpha_0 + x . alpha_1,   fA(x) = beta_0 + x . beta_1
//! ```
//!
//! `(alpha, beta)` are fitted with A-learning moment equations, in which
//! the effect block is orthogonalized by the exposure residual
//! `Abar_i - ebar_i`, `ebar` being the exposure expected under the fitted
//! propensities. The effect estimate stays consistent if either the baseline
//! design or the propensity model is correct.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::solve_checked;
use crate::model::{exposure, expected_exposure, Dataset};

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
/// Linear predictors beyond this magnitude mean the likelihood is being
/// maximized at infinity.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Newton iterations used by the fit (0 for constructed models).
    #[serde(default)]
    pub iterations: usize,
}

impl PropensityModel {
    /// Intercept-only model at the given treatment rate.
    pub fn constant(rate: f64, q: usize) -> Self {
        PropensityModel {
            intercept: logit(rate),
            coefficients: vec![0.0; q],
            iterations: 0,
        }
    }

    pub fn linear_predictor(&self, covariates: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(covariates)
                .map(|(g, x)| g * x)
                .sum::<f64>()
    }

    pub fn probability(&self, covariates: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(covariates))
    }

    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        check_len("propensity coefficients", dataset.q(), self.coefficients.len())?;
        Ok(dataset
            .intervention_units()
            .iter()
            .map(|u| self.probability(&u.covariates))
            .collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn propensity_design(dataset: &Dataset) -> DMatrix<f64> {
    let all: Vec<usize> = (0..dataset.q()).collect();
    design_for(dataset, &all)
}

fn design_for(dataset: &Dataset, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(dataset.j(), columns.len() + 1, |j, k| {
        if k == 0 {
            1.0
        } else {
            dataset.intervention_units()[j].covariates[columns[k - 1]]
        }
    })
}

fn log_likelihood(design: &DMatrix<f64>, y: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
    let eta = design * gamma;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &t)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            t * e - softplus
        })
        .sum()
}

/// Gradient of the Bernoulli log-likelihood with respect to
/// `(intercept, coefficients)`.
pub fn propensity_gradient(dataset: &Dataset, model: &PropensityModel) -> Vec<f64> {
    let design = propensity_design(dataset);
    let gamma = model_vector(model);
    let y = treatment_vector(dataset);
    let p = (&design * &gamma).map(sigmoid);
    (design.transpose() * (y - p)).iter().copied().collect()
}

/// Bernoulli log-likelihood of the factual treatments.
pub fn propensity_log_likelihood(dataset: &Dataset, model: &PropensityModel) -> f64 {
    log_likelihood(
        &propensity_design(dataset),
        &treatment_vector(dataset),
        &model_vector(model),
    )
}

fn model_vector(model: &PropensityModel) -> DVector<f64> {
    DVector::from_iterator(
        model.coefficients.len() + 1,
        std::iter::once(model.intercept).chain(model.coefficients.iter().copied()),
    )
}

fn treatment_vector(dataset: &Dataset) -> DVector<f64> {
    DVector::from_iterator(
        dataset.j(),
        dataset
            .intervention_units()
            .iter()
            .map(|u| if u.factual_treatment { 1.0 } else { 0.0 }),
    )
}

fn propensity_column_name(columns: &[usize], k: usize) -> String {
    if k == 0 {
        "intercept".into()
    } else {
        format!("x_int[{}]", columns[k - 1])
    }
}

/// Logistic regression of factual treatment on intervention covariates,
/// by Newton's method (IRLS) with step halving.
///
/// Covariate columns that are identically zero carry no information and
/// get a zero slope; any other collinearity is an error.
pub fn fit_propensity(dataset: &Dataset) -> Result<PropensityModel> {
    let j = dataset.j();
    let q = dataset.q();
    let treated = dataset
        .intervention_units()
        .iter()
        .filter(|u| u.factual_treatment)
        .count();
    if treated == 0 || treated == j {
        return Err(Error::DegenerateData(format!(
            "all {j} intervention units share the same treatment; propensity is not estimable"
        )));
    }
    if q >= j {
        return Err(Error::DegenerateData(format!(
            "{q} intervention covariates for {j} units; need q < J"
        )));
    }

    let active: Vec<usize> = (0..q)
        .filter(|&c| {
            dataset
                .intervention_units()
                .iter()
                .any(|u| u.covariates[c] != 0.0)
        })
        .collect();
    let width = active.len() + 1;
    let name = |k: usize| propensity_column_name(&active, k);
    let design = design_for(dataset, &active);
    let y = treatment_vector(dataset);
    let gram = design.transpose() * &design;
    // Collinear designs fail here, before weights can mask the problem.
    solve_checked(&gram, &DVector::zeros(width), name)?;

    let rate = treated as f64 / j as f64;
    let mut gamma = DVector::zeros(width);
    gamma[0] = logit(rate);
    let mut ll = log_likelihood(&design, &y, &gamma);
    let mut iterations = 0;

    while iterations < IRLS_MAX_ITER {
        let p = (&design * &gamma).map(sigmoid);
        let grad = design.transpose() * (&y - &p);
        if grad.norm() <= IRLS_TOL {
            break;
        }
        let w = p.map(|pi| pi * (1.0 - pi));
        let weighted = DMatrix::from_fn(j, width, |r, c| design[(r, c)] * w[r]);
        let hessian = design.transpose() * weighted;
        let step = solve_checked(&hessian, &grad, name).map_err(|e| {
            Error::Singular(format!(
                "information matrix degenerated after {iterations} iterations ({e}); \
                 treatment is (quasi-)perfectly separated by the covariates"
            ))
        })?;

        let mut scale = 1.0;
        let mut next = &gamma + &step;
        let mut next_ll = log_likelihood(&design, &y, &next);
        let mut halvings = 0;
        while next_ll < ll - 1e-12 * ll.abs().max(1.0) && halvings < 40 {
            scale *= 0.5;
            next = &gamma + &step * scale;
            next_ll = log_likelihood(&design, &y, &next);
            halvings += 1;
        }
        gamma = next;
        ll = next_ll;
        iterations += 1;

        let max_eta = (&design * &gamma).amax();
        if max_eta > SEPARATION_ETA {
            let separated = (&design * &gamma)
                .iter()
                .filter(|e| e.abs() > SEPARATION_ETA)
                .count();
            return Err(Error::Singular(format!(
                "perfect separation: {separated} unit(s) have |linear predictor| > {SEPARATION_ETA} \
                 after {iterations} iterations; the likelihood has no finite maximizer"
            )));
        }
    }

    let mut coefficients = vec![0.0; q];
    for (k, &c) in active.iter().enumerate() {
        coefficients[c] = gamma[k + 1];
    }
    Ok(PropensityModel {
        intercept: gamma[0],
        coefficients,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    /// Baseline intercept followed by slopes.
    pub alpha: Vec<f64>,
    /// Effect-modifier intercept followed by slopes.
    pub beta: Vec<f64>,
}

impl OutcomeModel {
    pub fn baseline(&self, covariates: &[f64]) -> f64 {
        linear(&self.alpha, covariates)
    }

    /// Effect of one unit of exposure on an outcome unit with `covariates`.
    pub fn effect(&self, covariates: &[f64]) -> f64 {
        linear(&self.beta, covariates)
    }

    /// `f0(X_i) + exposure_i * fA(X_i)` for each outcome unit.
    pub fn mean_outcomes(&self, dataset: &Dataset, exposures: &[f64]) -> Vec<f64> {
        dataset
            .outcome_units()
            .iter()
            .zip(exposures)
            .map(|(u, a)| self.baseline(&u.covariates) + a * self.effect(&u.covariates))
            .collect()
    }
}

fn linear(coefs: &[f64], covariates: &[f64]) -> f64 {
    coefs[0]
        + coefs[1..]
            .iter()
            .zip(covariates)
            .map(|(c, x)| c * x)
            .sum::<f64>()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlearningOptions {
    /// Outcome covariates entering the baseline design; all when `None`.
    /// Dropped columns get a zero coefficient in the fitted `alpha`.
    pub baseline_columns: Option<Vec<usize>>,
}

pub fn fit_outcome_alearning(
    dataset: &Dataset,
    propensity: &PropensityModel,
) -> Result<OutcomeModel> {
    fit_outcome_alearning_with(dataset, propensity, &AlearningOptions::default())
}

/// Solves the A-learning moment system
///
/// ```text
/// sum_i Z_i                 (Y_i - Z_i alpha - Abar_i Xt_i beta) = 0
/// sum_i (Abar_i - ebar_i) Xt_i (Y_i - Z_i alpha - Abar_i Xt_i beta) = 0
/// ```
///
/// with `Xt_i = (1, X_i)` and `Z_i` the baseline design.
pub fn fit_outcome_alearning_with(
    dataset: &Dataset,
    propensity: &PropensityModel,
    options: &AlearningOptions,
) -> Result<OutcomeModel> {
    let p = dataset.p();
    let base_cols: Vec<usize> = match &options.baseline_columns {
        Some(cols) => {
            if let Some(&c) = cols.iter().find(|&&c| c >= p) {
                return Err(Error::IndexOutOfRange {
                    what: "baseline columns",
                    index: c,
                    len: p,
                });
            }
            cols.clone()
        }
        None => (0..p).collect(),
    };
    let db = base_cols.len() + 1;
    let d = p + 1;
    let dim = db + d;
    if dataset.n() <= 2 * d {
        return Err(Error::DegenerateData(format!(
            "{} outcome units for {} moment conditions; need n > 2(p+1)",
            dataset.n(),
            2 * d
        )));
    }

    let e = propensity.predict(dataset)?;
    let ebar = expected_exposure(dataset, &e)?;
    let abar = exposure(dataset, &dataset.factual_treatments())?;

    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut v = DVector::<f64>::zeros(dim);
    let mut z = vec![0.0; db];
    let mut xt = vec![0.0; d];
    let mut regress = vec![0.0; dim];
    let mut instr = vec![0.0; dim];
    for (i, unit) in dataset.outcome_units().iter().enumerate() {
        z[0] = 1.0;
        for (zk, &c) in z[1..].iter_mut().zip(&base_cols) {
            *zk = unit.covariates[c];
        }
        xt[0] = 1.0;
        xt[1..].copy_from_slice(&unit.covariates);

        regress[..db].copy_from_slice(&z);
        for (r, x) in regress[db..].iter_mut().zip(&xt) {
            *r = abar[i] * x;
        }
        let resid = abar[i] - ebar[i];
        instr[..db].copy_from_slice(&z);
        for (s, x) in instr[db..].iter_mut().zip(&xt) {
            *s = resid * x;
        }
        for r in 0..dim {
            let w = instr[r];
            if w == 0.0 {
                continue;
            }
            for c in 0..dim {
                m[(r, c)] += w * regress[c];
            }
            v[r] += w * unit.outcome;
        }
    }

    let name = |k: usize| {
        if k == 0 {
            "alpha[intercept]".to_string()
        } else if k < db {
            format!("alpha[x_out[{}]]", base_cols[k - 1])
        } else if k == db {
            "beta[intercept]".to_string()
        } else {
            format!("beta[x_out[{}]]", k - db - 1)
        }
    };
    let theta = solve_checked(&m, &v, name)?;

    let residual = (&m * &theta - &v).norm();
    let scale = v.norm().max(m.norm() * theta.norm()).max(1.0);
    if residual > 1e-8 * scale {
        return Err(Error::Internal(format!(
            "moment residual {residual:.3e} exceeds tolerance"
        )));
    }

    let mut alpha = vec![0.0; d];
    alpha[0] = theta[0];
    for (k, &c) in base_cols.iter().enumerate() {
        alpha[c + 1] = theta[k + 1];
    }
    let beta = theta.iter().skip(db).copied().collect();
    Ok(OutcomeModel { alpha, beta })
}

/// Per-intervention-unit total effects on each subgroup and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub total_effect_overall: Vec<f64>,
    pub total_effect_by_group: [Vec<f64>; 2],
    pub p_s: [f64; 2],
}

impl EffectTable {
    /// Assembles a table from subgroup effects; the overall effect is the
    /// `p_s`-mixture of the two, so the mixture identity holds exactly.
    pub fn from_groups(group0: Vec<f64>, group1: Vec<f64>, p_s: [f64; 2]) -> Result<Self> {
        check_len("group 1 effects", group0.len(), group1.len())?;
        if !(p_s[0] > 0.0 && p_s[1] > 0.0) || ((p_s[0] + p_s[1]) - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "subgroup proportions {p_s:?} must be positive and sum to one"
            )));
        }
        if group0.iter().chain(&group1).any(|t| !t.is_finite()) {
            return Err(Error::validation("non-finite total effect"));
        }
        let overall = group0
            .iter()
            .zip(&group1)
            .map(|(a, b)| mixture(p_s, *a, *b))
            .collect();
        Ok(EffectTable {
            total_effect_overall: overall,
            total_effect_by_group: [group0, group1],
            p_s,
        })
    }

    pub fn j(&self) -> usize {
        self.total_effect_overall.len()
    }

    pub fn group(&self, s: usize) -> &[f64] {
        &self.total_effect_by_group[s]
    }

    pub fn overall(&self) -> &[f64] {
        &self.total_effect_overall
    }

    pub fn summary(&self) -> EffectSummary {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let protective = |v: &[f64]| v.iter().filter(|&&t| t < 0.0).count() as f64 / v.len() as f64;
        EffectSummary {
            mean_group0: mean(self.group(0)),
            mean_group1: mean(self.group(1)),
            mean_overall: mean(self.overall()),
            protective_group0: protective(self.group(0)),
            protective_group1: protective(self.group(1)),
            protective_overall: protective(self.overall()),
        }
    }
}

#[inline]
pub fn mixture(p_s: [f64; 2], te0: f64, te1: f64) -> f64 {
    p_s[0] * te0 + p_s[1] * te1
}

/// Means of the total effects and fractions of protective (negative) ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub mean_group0: f64,
    pub mean_group1: f64,
    pub mean_overall: f64,
    pub protective_group0: f64,
    pub protective_group1: f64,
    pub protective_overall: f64,
}

/// `TE_j(s) = (1/n) sum_i 1{S_i = s} / p_s * H_ij * fA(X_i)` with `p_s` the
/// empirical subgroup fraction.
pub fn total_effects(dataset: &Dataset, outcome: &OutcomeModel) -> Result<EffectTable> {
    check_len("effect coefficients", dataset.p() + 1, outcome.beta.len())?;
    let (p0, p1) = dataset.subgroup_fractions();
    if p0 == 0.0 || p1 == 0.0 {
        return Err(Error::DegenerateData("empty subgroup".into()));
    }
    let n = dataset.n() as f64;
    let jn = dataset.j();
    let h = dataset.interference();
    let mut sums = [vec![0.0; jn], vec![0.0; jn]];
    for (i, unit) in dataset.outcome_units().iter().enumerate() {
        let fa = outcome.effect(&unit.covariates);
        let acc = &mut sums[unit.subgroup as usize];
        for (a, hij) in acc.iter_mut().zip(h.row(i)) {
            *a += hij * fa;
        }
    }
    let [s0, s1] = sums;
    let te0 = s0.into_iter().map(|x| x / (n * p0)).collect();
    let te1 = s1.into_iter().map(|x| x / (n * p1)).collect();
    EffectTable::from_groups(te0, te1, [p0, p1])
}

/// Fitted propensity and outcome models with the effect table they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub propensity: PropensityModel,
    pub outcome: OutcomeModel,
    pub effects: EffectTable,
}

/// Logistic propensity fit, A-learning outcome fit, then total effects.
pub fn estimate_effects(dataset: &Dataset) -> Result<Estimates> {
    let propensity = fit_propensity(dataset)?;
    let outcome = fit_outcome_alearning(dataset, &propensity)?;
    let effects = total_effects(dataset, &outcome)?;
    Ok(Estimates {
        propensity,
        outcome,
        effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InterferenceMap, InterventionUnit, OutcomeUnit};

    fn intervention_dataset(cov: Vec<Vec<f64>>, treated: Vec<bool>) -> Dataset {
        let j = cov.len();
        let iu = cov
            .into_iter()
            .zip(treated)
            .enumerate()
            .map(|(k, (c, t))| InterventionUnit {
                id: format!("p{k}"),
                covariates: c,
                factual_treatment: t,
                cost: 1.0,
            })
            .collect();
        let ou = (0..2)
            .map(|i| OutcomeUnit {
                id: format!("o{i}"),
                covariates: vec![0.0],
                subgroup: i as u8,
                outcome: 0.0,
            })
            .collect();
        Dataset::new(ou, iu, InterferenceMap::from_dense(2, j, vec![1.0; 2 * j]).unwrap()).unwrap()
    }

    #[test]
    fn intercept_only_when_covariates_vanish() {
        let treated: Vec<bool> = (0..20).map(|k| k % 4 == 0).collect();
        let ds = intervention_dataset(vec![vec![0.0, 0.0]; 20], treated);
        let model = fit_propensity(&ds).unwrap();
        assert!((model.intercept - logit(0.25)).abs() < 1e-12);
        assert_eq!(model.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn collinear_covariates_are_named() {
        let cov: Vec<Vec<f64>> = (0..10)
            .map(|k| vec![(k as f64).sin(), 2.0 * (k as f64).sin()])
            .collect();
        let treated = (0..10).map(|k| k % 3 == 0).collect();
        let ds = intervention_dataset(cov, treated);
        match fit_propensity(&ds) {
            Err(Error::RankDeficient { columns, .. }) => {
                assert!(columns.contains(&"x_int[0]".to_string()));
                assert!(columns.contains(&"x_int[1]".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perfect_separation_is_reported() {
        let cov: Vec<Vec<f64>> = (0..12).map(|k| vec![k as f64 - 5.5]).collect();
        let treated = (0..12).map(|k| k >= 6).collect();
        let ds = intervention_dataset(cov, treated);
        let err = fit_propensity(&ds).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
        assert!(err.to_string().contains("separat"));
    }

    #[test]
    fn all_same_treatment_is_degenerate() {
        let cov: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64]).collect();
        let ds = intervention_dataset(cov, vec![true; 6]);
        assert!(matches!(fit_propensity(&ds), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn table_rejects_bad_proportions() {
        assert!(EffectTable::from_groups(vec![1.0], vec![1.0], [0.0, 1.0]).is_err());
        assert!(EffectTable::from_groups(vec![1.0], vec![1.0, 2.0], [0.5, 0.5]).is_err());
        assert!(EffectTable::from_groups(vec![1.0], vec![1.0], [0.4, 0.5]).is_err());
    }

    #[test]
    fn logit_sigmoid_inverse() {
        for p in [0.01, 0.23, 0.5, 0.9] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-15);
        }
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
