//! Synthetic bipartite studies and the Monte Carlo protocol.
//!
//! A study draws the fixed structure once: covariates, planar locations,
//! the distance-decay interference map, subgroups and costs. Each
//! replication then redraws only treatments and outcome noise, refits the
//! models, learns policies and scores them against the true effects.
//!
//! Randomness comes from ChaCha8 seeded with `seed`: stream 0 draws the
//! structure and stream `r + 1` drives replication `r`. Results therefore do
//! not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::{
    fit_outcome_alearning_with, fit_propensity, sigmoid, total_effects, AlearningOptions,
    EffectSummary, EffectTable, OutcomeModel, PropensityModel,
};
use crate::fair::{
    evaluate_factual, solve_fair, solve_optimal, solve_welfare_max_default, Budget,
    FairSolveReport, FrontierClass, Method, Mode, SolveConfig,
};
use crate::model::{
    exposure, expected_exposure, Dataset, InterferenceMap, InterventionUnit, OutcomeUnit,
};
use crate::welfare::{evaluate_policy, DEFAULT_K_CAP, DEFAULT_LAMBDA};

/// Outcome parameters `(alpha, beta)` for 13 outcome covariates.
pub const FULL_THETA0: [f64; 28] = [
    0.649, 0.963, 0.33, 0.411, -0.481, 0.733, 0.566, 0.343, 0.058, -0.934, -0.277, -0.995, 0.709,
    0.419, -0.505, 0.517, 0.03, -0.723, 0.854, -0.496, -0.393, 0.316, 0.487, -0.444, -0.653,
    -0.052, 0.931, 0.143,
];

/// Propensity parameters (intercept first) for 19 intervention covariates.
pub const FULL_GAMMA0: [f64; 20] = [
    -0.997, -0.447, -0.04, 0.021, 0.806, -0.689, -0.823, -0.909, -0.658, -0.101, 0.908, 0.911,
    0.193, 0.408, -0.835, 0.392, 0.625, 0.13, 0.022, 0.073,
];

pub const FULL_P: usize = 13;
pub const FULL_Q: usize = 19;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

const BISECTION_ITERS: usize = 100;

/// `(alpha, beta)` for `p` outcome covariates: the leading entries of each
/// half of [`FULL_THETA0`].
pub fn default_theta(p: usize) -> Result<Vec<f64>> {
    if p > FULL_P {
        return Err(Error::validation(format!(
            "no default outcome parameters for p = {p} > {FULL_P}; set theta0"
        )));
    }
    let (alpha, beta) = FULL_THETA0.split_at(FULL_P + 1);
    Ok(alpha[..=p].iter().chain(&beta[..=p]).copied().collect())
}

pub fn default_gamma(q: usize) -> Result<Vec<f64>> {
    if q > FULL_Q {
        return Err(Error::validation(format!(
            "no default propensity parameters for q = {q} > {FULL_Q}; set gamma0"
        )));
    }
    Ok(FULL_GAMMA0[..=q].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SubgroupRule {
    /// `S_i = i mod 2`.
    Alternating,
    /// Independent fair coin flips.
    Bernoulli,
    /// `S_i = 1` above the median of one outcome covariate.
    CovariateMedian { column: usize },
    /// Median split on the covariate with the largest positive effect
    /// slope, so that group 1 gains least from exposure reductions.
    LargestEffectModifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSource {
    /// Fit propensity and outcome models in each replication.
    Estimated,
    /// Skip estimation and learn policies from the true effects.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySpec {
    Logistic,
    InterceptOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
    pub theta0: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub snr: f64,
    /// `false` sets the noise to zero.
    pub noise: bool,
    pub replications: usize,
    pub seed: u64,
    pub calibrate: bool,
    pub treated_rate: f64,
    pub mean_outcome: f64,
    pub tolerance: f64,
    pub length_scale: f64,
    pub subgroup: SubgroupRule,
    /// Log-scale spread of the lognormal intervention costs.
    pub cost_sigma: f64,
    pub effects: EffectSource,
    pub propensity: PropensitySpec,
    /// Outcome covariates in the fitted baseline design; all when `None`.
    pub baseline_columns: Option<Vec<usize>>,
    pub mode: Mode,
    pub lambda: f64,
    pub k_cap: usize,
    pub frontier: FrontierClass,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::desk()
    }
}

impl SimConfig {
    /// Laptop-sized study: n = 2000, J = 40, p = q = 5, 200 replications.
    pub fn desk() -> Self {
        SimConfig::with_dims(2000, 40, 5, 5).expect("desk dimensions have defaults")
    }

    /// Full-size study: n = 35,036, J = 459, p = 13, q = 19, 1000 replications.
    pub fn full_scale() -> Self {
        SimConfig {
            replications: 1000,
            ..SimConfig::with_dims(35_036, 459, FULL_P, FULL_Q).expect("full-scale dimensions")
        }
    }

    pub fn with_dims(n: usize, j: usize, p: usize, q: usize) -> Result<Self> {
        Ok(SimConfig {
            n,
            j,
            p,
            q,
            theta0: default_theta(p)?,
            gamma0: default_gamma(q)?,
            snr: 3.0,
            noise: true,
            replications: 200,
            seed: 20_050_101,
            calibrate: true,
            treated_rate: 0.23,
            mean_outcome: 0.046,
            tolerance: 0.01,
            length_scale: 0.2,
            subgroup: SubgroupRule::LargestEffectModifier,
            cost_sigma: 0.5,
            effects: EffectSource::Estimated,
            propensity: PropensitySpec::Logistic,
            baseline_columns: None,
            mode: Mode::CleanSlate,
            lambda: DEFAULT_LAMBDA,
            k_cap: DEFAULT_K_CAP,
            frontier: FrontierClass::Budgeted,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.j == 0 || self.replications == 0 {
            return Err(Error::validation(
                "need n >= 2, J >= 1 and at least one replication",
            ));
        }
        check_len("theta0", 2 * (self.p + 1), self.theta0.len())?;
        check_len("gamma0", self.q + 1, self.gamma0.len())?;
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::validation(format!("snr {} must be > 0", self.snr)));
        }
        if !(self.treated_rate > 0.0 && self.treated_rate < 1.0) {
            return Err(Error::validation("treated_rate must lie in (0, 1)"));
        }
        if !(self.tolerance > 0.0 && self.length_scale > 0.0 && self.cost_sigma >= 0.0) {
            return Err(Error::validation(
                "tolerance and length_scale must be positive, cost_sigma >= 0",
            ));
        }
        if let SubgroupRule::CovariateMedian { column } = self.subgroup {
            if column >= self.p {
                return Err(Error::IndexOutOfRange {
                    what: "outcome covariates",
                    index: column,
                    len: self.p,
                });
            }
        }
        if let Some(cols) = &self.baseline_columns {
            if let Some(&c) = cols.iter().find(|&&c| c >= self.p) {
                return Err(Error::IndexOutOfRange {
                    what: "baseline columns",
                    index: c,
                    len: self.p,
                });
            }
        }
        if self.theta0.iter().chain(&self.gamma0).any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite simulation parameter"));
        }
        Ok(())
    }

    pub fn alpha(&self) -> &[f64] {
        &self.theta0[..=self.p]
    }

    pub fn beta(&self) -> &[f64] {
        &self.theta0[self.p + 1..]
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// The fixed part of a study. `dataset` carries placeholder treatments and
/// outcomes; replications substitute their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub dataset: Dataset,
    pub outcome_locations: Vec<[f64; 2]>,
    pub intervention_locations: Vec<[f64; 2]>,
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        0.5 * (sorted[m - 1] + sorted[m])
    } else {
        sorted[m]
    }
}

/// Draws covariates, locations, the interference map, subgroups and costs.
pub fn generate_structure(config: &SimConfig) -> Result<Structure> {
    config.validate()?;
    let mut rng = config.rng(0);
    let (n, jn) = (config.n, config.j);

    let x_out = standard_normal_matrix(&mut rng, n, config.p);
    let x_int = standard_normal_matrix(&mut rng, jn, config.q);
    let outcome_locations: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    let intervention_locations: Vec<[f64; 2]> =
        (0..jn).map(|_| [rng.random(), rng.random()]).collect();

    let mut entries = Vec::with_capacity(n * jn);
    for o in &outcome_locations {
        for s in &intervention_locations {
            let d = ((o[0] - s[0]).powi(2) + (o[1] - s[1]).powi(2)).sqrt();
            entries.push((-d / config.length_scale).exp());
        }
    }
    // Mean exposure under universal treatment equals one.
    let mean_all = entries.iter().sum::<f64>() / (n * jn) as f64;
    entries.iter_mut().for_each(|h| *h /= mean_all);
    let h = InterferenceMap::from_dense(n, jn, entries)?;

    let costs: Vec<f64> = if config.cost_sigma > 0.0 {
        let dist = LogNormal::new(0.0, config.cost_sigma)
            .map_err(|e| Error::validation(format!("cost distribution: {e}")))?;
        (0..jn).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![1.0; jn]
    };

    let coin_flips: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();

    let provisional: Vec<OutcomeUnit> = x_out
        .into_iter()
        .enumerate()
        .map(|(i, covariates)| OutcomeUnit {
            id: format!("o{i}"),
            covariates,
            subgroup: (i % 2) as u8,
            outcome: 0.0,
        })
        .collect();
    let intervention_units: Vec<InterventionUnit> = x_int
        .into_iter()
        .zip(costs)
        .enumerate()
        .map(|(k, (covariates, cost))| InterventionUnit {
            id: format!("j{k}"),
            covariates,
            factual_treatment: false,
            cost,
        })
        .collect();

    // Subgroups are assigned on standardized covariates.
    let mut staged = Dataset::new(provisional, intervention_units, h)?;
    staged.standardize();
    let mut outcome_units = staged.outcome_units().to_vec();

    let split_column = match config.subgroup {
        SubgroupRule::CovariateMedian { column } => Some(column),
        SubgroupRule::LargestEffectModifier => {
            let slopes = &config.beta()[1..];
            if slopes.is_empty() {
                return Err(Error::validation("effect-modifier split needs p >= 1"));
            }
            Some(
                slopes
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(c, _)| c)
                    .expect("nonempty"),
            )
        }
        _ => None,
    };
    match (&config.subgroup, split_column) {
        (_, Some(c)) => {
            let column: Vec<f64> = outcome_units.iter().map(|u| u.covariates[c]).collect();
            let m = median(&column);
            for u in &mut outcome_units {
                u.subgroup = u8::from(u.covariates[c] > m);
            }
        }
        (SubgroupRule::Alternating, None) => {
            outcome_units
                .iter_mut()
                .enumerate()
                .for_each(|(i, u)| u.subgroup = (i % 2) as u8);
        }
        _ => {
            for (u, &s) in outcome_units.iter_mut().zip(&coin_flips) {
                u.subgroup = u8::from(s);
            }
        }
    }

    let mut dataset = Dataset::new(
        outcome_units,
        staged.intervention_units().to_vec(),
        staged.interference().clone(),
    )?;
    dataset.standardize();
    Ok(Structure {
        dataset,
        outcome_locations,
        intervention_locations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma0: Vec<f64>,
    pub theta0: Vec<f64>,
    /// `(1/J) sum_j e_j` under the calibrated propensity model.
    pub mean_propensity: f64,
    /// Mean outcome at the exposure expected under the propensities.
    pub mean_outcome: f64,
}

fn bisect(mut f: impl FnMut(f64) -> f64, start: f64, tol: f64, what: &str) -> Result<f64> {
    if f(start).abs() <= tol {
        return Ok(start);
    }
    let (mut lo, mut hi) = (start - 50.0, start + 50.0);
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::Calibration(format!(
            "{what}: target not bracketed (gaps {flo:.4} and {fhi:.4})"
        )));
    }
    let increasing = fhi > flo;
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= tol * 1e-3 {
            return Ok(mid);
        }
        if (v > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() <= tol {
        Ok(mid)
    } else {
        Err(Error::Calibration(format!(
            "{what}: no convergence after {BISECTION_ITERS} bisection steps"
        )))
    }
}

fn true_propensity(gamma: &[f64]) -> PropensityModel {
    PropensityModel {
        intercept: gamma[0],
        coefficients: gamma[1..].to_vec(),
        iterations: 0,
    }
}

fn true_outcome(config: &SimConfig, theta: &[f64]) -> OutcomeModel {
    OutcomeModel {
        alpha: theta[..=config.p].to_vec(),
        beta: theta[config.p + 1..].to_vec(),
    }
}

fn calibration_metrics(
    config: &SimConfig,
    dataset: &Dataset,
    gamma: &[f64],
    theta: &[f64],
) -> Result<(f64, f64)> {
    let e = true_propensity(gamma).predict(dataset)?;
    let mean_e = e.iter().sum::<f64>() / e.len() as f64;
    let ebar = expected_exposure(dataset, &e)?;
    let mu = true_outcome(config, theta).mean_outcomes(dataset, &ebar);
    Ok((mean_e, mu.iter().sum::<f64>() / mu.len() as f64))
}

/// Bisects the propensity intercept until the mean propensity matches
/// `treated_rate`, then the baseline intercept until the mean outcome at
/// the expected exposure matches `mean_outcome`.
pub fn calibrate_intercepts(config: &SimConfig, structure: &Structure) -> Result<Calibration> {
    config.validate()?;
    let ds = &structure.dataset;
    let mut gamma = config.gamma0.clone();
    let covariates: Vec<f64> = ds
        .intervention_units()
        .iter()
        .map(|u| true_propensity(&gamma).linear_predictor(&u.covariates) - gamma[0])
        .collect();
    gamma[0] = bisect(
        |c| {
            covariates.iter().map(|x| sigmoid(c + x)).sum::<f64>() / covariates.len() as f64
                - config.treated_rate
        },
        gamma[0],
        config.tolerance,
        "propensity intercept",
    )?;

    let mut theta = config.theta0.clone();
    let (_, base) = calibration_metrics(config, ds, &gamma, &theta)?;
    let offset = base - theta[0];
    theta[0] = bisect(
        |c| c + offset - config.mean_outcome,
        theta[0],
        config.tolerance,
        "baseline intercept",
    )?;

    let (mean_propensity, mean_outcome) = calibration_metrics(config, ds, &gamma, &theta)?;
    Ok(Calibration {
        gamma0: gamma,
        theta0: theta,
        mean_propensity,
        mean_outcome,
    })
}

/// A structure with its (possibly calibrated) true parameters.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: SimConfig,
    pub structure: Structure,
    pub calibration: Calibration,
    pub truth: EffectTable,
}

impl Study {
    pub fn new(config: &SimConfig) -> Result<Self> {
        let structure = generate_structure(config)?;
        let calibration = if config.calibrate {
            calibrate_intercepts(config, &structure)?
        } else {
            let (mean_propensity, mean_outcome) = calibration_metrics(
                config,
                &structure.dataset,
                &config.gamma0,
                &config.theta0,
            )?;
            Calibration {
                gamma0: config.gamma0.clone(),
                theta0: config.theta0.clone(),
                mean_propensity,
                mean_outcome,
            }
        };
        let truth = total_effects(&structure.dataset, &self_outcome(config, &calibration))?;
        Ok(Study {
            config: config.clone(),
            structure,
            calibration,
            truth,
        })
    }

    pub fn true_outcome_model(&self) -> OutcomeModel {
        self_outcome(&self.config, &self.calibration)
    }

    pub fn true_propensity_model(&self) -> PropensityModel {
        true_propensity(&self.calibration.gamma0)
    }

    /// Treatments and outcomes for replication `r`.
    pub fn replicate(&self, r: usize) -> Result<Realization> {
        let mut rng = self.config.rng(r as u64 + 1);
        let ds = &self.structure.dataset;
        let e = self.true_propensity_model().predict(ds)?;
        let treatments: Vec<bool> = e.iter().map(|&p| rng.random_bool(p)).collect();
        let abar = exposure(ds, &treatments)?;
        let mean = self.true_outcome_model().mean_outcomes(ds, &abar);
        let noise_sd = if self.config.noise {
            let m = mean.iter().sum::<f64>() / mean.len() as f64;
            let var = mean.iter().map(|v| (v - m).powi(2)).sum::<f64>() / mean.len() as f64;
            (var / self.config.snr).sqrt()
        } else {
            0.0
        };
        let outcomes: Vec<f64> = mean
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + noise_sd * z
            })
            .collect();
        let dataset = ds.with_realization(&treatments, &outcomes)?;
        Ok(Realization {
            dataset,
            mean_outcomes: mean,
            noise_sd,
        })
    }

    /// Effects the learners see in a replication.
    pub fn estimate(&self, dataset: &Dataset) -> Result<(EffectTable, Option<OutcomeModel>)> {
        match self.config.effects {
            EffectSource::Oracle => Ok((self.truth.clone(), None)),
            EffectSource::Estimated => {
                let propensity = match self.config.propensity {
                    PropensitySpec::Logistic => fit_propensity(dataset)?,
                    PropensitySpec::InterceptOnly => {
                        let treated = dataset.factual_treatments();
                        let rate = treated.iter().filter(|&&a| a).count() as f64
                            / treated.len() as f64;
                        if rate == 0.0 || rate == 1.0 {
                            return Err(Error::DegenerateData(
                                "all intervention units share the same treatment".into(),
                            ));
                        }
                        PropensityModel::constant(rate, dataset.q())
                    }
                };
                let options = AlearningOptions {
                    baseline_columns: self.config.baseline_columns.clone(),
                };
                let model = fit_outcome_alearning_with(dataset, &propensity, &options)?;
                let effects = total_effects(dataset, &model)?;
                Ok((effects, Some(model)))
            }
        }
    }
}

fn self_outcome(config: &SimConfig, calibration: &Calibration) -> OutcomeModel {
    true_outcome(config, &calibration.theta0)
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub dataset: Dataset,
    pub mean_outcomes: Vec<f64>,
    pub noise_sd: f64,
}

/// Convenience: the dataset of replication 0 plus the study it came from.
pub fn generate_dataset(config: &SimConfig) -> Result<(Dataset, Study)> {
    let study = Study::new(config)?;
    let realization = study.replicate(0)?;
    Ok((realization.dataset, study))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Budget as a fraction of the universal cost.
    pub budget: f64,
    pub disparity_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub point: usize,
    pub feasible: bool,
    pub w0: f64,
    pub w1: f64,
    pub disparity: f64,
    pub population: f64,
    pub cost: f64,
    pub treated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub failure: Option<String>,
    pub treated_fraction: Option<f64>,
    pub beta_hat: Option<Vec<f64>>,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: 0.0, sd: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub budget: f64,
    pub disparity_cap: Option<f64>,
    /// Replications in which the learner returned a policy.
    pub feasible: usize,
    pub w0: Stat,
    pub w1: Stat,
    pub disparity: Stat,
    pub population: Stat,
    pub cost: Stat,
    pub treated: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub calibration: Calibration,
    pub truth: EffectSummary,
    pub points: Vec<SweepPoint>,
    pub aggregates: Vec<Aggregate>,
    pub replications: Vec<ReplicationRecord>,
    pub failures: usize,
}

impl SimResult {
    pub fn aggregate(&self, method: Method, budget: f64, cap: Option<f64>) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.budget == budget && a.disparity_cap == cap)
    }
}

fn sweep_points(budgets: &[f64], caps: Option<&[f64]>) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &budget in budgets {
        match caps {
            Some(caps) => points.extend(caps.iter().map(|&c| SweepPoint {
                budget,
                disparity_cap: Some(c),
            })),
            None => points.push(SweepPoint {
                budget,
                disparity_cap: None,
            }),
        }
    }
    points
}

fn run_replication(
    study: &Study,
    index: usize,
    methods: &[Method],
    points: &[SweepPoint],
) -> Result<ReplicationRecord> {
    let realization = study.replicate(index)?;
    let ds = &realization.dataset;
    let treated = ds.factual_treatments();
    let treated_fraction = treated.iter().filter(|&&a| a).count() as f64 / treated.len() as f64;
    let (effects, model) = study.estimate(ds)?;
    let p_s = study.truth.p_s;

    let mut outcomes = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let config = SolveConfig {
            budget: Budget::Fraction(point.budget),
            mode: study.config.mode,
            lambda: study.config.lambda,
            k_cap: study.config.k_cap,
            frontier: study.config.frontier,
            ..Default::default()
        };
        for &method in methods {
            let report: FairSolveReport = match method {
                Method::Fair => {
                    let grid = config.build_grid(&effects, ds)?;
                    solve_fair(&effects, ds, &grid, &config)?
                }
                Method::WelfareMax => {
                    let capped = SolveConfig {
                        disparity_cap: point.disparity_cap,
                        ..config.clone()
                    };
                    solve_welfare_max_default(&effects, ds, &capped)?
                }
                Method::Optimal => solve_optimal(&effects, ds, &config)?,
                Method::Factual => evaluate_factual(&effects, ds)?,
            };
            let outcome = match &report.policy {
                Some(policy) => {
                    let truth = evaluate_policy(&study.truth, ds, policy)?;
                    MethodOutcome {
                        method,
                        point: pi,
                        feasible: true,
                        w0: truth.w0,
                        w1: truth.w1,
                        disparity: truth.disparity,
                        population: truth.population(p_s),
                        cost: truth.cost,
                        treated: policy.as_slice().iter().sum(),
                    }
                }
                None => MethodOutcome {
                    method,
                    point: pi,
                    feasible: false,
                    w0: 0.0,
                    w1: 0.0,
                    disparity: 0.0,
                    population: 0.0,
                    cost: 0.0,
                    treated: 0.0,
                },
            };
            outcomes.push(outcome);
        }
    }
    Ok(ReplicationRecord {
        index,
        failure: None,
        treated_fraction: Some(treated_fraction),
        beta_hat: model.map(|m| m.beta),
        outcomes,
    })
}

/// Runs every replication of `config`, learning each method at every
/// sweep point (budget fraction, optional disparity cap) and scoring the
/// policies against the true effects.
pub fn run_monte_carlo(
    config: &SimConfig,
    methods: &[Method],
    budgets: &[f64],
    disparity_caps: Option<&[f64]>,
) -> Result<SimResult> {
    let study = Study::new(config)?;
    run_study(&study, methods, budgets, disparity_caps)
}

pub fn run_study(
    study: &Study,
    methods: &[Method],
    budgets: &[f64],
    disparity_caps: Option<&[f64]>,
) -> Result<SimResult> {
    let config = &study.config;
    if let Some(b) = budgets.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(Error::validation(format!(
            "budget fraction {b} must lie in (0, 1]"
        )));
    }
    if budgets.is_empty() || methods.is_empty() {
        return Err(Error::validation("need at least one budget and one method"));
    }
    let points = sweep_points(budgets, disparity_caps);

    let records: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            run_replication(study, r, methods, &points).unwrap_or_else(|e| ReplicationRecord {
                index: r,
                failure: Some(e.to_string()),
                treated_fraction: None,
                beta_hat: None,
                outcomes: Vec::new(),
            })
        })
        .collect();

    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    if failures as f64 > MAX_FAILURE_RATE * config.replications as f64 {
        let first = records
            .iter()
            .find_map(|r| r.failure.clone())
            .unwrap_or_default();
        return Err(Error::Run(format!(
            "{failures} of {} replications failed (first: {first})",
            config.replications
        )));
    }
    for r in records.iter().filter(|r| r.failure.is_some()) {
        log::warn!(
            "replication {} skipped: {}",
            r.index,
            r.failure.as_deref().unwrap_or("")
        );
    }

    let mut aggregates = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        for &method in methods {
            let rows: Vec<&MethodOutcome> = records
                .iter()
                .flat_map(|r| r.outcomes.iter())
                .filter(|o| o.point == pi && o.method == method && o.feasible)
                .collect();
            let stat = |f: fn(&MethodOutcome) -> f64| {
                Stat::of(&rows.iter().map(|o| f(o)).collect::<Vec<_>>())
            };
            aggregates.push(Aggregate {
                method,
                budget: point.budget,
                disparity_cap: point.disparity_cap,
                feasible: rows.len(),
                w0: stat(|o| o.w0),
                w1: stat(|o| o.w1),
                disparity: stat(|o| o.disparity),
                population: stat(|o| o.population),
                cost: stat(|o| o.cost),
                treated: stat(|o| o.treated),
            });
        }
    }

    Ok(SimResult {
        config: config.clone(),
        calibration: study.calibration.clone(),
        truth: study.truth.summary(),
        points,
        aggregates,
        replications: records,
        failures,
    })
}
