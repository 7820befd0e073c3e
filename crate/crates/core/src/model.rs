//! Bipartite data model: outcome units, intervention units and the
//! interference map linking them.
//!
//! Treatment is applied at intervention units; outcomes are measured at
//! outcome units. Outcome unit `i` receives the exposure
//! `(1/J) * sum_j H[i][j] * A[j]`, so treating intervention unit `j` moves
//! the exposure of `i` by `H[i][j] / J`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeUnit {
    pub id: String,
    pub covariates: Vec<f64>,
    /// Subgroup label, 0 or 1.
    pub subgroup: u8,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionUnit {
    pub id: String,
    pub covariates: Vec<f64>,
    pub factual_treatment: bool,
    pub cost: f64,
}

/// Dense `n x J` nonnegative matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMap {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl InterferenceMap {
    pub fn from_dense(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        check_len("interference entries", rows * cols, entries.len())?;
        if let Some(pos) = entries.iter().position(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::validation(format!(
                "interference entry ({}, {}) = {} is not a finite nonnegative weight",
                pos / cols.max(1),
                pos % cols.max(1),
                entries[pos]
            )));
        }
        Ok(InterferenceMap {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_len("interference row", cols, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::from_dense(rows.len(), cols, entries)
    }

    /// Builds a dense map from `(row, col, weight)` triplets; repeated
    /// coordinates are summed, absent ones are zero.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries = vec![0.0; rows * cols];
        for (i, j, w) in triplets {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "interference row",
                    index: i,
                    len: rows,
                });
            }
            if j >= cols {
                return Err(Error::IndexOutOfRange {
                    what: "interference column",
                    index: j,
                    len: cols,
                });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "interference weight ({i}, {j}) = {w} is not a finite nonnegative weight"
                )));
            }
            entries[i * cols + j] += w;
        }
        Self::from_dense(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Indices of rows with no positive entry.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&i| self.row(i).iter().all(|&h| h == 0.0))
            .collect()
    }
}

/// Treatment probabilities, one per intervention unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<f64>);

impl Policy {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if let Some((j, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::validation(format!(
                "policy probability {p} at index {j} is outside [0, 1]"
            )));
        }
        Ok(Policy(probabilities))
    }

    /// Clamps values into `[0, 1]`; used on solver output, where bound
    /// violations are at round-off level.
    pub(crate) fn clamped(values: &[f64]) -> Self {
        Policy(values.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Policy(vec![0.0; len])
    }

    pub fn ones(len: usize) -> Self {
        Policy(vec![1.0; len])
    }

    pub fn from_binary(treated: &[bool]) -> Self {
        Policy(treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn treated_count(&self) -> usize {
        self.0.iter().filter(|&&p| p >= 0.5).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    outcome_units: Vec<OutcomeUnit>,
    intervention_units: Vec<InterventionUnit>,
    interference: InterferenceMap,
}

impl Dataset {
    pub fn new(
        outcome_units: Vec<OutcomeUnit>,
        intervention_units: Vec<InterventionUnit>,
        interference: InterferenceMap,
    ) -> Result<Self> {
        check_len("interference rows", outcome_units.len(), interference.rows())?;
        check_len(
            "interference columns",
            intervention_units.len(),
            interference.cols(),
        )?;
        if outcome_units.is_empty() || intervention_units.is_empty() {
            return Err(Error::validation("dataset needs at least one unit of each kind"));
        }

        let p = outcome_units[0].covariates.len();
        for unit in &outcome_units {
            check_len("outcome covariates", p, unit.covariates.len())?;
            if unit.subgroup > 1 {
                return Err(Error::validation(format!(
                    "outcome unit {} has subgroup {} (expected 0 or 1)",
                    unit.id, unit.subgroup
                )));
            }
            if !unit.outcome.is_finite() || unit.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "outcome unit {} has a non-finite value",
                    unit.id
                )));
            }
        }
        let q = intervention_units[0].covariates.len();
        let mut bad_cost = Vec::new();
        for unit in &intervention_units {
            check_len("intervention covariates", q, unit.covariates.len())?;
            if unit.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "intervention unit {} has a non-finite covariate",
                    unit.id
                )));
            }
            if !(unit.cost.is_finite() && unit.cost > 0.0) {
                bad_cost.push(unit.id.clone());
            }
        }
        if !bad_cost.is_empty() {
            return Err(Error::validation(format!(
                "intervention costs must be positive; offending ids: {}",
                bad_cost.join(", ")
            )));
        }
        let n1 = outcome_units.iter().filter(|u| u.subgroup == 1).count();
        if n1 == 0 || n1 == outcome_units.len() {
            return Err(Error::validation("both subgroups must be nonempty"));
        }

        let zero_rows = interference.zero_rows();
        if !zero_rows.is_empty() {
            log::warn!(
                "{} outcome unit(s) receive no exposure from any intervention unit (first: {})",
                zero_rows.len(),
                outcome_units[zero_rows[0]].id
            );
        }

        Ok(Dataset {
            outcome_units,
            intervention_units,
            interference,
        })
    }

    /// Number of outcome units.
    pub fn n(&self) -> usize {
        self.outcome_units.len()
    }

    /// Number of intervention units.
    pub fn j(&self) -> usize {
        self.intervention_units.len()
    }

    pub fn p(&self) -> usize {
        self.outcome_units[0].covariates.len()
    }

    pub fn q(&self) -> usize {
        self.intervention_units[0].covariates.len()
    }

    pub fn outcome_units(&self) -> &[OutcomeUnit] {
        &self.outcome_units
    }

    pub fn intervention_units(&self) -> &[InterventionUnit] {
        &self.intervention_units
    }

    pub fn interference(&self) -> &InterferenceMap {
        &self.interference
    }

    pub fn costs(&self) -> Vec<f64> {
        self.intervention_units.iter().map(|u| u.cost).collect()
    }

    pub fn factual_treatments(&self) -> Vec<bool> {
        self.intervention_units
            .iter()
            .map(|u| u.factual_treatment)
            .collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.outcome_units.iter().map(|u| u.outcome).collect()
    }

    /// Total cost of treating every intervention unit.
    pub fn universal_cost(&self) -> f64 {
        self.intervention_units.iter().map(|u| u.cost).sum()
    }

    /// Empirical subgroup fractions `(p0, p1)`.
    pub fn subgroup_fractions(&self) -> (f64, f64) {
        let n1 = self.outcome_units.iter().filter(|u| u.subgroup == 1).count();
        let n = self.n() as f64;
        let p1 = n1 as f64 / n;
        ((self.n() - n1) as f64 / n, p1)
    }

    /// Replaces factual treatments and outcomes, keeping covariates and `H`.
    pub fn with_realization(&self, treatments: &[bool], outcomes: &[f64]) -> Result<Self> {
        check_len("treatments", self.j(), treatments.len())?;
        check_len("outcomes", self.n(), outcomes.len())?;
        let mut next = self.clone();
        for (u, &a) in next.intervention_units.iter_mut().zip(treatments) {
            u.factual_treatment = a;
        }
        for (u, &y) in next.outcome_units.iter_mut().zip(outcomes) {
            u.outcome = y;
        }
        Ok(next)
    }

    /// Standardizes every covariate column to zero mean and unit variance
    /// (population convention). Zero-variance columns are only centered.
    /// Columns already standardized to within 1e-12 are left untouched, so
    /// applying this twice is a no-op.
    pub fn standardize(&mut self) {
        let p = self.p();
        for c in 0..p {
            let mut column: Vec<f64> = self.outcome_units.iter().map(|u| u.covariates[c]).collect();
            standardize_column(&mut column);
            for (u, x) in self.outcome_units.iter_mut().zip(column) {
                u.covariates[c] = x;
            }
        }
        let q = self.q();
        for c in 0..q {
            let mut column: Vec<f64> = self
                .intervention_units
                .iter()
                .map(|u| u.covariates[c])
                .collect();
            standardize_column(&mut column);
            for (u, x) in self.intervention_units.iter_mut().zip(column) {
                u.covariates[c] = x;
            }
        }
    }
}

fn standardize_column(column: &mut [f64]) {
    let len = column.len() as f64;
    let mean = column.iter().sum::<f64>() / len;
    let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len;
    let sd = var.sqrt();
    let tol = 1e-12;
    if mean.abs() < tol && ((sd - 1.0).abs() < tol || sd < tol) {
        return;
    }
    if sd < tol {
        column.iter_mut().for_each(|x| *x -= mean);
    } else {
        column.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
}

/// Exposure of each outcome unit under a binary treatment vector:
/// `(1/J) * sum_j H[i][j] * A[j]`.
pub fn exposure(dataset: &Dataset, treatments: &[bool]) -> Result<Vec<f64>> {
    check_len("treatments", dataset.j(), treatments.len())?;
    let weights: Vec<f64> = treatments
        .iter()
        .map(|&a| if a { 1.0 } else { 0.0 })
        .collect();
    Ok(weighted_exposure(dataset.interference(), &weights))
}

/// Exposure expected under independent treatment probabilities `e`.
pub fn expected_exposure(dataset: &Dataset, propensities: &[f64]) -> Result<Vec<f64>> {
    check_len("propensities", dataset.j(), propensities.len())?;
    if let Some(e) = propensities.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::validation(format!(
            "propensity {e} is outside [0, 1]"
        )));
    }
    Ok(weighted_exposure(dataset.interference(), propensities))
}

pub(crate) fn weighted_exposure(h: &InterferenceMap, weights: &[f64]) -> Vec<f64> {
    let scale = 1.0 / h.cols() as f64;
    (0..h.rows())
        .map(|i| {
            h.row(i)
                .iter()
                .zip(weights)
                .map(|(hij, w)| hij * w)
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// `H_j`-weighted summary of the outcome side: `(1/n) * sum_i H[i][j] * (S_i, X_i)`.
/// The result has length `p + 1` with the subgroup weight first.
pub fn summary_functional(dataset: &Dataset, j: usize) -> Result<Vec<f64>> {
    if j >= dataset.j() {
        return Err(Error::IndexOutOfRange {
            what: "intervention units",
            index: j,
            len: dataset.j(),
        });
    }
    let p = dataset.p();
    let mut eta = vec![0.0; p + 1];
    for (unit, h) in dataset
        .outcome_units()
        .iter()
        .zip(dataset.interference().column(j))
    {
        if h == 0.0 {
            continue;
        }
        eta[0] += h * f64::from(unit.subgroup);
        for (e, x) in eta[1..].iter_mut().zip(&unit.covariates) {
            *e += h * x;
        }
    }
    let n = dataset.n() as f64;
    eta.iter_mut().for_each(|e| *e /= n);
    Ok(eta)
}

/// `sum_j pi_j * c_j`.
pub fn policy_cost(dataset: &Dataset, policy: &Policy) -> Result<f64> {
    check_len("policy", dataset.j(), policy.len())?;
    Ok(policy
        .as_slice()
        .iter()
        .zip(dataset.intervention_units())
        .map(|(p, u)| p * u.cost)
        .sum())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Small dataset with the given `H` rows; covariates are simple ramps.
    pub fn dataset_with_h(h: &[Vec<f64>]) -> Dataset {
        let n = h.len();
        let j = h[0].len();
        let outcome_units = (0..n)
            .map(|i| OutcomeUnit {
                id: format!("o{i}"),
                covariates: vec![i as f64, (i * i) as f64 * 0.5],
                subgroup: (i % 2) as u8,
                outcome: 0.1 * i as f64,
            })
            .collect();
        let intervention_units = (0..j)
            .map(|k| InterventionUnit {
                id: format!("p{k}"),
                covariates: vec![k as f64],
                factual_treatment: k % 2 == 0,
                cost: 1.0 + k as f64,
            })
            .collect();
        Dataset::new(
            outcome_units,
            intervention_units,
            InterferenceMap::from_rows(h).unwrap(),
        )
        .unwrap()
    }
}
