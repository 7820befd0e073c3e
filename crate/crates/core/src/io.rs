//! File formats: CSV datasets, TOML simulation configs, JSON reports and
//! TSV curves, each stamped with a [`RunManifest`].
//!
//! Outcome units: `id,subgroup,outcome,<covariates...>`.
//! Intervention units: `id,treated,cost,<covariates...>`.
//! Interference map, dense: `id,<intervention ids...>` with one row per
//! outcome unit; or sparse: `outcome_id,intervention_id,weight`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Dataset, InterferenceMap, InterventionUnit, OutcomeUnit};
use crate::simulation::{default_gamma, default_theta, SimConfig};

pub const SEED_ENV: &str = "FAIRBNI_SEED";

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_error(path, 0, format!("{other:?}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table {
        path: path.to_path_buf(),
        headers,
        rows,
    })
}

impl Table {
    fn expect_prefix(&self, names: &[&str]) -> Result<()> {
        let found: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        if found.len() < names.len() || found[..names.len()] != *names {
            return Err(parse_error(
                &self.path,
                1,
                format!("header must start with {}", names.join(",")),
            ));
        }
        Ok(())
    }

    fn number(&self, line: u64, column: usize, raw: &str) -> Result<f64> {
        raw.parse::<f64>().map_err(|_| {
            parse_error(
                &self.path,
                line,
                format!("column '{}': '{raw}' is not a number", self.headers[column]),
            )
        })
    }
}

pub fn load_outcome_units(path: &Path) -> Result<Vec<OutcomeUnit>> {
    let t = read_table(path)?;
    t.expect_prefix(&["id", "subgroup", "outcome"])?;
    t.rows
        .iter()
        .map(|(line, row)| {
            let subgroup = match row[1].as_str() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_error(
                        path,
                        *line,
                        format!("column 'subgroup': '{other}' must be 0 or 1"),
                    ))
                }
            };
            Ok(OutcomeUnit {
                id: row[0].clone(),
                subgroup,
                outcome: t.number(*line, 2, &row[2])?,
                covariates: (3..row.len())
                    .map(|c| t.number(*line, c, &row[c]))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

pub fn load_intervention_units(path: &Path) -> Result<Vec<InterventionUnit>> {
    let t = read_table(path)?;
    t.expect_prefix(&["id", "treated", "cost"])?;
    t.rows
        .iter()
        .map(|(line, row)| {
            let factual_treatment = parse_bool(&row[1]).ok_or_else(|| {
                parse_error(
                    path,
                    *line,
                    format!("column 'treated': '{}' must be 0/1 or true/false", row[1]),
                )
            })?;
            Ok(InterventionUnit {
                id: row[0].clone(),
                factual_treatment,
                cost: t.number(*line, 2, &row[2])?,
                covariates: (3..row.len())
                    .map(|c| t.number(*line, c, &row[c]))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

fn index_of(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect()
}

/// Reads a dense or triplet interference file, ordering rows and columns
/// by the given unit ids.
pub fn load_interference(
    path: &Path,
    outcome_ids: &[String],
    intervention_ids: &[String],
) -> Result<InterferenceMap> {
    let t = read_table(path)?;
    let rows_of = index_of(outcome_ids);
    let cols_of = index_of(intervention_ids);
    let lookup = |map: &HashMap<&str, usize>, id: &str, line: u64, what: &str| {
        map.get(id)
            .copied()
            .ok_or_else(|| parse_error(path, line, format!("unknown {what} id '{id}'")))
    };

    if t.headers == ["outcome_id", "intervention_id", "weight"] {
        let mut triplets = Vec::with_capacity(t.rows.len());
        for (line, row) in &t.rows {
            let i = lookup(&rows_of, &row[0], *line, "outcome")?;
            let j = lookup(&cols_of, &row[1], *line, "intervention")?;
            triplets.push((i, j, t.number(*line, 2, &row[2])?));
        }
        return InterferenceMap::from_triplets(outcome_ids.len(), intervention_ids.len(), triplets);
    }

    t.expect_prefix(&["id"])?;
    let columns: Vec<usize> = t.headers[1..]
        .iter()
        .map(|id| lookup(&cols_of, id, 1, "intervention"))
        .collect::<Result<_>>()?;
    if columns.len() != intervention_ids.len() {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected {} intervention columns, found {}",
                intervention_ids.len(),
                columns.len()
            ),
        ));
    }
    let mut entries = vec![f64::NAN; outcome_ids.len() * intervention_ids.len()];
    let mut seen = vec![false; outcome_ids.len()];
    for (line, row) in &t.rows {
        let i = lookup(&rows_of, &row[0], *line, "outcome")?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(parse_error(path, *line, format!("duplicate row for '{}'", row[0])));
        }
        for (c, &j) in columns.iter().enumerate() {
            entries[i * intervention_ids.len() + j] = t.number(*line, c + 1, &row[c + 1])?;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_error(
            path,
            0,
            format!("no row for outcome unit '{}'", outcome_ids[i]),
        ));
    }
    InterferenceMap::from_dense(outcome_ids.len(), intervention_ids.len(), entries)
}

/// Paths of the three dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub outcomes: PathBuf,
    pub interventions: PathBuf,
    pub interference: PathBuf,
}

impl DatasetPaths {
    /// `outcomes.csv`, `interventions.csv` and `interference.csv` in `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            outcomes: dir.join("outcomes.csv"),
            interventions: dir.join("interventions.csv"),
            interference: dir.join("interference.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.outcomes, &self.interventions, &self.interference]
    }
}

/// Loads, validates and standardizes a dataset.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let outcomes = load_outcome_units(&paths.outcomes)?;
    let interventions = load_intervention_units(&paths.interventions)?;
    let outcome_ids: Vec<String> = outcomes.iter().map(|u| u.id.clone()).collect();
    let intervention_ids: Vec<String> = interventions.iter().map(|u| u.id.clone()).collect();
    let h = load_interference(&paths.interference, &outcome_ids, &intervention_ids)?;
    let mut dataset = Dataset::new(outcomes, interventions, h)?;
    dataset.standardize();
    Ok(dataset)
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn covariate_header(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |c| format!("{prefix}{c}"))
}

/// Writes the dataset in the CSV layout read by [`load_dataset`], with a
/// dense interference file.
pub fn save_dataset(dataset: &Dataset, paths: &DatasetPaths) -> Result<()> {
    let header = ["id", "subgroup", "outcome"]
        .map(String::from)
        .into_iter()
        .chain(covariate_header("x", dataset.p()))
        .collect();
    write_csv(
        &paths.outcomes,
        header,
        dataset.outcome_units().iter().map(|u| {
            [u.id.clone(), u.subgroup.to_string(), u.outcome.to_string()]
                .into_iter()
                .chain(u.covariates.iter().map(f64::to_string))
                .collect()
        }),
    )?;
    let header = ["id", "treated", "cost"]
        .map(String::from)
        .into_iter()
        .chain(covariate_header("z", dataset.q()))
        .collect();
    write_csv(
        &paths.interventions,
        header,
        dataset.intervention_units().iter().map(|u| {
            [
                u.id.clone(),
                u8::from(u.factual_treatment).to_string(),
                u.cost.to_string(),
            ]
            .into_iter()
            .chain(u.covariates.iter().map(f64::to_string))
            .collect()
        }),
    )?;
    let h = dataset.interference();
    let header = std::iter::once("id".to_string())
        .chain(dataset.intervention_units().iter().map(|u| u.id.clone()))
        .collect();
    write_csv(
        &paths.interference,
        header,
        dataset.outcome_units().iter().enumerate().map(|(i, u)| {
            std::iter::once(u.id.clone())
                .chain(h.row(i).iter().map(f64::to_string))
                .collect()
        }),
    )
}

/// Reads a simulation config from TOML. Unset keys take the desk defaults;
/// `theta0` and `gamma0` default to the built-in vectors for the configured
/// `p` and `q`. `FAIRBNI_SEED`, when set, overrides `seed`.
pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_sim_config(&text).map_err(|e| match e {
        Error::Validation(m) => parse_error(path, 0, m),
        other => other,
    })?;
    apply_seed_override(&mut config)?;
    config.validate()?;
    Ok(config)
}

pub fn parse_sim_config(text: &str) -> Result<SimConfig> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| Error::validation(e.message().to_string()))?;
    let has_theta = table.contains_key("theta0");
    let has_gamma = table.contains_key("gamma0");
    let mut config: SimConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::validation(e.message().to_string()))?;
    if !has_theta {
        config.theta0 = default_theta(config.p)?;
    }
    if !has_gamma {
        config.gamma0 = default_gamma(config.q)?;
    }
    Ok(config)
}

pub fn apply_seed_override(config: &mut SimConfig) -> Result<()> {
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("{SEED_ENV}='{raw}' is not a u64 seed")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance stamped on every emitted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        inputs: &[&Path],
        seed: Option<u64>,
    ) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: sha256_hex(&serde_json::to_vec(config)?),
            inputs: inputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        })
    }
}

#[derive(Debug, Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest: &'a RunManifest,
    report: &'a T,
}

/// Pretty JSON `{ "manifest": ..., "report": ... }`.
pub fn report_json(manifest: &RunManifest, report: &impl Serialize) -> Result<String> {
    let value = serde_json::to_value(Stamped { manifest, report })?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(path: &Path, manifest: &RunManifest, report: &impl Serialize) -> Result<()> {
    fs::write(path, report_json(manifest, report)?)?;
    Ok(())
}

/// A TSV table whose first column is the sweep parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub header: Vec<String>,
    pub rows: Vec<(f64, Vec<String>)>,
}

impl Curve {
    pub fn new(header: &[&str]) -> Self {
        Curve {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, rest: Vec<String>) {
        self.rows.push((x, rest));
    }

    /// A `#`-prefixed manifest line, one header line, then rows sorted by
    /// the sweep parameter (stable for ties).
    pub fn render(&self, manifest: &RunManifest) -> Result<String> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = format!("# manifest: {}\n", serde_json::to_string(manifest)?);
        out.push_str(&self.header.join("\t"));
        out.push('\n');
        for (x, rest) in rows {
            out.push_str(&x.to_string());
            for v in rest {
                out.push('\t');
                out.push_str(&v);
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, manifest: &RunManifest) -> Result<()> {
        fs::write(path, self.render(manifest)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn fixture(dir: &Path, interference: &str) -> DatasetPaths {
        DatasetPaths {
            outcomes: write(
                dir,
                "o.csv",
                "id,subgroup,outcome,x1\na,0,1.5,0.1\nb,1,2.0,0.4\nc,0,0.5,0.9\n",
            ),
            interventions: write(dir, "i.csv", "id,treated,cost,z1\np,1,2.0,3\nq,0,3.0,5\n"),
            interference: write(dir, "h.csv", interference),
        }
    }

    #[test]
    fn minimal_fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), "id,q,p\nc,1,0\na,0.5,1\nb,0,0\n");
        let ds = load_dataset(&paths).unwrap();
        assert_eq!((ds.n(), ds.j(), ds.p(), ds.q()), (3, 2, 1, 1));
        assert_eq!(ds.interference().row(0), &[1.0, 0.5]);
        assert_eq!(ds.interference().row(2), &[0.0, 1.0]);
        assert_eq!(ds.universal_cost(), 5.0);
    }

    #[test]
    fn triplets_match_dense() {
        let dir = tempfile::tempdir().unwrap();
        let dense = load_dataset(&fixture(dir.path(), "id,p,q\na,1,0.5\nb,0,0\nc,0,1\n")).unwrap();
        let sparse = load_dataset(&fixture(
            dir.path(),
            "outcome_id,intervention_id,weight\na,p,1\na,q,0.5\nc,q,1\n",
        ))
        .unwrap();
        assert_eq!(dense, sparse);
    }

    #[test]
    fn negative_triplet_weight_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), "outcome_id,intervention_id,weight\na,p,-1\n");
        assert!(matches!(load_dataset(&paths), Err(Error::Validation(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = fixture(dir.path(), "id,p,q\na,1,0\nb,0,1\nc,1,1\n");
        paths.outcomes = write(
            dir.path(),
            "bad.csv",
            "id,subgroup,outcome,x1\na,0,1.5,0.1\nb,1,oops,0.4\n",
        );
        match load_dataset(&paths) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("outcome"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_defaults_follow_dimensions() {
        let c = parse_sim_config("n = 500\np = 3\nq = 2\nseed = 9\n").unwrap();
        assert_eq!(c.theta0.len(), 8);
        assert_eq!(c.gamma0.len(), 3);
        assert_eq!(c.seed, 9);
        assert_eq!(c.j, 40);
        assert!(parse_sim_config("bogus = 1\n").is_err());
    }

    #[test]
    fn curve_sorted_with_single_header() {
        let m = RunManifest::new("t", &1, &[], Some(1)).unwrap();
        let mut c = Curve::new(&["budget", "value"]);
        c.push(0.5, vec!["b".into()]);
        c.push(0.12, vec!["a".into()]);
        let text = c.render(&m).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines, vec!["budget\tvalue", "0.12\ta", "0.5\tb"]);
    }
}
