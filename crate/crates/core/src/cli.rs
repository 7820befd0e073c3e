//! The `fairbni` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{estimate_effects, EffectTable};
use crate::fair::{
    evaluate_factual, min_welfare_reference, solve_fair, solve_optimal, solve_welfare_max_default,
    Budget, BudgetAccounting, FairSolveReport, FrontierClass, Method, Mode, Rounding, SolveConfig,
};
use crate::io::{
    apply_seed_override, load_dataset, load_sim_config, report_json, Curve, DatasetPaths,
    RunManifest,
};
use crate::model::Dataset;
use crate::oracle::fair_binary_optimum;
use crate::simulation::{run_monte_carlo, EffectSource, SimConfig, SimResult};

#[derive(Debug, Parser)]
#[command(name = "fairbni", version, about = "Fair, budgeted treatment allocation under bipartite interference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit propensity and outcome models; emit the effect table.
    Estimate(EstimateArgs),
    /// Learn one policy.
    Solve(SolveArgs),
    /// Learn policies over a grid of budgets or disparity caps.
    Sweep(SweepArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
    /// Compare the fair LP against brute-force binary enumeration.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding outcomes.csv, interventions.csv and interference.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    #[arg(long)]
    pub interventions: Option<PathBuf>,
    /// Dense (`id,<intervention ids>`) or triplet CSV.
    #[arg(long)]
    pub interference: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<DatasetPaths> {
        let base = self.data.as_deref().map(DatasetPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| Error::validation(format!("missing --{name} (or --data)")))
        };
        Ok(DatasetPaths {
            outcomes: pick(&self.outcomes, base.as_ref().map(|b| &b.outcomes), "outcomes")?,
            interventions: pick(
                &self.interventions,
                base.as_ref().map(|b| &b.interventions),
                "interventions",
            )?,
            interference: pick(
                &self.interference,
                base.as_ref().map(|b| &b.interference),
                "interference",
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Clean,
    Augment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fair,
    WelfareMax,
    Optimal,
    Factual,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Fair => Method::Fair,
            MethodArg::WelfareMax => Method::WelfareMax,
            MethodArg::Optimal => Method::Optimal,
            MethodArg::Factual => Method::Factual,
        }
    }
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Budget as a fraction of the universal cost (see --absolute).
    #[arg(long, default_value_t = 1.0)]
    pub budget: f64,
    /// Read --budget in currency units.
    #[arg(long)]
    pub absolute: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Clean)]
    pub mode: ModeArg,
    /// In augment mode, charge only newly treated units to the budget.
    #[arg(long)]
    pub budget_new_only: bool,
    /// Require group-0 welfare at least as good as welfare-max reaches at
    /// this budget fraction.
    #[arg(long)]
    pub min_welfare_ref: Option<f64>,
    /// Number of frontier gridpoints (default ceil(sqrt(n)), capped at 200).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Frontier slack numerator; constraints are loosened by lambda / K.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Compute the frontier without the budget.
    #[arg(long)]
    pub frontier_unconstrained: bool,
    /// Also report a binary policy by threshold-and-repair rounding.
    #[arg(long)]
    pub round: bool,
    /// Group-0 weight for welfare-max (default: group-0 share).
    #[arg(long)]
    pub nu: Option<f64>,
}

impl PolicyArgs {
    fn config(&self) -> Result<SolveConfig> {
        for (name, v) in [("budget", Some(self.budget)), ("lambda", Some(self.lambda)), ("nu", self.nu)] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(Error::validation(format!("--{name} must be finite")));
            }
        }
        if let Some(r) = self.min_welfare_ref {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::validation("--min-welfare-ref must lie in (0, 1]"));
            }
        }
        let config = SolveConfig {
            budget: if self.absolute {
                Budget::Absolute(self.budget)
            } else {
                Budget::Fraction(self.budget)
            },
            mode: match self.mode {
                ModeArg::Clean => Mode::CleanSlate,
                ModeArg::Augment => Mode::Augmentation,
            },
            accounting: if self.budget_new_only {
                BudgetAccounting::NewOnly
            } else {
                BudgetAccounting::Total
            },
            k: self.k,
            lambda: self.lambda,
            rounding: if self.round {
                Rounding::ThresholdRepair
            } else {
                Rounding::None
            },
            frontier: if self.frontier_unconstrained {
                FrontierClass::Unconstrained
            } else {
                FrontierClass::Budgeted
            },
            nu: self.nu,
            ..Default::default()
        };
        config.validate()?;
        Ok(config)
    }

    fn resolve(&self, effects: &EffectTable, dataset: &Dataset) -> Result<SolveConfig> {
        let mut config = self.config()?;
        if let Some(r) = self.min_welfare_ref {
            config.min_welfare_target =
                Some(min_welfare_reference(effects, dataset, &config, Budget::Fraction(r))?);
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-intervention-unit effect table.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Fair)]
    pub method: MethodArg,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Disparity cap for welfare-max.
    #[arg(long)]
    pub disparity_cap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated budget fractions.
    #[arg(long, value_delimiter = ',', default_values_t = default_budgets())]
    pub budgets: Vec<f64>,
    /// Comma-separated disparity caps for welfare-max; requires a single budget.
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Fair, MethodArg::WelfareMax])]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Writes sweep.json and curves.tsv here; prints the curve TSV otherwise.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    FullScale,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config; unset keys take desk defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "config")]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learn from the true effects instead of refitted ones.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, value_delimiter = ',', default_values_t = default_budgets())]
    pub budgets: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Fair, MethodArg::WelfareMax])]
    pub methods: Vec<MethodArg>,
    /// Writes result.json and curves.tsv here; prints JSON otherwise.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_budgets() -> Vec<f64> {
    vec![0.1, 0.12, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn learn(
    method: Method,
    effects: &EffectTable,
    dataset: &Dataset,
    config: &SolveConfig,
) -> Result<FairSolveReport> {
    match method {
        Method::Fair => {
            let grid = config.build_grid(effects, dataset)?;
            solve_fair(effects, dataset, &grid, config)
        }
        Method::WelfareMax => solve_welfare_max_default(effects, dataset, config),
        Method::Optimal => solve_optimal(effects, dataset, config),
        Method::Factual => evaluate_factual(effects, dataset),
    }
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    estimates: &'a crate::estimation::Estimates,
    summary: crate::estimation::EffectSummary,
}

fn estimate(args: &EstimateArgs) -> Result<i32> {
    let paths = args.data.paths()?;
    let dataset = load_dataset(&paths)?;
    let estimates = estimate_effects(&dataset)?;
    let manifest = RunManifest::new("estimate", &"estimate", &paths.all(), None)?;
    let report = EstimateReport {
        estimates: &estimates,
        summary: estimates.effects.summary(),
    };
    emit(args.out.as_deref(), &report_json(&manifest, &report)?)?;
    if let Some(path) = &args.tsv {
        let e = &estimates.effects;
        let mut text = format!("# manifest: {}\n", serde_json::to_string(&manifest)?);
        text.push_str("id\tte_group0\tte_group1\tte_overall\tcost\ttreated\n");
        for (k, u) in dataset.intervention_units().iter().enumerate() {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                u.id,
                e.group(0)[k],
                e.group(1)[k],
                e.overall()[k],
                u.cost,
                u8::from(u.factual_treatment)
            ));
        }
        fs::write(path, text)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct SolveRun<'a> {
    config: &'a SolveConfig,
    result: &'a FairSolveReport,
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let paths = args.data.paths()?;
    let dataset = load_dataset(&paths)?;
    let effects = estimate_effects(&dataset)?.effects;
    let mut config = args.policy.resolve(&effects, &dataset)?;
    config.disparity_cap = args.disparity_cap;
    config.validate()?;
    let method = Method::from(args.method);
    let report = learn(method, &effects, &dataset, &config)?;
    let manifest = RunManifest::new("solve", &config, &paths.all(), None)?;
    emit(
        args.out.as_deref(),
        &report_json(
            &manifest,
            &SolveRun {
                config: &config,
                result: &report,
            },
        )?,
    )?;
    Ok(if report.feasible { 0 } else { 3 })
}

fn curve_columns(methods: &[Method]) -> Vec<String> {
    methods
        .iter()
        .flat_map(|m| {
            ["w0", "w1", "disparity", "population", "cost"]
                .map(|metric| format!("{}_{metric}", m.name()))
        })
        .collect()
}

fn number(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

#[derive(Serialize)]
struct SweepRow {
    x: f64,
    budget: f64,
    disparity_cap: Option<f64>,
    reports: Vec<FairSolveReport>,
}

fn sweep_grid(budgets: &[f64], caps: Option<&[f64]>) -> Result<(String, Vec<(f64, f64, Option<f64>)>)> {
    if budgets.is_empty() {
        return Err(Error::validation("--budgets is empty"));
    }
    match caps {
        Some(caps) => {
            if budgets.len() != 1 {
                return Err(Error::validation(
                    "a disparity-cap sweep needs exactly one budget",
                ));
            }
            Ok((
                "disparity_cap".into(),
                caps.iter().map(|&c| (c, budgets[0], Some(c))).collect(),
            ))
        }
        None => Ok(("budget".into(), budgets.iter().map(|&b| (b, b, None)).collect())),
    }
}

fn sweep(args: &SweepArgs) -> Result<i32> {
    let paths = args.data.paths()?;
    let dataset = load_dataset(&paths)?;
    let effects = estimate_effects(&dataset)?.effects;
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let (x_name, points) = sweep_grid(&args.budgets, args.caps.as_deref())?;
    let base = args.policy.config()?;

    let mut rows = Vec::new();
    for &(x, budget, cap) in &points {
        let mut config = SolveConfig {
            budget: if args.policy.absolute {
                Budget::Absolute(budget)
            } else {
                Budget::Fraction(budget)
            },
            ..base.clone()
        };
        if let Some(r) = args.policy.min_welfare_ref {
            config.min_welfare_target =
                Some(min_welfare_reference(&effects, &dataset, &config, Budget::Fraction(r))?);
        }
        let mut reports = Vec::new();
        for &m in &methods {
            let c = SolveConfig {
                disparity_cap: if m == Method::WelfareMax { cap } else { None },
                ..config.clone()
            };
            reports.push(learn(m, &effects, &dataset, &c)?);
        }
        rows.push(SweepRow {
            x,
            budget,
            disparity_cap: cap,
            reports,
        });
    }

    let mut header = vec![x_name.clone()];
    header.extend(curve_columns(&methods));
    let mut curve = Curve::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        let mut cells = Vec::new();
        for r in &row.reports {
            let w = r.report.as_ref();
            cells.push(number(w.map(|w| w.w0)));
            cells.push(number(w.map(|w| w.w1)));
            cells.push(number(w.map(|w| w.disparity)));
            cells.push(number(w.map(|w| w.population(effects.p_s))));
            cells.push(number(w.map(|w| w.cost)));
        }
        curve.push(row.x, cells);
    }
    let manifest = RunManifest::new("sweep", &(&base, &points), &paths.all(), None)?;
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("sweep.json"), report_json(&manifest, &rows)?)?;
            curve.write(&dir.join("curves.tsv"), &manifest)?;
        }
        None => print!("{}", curve.render(&manifest)?),
    }
    Ok(0)
}

fn simulation_curve(result: &SimResult, methods: &[Method], by_cap: bool) -> Curve {
    let x_name = if by_cap { "disparity_cap" } else { "budget" };
    let mut header = vec![x_name.to_string()];
    for m in methods {
        for metric in ["w0", "w1", "disparity", "population", "cost", "treated", "feasible"] {
            header.push(format!("{}_{metric}", m.name()));
        }
    }
    let mut curve = Curve::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for point in &result.points {
        let mut cells = Vec::new();
        for &m in methods {
            let a = result
                .aggregate(m, point.budget, point.disparity_cap)
                .expect("aggregate for every point and method");
            for v in [a.w0, a.w1, a.disparity, a.population, a.cost, a.treated] {
                cells.push(v.mean.to_string());
            }
            cells.push(a.feasible.to_string());
        }
        let x = if by_cap {
            point.disparity_cap.unwrap_or(f64::INFINITY)
        } else {
            point.budget
        };
        curve.push(x, cells);
    }
    curve
}

fn simulate(args: &SimulateArgs) -> Result<i32> {
    let (mut config, inputs) = match (&args.config, args.preset) {
        (Some(path), _) => (load_sim_config(path)?, vec![path.as_path()]),
        (None, Some(Preset::FullScale)) => (SimConfig::full_scale(), Vec::new()),
        (None, _) => (SimConfig::desk(), Vec::new()),
    };
    if args.config.is_none() {
        apply_seed_override(&mut config)?;
    }
    if let Some(r) = args.reps {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.oracle {
        config.effects = EffectSource::Oracle;
    }
    config.validate()?;
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    if args.caps.is_some() && args.budgets.len() != 1 {
        return Err(Error::validation(
            "a disparity-cap sweep needs exactly one budget",
        ));
    }
    let result = run_monte_carlo(&config, &methods, &args.budgets, args.caps.as_deref())?;
    let manifest = RunManifest::new("simulate", &config, &inputs, Some(config.seed))?;
    let json = report_json(&manifest, &result)?;
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("result.json"), json)?;
            simulation_curve(&result, &methods, args.caps.is_some())
                .write(&dir.join("curves.tsv"), &manifest)?;
        }
        None => print!("{json}"),
    }
    Ok(0)
}

#[derive(Serialize)]
struct OracleReport {
    lp: FairSolveReport,
    binary: Option<crate::oracle::BinaryOptimum>,
    /// LP disparity does not exceed the best binary disparity (1e-9 slack).
    lp_within_binary: bool,
}

fn oracle(args: &OracleArgs) -> Result<i32> {
    let paths = args.data.paths()?;
    let dataset = load_dataset(&paths)?;
    let effects = estimate_effects(&dataset)?.effects;
    let config = args.policy.resolve(&effects, &dataset)?;
    let grid = config.build_grid(&effects, &dataset)?;
    let lp = solve_fair(&effects, &dataset, &grid, &config)?;
    let class = config.policy_class(&dataset)?;
    let binary = fair_binary_optimum(&effects, &grid, &class, config.min_welfare_target)?;
    let lp_within_binary = match (&lp.objective, &binary) {
        (Some(t), Some(b)) => *t <= b.disparity + 1e-9,
        (_, None) => true,
        (None, Some(_)) => false,
    };
    let manifest = RunManifest::new("oracle", &config, &paths.all(), None)?;
    let report = OracleReport {
        lp,
        binary,
        lp_within_binary,
    };
    emit(args.out.as_deref(), &report_json(&manifest, &report)?)?;
    Ok(if lp_within_binary { 0 } else { 1 })
}

/// Runs a parsed command, returning the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a),
    }
}

/// Parses `std::env::args`, runs, and maps errors to exit codes.
pub fn main_with_args() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
