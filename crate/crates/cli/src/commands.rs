use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grouppanel::inference::coef_table;
use grouppanel::io::write_panel_csv_as;
use grouppanel::rng::derive_seed;
use grouppanel::selection::{fit_range, ic_table, IcTable, PenaltyKind, SelectionOptions};
use grouppanel::simulate::{
    generate as simulate_panel, run_scenario_with, write_replications_csv, write_summary_csv, Dgp,
    DgpSpec, KRange, ScenarioGrid, ScenarioResult,
};
use grouppanel::{fit as fit_panel, load_panel_csv, write_panel_csv, ColumnSchema, FitConfig, FitResult, PanelData};
use serde::Serialize;

use crate::config::{pick, FileConfig};
use crate::manifest::{file_sha256, OutputDir};
use crate::{DataArgs, DemeanArgs, EstimationArgs, FitArgs, GenerateArgs, RunArgs, SelectArgs, SimulateArgs};

/// CLI-level failure with a stable kind for the error JSON.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError {
        kind: "usage",
        message: message.into(),
    }
    .into()
}

pub fn error_json(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| {
            if let Some(e) = e.downcast_ref::<grouppanel::Error>() {
                Some(e.kind())
            } else if let Some(e) = e.downcast_ref::<CliError>() {
                Some(e.kind)
            } else {
                e.downcast_ref::<std::io::Error>().map(|_| "io")
            }
        })
        .unwrap_or("config");
    serde_json::json!({ "error": { "kind": kind, "message": format!("{err:#}") } }).to_string()
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool when `jobs` is 0.
fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

/// Resolved data settings; part of every hashed configuration.
#[derive(Debug, Clone, Serialize)]
struct DataSpec {
    input: String,
    input_sha256: String,
    unit: String,
    period: String,
    outcome: String,
    regressors: Vec<String>,
    within: bool,
}

/// Column names of the CSV header.
fn header_columns(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Loads the panel described by flags and config; returns the panel as
/// estimated (within-transformed when requested) and the resolved spec.
fn load_data(args: &DataArgs, file: &FileConfig) -> Result<(PanelData, DataSpec, ColumnSchema)> {
    let input = pick(args.input.clone(), file.input.clone()).ok_or_else(|| usage("--input is required"))?;
    std::fs::File::open(&input).with_context(|| format!("cannot open {}", input.display()))?;
    let unit = pick(args.unit.clone(), file.unit.clone()).unwrap_or_else(|| "unit".into());
    let period = pick(args.period.clone(), file.period.clone()).unwrap_or_else(|| "period".into());
    let outcome = pick(args.outcome.clone(), file.outcome.clone()).unwrap_or_else(|| "y".into());
    let regressors = match pick(args.regressors.clone(), file.regressors.clone()) {
        Some(r) => r,
        None => header_columns(&input)?
            .into_iter()
            .filter(|c| *c != unit && *c != period && *c != outcome)
            .collect(),
    };
    let within = args.within || file.within.unwrap_or(false);
    let schema = ColumnSchema::new(unit.clone(), period.clone(), outcome.clone(), regressors.clone());
    let raw = load_panel_csv(&input, &schema).with_context(|| format!("loading {}", input.display()))?;
    let panel = if within { raw.within_transform()? } else { raw };
    let spec = DataSpec {
        input: input.display().to_string(),
        input_sha256: file_sha256(&input)?,
        unit,
        period,
        outcome,
        regressors,
        within,
    };
    Ok((panel, spec, schema))
}

#[derive(Debug, Clone, Serialize)]
struct EstimationSpec {
    gfe: bool,
    starts: usize,
    seed: u64,
    max_iter: usize,
}

impl EstimationSpec {
    fn resolve(args: &EstimationArgs, file: &FileConfig) -> Self {
        Self {
            gfe: args.gfe || file.gfe.unwrap_or(false),
            starts: pick(args.starts, file.starts).unwrap_or(FitConfig::DEFAULT_STARTS),
            seed: pick(args.seed, file.seed).unwrap_or(0),
            max_iter: pick(args.max_iter, file.max_iter).unwrap_or(FitConfig::DEFAULT_MAX_ITER),
        }
    }

    fn config(&self, k: usize) -> FitConfig {
        FitConfig::new(k)
            .with_gfe(self.gfe)
            .with_starts(self.starts)
            .with_seed(self.seed)
            .with_max_iter(self.max_iter)
    }
}

fn out_dir(run: &RunArgs, file: &FileConfig) -> Result<PathBuf> {
    pick(run.out.clone(), file.out.clone()).ok_or_else(|| usage("--out is required"))
}

fn jobs(run: &RunArgs, file: &FileConfig) -> usize {
    pick(run.jobs, file.jobs).unwrap_or(0)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> grouppanel::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn grouping_csv(panel: &PanelData, fit: &FitResult) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["unit", "group"])?;
    for (i, g) in fit.grouping.one_based().into_iter().enumerate() {
        wtr.write_record([panel.unit_label(i), g.to_string()])?;
    }
    Ok(wtr.into_inner().map_err(|e| e.into_error())?)
}

/// Serialisable summary of a fit; group 1 is the largest group.
#[derive(Debug, Serialize)]
struct FitSummary<'a> {
    k: usize,
    gfe: bool,
    n: usize,
    t: usize,
    p: usize,
    regressors: Vec<String>,
    ssr: f64,
    sigma2_hat: f64,
    converged: bool,
    iterations_used: usize,
    start_index_of_best: usize,
    degenerate_starts: usize,
    group_sizes: Vec<usize>,
    thetas: Vec<&'a [f64]>,
    mus: Option<Vec<&'a [f64]>>,
    ssr_trace: &'a [f64],
}

impl<'a> FitSummary<'a> {
    fn new(panel: &PanelData, fit: &'a FitResult) -> Self {
        let k = fit.grouping.k();
        Self {
            k,
            gfe: fit.params.gfe(),
            n: panel.n_units(),
            t: panel.n_periods(),
            p: panel.n_regressors(),
            regressors: (0..panel.n_regressors()).map(|j| panel.regressor_label(j)).collect(),
            ssr: fit.ssr,
            sigma2_hat: fit.sigma2_hat,
            converged: fit.converged,
            iterations_used: fit.iterations_used,
            start_index_of_best: fit.start_index_of_best,
            degenerate_starts: fit.degenerate_starts,
            group_sizes: fit.grouping.sizes(),
            thetas: (0..k).map(|g| fit.params.theta(g)).collect(),
            mus: fit.params.gfe().then(|| (0..k).filter_map(|g| fit.params.mu(g)).collect()),
            ssr_trace: &fit.ssr_trace,
        }
    }
}

/// Writes coefficients, memberships and the fit summary for one fit.
fn write_fit_outputs(out: &mut OutputDir, panel: &PanelData, fit: &FitResult) -> Result<()> {
    let table = coef_table(panel, fit)?;
    out.write("coefficients.csv", &csv_bytes(|b| table.write_csv(b))?)?;
    out.write("coefficients.txt", table.to_text().as_bytes())?;
    out.write("grouping.csv", &grouping_csv(panel, fit)?)?;
    out.write_json("fit.json", &FitSummary::new(panel, fit))
}

#[derive(Debug, Serialize)]
struct FitRun {
    data: DataSpec,
    k: usize,
    estimation: EstimationSpec,
}

pub fn fit(args: FitArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.run.config.as_deref())?;
    let k = pick(args.k, file.k).ok_or_else(|| usage("--k is required"))?;
    let est = EstimationSpec::resolve(&args.est, &file);
    let dir = out_dir(&args.run, &file)?;
    let jobs = jobs(&args.run, &file);

    let mut out = OutputDir::create(&dir)?;
    let (panel, data, _) = out.timed("load", || load_data(&args.data, &file))?;
    let cfg = est.config(k);
    let res = out.timed("estimate", || with_jobs(jobs, || fit_panel(&panel, &cfg)))??;
    let res = res.ordered_by_size()?;
    write_fit_outputs(&mut out, &panel, &res)?;
    let seed = est.seed;
    out.finish("fit", seed, jobs, &FitRun { data, k, estimation: est })
}

#[derive(Debug, Serialize)]
struct SelectRun {
    data: DataSpec,
    kmin: usize,
    kmax: usize,
    penalty: PenaltyKind,
    estimation: EstimationSpec,
}

#[derive(Debug, Serialize)]
struct SelectSummary<'a> {
    table: &'a IcTable,
    group_sizes: Vec<usize>,
}

pub fn select(args: SelectArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.run.config.as_deref())?;
    let est = EstimationSpec::resolve(&args.est, &file);
    let kmin = pick(args.kmin, file.kmin).unwrap_or(2);
    let kmax = pick(args.kmax, file.kmax).ok_or_else(|| usage("--kmax is required"))?;
    let penalty: PenaltyKind = match pick(args.penalty.clone(), file.penalty.clone()) {
        Some(s) => s.parse()?,
        None if est.gfe => PenaltyKind::Mic2,
        None => PenaltyKind::Mic1,
    };
    let dir = out_dir(&args.run, &file)?;
    let jobs = jobs(&args.run, &file);

    let mut out = OutputDir::create(&dir)?;
    let (panel, data, _) = out.timed("load", || load_data(&args.data, &file))?;
    let cfg = est.config(kmin);
    let fits = out.timed("estimate", || with_jobs(jobs, || fit_range(&panel, kmin, kmax, &cfg)))??;
    let table = ic_table(&fits, penalty, SelectionOptions::default())?;
    let chosen = fits
        .get(table.selected_k)
        .expect("the selected K has a successful fit")
        .ordered_by_size()?;

    out.write("ic_table.csv", &csv_bytes(|b| table.write_csv(b))?)?;
    out.write_json(
        "ic_table.json",
        &SelectSummary {
            table: &table,
            group_sizes: chosen.grouping.sizes(),
        },
    )?;
    write_fit_outputs(&mut out, &panel, &chosen)?;
    out.finish(
        "select",
        est.seed,
        jobs,
        &SelectRun {
            data,
            kmin,
            kmax,
            penalty,
            estimation: est,
        },
    )
}

#[derive(Debug, Serialize)]
struct SimulateRun {
    scenarios: Vec<ScenarioGrid>,
    reps: usize,
    kmin: usize,
    kmax: usize,
    starts: usize,
    seed: u64,
    max_iter: usize,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let Some(config_path) = args.run.config.as_deref() else {
        return Err(usage("simulate needs --config with at least one [[scenario]]"));
    };
    let file = FileConfig::load(config_path)?;
    if file.scenario.is_empty() {
        return Err(usage("config defines no [[scenario]] tables"));
    }
    let run = SimulateRun {
        scenarios: file.scenario.clone(),
        reps: pick(args.reps, file.reps).unwrap_or(100),
        kmin: file.kmin.unwrap_or(2),
        kmax: file.kmax.unwrap_or(5),
        starts: pick(args.starts, file.starts).unwrap_or(FitConfig::DEFAULT_STARTS),
        seed: pick(args.seed, file.seed).unwrap_or(0),
        max_iter: pick(args.max_iter, file.max_iter).unwrap_or(FitConfig::DEFAULT_MAX_ITER),
    };
    let dir = out_dir(&args.run, &file)?;
    let jobs = jobs(&args.run, &file);
    let cfg = FitConfig::new(3)
        .with_starts(run.starts)
        .with_max_iter(run.max_iter)
        .with_seed(derive_seed(run.seed, u64::MAX));
    let range = KRange {
        k_min: run.kmin,
        k_max: run.kmax,
    };

    let mut out = OutputDir::create(&dir)?;
    let mut results: Vec<(String, ScenarioResult)> = Vec::new();
    for grid in &run.scenarios {
        let penalties = grid.penalties();
        for spec in grid.cells()? {
            let label = format!("{} N={} T={} alpha={}", grid.name, spec.n, spec.t, spec.alpha);
            let res = out.timed(&label, || {
                with_jobs(jobs, || run_scenario_with(&spec, &penalties, run.reps, &cfg, run.seed, range))
            })??;
            results.push((grid.name.clone(), res));
        }
    }
    out.write("summary.csv", &csv_bytes(|b| write_summary_csv(b, &results))?)?;
    out.write("replications.csv", &csv_bytes(|b| write_replications_csv(b, &results))?)?;
    let failed: Vec<String> = results
        .iter()
        .filter(|(_, r)| r.n_failed == r.n_reps)
        .map(|(name, r)| format!("{name} N={} T={} alpha={}", r.spec.n, r.spec.t, r.spec.alpha))
        .collect();
    out.finish("simulate", run.seed, jobs, &run)?;
    if !failed.is_empty() {
        return Err(CliError {
            kind: "scenario_failed",
            message: format!("every replication failed in: {}", failed.join(", ")),
        }
        .into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DemeanRun {
    data: DataSpec,
}

pub fn demean(args: DemeanArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.run.config.as_deref())?;
    let dir = out_dir(&args.run, &file)?;
    let jobs = jobs(&args.run, &file);
    let mut out = OutputDir::create(&dir)?;
    let data_args = DataArgs {
        within: true,
        ..args.data
    };
    let (panel, data, schema) = out.timed("load", || load_data(&data_args, &file))?;
    out.write("demeaned.csv", &csv_bytes(|b| write_panel_csv_as(b, &panel, &schema))?)?;
    out.finish("demean", 0, jobs, &DemeanRun { data })
}

#[derive(Debug, Serialize)]
struct GenerateRun {
    spec: DgpSpec,
    seed: u64,
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let dgp: Dgp = args.dgp.parse()?;
    let mut spec = DgpSpec::new(dgp, args.n, args.t, args.alpha);
    if args.noiseless {
        spec = spec.noiseless();
    }
    let mut out = OutputDir::create(&args.out)?;
    let (panel, truth) = out.timed("generate", || simulate_panel(&spec, args.seed))?;
    out.write("panel.csv", &csv_bytes(|b| write_panel_csv(b, &panel))?)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["unit", "group"])?;
    for (i, g) in truth.one_based().into_iter().enumerate() {
        wtr.write_record([panel.unit_label(i), g.to_string()])?;
    }
    out.write("truth.csv", &wtr.into_inner().map_err(|e| e.into_error())?)?;
    out.finish("generate", args.seed, 1, &GenerateRun { spec, seed: args.seed })
}
