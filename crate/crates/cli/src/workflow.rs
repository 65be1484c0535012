//! The five workflows. Each is a pure function of (config, seed, inputs)
//! and hands its files to a single writer.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use sdsvar::estimate::{fit, two_step_densities, EstimateResult};
use sdsvar::filter::{bands, init_theta, run_filter, run_smoother, FilterOutput};
use sdsvar::irf::{irf, irf_bands, IrfOptions, IrfResult};
use sdsvar::model::StaticParams;
use sdsvar::simulate::{mc_study, simulate, DgpConfig, DgpKind, ErrorBands, McAnalysis, StaticsChoice};
use sdsvar::stats::Band;
use sdsvar::{ModelSpec, ThetaVector};

use crate::config::{self, Config, InitSection, StaticsSection};
use crate::error::{CliError, Context, Result};
use crate::ingest::{ingest, Dataset, IngestOptions, Provenance, Stamp};
use crate::output::{flush, hash_of, Artifacts, Cell, FileHash, Manifest, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Filter,
    Irf,
    McStudy,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Filter => "filter",
            Command::Irf => "irf",
            Command::McStudy => "mc-study",
        })
    }
}

/// Contents of `estimate.json`; later `filter` and `irf` runs can point at it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    pub spec: ModelSpec,
    pub theta0: ThetaVector,
    pub theta_labels: Vec<String>,
    pub result: EstimateResult,
    /// First-step fit when the densities were refitted.
    pub first_step: Option<EstimateResult>,
    pub density_warnings: Vec<String>,
    pub data: Provenance,
}

#[derive(Debug, Serialize)]
struct Truth<'a> {
    config: &'a DgpConfig,
    theta_labels: Vec<String>,
    theta_true: &'a [ThetaVector],
    eps_true: &'a [Vec<f64>],
}

/// Inputs every data-driven workflow shares.
struct Setup {
    data: Dataset,
    y: Vec<DVector<f64>>,
    spec: ModelSpec,
    statics: StaticParams,
    covariance: Option<DMatrix<f64>>,
    theta0: ThetaVector,
}

struct Ctx<'a> {
    cfg: &'a Config,
    base: &'a Path,
    seed: u64,
    command: Command,
    inputs: Vec<FileHash>,
}

impl Ctx<'_> {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base.join(p) }
    }

    fn read(&mut self, p: &Path) -> Result<Vec<u8>> {
        let full = self.resolve(p);
        let bytes = std::fs::read(&full).map_err(|source| CliError::Io { path: full.clone(), source })?;
        self.inputs.push(hash_of(p.display().to_string(), &bytes));
        Ok(bytes)
    }

    fn data(&mut self) -> Result<Dataset> {
        let section = self.cfg.data.as_ref().ok_or(CliError::Missing("data", self.name()))?;
        let full = self.resolve(&section.path);
        let d = ingest(&full, IngestOptions { center: section.center })?;
        self.inputs.push(FileHash { path: section.path.display().to_string(), sha256: d.provenance.sha256.clone(), bytes: 0 });
        Ok(d)
    }

    fn name(&self) -> &'static str {
        match self.command {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Filter => "filter",
            Command::Irf => "irf",
            Command::McStudy => "mc-study",
        }
    }

    fn setup(&mut self) -> Result<Setup> {
        let data = self.data()?;
        let y = data.y_vectors();
        let statics_cfg = self.cfg.statics.clone().ok_or(CliError::Missing("statics", self.name()))?;
        let (spec, statics, covariance, file_theta0) = match &statics_cfg {
            StaticsSection::Estimate { path } => {
                let bytes = self.read(path)?;
                let file: EstimateFile =
                    serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: self.resolve(path), source })?;
                let cov = file.result.covariance_matrix();
                (file.spec, file.result.statics, Some(cov), Some(file.theta0))
            }
            other => {
                let spec = self.cfg.model.clone().ok_or(CliError::Missing("model", self.name()))?;
                spec.validate().context("model")?;
                let statics = other.direct(&spec)?.expect("direct statics");
                (spec, statics, None, None)
            }
        };
        if spec.n != data.n() {
            return Err(CliError::Invalid(format!("model has n = {} but the data have {} series", spec.n, data.n())));
        }
        let theta0 = match (&self.cfg.init, file_theta0) {
            (Some(InitSection::Explicit { theta0 }), _) => theta0.clone(),
            (Some(InitSection::Ols { window }), _) => init_theta(&y, &spec, *window).context("OLS initialization")?,
            (None, Some(t)) => t,
            (None, None) => match InitSection::default() {
                InitSection::Ols { window } => init_theta(&y, &spec, window).context("OLS initialization")?,
                InitSection::Explicit { theta0 } => theta0,
            },
        };
        if theta0.len() != spec.dim() {
            return Err(CliError::Invalid(format!("theta0 has {} entries, the model needs {}", theta0.len(), spec.dim())));
        }
        Ok(Setup { data, y, spec, statics, covariance, theta0 })
    }
}

pub fn run(command: Command, config_path: &Path, seed: u64, out: &Path) -> Result<PathBuf> {
    let (cfg, cfg_bytes) = config::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let mut ctx = Ctx { cfg: &cfg, base, seed, command, inputs: Vec::new() };
    let artifacts = match command {
        Command::Simulate => simulate_flow(&mut ctx)?,
        Command::Estimate => estimate_flow(&mut ctx)?,
        Command::Filter => filter_flow(&mut ctx)?,
        Command::Irf => irf_flow(&mut ctx)?,
        Command::McStudy => mc_flow(&mut ctx)?,
    };
    let manifest = Manifest {
        tool: "sdvar",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        seed,
        config: hash_of(config_path.display().to_string(), &cfg_bytes),
        inputs: ctx.inputs,
        outputs: Vec::new(),
    };
    flush(out, artifacts, manifest)
}

fn theta_labels(spec: &ModelSpec) -> Vec<String> {
    spec.layout().labels(&spec.lag_mode)
}

fn simulate_flow(ctx: &mut Ctx) -> Result<Artifacts> {
    let dgp = ctx.cfg.dgp.as_ref().ok_or(CliError::Missing("dgp", "simulate"))?.build(ctx.seed);
    let sim = simulate(&dgp).context("simulation")?;
    let n = dgp.spec.n;
    let names: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("y{i}"))).collect();
    let mut table = Table::new(&names);
    for (t, row) in sim.y.iter().enumerate() {
        let cells: Vec<Cell> = std::iter::once(Cell::Int(t as i64)).chain(row.iter().map(|v| Cell::Float(*v))).collect();
        table.row(&cells);
    }
    let mut art = Artifacts::default();
    art.add("y.csv", table.into_bytes());
    art.add_json(
        "truth.json",
        &Truth { config: &dgp, theta_labels: theta_labels(&dgp.spec), theta_true: &sim.theta_true, eps_true: &sim.eps_true },
    );
    Ok(art)
}

fn estimate_flow(ctx: &mut Ctx) -> Result<Artifacts> {
    let s = ctx.setup()?;
    let opts = ctx.cfg.estimate.fit_options();
    let first = fit(&s.y, &s.spec, &s.statics, &s.theta0, opts).context("estimation")?;
    let (spec, result, first_step, density_warnings) = if ctx.cfg.estimate.two_step {
        let (spec2, warnings) = two_step_densities(&s.y, &s.spec, &first.statics, &s.theta0).context("density refit")?;
        let second = fit(&s.y, &spec2, &first.statics, &s.theta0, opts).context("second-step estimation")?;
        (spec2, second, Some(first), warnings)
    } else {
        (s.spec.clone(), first, None, Vec::new())
    };
    let mut report = result.table();
    report.push_str(&format!("\nlog-likelihood {}\nflagged steps {}\n", result.loglik, result.flagged_steps));
    for w in result.warnings.iter().chain(&density_warnings) {
        report.push_str(&format!("warning: {w}\n"));
    }
    let file = EstimateFile {
        theta_labels: theta_labels(&spec),
        spec,
        theta0: s.theta0,
        result,
        first_step,
        density_warnings,
        data: s.data.provenance.clone(),
    };
    let mut art = Artifacts::default();
    art.add_json("estimate.json", &file);
    art.add("estimate.txt", report.into_bytes());
    Ok(art)
}

fn date_cell(data: &Dataset, t: usize) -> Cell {
    data.dates.get(t).map_or(Cell::Empty, |d: &Stamp| Cell::Text(d.to_string()))
}

fn path_table(s: &Setup, fo: &FilterOutput) -> Table {
    let labels = theta_labels(&s.spec);
    let mut header = vec!["t".to_string(), "date".to_string()];
    header.extend(labels.iter().cloned());
    header.extend((1..=s.spec.n).map(|i| format!("eps{i}")));
    header.extend(["flag".to_string(), "loglik".to_string()]);
    let mut table = Table::new(&header);
    for k in 0..fo.len() {
        let t = fo.start + k;
        let mut cells = vec![Cell::Int(t as i64), date_cell(&s.data, t)];
        cells.extend(fo.theta_path[k].iter().map(|v| Cell::Float(*v)));
        cells.extend(fo.shocks[k].iter().map(|v| Cell::Float(*v)));
        cells.push(Cell::Int(i64::from(fo.stability_flags[k])));
        cells.push(Cell::Float(fo.loglik_contrib[k]));
        table.row(&cells);
    }
    table
}

#[derive(Debug, Serialize)]
struct FilterSummary {
    start: usize,
    steps: usize,
    loglik: f64,
    flagged_steps: usize,
    theta_labels: Vec<String>,
    theta_next: ThetaVector,
    band_draws: usize,
    band_draws_skipped: usize,
    band_floor: Vec<f64>,
    notes: Vec<String>,
}

fn filter_flow(ctx: &mut Ctx) -> Result<Artifacts> {
    let s = ctx.setup()?;
    let section = ctx.cfg.filter;
    let fo = run_filter(&s.y, &s.spec, &s.statics, &s.theta0).context("filter")?;
    let mut art = Artifacts::default();
    art.add("filtered.csv", path_table(&s, &fo).into_bytes());
    if section.smoother {
        let sm = run_smoother(&s.y, &s.spec, &s.statics, &fo).context("smoother")?;
        art.add("smoothed.csv", path_table(&s, &sm).into_bytes());
    }
    let labels = theta_labels(&s.spec);
    let mut summary = FilterSummary {
        start: fo.start,
        steps: fo.len(),
        loglik: fo.loglik,
        flagged_steps: fo.flag_count(),
        theta_labels: labels.clone(),
        theta_next: fo.theta_next.clone(),
        band_draws: 0,
        band_draws_skipped: 0,
        band_floor: Vec::new(),
        notes: Vec::new(),
    };
    match (&s.covariance, section.band_draws) {
        (_, 0) => {}
        (None, _) => summary.notes.push("bands need an estimate file for the parameter covariance; skipped".into()),
        (Some(cov), draws) => {
            let b = bands(&s.y, &s.spec, &s.statics, cov, &s.theta0, draws, ctx.seed).context("filter bands")?;
            let mut header = vec!["t".to_string(), "date".to_string()];
            header.extend(labels.iter().cloned());
            let mut table = Table::new(&header);
            for (k, hw) in b.halfwidths.iter().enumerate() {
                let t = fo.start + k;
                let mut cells = vec![Cell::Int(t as i64), date_cell(&s.data, t)];
                cells.extend(hw.iter().map(|v| Cell::Float(*v)));
                table.row(&cells);
            }
            art.add("bands.csv", table.into_bytes());
            summary.band_draws = b.draws;
            summary.band_draws_skipped = b.skipped;
            summary.band_floor = b.floor;
        }
    }
    art.add_json("filtered.json", &summary);
    Ok(art)
}

#[derive(Debug, Serialize)]
struct IrfFile<'a> {
    variables: &'a [String],
    conditioning_date: Option<String>,
    result: &'a IrfResult,
}

fn irf_flow(ctx: &mut Ctx) -> Result<Artifacts> {
    let s = ctx.setup()?;
    let section = ctx.cfg.irf;
    let opts = IrfOptions { horizon: section.horizon, draws: section.draws, antithetic: section.antithetic, seed: ctx.seed };
    let result = match (&s.covariance, section.repetitions) {
        (Some(cov), r) if r >= 2 => irf_bands(&s.y, &s.spec, &s.statics, cov, &s.theta0, opts, r).context("IRF bands")?,
        _ => {
            let state = run_filter(&s.y, &s.spec, &s.statics, &s.theta0).context("filter")?.theta_next;
            irf(&s.y, &s.spec, &s.statics, &state, opts).context("IRF")?
        }
    };
    let mut table = Table::new(&["i", "j", "k", "response", "halfwidth"]);
    for (i, j, k, mean, hw) in result.long_rows() {
        table.row(&[Cell::Int(i as i64), Cell::Int(j as i64), Cell::Int(k as i64), Cell::Float(mean), Cell::Float(hw)]);
    }
    let mut art = Artifacts::default();
    art.add("irf.csv", table.into_bytes());
    // The impact date is the one after the last observation, which the
    // data do not contain; record the last observed one instead.
    let last = s.data.dates.last().map(|d| d.to_string());
    art.add_json("irf.json", &IrfFile { variables: &s.data.names, conditioning_date: last, result: &result });
    Ok(art)
}

#[derive(Debug, Serialize)]
struct McCoverage {
    label: String,
    filtered: f64,
    smoothed: Option<f64>,
}

#[derive(Debug, Serialize)]
struct McFile {
    config: DgpConfig,
    replications: usize,
    failures: Vec<(usize, String)>,
    burn_in: usize,
    group_names: Vec<String>,
    /// `[replication][group]`.
    estimates: Vec<Vec<f64>>,
    /// Share of post-burn-in steps whose 68% absolute-error band holds zero.
    coverage: Vec<McCoverage>,
}

fn mc_flow(ctx: &mut Ctx) -> Result<Artifacts> {
    let dgp = ctx.cfg.dgp.as_ref().ok_or(CliError::Missing("dgp", "mc-study"))?.build(ctx.seed);
    let section = &ctx.cfg.mc;
    let true_statics = match &dgp.kind {
        DgpKind::ScoreDriven { statics } => Some(statics.clone()),
        _ => None,
    };
    let configured = match &ctx.cfg.statics {
        Some(StaticsSection::Estimate { .. }) => {
            return Err(CliError::Invalid("mc-study takes statics from the config or the DGP, not an estimate file".into()))
        }
        Some(sc) => sc.direct(&dgp.spec)?,
        None => None,
    };
    let statics = configured.or(true_statics).ok_or(CliError::Missing("statics", "mc-study"))?;
    let labels = theta_labels(&dgp.spec);
    let components: Vec<usize> = if section.components.is_empty() {
        (0..labels.len()).collect()
    } else {
        section
            .components
            .iter()
            .map(|c| labels.iter().position(|l| l == c).ok_or_else(|| CliError::Invalid(format!("unknown component `{c}`"))))
            .collect::<Result<_>>()?
    };
    let choice = if section.estimate {
        StaticsChoice::Estimate { template: statics.clone(), options: ctx.cfg.estimate.fit_options() }
    } else {
        StaticsChoice::Given(statics.clone())
    };
    let analysis = McAnalysis { statics: choice, init: section.init, smoother: section.smoother, components };
    let summary = mc_study(&dgp, section.replications, &analysis).context("Monte-Carlo study")?;
    let burn_in = summary.burn_in();

    let mut table = Table::new(&["component", "t", "series", "p16", "median", "p84"]);
    let mut push = |label: &str, series: &str, bands: &[Band]| {
        for (k, b) in bands.iter().enumerate() {
            table.row(&[
                Cell::Text(label.to_string()),
                Cell::Int((summary.start + k) as i64),
                Cell::Text(series.to_string()),
                Cell::Float(b.p16),
                Cell::Float(b.median),
                Cell::Float(b.p84),
            ]);
        }
    };
    let mut coverage = Vec::new();
    for eb in &summary.bands {
        push(&eb.label, "filtered_abs", &eb.filtered_abs);
        push(&eb.label, "filtered_rel", &eb.filtered_rel);
        if let Some(b) = &eb.smoothed_abs {
            push(&eb.label, "smoothed_abs", b);
        }
        if let Some(b) = &eb.smoothed_rel {
            push(&eb.label, "smoothed_rel", b);
        }
        coverage.push(McCoverage {
            label: eb.label.clone(),
            filtered: ErrorBands::zero_coverage(&eb.filtered_abs, burn_in),
            smoothed: eb.smoothed_abs.as_ref().map(|b| ErrorBands::zero_coverage(b, burn_in)),
        });
    }
    let file = McFile {
        config: dgp.clone(),
        replications: summary.replications.len(),
        failures: summary.failures.clone(),
        burn_in,
        group_names: statics.restriction.names(),
        estimates: summary.replications.iter().map(|r| r.estimates.clone()).collect(),
        coverage,
    };
    let mut art = Artifacts::default();
    art.add("mc_bands.csv", table.into_bytes());
    art.add_json("mc.json", &file);
    Ok(art)
}
