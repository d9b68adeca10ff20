//! `rssd` command front end. Every command reads a plant-set file, an
//! optional run configuration and writes its results under `--out`.
//!
//! Exit codes: 0 success (an infeasible synthesis included), 2 usage,
//! 3 parse or dimension errors, 4 numerical failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::compensator::{CompensatorBank, CompensatorProblem};
use crate::error::Error;
use crate::io::{self, ControllerFile, GridSpec, PlantSetFile, RunConfig};
use crate::linalg::Mat;
use crate::lti::{augment_plant, spectrum_of, FrequencyGrid, PlantSet};
use crate::margins::{
    disk_margin, plant_sigma, sensitivity_curves, uncertainty_bounds, ClosedLoop, MarginReport,
};
use crate::sim::{simulate, tracking_metrics, ChannelMetrics, ChannelSpec, Scenario, TraceSet};
use crate::synthesis::{synthesize, SynthesisReport};
use crate::vgap::{central_plant_with, chordal_distance};

#[derive(Debug, Parser)]
#[command(
    name = "rssd",
    version,
    about = "Robust simultaneous stabilization toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pairwise nu-gap matrix and central plant.
    Vgap(VgapArgs),
    /// Compensator and gain synthesis.
    Synth(CommonArgs),
    /// Curves, spectra and margins of a given controller.
    Analyze(AnalyzeArgs),
    /// Linear closed-loop simulation of scenario files.
    Sim(SimArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Plant-set JSON file.
    pub plantset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Logarithmic grid override `LO:HI:POINTS`.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct VgapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the pointwise chordal distance of every pair over the grid.
    #[arg(long)]
    pub chordal_curves: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller JSON file (gain and compensator banks).
    #[arg(long)]
    pub controller: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub controller: PathBuf,
    /// Scenario JSON file; repeat for several.
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failed(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(e) => error_exit_code(e),
        }
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::DimensionMismatch(_)
        | Error::NonFinite(_)
        | Error::InvalidConfig(_)
        | Error::InvalidGrid(_)
        | Error::ImproperSection { .. }
        | Error::UnstableSection { .. } => 3,
        _ => 4,
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Vgap(a) => cmd_vgap(&a.common, a.chordal_curves).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Analyze(a) => cmd_analyze(&a.common, &a.controller).map(|_| ()),
        Command::Sim(a) => cmd_sim(&a.common, &a.controller, &a.scenarios).map(|_| ()),
    }
}

struct Context {
    set: PlantSet,
    config: RunConfig,
    grid: FrequencyGrid,
    out: PathBuf,
}

fn parse_grid(s: &str) -> CliResult<GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("--grid expects LO:HI:POINTS, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(GridSpec {
        lo: parts[0].parse().map_err(|_| bad())?,
        hi: parts[1].parse().map_err(|_| bad())?,
        points: parts[2].parse().map_err(|_| bad())?,
        ..GridSpec::default()
    })
}

fn load(args: &CommonArgs) -> CliResult<Context> {
    let file: PlantSetFile = io::read_json(&args.plantset)?;
    let set = file.to_set()?;
    let mut config: RunConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(g) = &args.grid {
        config.grid = GridSpec {
            refine_depth: config.grid.refine_depth,
            rel_tol: config.grid.rel_tol,
            ..parse_grid(g)?
        };
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let grid = config.grid.build()?;
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rssd-out"));
    fs::create_dir_all(&out).map_err(Error::from)?;
    Ok(Context {
        set,
        config,
        grid,
        out,
    })
}

fn labels(set: &PlantSet) -> Vec<String> {
    set.plants()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.label.is_empty() {
                format!("plant{i}")
            } else {
                p.label.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VgapReport {
    pub labels: Vec<String>,
    pub max_gaps: Vec<f64>,
    pub central_index: usize,
    pub central_label: String,
    pub epsilon: f64,
}

pub fn cmd_vgap(args: &CommonArgs, chordal_curves: bool) -> CliResult<VgapReport> {
    let ctx = load(args)?;
    let cp = central_plant_with(&ctx.set, &ctx.grid, ctx.config.pole_counting)?;
    let names = labels(&ctx.set);
    let mut header = vec!["plant".to_string()];
    header.extend(names.iter().cloned());
    write_labeled_csv(
        &ctx.out.join("gap_matrix.csv"),
        &header,
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), cp.gap_matrix.row(i).iter().copied().collect())),
    )?;
    let report = VgapReport {
        central_label: names[cp.index].clone(),
        labels: names,
        max_gaps: cp.max_gaps,
        central_index: cp.index,
        epsilon: cp.epsilon,
    };
    io::write_json(&ctx.out.join("vgap_report.json"), &report)?;
    if chordal_curves {
        write_chordal_curves(&ctx.set, &ctx.grid, &report.labels, &ctx.out)?;
    }
    println!(
        "central plant: {} (index {}), epsilon = {:.6}",
        report.central_label, report.central_index, report.epsilon
    );
    Ok(report)
}

/// One `chordal_<a>_<b>.csv` per unordered pair: omega and the pointwise
/// chordal distance, whose peak is the gap when the winding test holds.
fn write_chordal_curves(
    set: &PlantSet,
    grid: &FrequencyGrid,
    names: &[String],
    dir: &Path,
) -> CliResult<()> {
    let header = vec!["omega".to_string(), "chordal_distance".to_string()];
    let plants = set.plants();
    for i in 0..plants.len() {
        for j in i + 1..plants.len() {
            let rows = grid
                .points()
                .iter()
                .map(|&w| {
                    let d = chordal_distance(
                        &plants[i].freq_response(w)?,
                        &plants[j].freq_response(w)?,
                    );
                    Ok(vec![w, d])
                })
                .collect::<crate::error::Result<Vec<_>>>()?;
            io::write_csv(
                &dir.join(format!("chordal_{}_{}.csv", names[i], names[j])),
                &header,
                rows,
            )?;
        }
    }
    Ok(())
}

/// CSV whose first column is a text label.
fn write_labeled_csv<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = (String, Vec<f64>)>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let wrap = |e: csv::Error| CliError::Failed(Error::Io(std::io::Error::other(e)));
    w.write_record(header).map_err(wrap)?;
    for (label, vals) in rows {
        let mut rec = vec![label];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn cmd_synth(args: &CommonArgs) -> CliResult<SynthesisReport> {
    let ctx = load(args)?;
    let seed = ctx.config.seed.ok_or_else(|| {
        CliError::Usage("synthesis needs a seed (--seed or config \"seed\")".into())
    })?;
    let cfg = &ctx.config;
    let missing =
        |what: &str| CliError::Failed(Error::InvalidConfig(format!("config lacks {what}")));
    let input = cfg
        .input_bank
        .clone()
        .ok_or_else(|| missing("input_bank"))?;
    let output = cfg
        .output_bank
        .clone()
        .ok_or_else(|| missing("output_bank"))?;
    let target = cfg.target.clone().ok_or_else(|| missing("target"))?;
    let problem = CompensatorProblem::new(
        ctx.set.clone(),
        cfg.constraints.clone(),
        input,
        output,
        ctx.grid.clone(),
    )?;
    let scp = crate::ga::GaConfig {
        seed,
        ..cfg.outer.clone()
    };
    let rssd = crate::ga::GaConfig {
        seed: seed.wrapping_add(1),
        ..cfg.inner.clone()
    };
    let report = synthesize(&problem, &target, &scp, &rssd, &cfg.options)?;
    io::write_json(&ctx.out.join("synthesis_report.json"), &report)?;
    if let (true, Some(k), Some(w_in), Some(w_out)) =
        (report.feasible, &report.gain, &report.w_in, &report.w_out)
    {
        let k = k.to_mat("gain")?;
        let ctrl = ControllerFile::new(&k, w_in.clone(), w_out.clone());
        io::write_json(&ctx.out.join("controller.json"), &ctrl)?;
        let dir = ctx.out.join("analysis");
        fs::create_dir_all(&dir).map_err(Error::from)?;
        analyze_into(&ctx.set, &k, w_in, w_out, &ctx.grid, &dir)?;
    }
    println!(
        "feasible: {}, gap bound: {:.6}, peak gain: {}, outer generations: {}, inner runs: {}",
        report.feasible,
        report.gap_bound,
        report.peak_gain.map_or("-".into(), |j| format!("{j:.6}")),
        report.outer_generations,
        report.inner_runs.len()
    );
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantAnalysis {
    pub label: String,
    pub stable: bool,
    pub margins: Option<MarginReport>,
    pub min_output_multiplicative: Option<(f64, f64)>,
    pub min_inverse_input_multiplicative: Option<(f64, f64)>,
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

fn analyze_into(
    set: &PlantSet,
    gain: &Mat,
    w_in: &CompensatorBank,
    w_out: &CompensatorBank,
    grid: &FrequencyGrid,
    dir: &Path,
) -> CliResult<Vec<PlantAnalysis>> {
    let names = labels(set);
    let mut out = Vec::new();
    let mut margin_rows = Vec::new();
    for (i, plant) in set.plants().iter().enumerate() {
        let aug = augment_plant(w_out, plant, w_in)?;
        let cl = ClosedLoop::new(&aug, gain)?;
        write_eigen_table(
            &dir.join(format!("{}_eigenvalues.csv", names[i])),
            cl.state_matrix(),
        )?;
        let sigma = plant_sigma(&aug, grid)?;
        let mut header: Vec<String> = ["omega", "plant_max_db", "plant_min_db"]
            .map(String::from)
            .to_vec();
        let mut cols: Vec<Vec<f64>> = vec![
            sigma.omega.clone(),
            sigma.max.iter().map(|&v| db(v)).collect(),
            sigma.min.iter().map(|&v| db(v)).collect(),
        ];
        let mut entry = PlantAnalysis {
            label: names[i].clone(),
            stable: cl.stable,
            margins: None,
            min_output_multiplicative: None,
            min_inverse_input_multiplicative: None,
        };
        if cl.stable {
            let s = sensitivity_curves(&aug, gain, grid)?;
            let u = uncertainty_bounds(&aug, gain, grid)?;
            for (name, c) in [("so", &s.output), ("si", &s.input), ("kso", &s.control)] {
                header.push(format!("{name}_max_db"));
                header.push(format!("{name}_min_db"));
                cols.push(c.max.iter().map(|&v| db(v)).collect());
                cols.push(c.min.iter().map(|&v| db(v)).collect());
            }
            header.push("output_mult_bound".into());
            header.push("inverse_input_mult_bound".into());
            cols.push(u.output_multiplicative.clone());
            cols.push(u.inverse_input_multiplicative.clone());
            let [mo, mi] = u.minima();
            entry.min_output_multiplicative = Some(mo);
            entry.min_inverse_input_multiplicative = Some(mi);
            let m = disk_margin(&aug, gain, grid)?;
            margin_rows.push((
                names[i].clone(),
                vec![
                    1.0,
                    m.gsm,
                    m.disk_alpha,
                    m.mdgm_db,
                    m.mdpm_deg,
                    m.worst_omega,
                ],
            ));
            entry.margins = Some(m);
        } else {
            eprintln!(
                "warning: closed loop with {} is unstable; sensitivity analysis skipped",
                names[i]
            );
            margin_rows.push((
                names[i].clone(),
                vec![0.0, 0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN],
            ));
        }
        let rows = (0..cols[0].len()).map(|k| cols.iter().map(|c| c[k]).collect::<Vec<f64>>());
        io::write_csv(&dir.join(format!("{}_curves.csv", names[i])), &header, rows)?;
        out.push(entry);
    }
    let header: Vec<String> = [
        "plant",
        "stable",
        "gsm",
        "disk_alpha",
        "mdgm_db",
        "mdpm_deg",
        "worst_omega",
    ]
    .map(String::from)
    .to_vec();
    write_labeled_csv(&dir.join("disk_margins.csv"), &header, margin_rows)?;
    io::write_json(&dir.join("analysis.json"), &out)?;
    Ok(out)
}

fn write_eigen_table(path: &Path, a: &Mat) -> CliResult<()> {
    let spec = spectrum_of(a)?;
    let header: Vec<String> = ["re", "im", "damping", "natural_frequency"]
        .map(String::from)
        .to_vec();
    io::write_csv(
        path,
        &header,
        spec.iter()
            .map(|e| vec![e.value.re, e.value.im, e.damping, e.natural_frequency]),
    )?;
    Ok(())
}

fn load_controller(
    path: &Path,
    set: &PlantSet,
) -> CliResult<(Mat, CompensatorBank, CompensatorBank)> {
    let c: ControllerFile = io::read_json(path)?;
    Ok(c.parts(set.inputs(), set.outputs())?)
}

pub fn cmd_analyze(args: &CommonArgs, controller: &Path) -> CliResult<Vec<PlantAnalysis>> {
    let ctx = load(args)?;
    let (k, w_in, w_out) = load_controller(controller, &ctx.set)?;
    let res = analyze_into(&ctx.set, &k, &w_in, &w_out, &ctx.grid, &ctx.out)?;
    for a in &res {
        match &a.margins {
            Some(m) => println!(
                "{}: stable, gsm {:.4}, disk margin +-{:.2} dB / +-{:.2} deg",
                a.label, m.gsm, m.mdgm_db, m.mdpm_deg
            ),
            None => println!("{}: UNSTABLE", a.label),
        }
    }
    Ok(res)
}

/// Scenario plus optional tracking requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub scenario: Scenario,
    #[serde(default)]
    pub tracking: Vec<ChannelSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRun {
    pub scenario: String,
    pub plant: String,
    /// Sign of the injected uncertainty, when any.
    pub delta_sign: Option<f64>,
    pub divergence: Option<f64>,
    pub metrics: Vec<ChannelMetrics>,
    pub pass: bool,
    pub trace_file: String,
}

fn write_traces(path: &Path, tr: &TraceSet) -> CliResult<()> {
    let r = tr.outputs.len();
    let m = tr.actuators.len();
    let mut header = vec!["time".to_string()];
    header.extend((0..r).map(|i| format!("ref{i}")));
    header.extend((0..r).map(|i| format!("y{i}")));
    header.extend((0..r).map(|i| format!("err{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    let rows = (0..tr.time.len()).map(|k| {
        let mut row = vec![tr.time[k]];
        row.extend(tr.reference.iter().map(|c| c[k]));
        row.extend(tr.outputs.iter().map(|c| c[k]));
        row.extend(tr.errors.iter().map(|c| c[k]));
        row.extend(tr.actuators.iter().map(|c| c[k]));
        row
    });
    Ok(io::write_csv(path, &header, rows)?)
}

pub fn cmd_sim(
    args: &CommonArgs,
    controller: &Path,
    scenarios: &[PathBuf],
) -> CliResult<Vec<SimRun>> {
    let ctx = load(args)?;
    let (k, w_in, w_out) = load_controller(controller, &ctx.set)?;
    let names = labels(&ctx.set);
    let mut runs = Vec::new();
    for (si, path) in scenarios.iter().enumerate() {
        let file: ScenarioFile = io::read_json(path)?;
        let sname = if file.scenario.name.is_empty() {
            format!("scenario{si}")
        } else {
            file.scenario.name.clone()
        };
        // an uncertainty sample is run with both signs
        let variants: Vec<(Scenario, Option<f64>)> = match &file.scenario.uncertainty {
            None => vec![(file.scenario.clone(), None)],
            Some(u) => [u.sign, -u.sign]
                .into_iter()
                .map(|sign| {
                    let mut s = file.scenario.clone();
                    s.uncertainty.as_mut().expect("present").sign = sign;
                    (s, Some(sign))
                })
                .collect(),
        };
        for (pi, plant) in ctx.set.plants().iter().enumerate() {
            for (sc, sign) in &variants {
                let tr = simulate(plant, &k, &w_in, &w_out, sc)?;
                let suffix = match sign {
                    Some(s) if *s < 0.0 => "_neg",
                    Some(_) => "_pos",
                    None => "",
                };
                let fname = format!("sim_{sname}_{}{suffix}.csv", names[pi]);
                write_traces(&ctx.out.join(&fname), &tr)?;
                let (metrics, pass) = match tracking_metrics(&tr, &file.tracking) {
                    Ok(m) => {
                        let pass = m.iter().all(|c| c.pass);
                        (m, pass)
                    }
                    Err(Error::DivergentTrace { .. }) => (Vec::new(), false),
                    Err(e) => return Err(e.into()),
                };
                if let Some(t) = tr.divergence {
                    println!("{sname} / {}: DIVERGED at t = {t:.4} s", names[pi]);
                } else {
                    println!(
                        "{sname} / {}: tracking {}",
                        names[pi],
                        if pass { "PASS" } else { "FAIL" }
                    );
                }
                runs.push(SimRun {
                    scenario: sname.clone(),
                    plant: names[pi].clone(),
                    delta_sign: *sign,
                    divergence: tr.divergence,
                    metrics,
                    pass,
                    trace_file: fname,
                });
            }
        }
    }
    io::write_json(&ctx.out.join("sim_report.json"), &runs)?;
    Ok(runs)
}
