//! The `spatial-css` command line.
//!
//! Exit codes: 0 on success (including runs that hit the iteration cap), 1
//! when a computation fails, 2 for bad arguments, configuration or input
//! files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::domain::{CovariateMatrix, SpatialField};
use crate::error::{Error, Result};
use crate::eval::{run_method_detailed, EvalReport, Method, MethodRun, MethodSpec, DEFAULT_FLOOR};
use crate::io;
use crate::partition::{aggregate, build_partition, sample_stations, Partition, RNG_NAME};
use crate::pipeline::{parallel_map, Instance};
use crate::plot;
use crate::smoother::{triangulate_with, BoundaryPenalty, Diagonal};
use crate::synth::{generate_field, CovariateSpec, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "spatial-css", version, about = "Recover fine-grained spatial fields from station aggregates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic ground-truth field.
    Synth(SynthCmd),
    /// Sample stations from a field and write their patches.
    Stations(StationsCmd),
    /// Sum a field over the patches of given stations.
    Aggregate(AggregateCmd),
    /// Estimate the field from station volumes with one or more methods.
    Recover(Box<RecoverCmd>),
    /// Score estimates against the truth.
    Evaluate(EvaluateCmd),
    /// Render fields, error CDFs and MRE bars as SVG.
    Plot(PlotCmd),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub cols: usize,
    /// Number of bumps, `k` or an inclusive range `a-b`.
    #[arg(long, default_value = "3-5", value_parser = parse_range)]
    pub bumps: (usize, usize),
    /// Constant level under the bumps.
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
    /// Standard deviation of additive noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Add two district indicator covariates with known effects.
    #[arg(long)]
    pub districts: bool,
}

impl SynthArgs {
    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n_rows: self.rows,
            n_cols: self.cols,
            bumps: self.bumps,
            background: self.background,
            noise: self.noise,
            covariates: self.districts.then(CovariateSpec::districts),
            seed,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthCmd {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StationsCmd {
    /// Field CSV to sample from.
    #[arg(long)]
    pub truth: PathBuf,
    /// Number of stations.
    #[arg(long)]
    pub stations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AggregateCmd {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub station_file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum PenaltyArg {
    FreeBoundary,
    Neumann,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
pub enum DiagonalArg {
    Forward,
    Backward,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RecoverArgs {
    /// Ground-truth field CSV; stations are sampled from it.
    #[arg(long, group = "source")]
    pub truth: Option<PathBuf>,
    /// Generate the truth synthetically for each seed.
    #[arg(long, group = "source")]
    pub synth: bool,
    /// Telecom activity CSV (square_id, timestamp, sms_in, sms_out, call_in, call_out).
    #[arg(long, group = "source")]
    pub cdr: Option<PathBuf>,
    /// Given station CSV; requires --aggregates and --domain.
    #[arg(long, group = "source", requires_all = ["aggregates", "domain"])]
    pub station_file: Option<PathBuf>,
    #[arg(long)]
    pub aggregates: Option<PathBuf>,
    /// Field CSV whose cells define the domain.
    #[arg(long)]
    pub domain: Option<PathBuf>,

    #[command(flatten)]
    pub synth_args: SynthArgs,

    /// Half-open timestamp window `start:end` for --cdr.
    #[arg(long, value_parser = parse_time_range)]
    pub time_range: Option<(i64, i64)>,
    /// Square-id grid shape for --cdr and --features.
    #[arg(long, default_value_t = 100)]
    pub grid_rows: usize,
    #[arg(long, default_value_t = 100)]
    pub grid_cols: usize,

    /// Geographic feature CSV keyed by square_id.
    #[arg(long, conflicts_with = "covariates")]
    pub features: Option<PathBuf>,
    /// Covariate CSV with `row,col,<names>`.
    #[arg(long)]
    pub covariates: Option<PathBuf>,

    /// Number of stations to sample.
    #[arg(long)]
    pub stations: Option<usize>,
    /// Methods: a comma list of pe, pe-ssr1, pe-ssr2, css, css-features, or `all`.
    #[arg(long, default_value = "css")]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Primal and dual tolerance, scaled by sqrt(n).
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Diagnostics keep every n-th iteration and the last.
    #[arg(long, default_value_t = 1)]
    pub report_every: usize,
    /// f-update target `(alpha + rho g) / 2` with unit weight.
    #[arg(long)]
    pub literal_target: bool,
    #[arg(long, value_enum, default_value_t = PenaltyArg::FreeBoundary)]
    pub penalty: PenaltyArg,
    #[arg(long, value_enum, default_value_t = DiagonalArg::Forward)]
    pub diagonal: DiagonalArg,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent repetitions with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Also write the triangulation.
    #[arg(long)]
    pub mesh: bool,
}

#[derive(Args, Debug)]
pub struct RecoverCmd {
    #[command(flatten)]
    pub args: RecoverArgs,
    /// Rerun the command recorded in a manifest; other flags are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateCmd {
    /// Output directory of `recover`; scores every run and method in it.
    #[arg(long, conflicts_with = "estimate")]
    pub run: Option<PathBuf>,
    /// Truth CSV; overrides the truth recorded for a run.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Estimate CSVs, scored against --truth.
    #[arg(long, num_args = 1.., requires = "truth")]
    pub estimate: Vec<PathBuf>,
    /// Method of each --estimate, in order; inferred from `estimate_<method>.csv` otherwise.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Stations and volumes to check the estimates against.
    #[arg(long, requires = "aggregates")]
    pub station_file: Option<PathBuf>,
    #[arg(long)]
    pub aggregates: Option<PathBuf>,
    /// Cells with truth below this are left out.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotCmd {
    /// Field CSVs to draw as heatmaps.
    #[arg(long)]
    pub field: Vec<PathBuf>,
    /// CDF CSV from `evaluate`.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
    /// Report CSV from `evaluate`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Right edge of the CDF chart.
    #[arg(long, default_value_t = 1.0)]
    pub x_max: f64,
    #[arg(long, default_value = "")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    match s.split_once('-') {
        None => parse(s).map(|k| (k, k)),
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
    }
}

fn parse_time_range(s: &str) -> std::result::Result<(i64, i64), String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let a: i64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if a >= b {
        return Err("start must be before end".into());
    }
    Ok((a, b))
}

/// Parses `all` or a comma list of method names.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    Ok(out)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() { 2 } else { 1 })
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(c) => cmd_synth(&c),
        Command::Stations(c) => cmd_stations(&c),
        Command::Aggregate(c) => cmd_aggregate(&c),
        Command::Recover(c) => cmd_recover(&c),
        Command::Evaluate(c) => cmd_evaluate(&c),
        Command::Plot(c) => cmd_plot(&c),
    }
}

#[derive(Serialize)]
struct SynthRecord<'a> {
    generator: &'a str,
    spec: &'a SynthSpec,
    bumps: &'a [crate::synth::Bump],
}

pub fn cmd_synth(c: &SynthCmd) -> Result<()> {
    let spec = c.synth.spec(c.seed);
    let inst = generate_field(&spec)?;
    io::write_field_csv(c.out.join("truth.csv"), &inst.field)?;
    if let Some(w) = &inst.covariates {
        io::write_covariates_csv(c.out.join("covariates.csv"), w)?;
    }
    let record = SynthRecord {
        generator: RNG_NAME,
        spec: &spec,
        bumps: &inst.bumps,
    };
    io::write_text(c.out.join("synth.json"), &to_json(&record)?)
}

fn write_patches(path: &Path, p: &Partition) -> Result<()> {
    let d = p.domain();
    let mut text = String::from("row,col,station_id,weight\n");
    for j in 0..p.n() {
        let (r, c) = d.cell(j);
        for &(i, w) in p.cell_weights(j) {
            text.push_str(&format!("{r},{c},{i},{}\n", io::fmt_f64(w)));
        }
    }
    io::write_text(path, &text)
}

pub fn cmd_stations(c: &StationsCmd) -> Result<()> {
    let truth = io::read_field_csv(&c.truth, None)?;
    let stations = sample_stations(&truth, c.stations, c.seed)?;
    io::write_stations_csv(c.out.join("stations.csv"), truth.domain(), &stations)?;
    let p = build_partition(truth.domain().clone(), stations)?;
    write_patches(&c.out.join("patches.csv"), &p)
}

pub fn cmd_aggregate(c: &AggregateCmd) -> Result<()> {
    let truth = io::read_field_csv(&c.truth, None)?;
    let stations = io::read_stations_csv(&c.station_file, truth.domain())?;
    let p = build_partition(truth.domain().clone(), stations)?;
    io::write_aggregates_csv(c.out.join("aggregates.csv"), &aggregate(&p, &truth)?)
}

/// Written as `manifest.json` by `recover`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub generator: String,
    /// The full command, sufficient to rerun it.
    pub command: RecoverArgs,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: Option<u64>,
    /// Directory of this run's files, relative to the manifest.
    pub dir: String,
    pub n_cells: usize,
    pub n_stations: usize,
    pub tied_cells: usize,
    pub truth: Option<PathBuf>,
    pub stations: String,
    pub aggregates: String,
    pub methods: Vec<MethodRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    pub estimate: String,
    pub diagnostics: Option<String>,
    pub lambda: f64,
    pub rho: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    /// Relative patch-sum violation of the written estimate.
    pub constraint_max_violation: f64,
    /// Largest violation over all ADMM iterates.
    pub iterate_max_violation: Option<f64>,
    pub min_value: f64,
    pub beta: Option<Vec<f64>>,
}

impl RecoverArgs {
    fn config(&self) -> AdmmConfig {
        AdmmConfig {
            lambda: self.lambda,
            rho: self.rho,
            max_iter: self.max_iter,
            tol_primal: self.tol,
            tol_dual: self.tol,
            report_every: self.report_every,
            literal_target: self.literal_target,
            penalty: match self.penalty {
                PenaltyArg::FreeBoundary => BoundaryPenalty::FreeBoundary,
                PenaltyArg::Neumann => BoundaryPenalty::Neumann,
            },
            diagonal: match self.diagonal {
                DiagonalArg::Forward => Diagonal::Forward,
                DiagonalArg::Backward => Diagonal::Backward,
            },
        }
    }

    fn grid(&self) -> io::SquareGrid {
        io::SquareGrid {
            n_rows: self.grid_rows,
            n_cols: self.grid_cols,
        }
    }

    fn need_stations(&self) -> Result<usize> {
        self.stations
            .ok_or_else(|| Error::Config("--stations is required to sample stations".into()))
    }

    /// Loads the observed inputs shared by every seed: truth (if read from a
    /// file) and covariates.
    fn load_shared(&self) -> Result<(Option<SpatialField>, Option<CovariateMatrix>)> {
        let features = match &self.features {
            Some(p) => Some(io::load_features_csv(p, self.grid())?),
            None => None,
        };
        let truth = if let Some(p) = &self.truth {
            Some(io::read_field_csv(p, None)?)
        } else if let Some(p) = &self.cdr {
            let full = io::load_cdr_csv(p, self.time_range, self.grid())?;
            Some(match &features {
                Some(w) => full.restrict_to(w.domain().clone())?,
                None => full,
            })
        } else {
            None
        };
        let covariates = match (&self.covariates, features, &truth) {
            (Some(p), _, Some(t)) => Some(io::read_covariates_csv(p, t.domain())?),
            (Some(p), _, None) if self.station_file.is_some() => {
                let d = io::read_field_csv(self.domain.as_ref().expect("required by clap"), None)?;
                Some(io::read_covariates_csv(p, d.domain())?)
            }
            (Some(_), _, None) => {
                return Err(Error::Config("--covariates needs a truth or domain file".into()));
            }
            (None, Some(w), Some(t)) => Some(w.restrict_to(t.domain().clone())?),
            (None, w, _) => w,
        };
        Ok((truth, covariates))
    }

    fn instance(&self, seed: u64, shared: &(Option<SpatialField>, Option<CovariateMatrix>)) -> Result<Instance> {
        let (truth, covariates) = shared;
        if self.synth {
            let spec = self.synth_args.spec(seed);
            let mut inst = Instance::synthetic(&spec, self.need_stations()?)?;
            if covariates.is_some() {
                return Err(Error::Config("--synth generates its own covariates (use --districts)".into()));
            }
            inst.seed = Some(seed);
            return Ok(inst);
        }
        if let Some(t) = truth {
            return Instance::sampled(t.clone(), covariates.clone(), self.need_stations()?, seed);
        }
        if let Some(sf) = &self.station_file {
            let d = io::read_field_csv(self.domain.as_ref().expect("required by clap"), None)?;
            let stations = io::read_stations_csv(sf, d.domain())?;
            let z = io::read_aggregates_csv(self.aggregates.as_ref().expect("required by clap"))?;
            return Instance::observed(d.domain().clone(), stations, z, covariates.clone());
        }
        Err(Error::Config(
            "give one data source: --truth, --synth, --cdr or --station-file".into(),
        ))
    }
}

pub fn cmd_recover(c: &RecoverCmd) -> Result<()> {
    let args = match &c.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::schema(p, e.line(), e.to_string()))?;
            m.command
        }
        None => c.args.clone(),
    };
    let manifest = recover(&args, &c.out, c.jobs)?;
    io::write_text(c.out.join("manifest.json"), &to_json(&manifest)?)
}

/// Runs `recover` into `out` and returns the manifest without writing it.
pub fn recover(args: &RecoverArgs, out: &Path, jobs: usize) -> Result<Manifest> {
    let methods = parse_methods(&args.method)?;
    let config = args.config();
    config.validate()?;
    if args.runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    if args.station_file.is_some() && args.runs > 1 {
        return Err(Error::Config("fixed stations give a single run".into()));
    }
    let shared = args.load_shared()?;
    let seeds: Vec<u64> = (0..args.runs as u64).map(|k| args.seed + k).collect();
    let instances = seeds
        .iter()
        .map(|&s| args.instance(s, &shared))
        .collect::<Result<Vec<_>>>()?;
    if methods.iter().any(|m| m.needs_covariates()) && instances[0].covariates.is_none() {
        return Err(Error::Config(
            "css-features needs covariates (--features, --covariates or --synth --districts)".into(),
        ));
    }

    let work: Vec<(usize, Method)> = (0..instances.len())
        .flat_map(|k| methods.iter().map(move |&m| (k, m)))
        .collect();
    let results = parallel_map(&work, jobs, |&(k, m)| {
        let inst = &instances[k];
        run_method_detailed(
            &MethodSpec::new(m, config.clone()),
            &inst.partition,
            &inst.z,
            inst.covariates.as_ref(),
        )
    });
    let mut results = results.into_iter();

    let mut records = Vec::with_capacity(instances.len());
    for inst in &instances {
        let dir = if args.runs > 1 {
            format!("seed_{}", inst.seed.expect("sampled runs have a seed"))
        } else {
            ".".to_string()
        };
        let run_dir = out.join(&dir);
        let domain = inst.partition.domain();
        io::write_stations_csv(run_dir.join("stations.csv"), domain, inst.partition.stations())?;
        io::write_aggregates_csv(run_dir.join("aggregates.csv"), &inst.z)?;
        let truth = match (&args.truth, &inst.truth) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(t)) => {
                io::write_field_csv(run_dir.join("truth.csv"), t)?;
                Some(PathBuf::from(&dir).join("truth.csv"))
            }
            (None, None) => None,
        };
        if args.mesh {
            let tri = triangulate_with(domain, config.diagonal);
            io::write_mesh_csv(run_dir.join("mesh_vertices.csv"), run_dir.join("mesh_triangles.csv"), &tri)?;
        }
        let mut method_records = Vec::with_capacity(methods.len());
        for _ in &methods {
            let run = results.next().expect("one result per work item")?;
            method_records.push(write_method(&run, inst, &config, &run_dir, &dir)?);
        }
        records.push(RunRecord {
            seed: inst.seed,
            dir: dir.clone(),
            n_cells: domain.len(),
            n_stations: inst.partition.m(),
            tied_cells: inst.partition.tie_count(),
            truth,
            stations: format!("{dir}/stations.csv"),
            aggregates: format!("{dir}/aggregates.csv"),
            methods: method_records,
        });
    }
    Ok(Manifest {
        tool: format!("spatial-css {}", env!("CARGO_PKG_VERSION")),
        generator: RNG_NAME.to_string(),
        command: args.clone(),
        runs: records,
    })
}

fn write_method(run: &MethodRun, inst: &Instance, config: &AdmmConfig, run_dir: &Path, dir: &str) -> Result<MethodRecord> {
    let name = run.method.cli_name();
    let est_name = format!("estimate_{name}.csv");
    io::write_field_csv(run_dir.join(&est_name), &run.estimate)?;
    let mut diagnostics = None;
    if let Some(r) = &run.recovery {
        if config.report_every > 0 {
            let diag = format!("diagnostics_{name}.csv");
            io::write_diagnostics_csv(run_dir.join(&diag), &r.history, config.report_every)?;
            diagnostics = Some(format!("{dir}/{diag}"));
        }
    }
    let rec = run.recovery.as_ref();
    Ok(MethodRecord {
        method: run.method,
        estimate: format!("{dir}/{est_name}"),
        diagnostics,
        lambda: config.lambda,
        rho: rec.map(|_| config.rho),
        iterations: rec.map(|r| r.iterations),
        converged: rec.map(|r| r.converged),
        primal_residual: rec.map(|r| r.primal_residual),
        dual_residual: rec.map(|r| r.dual_residual),
        constraint_max_violation: inst.partition.constraint_violation(run.estimate.values(), &inst.z),
        iterate_max_violation: rec.map(|r| r.constraint_max_violation),
        min_value: run.estimate.values().iter().copied().fold(f64::INFINITY, f64::min),
        beta: rec.filter(|r| !r.beta.is_empty()).map(|r| r.beta.clone()),
    })
}

/// Written as `evaluation.json` by `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub floor: f64,
    pub entries: Vec<EvaluationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationEntry {
    pub method: Method,
    pub seed: Option<u64>,
    pub estimate: PathBuf,
    pub mre: f64,
    pub excluded: usize,
    pub evaluated: usize,
    pub max_error: f64,
    /// Relative patch-sum violation, when stations and volumes are known.
    pub constraint_max_violation: Option<f64>,
}

struct Job {
    method: Method,
    seed: Option<u64>,
    estimate: PathBuf,
    truth: PathBuf,
    stations: Option<(PathBuf, PathBuf)>,
}

fn method_from_path(p: &Path) -> Result<Method> {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    stem.strip_prefix("estimate_")
        .unwrap_or(stem)
        .parse()
        .map_err(|_| Error::Config(format!("cannot tell the method of {}; pass --method", p.display())))
}

pub fn cmd_evaluate(c: &EvaluateCmd) -> Result<()> {
    let mut jobs = Vec::new();
    if let Some(run_dir) = &c.run {
        let path = run_dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.line(), e.to_string()))?;
        for r in &m.runs {
            let truth = match (&c.truth, &r.truth) {
                (Some(t), _) => t.clone(),
                (None, Some(t)) if t.is_absolute() || m.command.truth.as_ref() == Some(t) => t.clone(),
                (None, Some(t)) => run_dir.join(t),
                (None, None) => {
                    return Err(Error::Config(format!("run {} has no truth; pass --truth", r.dir)));
                }
            };
            for mr in &r.methods {
                jobs.push(Job {
                    method: mr.method,
                    seed: r.seed,
                    estimate: run_dir.join(&mr.estimate),
                    truth: truth.clone(),
                    stations: Some((run_dir.join(&r.stations), run_dir.join(&r.aggregates))),
                });
            }
        }
    } else {
        let truth = c
            .truth
            .clone()
            .ok_or_else(|| Error::Config("give --run or --truth with --estimate".into()))?;
        if c.estimate.is_empty() {
            return Err(Error::Config("no estimates to evaluate".into()));
        }
        if !c.method.is_empty() && c.method.len() != c.estimate.len() {
            return Err(Error::Config(format!(
                "{} methods for {} estimates",
                c.method.len(),
                c.estimate.len()
            )));
        }
        let stations = c.station_file.clone().zip(c.aggregates.clone());
        for (k, e) in c.estimate.iter().enumerate() {
            let method = match c.method.get(k) {
                Some(s) => s.parse()?,
                None => method_from_path(e)?,
            };
            jobs.push(Job {
                method,
                seed: None,
                estimate: e.clone(),
                truth: truth.clone(),
                stations: stations.clone(),
            });
        }
    }

    let mut reports: Vec<EvalReport> = Vec::with_capacity(jobs.len());
    let mut entries = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let truth = io::read_field_csv(&job.truth, None)?;
        let est = io::read_field_csv(&job.estimate, Some(truth.domain()))?;
        let mut rep = crate::eval::relative_errors(&est, &truth, c.floor)?;
        rep.method = Some(job.method);
        rep.seed = job.seed;
        let violation = match &job.stations {
            Some((sf, af)) => {
                let stations = io::read_stations_csv(sf, truth.domain())?;
                let z = io::read_aggregates_csv(af)?;
                let p = build_partition(truth.domain().clone(), stations)?;
                if z.len() != p.m() {
                    return Err(Error::ShapeMismatch(format!("{} volumes for {} stations", z.len(), p.m())));
                }
                Some(p.constraint_violation(est.values(), &z))
            }
            None => None,
        };
        entries.push(EvaluationEntry {
            method: job.method,
            seed: job.seed,
            estimate: job.estimate.clone(),
            mre: rep.mre,
            excluded: rep.excluded,
            evaluated: rep.errors.len(),
            max_error: rep.max_error(),
            constraint_max_violation: violation,
        });
        reports.push(rep);
    }
    io::write_report_csv(c.out.join("report.csv"), &reports)?;
    io::write_cdf_csv(c.out.join("cdf.csv"), &reports)?;
    let evaluation = Evaluation {
        floor: c.floor,
        entries,
    };
    io::write_text(c.out.join("evaluation.json"), &to_json(&evaluation)?)
}

pub fn cmd_plot(c: &PlotCmd) -> Result<()> {
    if c.field.is_empty() && c.cdf.is_none() && c.report.is_none() {
        return Err(Error::Config("nothing to plot; give --field, --cdf or --report".into()));
    }
    for f in &c.field {
        let field = io::read_field_csv(f, None)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
        let caption = if c.title.is_empty() { stem } else { &c.title };
        io::write_text(c.out.join(format!("{stem}.svg")), &plot::heatmap_svg(&field, caption))?;
    }
    if let Some(p) = &c.cdf {
        let curves = io::read_cdf_csv(p)?;
        io::write_text(c.out.join("cdf.svg"), &plot::cdf_svg(&curves, c.x_max, &c.title))?;
    }
    if let Some(p) = &c.report {
        let rows = io::read_report_csv(p)?;
        if rows.is_empty() {
            return Err(Error::schema(p, 1, "report has no rows"));
        }
        io::write_text(c.out.join("mre.svg"), &plot::mre_bar_svg(&rows, &c.title))?;
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_methods() {
        assert_eq!(parse_range("3").unwrap(), (3, 3));
        assert_eq!(parse_range("3-5").unwrap(), (3, 5));
        assert!(parse_range("x").is_err());
        assert_eq!(parse_time_range("0:10").unwrap(), (0, 10));
        assert!(parse_time_range("10:0").is_err());
        assert_eq!(parse_methods("all").unwrap(), Method::ALL.to_vec());
        assert_eq!(parse_methods("css,PE,css").unwrap(), vec![Method::Css, Method::Pe]);
        assert!(parse_methods("nope").is_err());
        assert!(parse_methods("").is_err());
    }

    #[test]
    fn arguments_parse() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "spatial-css", "recover", "--synth", "--stations", "15", "--method", "all", "--out", "x",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Recover(_)));
        assert!(Cli::try_parse_from(["spatial-css", "recover", "--synth", "--truth", "t.csv", "--out", "x"]).is_err());
    }
}
