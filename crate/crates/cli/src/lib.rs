//! Command-line front end: input resolution, pipeline dispatch and output
//! writing. `run` returns the process exit code.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use geovortex::advect::{cauchy_green, flow_map_gradient, ftle, AdvectOptions, DEFAULT_TOL as ADVECT_TOL};
use geovortex::export::{curve_records, export_curves, export_scalar, render_svg};
use geovortex::fieldgrid::{Grid2D, ScalarField, SymTensorField};
use geovortex::ingest::{
    geostrophic_velocity, load_dataset, polar_metric_demo, AnalyticFlow, BoundedFlow, DatasetPayload, EarthParams,
    GeostrophicPrefactor, Velocity, VelocitySeries, DEFAULT_THETA_MIN, SECONDS_PER_DAY,
};
use geovortex::nullgeo::DEFAULT_TOL as ORBIT_TOL;
use geovortex::selftest::run_suite;
use geovortex::strain::{okubo_weiss, rate_of_strain, strain_from_streamfunction};
use geovortex::vortex::{
    closed_null_geodesics, elliptic_lcs, elliptic_oecs, OecsInput, VortexBoundaryReport, VortexOptions,
    DEFAULT_LAMBDAS,
};
use geovortex::{Error, VectorField2D};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable capping the worker count (0 = automatic).
pub const THREADS_ENV: &str = "GEOVORTEX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "geovortex", version, about = "Objective vortex boundaries as closed null-geodesics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Elliptic OECS from instantaneous strain.
    Oecs(OecsArgs),
    /// Elliptic LCS from the Cauchy–Green tensor over [t0, t0 + T].
    Lcs(LcsArgs),
    /// Finite-time Lyapunov exponent field.
    Ftle(FtleArgs),
    /// Okubo–Weiss field.
    Ow(OwArgs),
    /// Closed null-geodesics of a tensor dataset for given α.
    Geodesics(GeodesicsArgs),
    /// Runs the built-in acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Prefactor {
    /// g / (R² f cos θ).
    R2,
    /// g / (R f cos θ).
    R,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset descriptor (JSON), or one of demo_polar_metric,
    /// demo_double_gyre, demo_saddle, demo_rotation.
    #[arg(long)]
    pub input: String,
    /// Sampling grid for built-in flows and analysis grid for flow maps,
    /// as N1xN2. Defaults to the data grid.
    #[arg(long, value_parser = parse_grid_size)]
    pub grid: Option<(usize, usize)>,
    /// Geostrophic prefactor for sea-surface height input.
    #[arg(long, value_enum, default_value = "r2")]
    pub prefactor: Prefactor,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write an SVG overview.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    /// Relative tolerance of the reduced-flow integrator.
    #[arg(long, default_value_t = ORBIT_TOL)]
    pub tol: f64,
    /// Singular-set threshold on the flow denominator [default: 1e-8 ‖A‖∞].
    #[arg(long)]
    pub delta_sing: Option<f64>,
    /// Closure distance [default: one grid spacing].
    #[arg(long)]
    pub eps_close: Option<f64>,
    /// Arc-length cap per orbit [default: twice the domain perimeter].
    #[arg(long)]
    pub max_arc_length: Option<f64>,
    /// Seed spacing along the seed level set [default: two grid spacings].
    #[arg(long)]
    pub stride: Option<f64>,
    /// Seed tangent angle in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub seed_phi0: f64,
}

#[derive(Debug, Args)]
pub struct FlowMapArgs {
    /// Start time.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    /// Integration time T (negative for backward time).
    #[arg(long = "duration", allow_hyphen_values = true)]
    pub duration: f64,
    /// Auxiliary-grid half width [default: a tenth of the grid spacing].
    #[arg(long)]
    pub aux_delta: Option<f64>,
    /// Relative tolerance of trajectory integration.
    #[arg(long, default_value_t = ADVECT_TOL)]
    pub advect_tol: f64,
}

#[derive(Debug, Args)]
pub struct OecsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Time of the snapshot.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub time: f64,
    /// Stretch rates μ [default: −0.10..0.10 step 0.01 times median |s2|].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LcsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub flow: FlowMapArgs,
    /// Stretching ratios λ [default: 0.9,0.95,1.0,1.05,1.1].
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Skip advecting each boundary to check its stretching.
    #[arg(long)]
    pub no_advect_check: bool,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FtleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub flow: FlowMapArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OwArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Time of the snapshot.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub time: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GeodesicsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Shifts α.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub alpha: Vec<f64>,
    /// Time of the tensor slice.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub time: f64,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Write the curves of the suite's pipeline runs here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_grid_size(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X', ',']).ok_or_else(|| format!("expected N1xN2, got {s:?}"))?;
    let n1 = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let n2 = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    Ok((n1, n2))
}

/// Failure of a subcommand, tagged with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MissingFile(_)
            | Error::Parse(_)
            | Error::BadParams(_)
            | Error::InvalidGrid(_)
            | Error::ShapeMismatch(_)
            | Error::NonFinite(_)
            | Error::NearEquator { .. }
            | Error::NearPole { .. }
            | Error::TimeOutOfRange { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: format!("{e:?}: {e}") }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: msg.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// A resolved input: either a velocity source with its data grid, a
/// streamfunction, or a tensor field.
enum Input {
    Flow { velocity: Box<dyn Velocity>, snapshot: Snapshot, grid: Grid2D },
    Streamfunction(Vec<ScalarField>),
    Tensor(Vec<SymTensorField>),
}

enum Snapshot {
    Analytic(AnalyticFlow),
    Series(VelocitySeries),
}

impl Snapshot {
    fn at(&self, grid: &Grid2D, t: f64) -> geovortex::Result<VectorField2D> {
        match self {
            Snapshot::Analytic(f) => f.sample(grid, t),
            Snapshot::Series(s) => s.at_time(t),
        }
    }
}

fn builtin_grid(name: &str) -> Option<(f64, f64, f64, f64, usize, usize)> {
    match name {
        "demo_polar_metric" => Some((-2.0, 2.0, -2.0, 2.0, 81, 81)),
        "demo_double_gyre" => Some((0.0, 2.0, 0.0, 1.0, 201, 101)),
        "demo_saddle" | "demo_rotation" => Some((-1.0, 1.0, -1.0, 1.0, 65, 65)),
        _ => None,
    }
}

fn resolve_input(args: &InputArgs) -> CliResult<Input> {
    if let Some((a, b, c, d, n1, n2)) = builtin_grid(&args.input) {
        let (n1, n2) = args.grid.unwrap_or((n1, n2));
        let grid = Grid2D::new(a, b, c, d, n1, n2)?;
        if args.input == "demo_polar_metric" {
            return Ok(Input::Tensor(vec![polar_metric_demo(&grid)?]));
        }
        let flow = match args.input.as_str() {
            "demo_double_gyre" => AnalyticFlow::double_gyre(),
            "demo_saddle" => AnalyticFlow::Saddle,
            _ => AnalyticFlow::SolidRotation { omega: 1.0 },
        };
        let bounds = flow.natural_domain().unwrap_or((f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY));
        let velocity = Box::new(BoundedFlow::new(flow, bounds)?);
        return Ok(Input::Flow { velocity, snapshot: Snapshot::Analytic(flow), grid });
    }
    if args.input.starts_with("demo_") {
        return Err(config_error(format!("unknown built-in input {:?}", args.input)));
    }
    let dataset = load_dataset(Path::new(&args.input))?;
    let data_grid = dataset.descriptor.grid()?;
    let grid = match args.grid {
        Some((n1, n2)) => Grid2D::new(data_grid.x1_min(), data_grid.x1_max(), data_grid.x2_min(), data_grid.x2_max(), n1, n2)?,
        None => data_grid,
    };
    Ok(match (dataset.descriptor.kind, dataset.payload) {
        (_, DatasetPayload::Velocity(slices)) => {
            let series = VelocitySeries::new(slices)?;
            Input::Flow { velocity: Box::new(series.clone()), snapshot: Snapshot::Series(series), grid }
        }
        (geovortex::ingest::DatasetKind::Ssh, DatasetPayload::Scalar(h)) => {
            let prefactor = match args.prefactor {
                Prefactor::R2 => GeostrophicPrefactor::RSquared,
                Prefactor::R => GeostrophicPrefactor::R,
            };
            let v = geostrophic_velocity(&h, &EarthParams::default(), prefactor, DEFAULT_THETA_MIN)?;
            // Angular rates per second become per day, the descriptor's time unit.
            let series = VelocitySeries::new(v)?.with_rate_scale(SECONDS_PER_DAY);
            let snapshot_slices = series
                .slices()
                .iter()
                .map(|s| {
                    let u = s.u().iter().map(|x| x * SECONDS_PER_DAY).collect();
                    let w = s.v().iter().map(|x| x * SECONDS_PER_DAY).collect();
                    let valid = (0..s.grid().len()).map(|k| s.is_valid_node(k)).collect();
                    Ok(VectorField2D::with_mask(s.grid().clone(), u, w, valid)?.with_time(s.time.unwrap_or(0.0)))
                })
                .collect::<geovortex::Result<Vec<_>>>()?;
            Input::Flow { velocity: Box::new(series), snapshot: Snapshot::Series(VelocitySeries::new(snapshot_slices)?), grid }
        }
        (_, DatasetPayload::Scalar(psi)) => Input::Streamfunction(psi),
        (_, DatasetPayload::Tensor(t)) => Input::Tensor(t),
    })
}

/// Slice at time `t`: exact match, or the only slice.
fn pick_slice<T: Clone>(slices: &[T], time_of: impl Fn(&T) -> Option<f64>, t: f64) -> CliResult<T> {
    if slices.len() == 1 {
        return Ok(slices[0].clone());
    }
    slices
        .iter()
        .find(|s| time_of(s) == Some(t))
        .cloned()
        .ok_or_else(|| config_error(format!("no data slice at time {t}")))
}

fn vortex_options(orbit: &OrbitArgs) -> CliResult<VortexOptions> {
    let mut o = VortexOptions::default();
    let positive = |name: &str, v: Option<f64>| -> CliResult<()> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(config_error(format!("--{name} must be positive"))),
            _ => Ok(()),
        }
    };
    positive("tol", Some(orbit.tol))?;
    positive("delta-sing", orbit.delta_sing)?;
    positive("eps-close", orbit.eps_close)?;
    positive("max-arc-length", orbit.max_arc_length)?;
    positive("stride", orbit.stride)?;
    o.orbit.tol = orbit.tol;
    o.orbit.delta_sing = orbit.delta_sing;
    o.seed.delta_sing = orbit.delta_sing;
    o.orbit.eps_close = orbit.eps_close;
    o.orbit.max_arc_length = orbit.max_arc_length;
    o.seed.stride = orbit.stride;
    o.seed.phi0 = orbit.seed_phi0;
    o.orbit.phi0 = orbit.seed_phi0;
    Ok(o)
}

fn advect_options(flow: &FlowMapArgs) -> CliResult<AdvectOptions> {
    if !(flow.advect_tol > 0.0) {
        return Err(config_error("--advect-tol must be positive"));
    }
    if let Some(d) = flow.aux_delta {
        if !(d > 0.0) {
            return Err(config_error("--aux-delta must be positive"));
        }
    }
    if !(flow.duration != 0.0 && flow.duration.is_finite()) {
        return Err(config_error("--duration must be non-zero"));
    }
    Ok(AdvectOptions { tol: flow.advect_tol, ..AdvectOptions::default() })
}

fn check_list(name: &str, v: &Option<Vec<f64>>) -> CliResult<()> {
    match v {
        Some(l) if l.is_empty() || l.iter().any(|x| !x.is_finite()) => {
            Err(config_error(format!("--{name} needs a non-empty list of finite values")))
        }
        _ => Ok(()),
    }
}

fn report_json(subcommand: &str, report: &VortexBoundaryReport) -> Value {
    let runs: Vec<Value> = report
        .runs
        .iter()
        .map(|r| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for s in &r.seeds {
                *counts.entry(format!("{:?}", s.status)).or_default() += 1;
            }
            json!({ "parameter": r.parameter, "alpha": r.alpha, "seeds": r.seeds.len(), "status_counts": counts })
        })
        .collect();
    let curves: Vec<Value> = curve_records(report)
        .iter()
        .zip(report.all_curves())
        .map(|(rec, c)| {
            json!({
                "curve_id": rec.curve_id,
                "family_id": rec.family_id,
                "outermost": rec.outermost,
                "parameter": rec.parameter,
                "winding": rec.winding,
                "closure_residual": rec.closure_residual,
                "null_residual": rec.null_residual,
                "stretch_error": rec.stretch_error,
                "advected_segment_error": c.diagnostics.advected_segment_error,
                "alignment_error": c.diagnostics.alignment_error,
                "enclosed_area": c.curve.enclosed_area,
                "vertex_count": rec.vertices.len(),
            })
        })
        .collect();
    json!({
        "subcommand": subcommand,
        "degenerate_metric": report.degenerate_metric,
        "families": report.families.len(),
        "runs": runs,
        "curves": curves,
    })
}

fn write_outputs(
    subcommand: &str,
    report: &VortexBoundaryReport,
    background: Option<&ScalarField>,
    out: &OutputArgs,
) -> CliResult<()> {
    export_curves(report, &out.out)?;
    let text = serde_json::to_string_pretty(&report_json(subcommand, report)).expect("report serializes");
    fs::write(out.out.join("report.json"), text + "\n").map_err(Error::from)?;
    if out.svg {
        render_svg(report, background, &out.out.join("curves.svg"))?;
    }
    eprintln!(
        "{subcommand}: {} curve(s) in {} famil{} written to {}",
        report.curve_count(),
        report.families.len(),
        if report.families.len() == 1 { "y" } else { "ies" },
        out.out.display()
    );
    Ok(())
}

fn run_oecs(a: &OecsArgs) -> CliResult<()> {
    check_list("mu", &a.mu)?;
    let opts = vortex_options(&a.orbit)?;
    let input = resolve_input(&a.input)?;
    let (report, strain) = match &input {
        Input::Flow { snapshot, grid, .. } => {
            let v = snapshot.at(grid, a.time)?;
            elliptic_oecs(OecsInput::Velocity(&v), a.mu.as_deref(), &opts)?
        }
        Input::Streamfunction(psi) => {
            let psi = pick_slice(psi, |p| p.time, a.time)?;
            elliptic_oecs(OecsInput::Streamfunction(&psi), a.mu.as_deref(), &opts)?
        }
        Input::Tensor(_) => return Err(config_error("oecs needs velocity, sea-surface height or streamfunction input")),
    };
    let ow = okubo_weiss(&strain)?;
    write_outputs("oecs", &report, Some(&ow), &a.output)
}

fn run_lcs(a: &LcsArgs) -> CliResult<()> {
    check_list("lambda", &a.lambda)?;
    if a.lambda.as_ref().is_some_and(|l| l.iter().any(|x| *x <= 0.0)) {
        return Err(config_error("--lambda values must be positive"));
    }
    let mut opts = vortex_options(&a.orbit)?;
    opts.advect = advect_options(&a.flow)?;
    opts.aux_delta = a.flow.aux_delta;
    opts.advect_check = !a.no_advect_check;
    let Input::Flow { velocity, grid, .. } = resolve_input(&a.input)? else {
        return Err(config_error("lcs needs velocity or sea-surface height input"));
    };
    let lambdas = a.lambda.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let out = elliptic_lcs(velocity.as_ref(), &grid, a.flow.t0, a.flow.duration, &lambdas, &opts)?;
    let background = ftle(&out.cauchy_green, a.flow.duration)?;
    write_outputs("lcs", &out.report, Some(&background), &a.output)
}

fn run_ftle(a: &FtleArgs) -> CliResult<()> {
    let opts = advect_options(&a.flow)?;
    let Input::Flow { velocity, grid, .. } = resolve_input(&a.input)? else {
        return Err(config_error("ftle needs velocity or sea-surface height input"));
    };
    let t1 = a.flow.t0 + a.flow.duration;
    let cg = cauchy_green(&flow_map_gradient(velocity.as_ref(), &grid, a.flow.t0, t1, a.flow.aux_delta, &opts)?)?;
    let f = ftle(&cg, a.flow.duration)?;
    export_scalar(&f, &a.output.out, "ftle")?;
    if a.output.svg {
        render_svg(&VortexBoundaryReport::default(), Some(&f), &a.output.out.join("ftle.svg"))?;
    }
    eprintln!("ftle written to {}", a.output.out.display());
    Ok(())
}

fn run_ow(a: &OwArgs) -> CliResult<()> {
    let strain = match resolve_input(&a.input)? {
        Input::Flow { snapshot, grid, .. } => rate_of_strain(&snapshot.at(&grid, a.time)?)?,
        Input::Streamfunction(psi) => strain_from_streamfunction(&pick_slice(&psi, |p| p.time, a.time)?)?,
        Input::Tensor(_) => return Err(config_error("ow needs velocity, sea-surface height or streamfunction input")),
    };
    let ow = okubo_weiss(&strain)?;
    export_scalar(&ow, &a.output.out, "ow")?;
    if a.output.svg {
        render_svg(&VortexBoundaryReport::default(), Some(&ow), &a.output.out.join("ow.svg"))?;
    }
    eprintln!("ow written to {}", a.output.out.display());
    Ok(())
}

fn run_geodesics(a: &GeodesicsArgs) -> CliResult<()> {
    check_list("alpha", &Some(a.alpha.clone()))?;
    let opts = vortex_options(&a.orbit)?;
    let Input::Tensor(slices) = resolve_input(&a.input)? else {
        return Err(config_error("geodesics needs a tensor dataset or demo_polar_metric"));
    };
    // Tensor slices carry no time stamp of their own; index them by the descriptor order.
    let tensor = if slices.len() == 1 {
        slices.into_iter().next().expect("one slice")
    } else {
        let k = a.time.round();
        if !(k >= 0.0 && (k as usize) < slices.len() && k == a.time) {
            return Err(config_error(format!("--time selects a slice index in 0..{}", slices.len())));
        }
        slices.into_iter().nth(k as usize).expect("index checked")
    };
    let report = closed_null_geodesics(tensor, &a.alpha, &opts)?;
    write_outputs("geodesics", &report, None, &a.output)
}

fn run_selftest(a: &SelftestArgs) -> CliResult<()> {
    let suite = run_suite();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for o in &suite.outcomes {
        writeln!(lock, "{o}").map_err(Error::from)?;
    }
    if let Some(dir) = &a.out {
        if let Some(p) = &suite.polar {
            export_curves(&p.report, &dir.join("polar"))?;
        }
        if let Some(g) = &suite.gyre {
            export_curves(&g.output.report, &dir.join("double_gyre"))?;
        }
    }
    let failed = suite.outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_RUNTIME, message: format!("{failed} acceptance check(s) failed") });
    }
    Ok(())
}

fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse::<usize>().map_err(|_| config_error(format!("{THREADS_ENV} must be a non-negative integer"))),
        Err(_) => Ok(0),
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Failure { code: EXIT_RUNTIME, message: e.to_string() })?;
    pool.install(|| match &cli.command {
        Command::Oecs(a) => run_oecs(a),
        Command::Lcs(a) => run_lcs(a),
        Command::Ftle(a) => run_ftle(a),
        Command::Ow(a) => run_ow(a),
        Command::Geodesics(a) => run_geodesics(a),
        Command::Selftest(a) => run_selftest(a),
    })
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code: 0 on success, 1 for configuration errors, 2 for failures
/// during the run.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
