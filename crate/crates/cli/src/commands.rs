use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use sigma_core::analysis::{
    self, default_slice_times, default_window_r, extract_cutoff, hyperbola_fit, linear_fit,
    CutoffExtraction, HyperbolaFit, LinearFit, SweepRow, Window, WindowRule,
};
use sigma_core::geodesic::{collapse_time_integral, predict_height, GeodesicModel};
use sigma_core::solver::{self, OriginTrace, RunOutput, SimConfig};
use sigma_core::Error as CoreError;

use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_float, Manifest, Table};

pub const OUTPUT_ROOT_ENV: &str = "SIGMA_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "sigma-out";

/// `$SIGMA_OUTPUT_ROOT/<name>`, or `sigma-out/<name>`.
pub fn default_output_dir(name: &str) -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
        .join(name)
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    /// Radial spacing
    #[arg(long, default_value_t = solver::DEFAULT_DR)]
    pub dr: f64,
    /// Time step
    #[arg(long, default_value_t = solver::DEFAULT_DT)]
    pub dt: f64,
    /// Outer radius of the grid
    #[arg(long, default_value_t = solver::DEFAULT_R_MAX)]
    pub rmax: f64,
    /// Corrector passes per step
    #[arg(long, default_value_t = solver::DEFAULT_CORRECTOR_ITERS)]
    pub iters: usize,
    /// Step budget
    #[arg(long, default_value_t = solver::DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    /// Record the origin every N steps
    #[arg(long, default_value_t = 1)]
    pub sample_every: u64,
    /// Number of default time slices (ignored with --slice-times)
    #[arg(long, default_value_t = analysis::DEFAULT_SLICE_COUNT)]
    pub num_slices: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Initial height f(r, 0)
    #[arg(long, allow_hyphen_values = true)]
    pub f0: f64,
    /// Initial velocity d/dt f(r, 0)
    #[arg(long, allow_hyphen_values = true)]
    pub v0: f64,
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Halt once f(0, t) drops to this height [default: 0.05 f0]
    #[arg(long)]
    pub stop_height: Option<f64>,
    /// Comma-separated snapshot times [default: 10 slices up to 0.7 f0/|v0|]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub slice_times: Option<Vec<f64>>,
    /// Output directory [default: $SIGMA_OUTPUT_ROOT/run]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write gnuplot scripts for the trace and slices
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// Fit window start (overrides the window rule)
    #[arg(long, allow_hyphen_values = true)]
    pub t_lo: Option<f64>,
    /// Fit window end (overrides the window rule)
    #[arg(long, allow_hyphen_values = true)]
    pub t_hi: Option<f64>,
    /// Fraction of the run skipped at the start
    #[arg(long, default_value_t = WindowRule::default().skip_fraction)]
    pub skip_fraction: f64,
    /// Samples below this multiple of the stop height are dropped
    #[arg(long, default_value_t = WindowRule::default().min_height_factor)]
    pub min_height_factor: f64,
    /// Fit the whole trace
    #[arg(long)]
    pub whole: bool,
}

impl WindowArgs {
    pub fn rule(&self) -> WindowRule {
        if self.whole {
            WindowRule::whole()
        } else {
            WindowRule {
                skip_fraction: self.skip_fraction,
                min_height_factor: self.min_height_factor,
            }
        }
    }

    fn resolve(&self, trace: &OriginTrace, stop_height: f64) -> CliResult<Window> {
        let mut w = self
            .rule()
            .resolve(trace, stop_height)
            .map_err(|e| CliError::Extraction(e.to_string()))?;
        if let Some(lo) = self.t_lo {
            w.t_lo = lo;
        }
        if let Some(hi) = self.t_hi {
            w.t_hi = hi;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Origin trace (t, f_origin) for the cutoff extraction
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Time slices (t, r, f) for the hyperbola series
    #[arg(long)]
    pub slices: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Stop height of the run [default: from the manifest, else 0.05 f(0, 0)]
    #[arg(long)]
    pub stop_height: Option<f64>,
    /// Hyperbola fit radius [default: 2 f0]
    #[arg(long)]
    pub window_r: Option<f64>,
    /// Initial height [default: from the manifest]
    #[arg(long)]
    pub f0: Option<f64>,
    /// Output directory [default: the directory of the input]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Kinetic constant c
    #[arg(long)]
    pub c: Option<f64>,
    /// Lagrangian cutoff radius R
    #[arg(long = "R")]
    pub cutoff: Option<f64>,
    /// Initial height
    #[arg(long)]
    pub f0: Option<f64>,
    /// Take c, R, f0 (and the fit window) from a fit.csv
    #[arg(long)]
    pub from_fit: Option<PathBuf>,
    /// Comma-separated prediction times
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Evenly spaced prediction times on [0, t_end]
    #[arg(long)]
    pub num_points: Option<usize>,
    /// End of the evenly spaced range [default: time to reach 0.05 f0]
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Simulated trace to overlay
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Trace samples used in the overlay
    #[arg(long, default_value_t = 1000)]
    pub compare_points: usize,
    /// Output directory [default: $SIGMA_OUTPUT_ROOT/predict]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Vary {
    V0,
    F0,
}

impl Vary {
    fn name(self) -> &'static str {
        match self {
            Vary::V0 => "v0",
            Vary::F0 => "f0",
        }
    }
}

/// How the outer radius grows with `f0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RmaxScaling {
    /// `rmax` for every row
    Fixed,
    /// `rmax * sqrt(f0)`
    Sqrt,
    /// `rmax * f0`
    Linear,
}

impl RmaxScaling {
    pub fn apply(self, rmax: f64, f0: f64) -> f64 {
        match self {
            RmaxScaling::Fixed => rmax,
            RmaxScaling::Sqrt => rmax * f0.sqrt(),
            RmaxScaling::Linear => rmax * f0,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            RmaxScaling::Fixed => "rmax",
            RmaxScaling::Sqrt => "rmax*f0^0.5",
            RmaxScaling::Linear => "rmax*f0",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Parameter to vary
    #[arg(long, value_enum)]
    pub vary: Vary,
    /// Comma-separated values of the varied parameter
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub values: Vec<f64>,
    /// Fixed initial height (when varying v0)
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub f0: f64,
    /// Fixed initial velocity (when varying f0)
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    pub v0: f64,
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Outer-radius rule as a function of f0
    #[arg(long, value_enum, default_value_t = RmaxScaling::Sqrt)]
    pub rmax_scaling: RmaxScaling,
    /// Halt height as a fraction of f0
    #[arg(long, default_value_t = solver::DEFAULT_STOP_FRACTION)]
    pub stop_fraction: f64,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Concurrent runs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory [default: $SIGMA_OUTPUT_ROOT/sweep]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script for the R vs 1/|v0| fit
    #[arg(long)]
    pub gnuplot: bool,
}

fn usage(e: CoreError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn build_config(
    f0: f64,
    v0: f64,
    mesh: &MeshArgs,
    r_max: f64,
    stop_height: Option<f64>,
    slice_times: Option<Vec<f64>>,
) -> CliResult<SimConfig> {
    let cfg = SimConfig {
        f0,
        v0,
        dr: mesh.dr,
        dt: mesh.dt,
        r_max,
        corrector_iters: mesh.iters,
        stop_height: stop_height.unwrap_or(solver::DEFAULT_STOP_FRACTION * f0),
        max_steps: mesh.max_steps,
        sample_every: mesh.sample_every,
        slice_times: slice_times.unwrap_or_else(|| default_slice_times(f0, v0, mesh.num_slices)),
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn join_times(times: &[f64]) -> String {
    times.iter().map(|t| fmt_float(*t)).collect::<Vec<_>>().join(";")
}

fn run_manifest(cfg: &SimConfig, out: &RunOutput, dir: &Path) -> Manifest {
    let mut m = Manifest::default();
    m.push("tool_version", env!("CARGO_PKG_VERSION"))
        .push("created_at", chrono::Utc::now().to_rfc3339())
        .push("output_dir", dir.display())
        .push("f0", fmt_float(cfg.f0))
        .push("v0", fmt_float(cfg.v0))
        .push("dr", fmt_float(cfg.dr))
        .push("dt", fmt_float(cfg.dt))
        .push("r_max_requested", fmt_float(cfg.r_max))
        .push("r_max", fmt_float(out.grid.r_max()))
        .push("n_points", out.grid.n_points())
        .push("corrector_iters", cfg.corrector_iters)
        .push("stop_height", fmt_float(cfg.stop_height))
        .push("max_steps", cfg.max_steps)
        .push("sample_every", cfg.sample_every)
        .push("slice_times", join_times(&cfg.slice_times))
        .push("halt_reason", out.halt)
        .push("steps", out.steps)
        .push("t_end", fmt_float(out.steps as f64 * cfg.dt))
        .push("artifacts", format!("{};{}", io::TRACE_FILE, io::SLICES_FILE));
    m
}

/// Writes trace and slices, then the manifest.
pub fn write_run_artifacts(
    dir: &Path,
    cfg: &SimConfig,
    out: &RunOutput,
    extra: &[(&str, String)],
    gnuplot: bool,
) -> anyhow::Result<()> {
    io::prepare_output_dir(dir)?;
    io::write_trace(&dir.join(io::TRACE_FILE), &out.trace)?;
    io::write_slices(&dir.join(io::SLICES_FILE), &out.slices, &out.grid)?;
    if gnuplot {
        write_text(
            &dir.join("trace.gp"),
            "set datafile separator ','\nset xlabel 't'\nset ylabel 'f(0,t)'\n\
             plot 'trace.csv' skip 1 using 1:2 with lines title 'f(0,t)'\n",
        )?;
        write_text(
            &dir.join("slices.gp"),
            "set datafile separator ','\nset xlabel 'r'\nset ylabel 'f(r,T)'\n\
             plot 'slices.csv' skip 1 using 2:3 with lines title 'f(r,T)'\n",
        )?;
    }
    let mut manifest = run_manifest(cfg, out, dir);
    for (k, v) in extra {
        manifest.push(k, v);
    }
    manifest.write(&dir.join(io::MANIFEST_FILE))
}

fn write_text(path: &Path, body: &str) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub output: RunOutput,
}

pub fn cmd_run(args: &RunArgs) -> CliResult<RunSummary> {
    let cfg = build_config(
        args.f0,
        args.v0,
        &args.mesh,
        args.mesh.rmax,
        args.stop_height,
        args.slice_times.clone(),
    )?;
    let dir = args.out.clone().unwrap_or_else(|| default_output_dir("run"));
    let output = solver::run(&cfg).map_err(usage)?;
    write_run_artifacts(&dir, &cfg, &output, &[], args.gnuplot)?;
    if output.halt == solver::HaltReason::BlowUpPassed && output.trace.len() <= 1 {
        return Err(CliError::BlowUpBeforeSample(format!(
            "run in {} recorded no sample after t = 0",
            dir.display()
        )));
    }
    Ok(RunSummary { dir, output })
}

fn extraction_error(e: CoreError, window: Window) -> CliError {
    match e {
        CoreError::ExtractionUndefined { .. } | CoreError::SingularFit(_) => {
            CliError::Extraction(format!("{e} (window t in [{}, {}])", window.t_lo, window.t_hi))
        }
        other => CliError::Extraction(other.to_string()),
    }
}

pub const FIT_HEADER: [&str; 9] = ["m", "b", "rms", "n_points", "c", "R", "window_lo", "window_hi", "f0"];

pub fn write_fit(path: &Path, x: &CutoffExtraction, f0: f64) -> anyhow::Result<()> {
    io::write_csv(
        path,
        &FIT_HEADER,
        [[
            fmt_float(x.fit.slope),
            fmt_float(x.fit.intercept),
            fmt_float(x.fit.rms_residual),
            x.fit.n_points.to_string(),
            fmt_float(x.c),
            fmt_float(x.cutoff),
            fmt_float(x.window.t_lo),
            fmt_float(x.window.t_hi),
            fmt_float(f0),
        ]],
    )
}

pub const HYPERBOLA_HEADER: [&str; 6] = ["T", "a", "b", "k", "minus_b_over_a", "rms"];

#[derive(Debug, Clone, Default)]
pub struct FitSummary {
    pub extraction: Option<CutoffExtraction>,
    pub hyperbolas: Vec<(f64, HyperbolaFit)>,
    pub hyperbola_failures: Vec<(f64, String)>,
    pub trend: Option<LinearFit>,
}

/// Extraction on a trace file with the window resolved as `cmd_fit` does.
pub fn fit_trace_file(path: &Path, window: &WindowArgs, stop_height: Option<f64>) -> CliResult<(CutoffExtraction, f64)> {
    let trace = io::read_trace(path)?;
    let first = trace
        .samples
        .first()
        .ok_or_else(|| CliError::Extraction(format!("{} is empty", path.display())))?;
    let manifest = Manifest::beside(path);
    let f0 = manifest.as_ref().and_then(|m| m.get_f64("f0")).unwrap_or(first.f);
    let stop = stop_height
        .or_else(|| manifest.as_ref().and_then(|m| m.get_f64("stop_height")))
        .unwrap_or(solver::DEFAULT_STOP_FRACTION * first.f);
    let w = window.resolve(&trace, stop)?;
    let x = extract_cutoff(&trace, w).map_err(|e| extraction_error(e, w))?;
    Ok((x, f0))
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<FitSummary> {
    if args.trace.is_none() && args.slices.is_none() {
        return Err(CliError::Usage("fit needs --trace and/or --slices".into()));
    }
    let mut summary = FitSummary::default();

    if let Some(path) = &args.trace {
        let dir = args
            .out
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let (x, f0) = fit_trace_file(path, &args.window, args.stop_height)?;
        write_fit(&dir.join(io::FIT_FILE), &x, f0)?;
        println!(
            "fit: m = {:.6e}, b = {:.6e}, rms = {:.3e}, c = {:.6}, R = {:.4} over t in [{:.4}, {:.4}] ({} points)",
            x.fit.slope, x.fit.intercept, x.fit.rms_residual, x.c, x.cutoff, x.window.t_lo, x.window.t_hi, x.fit.n_points
        );
        summary.extraction = Some(x);
    }

    if let Some(path) = &args.slices {
        let dir = args
            .out
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let f0 = args.f0.or_else(|| Manifest::beside(path).and_then(|m| m.get_f64("f0")));
        let window_r = match (args.window_r, f0) {
            (Some(w), _) => w,
            (None, Some(f0)) => default_window_r(f0),
            (None, None) => {
                return Err(CliError::Usage(
                    "hyperbola fits need --window-r or --f0 (no manifest beside the slices)".into(),
                ))
            }
        };
        let (grid, slices) = io::read_slices(path)?;
        for slice in slices.iter().filter(|s| s.t > 0.0) {
            match hyperbola_fit(slice, &grid, window_r, None) {
                Ok(h) => {
                    println!(
                        "hyperbola T = {:.4}: a = {:.6e}, b = {:.6e}, k = {:.8}, -b/a = {:.6e}, rms = {:.3e}",
                        slice.t, h.a, h.b, h.k, h.minus_b_over_a(), h.rms_residual
                    );
                    summary.hyperbolas.push((slice.t, h));
                }
                Err(e) => {
                    eprintln!("hyperbola T = {}: {e}", slice.t);
                    summary.hyperbola_failures.push((slice.t, e.to_string()));
                }
            }
        }
        io::write_csv(
            &dir.join(io::HYPERBOLA_FILE),
            &HYPERBOLA_HEADER,
            summary.hyperbolas.iter().map(|(t, h)| {
                [
                    fmt_float(*t),
                    fmt_float(h.a),
                    fmt_float(h.b),
                    fmt_float(h.k),
                    fmt_float(h.minus_b_over_a()),
                    fmt_float(h.rms_residual),
                ]
            }),
        )?;
        let trend_points: Vec<(f64, f64)> = summary
            .hyperbolas
            .iter()
            .map(|(t, h)| (*t, h.minus_b_over_a()))
            .collect();
        if let Ok(trend) = linear_fit(&trend_points) {
            println!(
                "-b/a vs T: slope = {:.6e}, intercept = {:.6e}, rms = {:.3e}",
                trend.slope, trend.intercept, trend.rms_residual
            );
            summary.trend = Some(trend);
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct PredictSummary {
    pub model: GeodesicModel,
    pub predicted: Vec<(f64, Option<f64>)>,
    pub max_gap: Option<f64>,
}

fn evenly_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<PredictSummary> {
    let fit = args.from_fit.as_deref().map(Table::read).transpose()?;
    let from_fit = |name: &str| -> CliResult<Option<f64>> {
        fit.as_ref().map(|t| t.scalar(name)).transpose().map_err(CliError::from)
    };
    let c = args.c.or(from_fit("c")?);
    let cutoff = args.cutoff.or(from_fit("R")?);
    let f0 = args.f0.or(from_fit("f0")?);
    let (Some(c), Some(cutoff), Some(f0)) = (c, cutoff, f0) else {
        return Err(CliError::Usage("predict needs --c, --R and --f0, or --from-fit".into()));
    };
    let model = GeodesicModel::new(c, cutoff, f0).map_err(usage)?;
    let dir = args.out.clone().unwrap_or_else(|| default_output_dir("predict"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let times = match (&args.times, args.num_points) {
        (Some(t), _) => t.clone(),
        (None, n) => {
            let t_end = match args.t_end {
                Some(t) => t,
                None => collapse_time_integral(solver::DEFAULT_STOP_FRACTION * f0, &model).map_err(usage)?,
            };
            evenly_spaced(0.0, t_end, n.unwrap_or(100))
        }
    };
    let predicted: Vec<(f64, Option<f64>)> = times
        .iter()
        .map(|&t| match predict_height(t, &model) {
            Ok(f) => (t, Some(f)),
            Err(e) => {
                eprintln!("t = {t}: {e}");
                (t, None)
            }
        })
        .collect();
    io::write_csv(
        &dir.join(io::PREDICTED_FILE),
        &["t", "f_predicted"],
        predicted
            .iter()
            .map(|(t, f)| [fmt_float(*t), fmt_float(f.unwrap_or(f64::NAN))]),
    )?;

    let mut max_gap = None;
    if let Some(trace_path) = &args.compare {
        let trace = io::read_trace(trace_path)?;
        let window = match (from_fit("window_lo")?, from_fit("window_hi")?) {
            (Some(lo), Some(hi)) => Window::new(lo, hi),
            _ => Window::everything(),
        };
        let (rows, gap) = overlay(&model, &trace, window, args.compare_points)?;
        io::write_csv(
            &dir.join(io::OVERLAY_FILE),
            &["t", "f_simulated", "f_predicted", "abs_gap"],
            rows.iter()
                .map(|&(t, s, p)| [fmt_float(t), fmt_float(s), fmt_float(p), fmt_float((p - s).abs())]),
        )?;
        io::write_csv(
            &dir.join("overlay_summary.csv"),
            &["max_abs_gap", "n_points", "window_lo", "window_hi"],
            [[fmt_float(gap), rows.len().to_string(), fmt_float(window.t_lo), fmt_float(window.t_hi)]],
        )?;
        if args.gnuplot {
            write_text(
                &dir.join("overlay.gp"),
                "set datafile separator ','\nset xlabel 't'\nset ylabel 'f(0,t)'\n\
                 plot 'overlay.csv' skip 1 using 1:2 with lines title 'simulated', \
                 '' skip 1 using 1:3 with lines title 'predicted'\n",
            )?;
        }
        println!("overlay: max |f_pred - f_sim| = {gap:.6e} over {} samples", rows.len());
        max_gap = Some(gap);
    }
    Ok(PredictSummary {
        model,
        predicted,
        max_gap,
    })
}

/// `(t, f_simulated, f_predicted)`.
pub type OverlayRow = (f64, f64, f64);

/// Overlay rows at up to `max_points` evenly chosen trace
/// samples inside `window`, and the largest absolute gap.
pub fn overlay(
    model: &GeodesicModel,
    trace: &OriginTrace,
    window: Window,
    max_points: usize,
) -> CliResult<(Vec<OverlayRow>, f64)> {
    let inside: Vec<_> = trace.samples.iter().filter(|s| window.contains(s.t)).collect();
    if inside.is_empty() || max_points == 0 {
        return Err(CliError::Usage("no trace samples inside the comparison window".into()));
    }
    let m = max_points.min(inside.len());
    let picks: Vec<usize> = if m == 1 {
        vec![0]
    } else {
        (0..m)
            .map(|i| ((i as f64) * (inside.len() - 1) as f64 / (m - 1) as f64).round() as usize)
            .collect()
    };
    let mut rows = Vec::with_capacity(m);
    let mut gap = 0.0_f64;
    for i in picks {
        let s = inside[i];
        let p = predict_height(s.t, model).map_err(|e| CliError::Usage(e.to_string()))?;
        gap = gap.max((p - s.f).abs());
        rows.push((s.t, s.f, p));
    }
    Ok((rows, gap))
}

pub const SWEEP_HEADER: [&str; 12] = [
    "v0", "f0", "dr", "dt", "r_max", "c", "R", "fit_rms", "window_lo", "window_hi", "halt", "status",
];

fn sweep_record(row: &SweepRow) -> [String; 12] {
    let cfg = &row.config;
    let (c, r, rms, lo, hi, status) = match &row.outcome {
        Ok(x) => (x.c, x.cutoff, x.fit.rms_residual, x.window.t_lo, x.window.t_hi, "ok".to_string()),
        Err(e) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, e.clone()),
    };
    [
        fmt_float(cfg.v0),
        fmt_float(cfg.f0),
        fmt_float(cfg.dr),
        fmt_float(cfg.dt),
        fmt_float(cfg.r_max),
        fmt_float(c),
        fmt_float(r),
        fmt_float(rms),
        fmt_float(lo),
        fmt_float(hi),
        row.halt.map_or_else(|| "none".to_string(), |h| h.to_string()),
        status,
    ]
}

/// Aligned plain-text rendering of a sweep.
pub fn sweep_text(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>10} {:>6} {:>8} {:>10} {:>10} {:>10}  {}\n",
        "v0", "f0", "r_max", "c", "R", "fit_rms", "status"
    );
    for row in rows {
        let cfg = &row.config;
        match &row.outcome {
            Ok(x) => s.push_str(&format!(
                "{:>10} {:>6} {:>8.2} {:>10.5} {:>10.2} {:>10.3e}  ok\n",
                cfg.v0, cfg.f0, cfg.r_max, x.c, x.cutoff, x.fit.rms_residual
            )),
            Err(e) => s.push_str(&format!(
                "{:>10} {:>6} {:>8.2} {:>10} {:>10} {:>10}  {e}\n",
                cfg.v0, cfg.f0, cfg.r_max, "-", "-", "-"
            )),
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
    pub rinv_fit: Option<LinearFit>,
}

pub fn row_dir_name(index: usize, vary: Vary, value: f64) -> String {
    format!("row{index:02}_{}_{value}", vary.name())
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<SweepSummary> {
    if args.values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let configs = args
        .values
        .iter()
        .map(|&value| {
            let (f0, v0) = match args.vary {
                Vary::V0 => (args.f0, value),
                Vary::F0 => (value, args.v0),
            };
            let r_max = args.rmax_scaling.apply(args.mesh.rmax, f0);
            build_config(f0, v0, &args.mesh, r_max, Some(args.stop_fraction * f0), None)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let dir = args.out.clone().unwrap_or_else(|| default_output_dir("sweep"));
    io::prepare_output_dir(&dir)?;
    let rule = args.window.rule();
    let rule_name = args.rmax_scaling.describe();
    let persist = |i: usize, cfg: &SimConfig, out: &RunOutput, x: &sigma_core::Result<CutoffExtraction>| {
        let row_dir = dir.join(row_dir_name(i, args.vary, args.values[i]));
        if let Ok(x) = x {
            fs::create_dir_all(&row_dir).map_err(|e| e.to_string())?;
            write_fit(&row_dir.join(io::FIT_FILE), x, cfg.f0).map_err(|e| format!("{e:#}"))?;
        }
        write_run_artifacts(&row_dir, cfg, out, &[("r_max_rule", rule_name.to_string())], false)
            .map_err(|e| format!("{e:#}"))
    };
    let rows = analysis::sweep_rows(&configs, rule, args.jobs, persist);

    io::write_csv(&dir.join(io::SWEEP_FILE), &SWEEP_HEADER, rows.iter().map(sweep_record))?;
    write_text(&dir.join(io::SWEEP_TEXT_FILE), &sweep_text(&rows))?;
    print!("{}", sweep_text(&rows));

    let mut rinv_fit = None;
    if args.vary == Vary::V0 {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|x| (1.0 / r.config.v0.abs(), x.cutoff)))
            .collect();
        io::write_csv(
            &dir.join(io::RINV_FILE),
            &["inv_abs_v0", "R"],
            points.iter().map(|(x, y)| [fmt_float(*x), fmt_float(*y)]),
        )?;
        if let Ok(fit) = linear_fit(&points) {
            io::write_csv(
                &dir.join(io::RINV_FIT_FILE),
                &["slope", "intercept", "rms", "n_points"],
                [[
                    fmt_float(fit.slope),
                    fmt_float(fit.intercept),
                    fmt_float(fit.rms_residual),
                    fit.n_points.to_string(),
                ]],
            )?;
            println!("R vs 1/|v0|: slope = {:.4}, intercept = {:.4}", fit.slope, fit.intercept);
            if args.gnuplot {
                write_text(
                    &dir.join("rinv.gp"),
                    &format!(
                        "set datafile separator ','\nset xlabel '1/|v0|'\nset ylabel 'R'\n\
                         plot 'rinv.csv' skip 1 using 1:2 with points title 'R', \
                         {} * x + {} title 'least squares'\n",
                        fmt_float(fit.slope),
                        fmt_float(fit.intercept)
                    ),
                )?;
            }
            rinv_fit = Some(fit);
        }
    }

    let mut manifest = Manifest::default();
    manifest
        .push("tool_version", env!("CARGO_PKG_VERSION"))
        .push("created_at", chrono::Utc::now().to_rfc3339())
        .push("output_dir", dir.display())
        .push("vary", args.vary.name())
        .push("values", join_times(&args.values))
        .push("r_max_rule", rule_name)
        .push("rmax", fmt_float(args.mesh.rmax))
        .push("jobs", args.jobs)
        .push("window_skip_fraction", fmt_float(rule.skip_fraction))
        .push("window_min_height_factor", fmt_float(rule.min_height_factor))
        .push("rows_ok", rows.iter().filter(|r| r.outcome.is_ok()).count())
        .push("rows_total", rows.len());
    manifest.write(&dir.join(io::MANIFEST_FILE))?;

    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(CliError::AllRowsFailed);
    }
    Ok(SweepSummary { dir, rows, rinv_fit })
}
