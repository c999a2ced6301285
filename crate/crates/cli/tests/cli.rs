use std::fs;
use std::path::Path;
use std::process::Command;

use sigma_cli::commands::{
    cmd_fit, cmd_predict, cmd_run, cmd_sweep, row_dir_name, FitArgs, MeshArgs, PredictArgs, RmaxScaling,
    RunArgs, SweepArgs, Vary, WindowArgs,
};
use sigma_cli::error::{CliError, EXIT_EXTRACTION, EXIT_SWEEP_FAILED, EXIT_USAGE};
use sigma_cli::io::{self, Manifest, Table};
use sigma_core::solver::OriginTrace;

fn mesh(dr: f64, dt: f64, rmax: f64, max_steps: u64) -> MeshArgs {
    MeshArgs {
        dr,
        dt,
        rmax,
        iters: 4,
        max_steps,
        sample_every: 1,
        num_slices: 4,
    }
}

fn window() -> WindowArgs {
    WindowArgs {
        t_lo: None,
        t_hi: None,
        skip_fraction: 0.05,
        min_height_factor: 1.5,
        whole: false,
    }
}

fn run_args(v0: f64, out: &Path) -> RunArgs {
    RunArgs {
        f0: 1.0,
        v0,
        mesh: mesh(0.02, 0.002, 20.0, 1_000_000),
        stop_height: None,
        slice_times: None,
        out: Some(out.to_path_buf()),
        gnuplot: false,
    }
}

fn sweep_args(values: Vec<f64>, jobs: usize, out: &Path) -> SweepArgs {
    SweepArgs {
        vary: Vary::V0,
        values,
        f0: 1.0,
        v0: -0.01,
        mesh: mesh(0.02, 0.002, 20.0, 1_000_000),
        rmax_scaling: RmaxScaling::Sqrt,
        stop_fraction: 0.05,
        window: window(),
        jobs,
        out: Some(out.to_path_buf()),
        gnuplot: false,
    }
}

fn fit_args(trace: Option<&Path>, slices: Option<&Path>) -> FitArgs {
    FitArgs {
        trace: trace.map(Path::to_path_buf),
        slices: slices.map(Path::to_path_buf),
        window: window(),
        stop_height: None,
        window_r: None,
        f0: None,
        out: None,
    }
}

fn predict_args(out: &Path) -> PredictArgs {
    PredictArgs {
        c: None,
        cutoff: None,
        f0: None,
        from_fit: None,
        times: None,
        num_points: None,
        t_end: None,
        compare: None,
        compare_points: 1000,
        out: Some(out.to_path_buf()),
        gnuplot: false,
    }
}

fn sigma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sigma"))
}

#[test]
fn resting_soliton_trace_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = run_args(0.0, dir.path());
    args.mesh = mesh(0.05, 0.01, 5.0, 500);
    let summary = cmd_run(&args).unwrap();
    assert_eq!(summary.output.steps, 500);
    let trace = io::read_trace(&dir.path().join(io::TRACE_FILE)).unwrap();
    assert_eq!(trace.len(), 501);
    assert!(trace.values().all(|f| f == 1.0));
    let manifest = Manifest::read(&dir.path().join(io::MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.get("halt_reason"), Some("max_steps"));
    assert_eq!(manifest.get("steps"), Some("500"));
    assert!(manifest.get("created_at").is_some());
}

#[test]
fn manifest_is_written_after_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = run_args(0.0, dir.path());
    args.mesh = mesh(0.05, 0.01, 5.0, 20);
    cmd_run(&args).unwrap();
    let mtime = |name: &str| fs::metadata(dir.path().join(name)).unwrap().modified().unwrap();
    assert!(mtime(io::MANIFEST_FILE) >= mtime(io::TRACE_FILE));
    assert!(mtime(io::MANIFEST_FILE) >= mtime(io::SLICES_FILE));
}

#[test]
fn collinear_trace_gives_unit_constants() {
    // df/dt = -(-2 ln f - 1)^(-1/2), so 1/fdot^2 = -2 ln f - 1 exactly: m = -2, b = -1.
    let dir = tempfile::tempdir().unwrap();
    let rate = |f: f64| -1.0 / (-2.0 * f.ln() - 1.0).sqrt();
    let h = 1e-3;
    let (mut t, mut f) = (0.0, 0.5);
    let mut samples = vec![(t, f)];
    while f > 0.05 {
        let k1 = rate(f);
        let k2 = rate(f + 0.5 * h * k1);
        let k3 = rate(f + 0.5 * h * k2);
        let k4 = rate(f + h * k3);
        f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        samples.push((t, f));
    }
    let trace: OriginTrace = samples.into_iter().collect();
    let path = dir.path().join(io::TRACE_FILE);
    io::write_trace(&path, &trace).unwrap();

    let mut args = fit_args(Some(&path), None);
    args.window.whole = true;
    let x = cmd_fit(&args).unwrap().extraction.unwrap();
    assert!((x.fit.slope + 2.0).abs() < 1e-4, "{}", x.fit.slope);
    assert!((x.fit.intercept + 1.0).abs() < 1e-4, "{}", x.fit.intercept);
    assert!((x.c - 1.0).abs() < 1e-4);
    assert!((x.cutoff - 1.0).abs() < 1e-4);

    let fit = Table::read(&dir.path().join(io::FIT_FILE)).unwrap();
    assert_eq!(fit.scalar("c").unwrap(), x.c);
    assert_eq!(fit.scalar("R").unwrap(), x.cutoff);
    assert_eq!(fit.scalar("f0").unwrap(), 0.5);
}

#[test]
fn prediction_starts_at_the_initial_height() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = predict_args(dir.path());
    args.c = Some(0.03);
    args.cutoff = Some(50.0);
    args.f0 = Some(1.0);
    args.times = Some(vec![0.0, 10.0, 20.0]);
    let s = cmd_predict(&args).unwrap();
    assert_eq!(s.predicted[0].1, Some(1.0));
    let f: Vec<f64> = s.predicted.iter().map(|p| p.1.unwrap()).collect();
    assert!(f[0] > f[1] && f[1] > f[2]);
    let table = Table::read(&dir.path().join(io::PREDICTED_FILE)).unwrap();
    assert_eq!(table.column("f_predicted").unwrap(), f);
}

#[test]
fn prediction_without_constants_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = predict_args(dir.path());
    args.c = Some(0.03);
    assert!(matches!(cmd_predict(&args), Err(CliError::Usage(_))));
}

#[test]
fn run_fit_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    cmd_run(&run_args(-0.05, &run_dir)).unwrap();
    let trace = run_dir.join(io::TRACE_FILE);
    let slices = run_dir.join(io::SLICES_FILE);
    let fit = cmd_fit(&fit_args(Some(&trace), Some(&slices))).unwrap();
    let x = fit.extraction.unwrap();
    assert!(x.c > 0.0 && x.cutoff > 0.0);
    assert_eq!(fit.hyperbolas.len(), 4);
    assert!(fit.hyperbola_failures.is_empty());
    assert!(fit.trend.is_some());
    assert_eq!(Table::read(&run_dir.join(io::HYPERBOLA_FILE)).unwrap().rows.len(), 4);

    let mut p = predict_args(&dir.path().join("predict"));
    p.from_fit = Some(run_dir.join(io::FIT_FILE));
    p.compare = Some(trace);
    p.compare_points = 200;
    let s = cmd_predict(&p).unwrap();
    assert!(s.max_gap.unwrap() < 0.05);
    let overlay = Table::read(&dir.path().join("predict").join(io::OVERLAY_FILE)).unwrap();
    assert_eq!(overlay.rows.len(), 200);
    let t = overlay.column("t").unwrap();
    assert!(t.first().unwrap() >= &x.window.t_lo && t.last().unwrap() <= &x.window.t_hi);
}

#[test]
fn single_row_sweep_matches_run_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    cmd_run(&run_args(-0.05, &run_dir)).unwrap();
    cmd_fit(&fit_args(Some(&run_dir.join(io::TRACE_FILE)), None)).unwrap();

    let sweep_dir = dir.path().join("sweep");
    cmd_sweep(&sweep_args(vec![-0.05], 1, &sweep_dir)).unwrap();
    let row_dir = sweep_dir.join(row_dir_name(0, Vary::V0, -0.05));
    for name in [io::TRACE_FILE, io::SLICES_FILE, io::FIT_FILE] {
        let a = fs::read(run_dir.join(name)).unwrap();
        let b = fs::read(row_dir.join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let values = vec![-0.05, -0.06];
    let one = cmd_sweep(&sweep_args(values.clone(), 1, &dir.path().join("one"))).unwrap();
    let two = cmd_sweep(&sweep_args(values, 2, &dir.path().join("two"))).unwrap();
    assert_eq!(one.rows.len(), 2);
    for name in [io::SWEEP_FILE, io::RINV_FILE, io::RINV_FIT_FILE] {
        let a = fs::read(dir.path().join("one").join(name)).unwrap();
        let b = fs::read(dir.path().join("two").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let rinv = Table::read(&dir.path().join("one").join(io::RINV_FILE)).unwrap();
    assert_eq!(rinv.column("inv_abs_v0").unwrap(), vec![20.0, 1.0 / 0.06]);
    assert!(two.rinv_fit.is_some());
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let out = sigma().args(["run", "--f0", "1", "--v0", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let out = sigma().args(["run", "--f0", "1", "--v0", "-0.01", "--dt", "0.1", "--dr", "0.01"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn resting_trace_cannot_be_fitted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let status = sigma()
        .args(["run", "--f0", "1", "--v0", "0", "--dr", "0.05", "--dt", "0.01", "--rmax", "5"])
        .args(["--max-steps", "300", "--out", d])
        .output()
        .unwrap();
    assert!(status.status.success());
    let out = sigma()
        .args(["fit", "--trace", &format!("{d}/trace.csv")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_EXTRACTION));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
}

#[test]
fn sweep_with_no_usable_rows_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigma()
        .args(["sweep", "--vary", "v0", "--values", "0,0", "--dr", "0.05", "--dt", "0.01"])
        .args(["--rmax", "5", "--max-steps", "50", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_SWEEP_FAILED));
    let table = Table::read(&dir.path().join(io::SWEEP_FILE)).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(dir.path().join(io::MANIFEST_FILE).exists());
}
