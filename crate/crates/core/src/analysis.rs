//! Post-processing of simulated trajectories.
//!
//! Under the large-cutoff approximation the conserved kinetic quantity gives
//! `1 / f_t^2 ~ (2 ln R - 1 - 2 ln f) / c^2`, so a least-squares line through
//! `(ln f, 1 / f_t^2)` has slope `m = -2 / c^2` and intercept
//! `b = (2 ln R - 1) / c^2`, from which `c = sqrt(-2/m)` and
//! `R = exp(-b/m + 1/2)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::solver::{self, OriginTrace, RunOutput, SimConfig, TimeSlice};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub n_points: usize,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares `y = m x + b`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs 2 points, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() * inv_n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() * inv_n;
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(sxx, sxy), &(x, y)| {
        let dx = x - mean_x;
        (sxx + dx * dx, sxy + dx * (y - mean_y))
    });
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::SingularFit(format!(
            "abscissae are degenerate (sum of squared deviations {sxx})"
        )));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        rms_residual: (sse * inv_n).sqrt(),
        n_points: n,
    })
}

/// Centred differences of the sampled origin height; endpoints dropped.
pub fn trace_velocity(trace: &OriginTrace) -> Result<Vec<(f64, f64)>> {
    let s = &trace.samples;
    if s.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "velocity needs at least 3 samples, got {}",
            s.len()
        )));
    }
    Ok(s.windows(3)
        .map(|w| (w[1].t, (w[2].f - w[0].f) / (w[2].t - w[0].t)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Window {
    pub fn new(t_lo: f64, t_hi: f64) -> Self {
        Self { t_lo, t_hi }
    }

    pub fn everything() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }
}

/// Rule for trimming a trace before extraction: skip the first
/// `skip_fraction` of the run and stop before the origin falls below
/// `min_height_factor * stop_height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRule {
    pub skip_fraction: f64,
    pub min_height_factor: f64,
}

impl Default for WindowRule {
    fn default() -> Self {
        Self {
            skip_fraction: 0.05,
            min_height_factor: 1.5,
        }
    }
}

impl WindowRule {
    /// The whole trace.
    pub fn whole() -> Self {
        Self {
            skip_fraction: 0.0,
            min_height_factor: 0.0,
        }
    }

    pub fn resolve(&self, trace: &OriginTrace, stop_height: f64) -> Result<Window> {
        let (first, last) = match (trace.samples.first(), trace.samples.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InsufficientData("empty trace".into())),
        };
        let t_lo = first.t + self.skip_fraction * (last.t - first.t);
        let floor = self.min_height_factor * stop_height;
        let t_hi = trace
            .samples
            .iter()
            .take_while(|s| s.f >= floor)
            .last()
            .map_or(first.t, |s| s.t);
        Ok(Window::new(t_lo, t_hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffExtraction {
    pub c: f64,
    pub cutoff: f64,
    pub fit: LinearFit,
    pub window: Window,
}

/// `(c, R)` from the slope and intercept of the `(ln f, 1 / f_t^2)` line.
pub fn cutoff_from_line(slope: f64, intercept: f64) -> Result<(f64, f64)> {
    if !(slope < 0.0) {
        return Err(Error::ExtractionUndefined { slope });
    }
    Ok(((-2.0 / slope).sqrt(), (-intercept / slope + 0.5).exp()))
}

/// The `(ln f, 1 / f_t^2)` points of a trace inside `window`.
pub fn extraction_points(trace: &OriginTrace, window: Window) -> Result<Vec<(f64, f64)>> {
    let velocity = trace_velocity(trace)?;
    Ok(trace.samples[1..trace.len() - 1]
        .iter()
        .zip(&velocity)
        .filter(|(s, &(_, v))| window.contains(s.t) && v != 0.0 && s.f > 0.0)
        .map(|(s, &(_, v))| (s.f.ln(), 1.0 / (v * v)))
        .collect())
}

pub fn extract_cutoff(trace: &OriginTrace, window: Window) -> Result<CutoffExtraction> {
    let points = extraction_points(trace, window)?;
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "window [{}, {}] holds {} usable samples",
            window.t_lo,
            window.t_hi,
            points.len()
        )));
    }
    let fit = linear_fit(&points)?;
    let (c, cutoff) = cutoff_from_line(fit.slope, fit.intercept)?;
    Ok(CutoffExtraction { c, cutoff, fit, window })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolaFit {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub rms_residual: f64,
    pub window_r: f64,
    pub iterations: usize,
}

impl HyperbolaFit {
    pub fn eval(&self, r: f64) -> f64 {
        self.k + self.b * (1.0 + (r / self.a).powi(2)).sqrt()
    }

    /// Slope of the asymptote, negated: `-b / a`.
    pub fn minus_b_over_a(&self) -> f64 {
        -self.b / self.a
    }
}

/// Fraction of the linear collapse estimate `f0 / |v0|` covered by the
/// default slice schedule. Later slices sit where the origin dip narrows
/// well inside the fixed fit window.
pub const SLICE_HORIZON_FRACTION: f64 = 0.7;
pub const DEFAULT_SLICE_COUNT: usize = 10;

/// `count` evenly spaced slice times ending at `0.7 f0 / |v0|`; empty when
/// the soliton is not shrinking.
pub fn default_slice_times(f0: f64, v0: f64, count: usize) -> Vec<f64> {
    if !(v0 < 0.0) || count == 0 {
        return Vec::new();
    }
    let horizon = SLICE_HORIZON_FRACTION * f0 / v0.abs();
    (1..=count).map(|k| horizon * k as f64 / count as f64).collect()
}

/// Default hyperbola window: `2 f0`.
pub fn default_window_r(f0: f64) -> f64 {
    2.0 * f0
}

pub const HYPERBOLA_MIN_POINTS: usize = 10;
pub const HYPERBOLA_MAX_ITERS: usize = 200;
pub const HYPERBOLA_STEP_TOL: f64 = 1e-10;

/// Fit diagnostics: the accepted sums of squares in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitHistory {
    pub accepted_sse: Vec<f64>,
}

fn sse_of(r: &[f64], y: &[f64], a: f64, b: f64, k: f64) -> f64 {
    r.iter()
        .zip(y)
        .map(|(&r, &y)| (k + b * (1.0 + (r / a).powi(2)).sqrt() - y).powi(2))
        .sum()
}

/// Least-squares fit of `y(r) = k + b sqrt(1 + r^2 / a^2)` to `(r, y)` pairs
/// by damped Gauss-Newton (Levenberg-Marquardt) over `(ln a, b, k)`.
pub fn fit_hyperbola_points(
    r: &[f64],
    y: &[f64],
    init: (f64, f64, f64),
    history: Option<&mut FitHistory>,
) -> Result<(f64, f64, f64, f64, usize)> {
    let n = r.len();
    if n < HYPERBOLA_MIN_POINTS || y.len() != n {
        return Err(Error::InsufficientData(format!(
            "hyperbola fit needs at least {HYPERBOLA_MIN_POINTS} points, got {n}"
        )));
    }
    let (mut a, mut b, mut k) = init;
    if !(a > 0.0 && a.is_finite() && b.is_finite() && k.is_finite()) {
        return Err(Error::Domain(format!("bad initial hyperbola ({a}, {b}, {k})")));
    }
    let mut local = FitHistory::default();
    let history = history.unwrap_or(&mut local);
    let mut sse = sse_of(r, y, a, b, k);
    history.accepted_sse.push(sse);
    let mut lambda = 1e-3;

    for iter in 1..=HYPERBOLA_MAX_ITERS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (&ri, &yi) in r.iter().zip(y) {
            let q = (ri / a).powi(2);
            let s = (1.0 + q).sqrt();
            let resid = k + b * s - yi;
            // d/d(ln a), d/db, d/dk
            let row = Vector3::new(-b * q / s, s, 1.0);
            jtj += row * row.transpose();
            jtr += row * resid;
        }
        loop {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return Err(Error::FitFailed { iterations: iter, rms: (sse / n as f64).sqrt(), a, b, k });
                }
                continue;
            };
            let a_new = a * delta[0].exp();
            let (b_new, k_new) = (b + delta[1], k + delta[2]);
            let step = ((a_new - a).powi(2) + delta[1].powi(2) + delta[2].powi(2)).sqrt();
            let sse_new = sse_of(r, y, a_new, b_new, k_new);
            if sse_new.is_finite() && sse_new <= sse {
                a = a_new;
                b = b_new;
                k = k_new;
                sse = sse_new;
                history.accepted_sse.push(sse);
                lambda = (lambda * 0.1).max(1e-15);
                if step <= HYPERBOLA_STEP_TOL {
                    return Ok((a, b, k, (sse / n as f64).sqrt(), iter));
                }
                break;
            }
            // no decrease available at this resolution: already at the minimum
            if step <= HYPERBOLA_STEP_TOL {
                return Ok((a, b, k, (sse / n as f64).sqrt(), iter));
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                return Err(Error::FitFailed { iterations: iter, rms: (sse / n as f64).sqrt(), a, b, k });
            }
        }
    }
    Err(Error::FitFailed {
        iterations: HYPERBOLA_MAX_ITERS,
        rms: (sse / n as f64).sqrt(),
        a,
        b,
        k,
    })
}

/// Starting point for the hyperbola fit. For fixed `a` the model is linear
/// in `(b, k)`, so the start is the best `a` on a log grid spanning
/// `window_r * [1e-3, 1e3]` with its least-squares `(b, k)`.
pub fn default_hyperbola_init(r: &[f64], y: &[f64], window_r: f64) -> (f64, f64, f64) {
    const SCAN: usize = 121;
    let n = r.len() as f64;
    let mut best = (0.5 * window_r, 0.0, y.iter().sum::<f64>() / n, f64::INFINITY);
    for i in 0..SCAN {
        let a = window_r * 10f64.powf(-3.0 + 6.0 * i as f64 / (SCAN - 1) as f64);
        let s: Vec<f64> = r.iter().map(|&r| (1.0 + (r / a).powi(2)).sqrt()).collect();
        let mean_s = s.iter().sum::<f64>() / n;
        let mean_y = y.iter().sum::<f64>() / n;
        let (sss, ssy) = s.iter().zip(y).fold((0.0, 0.0), |(sss, ssy), (&s, &y)| {
            (sss + (s - mean_s).powi(2), ssy + (s - mean_s) * (y - mean_y))
        });
        if !(sss > 0.0) {
            continue;
        }
        let b = ssy / sss;
        let k = mean_y - b * mean_s;
        let sse = sse_of(r, y, a, b, k);
        if sse < best.3 {
            best = (a, b, k, sse);
        }
    }
    (best.0, best.1, best.2)
}

/// Fits the origin bump of a time slice on `r in [0, window_r]`.
pub fn hyperbola_fit(
    slice: &TimeSlice,
    grid: &RadialGrid,
    window_r: f64,
    init: Option<&HyperbolaFit>,
) -> Result<HyperbolaFit> {
    if slice.values.len() != grid.n_points() {
        return Err(Error::Contract(format!(
            "slice has {} entries but the grid has {} points",
            slice.values.len(),
            grid.n_points()
        )));
    }
    if !(window_r > 0.0) {
        return Err(Error::Domain(format!("window radius must be positive, got {window_r}")));
    }
    let (r, y): (Vec<f64>, Vec<f64>) = (0..grid.n_points())
        .map(|j| (grid.r(j), slice.values[j]))
        .take_while(|(r, _)| *r <= window_r * (1.0 + 1e-12))
        .unzip();
    if r.len() < HYPERBOLA_MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "window r <= {window_r} holds {} samples, need {HYPERBOLA_MIN_POINTS}",
            r.len()
        )));
    }
    let start = init.map_or_else(|| default_hyperbola_init(&r, &y, window_r), |h| (h.a, h.b, h.k));
    let (a, b, k, rms_residual, iterations) = fit_hyperbola_points(&r, &y, start, None)?;
    Ok(HyperbolaFit {
        a,
        b,
        k,
        rms_residual,
        window_r,
        iterations,
    })
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: SimConfig,
    pub halt: Option<solver::HaltReason>,
    pub outcome: std::result::Result<CutoffExtraction, String>,
}

/// Runs and extracts each configuration on a pool of `jobs` workers.
/// `persist` is called in the worker with every finished run and its
/// extraction; its error is recorded in the row. Rows come back in input order.
pub fn sweep_rows<F>(configs: &[SimConfig], rule: WindowRule, jobs: usize, persist: F) -> Vec<SweepRow>
where
    F: Fn(usize, &SimConfig, &RunOutput, &Result<CutoffExtraction>) -> std::result::Result<(), String> + Sync,
{
    use rayon::prelude::*;

    let work = |(i, cfg): (usize, &SimConfig)| -> SweepRow {
        let out = match solver::run(cfg) {
            Ok(out) => out,
            Err(e) => {
                return SweepRow {
                    config: cfg.clone(),
                    halt: None,
                    outcome: Err(e.to_string()),
                }
            }
        };
        let extraction = rule
            .resolve(&out.trace, cfg.stop_height)
            .and_then(|w| extract_cutoff(&out.trace, w));
        let saved = persist(i, cfg, &out, &extraction);
        let outcome = extraction.map_err(|e| e.to_string()).and_then(|x| saved.map(|_| x));
        SweepRow {
            config: cfg.clone(),
            halt: Some(out.halt),
            outcome,
        }
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| configs.par_iter().enumerate().map(work).collect()),
        Err(_) => configs.iter().enumerate().map(work).collect(),
    }
}

pub fn sweep_table(configs: &[SimConfig], rule: WindowRule, jobs: usize) -> Vec<SweepRow> {
    sweep_rows(configs, rule, jobs, |_, _, _, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_through_exact_points() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!(fit.rms_residual < 1e-12);
        assert_eq!(fit.n_points, 7);

        let sym = linear_fit(&[(-1.0, 1.0), (0.0, 0.0), (1.0, -1.0)]).unwrap();
        assert_eq!((sym.slope, sym.intercept), (-1.0, 0.0));
    }

    #[test]
    fn line_fit_errors() {
        assert!(matches!(linear_fit(&[(1.0, 2.0)]), Err(Error::InsufficientData(_))));
        assert!(matches!(
            linear_fit(&[(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]),
            Err(Error::SingularFit(_))
        ));
    }

    #[test]
    fn velocity_of_polynomials() {
        let lin: OriginTrace = (0..50).map(|i| (i as f64 * 1e-3, 1.0 - 0.01 * i as f64 * 1e-3)).collect();
        for (_, v) in trace_velocity(&lin).unwrap() {
            assert!((v + 0.01).abs() < 1e-12);
        }
        let h = 0.01;
        let cubic: OriginTrace = [1.0 - h, 1.0, 1.0 + h].iter().map(|&t| (t, t * t * t)).collect();
        let v = trace_velocity(&cubic).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0].1 - 3.0001).abs() < 1e-12);
        let quad: OriginTrace = [1.0 - h, 1.0, 1.0 + h].iter().map(|&t| (t, t * t)).collect();
        assert!((trace_velocity(&quad).unwrap()[0].1 - 2.0).abs() < 1e-12);
        let short: OriginTrace = [(0.0, 1.0), (1.0, 0.5)].into_iter().collect();
        assert!(matches!(trace_velocity(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn cutoff_formulas() {
        let (c, r) = cutoff_from_line(-2810.0, 10200.0).unwrap();
        assert!((c - 0.0267).abs() < 5e-5, "{c}");
        // quoted to three significant figures
        assert!((r - 62.1).abs() < 0.1, "{r}");
        let (c, r) = cutoff_from_line(-2.0, -1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        assert!(matches!(cutoff_from_line(0.0, 1.0), Err(Error::ExtractionUndefined { .. })));
        assert!(matches!(cutoff_from_line(3.0, 1.0), Err(Error::ExtractionUndefined { .. })));
    }

    #[test]
    fn extraction_on_growing_trace_is_undefined() {
        // accelerating collapse gives a positive slope
        let trace: OriginTrace = (0..200).map(|i| {
            let t = i as f64 * 0.01;
            (t, 1.0 - 0.1 * t * t)
        }).collect();
        assert!(matches!(
            extract_cutoff(&trace, Window::new(0.1, 1.9)),
            Err(Error::ExtractionUndefined { .. })
        ));
        assert!(matches!(
            extract_cutoff(&trace, Window::new(5.0, 6.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn window_rule_resolution() {
        let trace: OriginTrace = (0..=100).map(|i| (i as f64, 1.0 - 0.009 * i as f64)).collect();
        let w = WindowRule::default().resolve(&trace, 0.1).unwrap();
        assert_eq!(w.t_lo, 5.0);
        // last sample with f >= 0.15 is t = 94 (f = 0.154)
        assert_eq!(w.t_hi, 94.0);
        let all = WindowRule::whole().resolve(&trace, 0.1).unwrap();
        assert_eq!((all.t_lo, all.t_hi), (0.0, 100.0));
    }

    fn synthetic(a: f64, b: f64, k: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        (0..n)
            .map(|j| {
                let r = 2.0 * j as f64 / (n - 1) as f64;
                (r, k + b * (1.0 + (r / a).powi(2)).sqrt())
            })
            .unzip()
    }

    #[test]
    fn hyperbola_zero_noise_recovery() {
        let (r, y) = synthetic(0.5, -0.2, 1.2, 201);
        let init = default_hyperbola_init(&r, &y, 2.0);
        let mut hist = FitHistory::default();
        let (a, b, k, rms, _) = fit_hyperbola_points(&r, &y, init, Some(&mut hist)).unwrap();
        assert!((a - 0.5).abs() < 1e-8, "{a}");
        assert!((b + 0.2).abs() < 1e-8, "{b}");
        assert!((k - 1.2).abs() < 1e-8, "{k}");
        assert!(rms <= 1e-12);
        assert!(hist.accepted_sse.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn hyperbola_fit_on_slice() {
        let grid = RadialGrid::new(0.01, 400).unwrap();
        let slice = TimeSlice {
            t: 3.0,
            values: grid.sample(|r| 0.9 - 6e-4 * (1.0 + (r / 3.0).powi(2)).sqrt()),
        };
        let fit = hyperbola_fit(&slice, &grid, 2.0, None).unwrap();
        assert!((fit.minus_b_over_a() - 2e-4).abs() < 1e-10, "{fit:?}");
        assert!((fit.eval(0.0) - slice.values[0]).abs() < 1e-12);
        assert!(matches!(
            hyperbola_fit(&slice, &grid, 0.05, None),
            Err(Error::InsufficientData(_))
        ));
    }
}
