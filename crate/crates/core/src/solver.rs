//! Time evolution of the radial field equation.
//!
//! Each step is an explicit leapfrog with a fixed-point corrector on the
//! time derivative: starting from the guess `g = 2 f(t) - f(t - dt)`, the
//! centred velocity `(g - f(t - dt)) / 2dt` is fed back into the right-hand
//! side and `g = 2 f(t) - f(t - dt) + dt^2 rhs` is recomputed a fixed number
//! of times. The origin value is rebuilt from the even-extension formula and
//! the outer boundary is held flat.

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};

pub const DEFAULT_DR: f64 = 0.01;
pub const DEFAULT_DT: f64 = 0.001;
pub const DEFAULT_R_MAX: f64 = 100.0;
pub const DEFAULT_CORRECTOR_ITERS: usize = 4;
/// Default halt height as a fraction of `f0`.
pub const DEFAULT_STOP_FRACTION: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub f0: f64,
    pub v0: f64,
    pub dr: f64,
    pub dt: f64,
    pub r_max: f64,
    pub corrector_iters: usize,
    pub stop_height: f64,
    pub max_steps: u64,
    pub sample_every: u64,
    pub slice_times: Vec<f64>,
}

impl SimConfig {
    /// Configuration with the standard mesh (`dr = 0.01`, `dt = 0.001`,
    /// `r_max = 100`) and a halt at 5% of the initial height.
    pub fn new(f0: f64, v0: f64) -> Self {
        Self {
            f0,
            v0,
            dr: DEFAULT_DR,
            dt: DEFAULT_DT,
            r_max: DEFAULT_R_MAX,
            corrector_iters: DEFAULT_CORRECTOR_ITERS,
            stop_height: DEFAULT_STOP_FRACTION * f0,
            max_steps: DEFAULT_MAX_STEPS,
            sample_every: 1,
            slice_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("f0", self.f0)?;
        positive("dr", self.dr)?;
        positive("dt", self.dt)?;
        positive("r_max", self.r_max)?;
        positive("stop_height", self.stop_height)?;
        if !self.v0.is_finite() {
            return Err(Error::Config(format!("v0 must be finite, got {}", self.v0)));
        }
        if self.dt > self.dr {
            return Err(Error::Config(format!(
                "dt = {} exceeds dr = {}; the explicit scheme needs dt <= dr",
                self.dt, self.dr
            )));
        }
        if self.stop_height >= self.f0 {
            return Err(Error::Config(format!(
                "stop_height = {} must lie below f0 = {}",
                self.stop_height, self.f0
            )));
        }
        if self.corrector_iters == 0 {
            return Err(Error::Config("corrector_iters must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if let Some(t) = self.slice_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Config(format!("slice time {t} must be finite and non-negative")));
        }
        RadialGrid::with_extent(self.dr, self.r_max)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::with_extent(self.dr, self.r_max)
    }
}

/// Two consecutive time levels of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub f_prev: RadialField,
    pub f_cur: RadialField,
    pub t: f64,
    pub step_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginSample {
    pub t: f64,
    pub f: f64,
}

/// Time series of `f(0, t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OriginTrace {
    pub samples: Vec<OriginSample>,
}

impl OriginTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.f)
    }

    /// First time the trace reaches `level` or below, linearly interpolated
    /// between the bracketing samples.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        let first = self.samples.first()?;
        if first.f <= level {
            return Some(first.t);
        }
        self.samples.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            (a.f > level && b.f <= level).then(|| a.t + (a.f - level) / (a.f - b.f) * (b.t - a.t))
        })
    }
}

impl FromIterator<(f64, f64)> for OriginTrace {
    fn from_iter<I: IntoIterator<Item = (f64, f64)>>(iter: I) -> Self {
        Self {
            samples: iter.into_iter().map(|(t, f)| OriginSample { t, f }).collect(),
        }
    }
}

/// Spatial profile `f(r, T)` at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlice {
    pub t: f64,
    pub values: RadialField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    ReachedStopHeight,
    MaxSteps,
    BlowUpPassed,
}

impl HaltReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            HaltReason::ReachedStopHeight => "reached_stop_height",
            HaltReason::MaxSteps => "max_steps",
            HaltReason::BlowUpPassed => "blow_up_passed",
        }
    }
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HaltReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reached_stop_height" => Ok(HaltReason::ReachedStopHeight),
            "max_steps" => Ok(HaltReason::MaxSteps),
            "blow_up_passed" => Ok(HaltReason::BlowUpPassed),
            other => Err(Error::Contract(format!("unknown halt reason '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: OriginTrace,
    pub slices: Vec<TimeSlice>,
    pub halt: HaltReason,
    pub steps: u64,
    pub grid: RadialGrid,
}

/// Overwrites the origin with the even-extension value
/// `(4/3) f(dr) - (1/3) f(2 dr)` and the outer entry with its neighbour.
pub fn apply_boundaries(f: &mut [f64]) {
    let n = f.len();
    f[0] = (4.0 * f[1] - f[2]) / 3.0;
    f[n - 1] = f[n - 2];
}

/// State at `t = 0`: `f = f0` everywhere, with a virtual level at `t = -dt`
/// of `f0 - v0 dt` so that the centred velocity at `t = 0` is exactly `v0`
/// and the first leapfrog guess is `f0 + v0 dt`.
pub fn initialize(cfg: &SimConfig) -> Result<FieldState> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    Ok(FieldState {
        f_prev: grid.constant(cfg.f0 - cfg.v0 * cfg.dt),
        f_cur: grid.constant(cfg.f0),
        t: 0.0,
        step_index: 0,
    })
}

/// Largest change made by the final corrector pass of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub corrector_delta: f64,
}

/// Precomputed per-point stencil weights for a fixed grid and time step.
///
/// With `w_out = (r + dr/2)^3 / (dr^2 r^3)` and `w_in = (r - dr/2)^3 / (dr^2 r^3)`
/// the flux-form operator is `w_out (f[j+1] - f[j]) - w_in (f[j] - f[j-1])`.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: RadialGrid,
    dt: f64,
    corrector_iters: usize,
    w_out: Vec<f64>,
    w_in: Vec<f64>,
    r: Vec<f64>,
    r2: Vec<f64>,
    // per-step scratch over the interior points
    spatial: Vec<f64>,
    coupling: Vec<f64>,
    base: Vec<f64>,
    guess: Vec<f64>,
}

impl Stepper {
    pub fn new(cfg: &SimConfig, grid: &RadialGrid) -> Self {
        let dr = grid.dr();
        let n = grid.n_points();
        let interior = n - 2;
        let (mut w_out, mut w_in, mut r, mut r2) = (
            Vec::with_capacity(interior),
            Vec::with_capacity(interior),
            Vec::with_capacity(interior),
            Vec::with_capacity(interior),
        );
        for j in 1..n - 1 {
            let rj = grid.r(j);
            let scale = dr * dr * rj.powi(3);
            w_out.push((rj + 0.5 * dr).powi(3) / scale);
            w_in.push((rj - 0.5 * dr).powi(3) / scale);
            r.push(rj);
            r2.push(rj * rj);
        }
        Self {
            grid: *grid,
            dt: cfg.dt,
            corrector_iters: cfg.corrector_iters,
            w_out,
            w_in,
            r,
            r2,
            spatial: vec![0.0; interior],
            coupling: vec![0.0; interior],
            base: vec![0.0; interior],
            guess: vec![0.0; interior],
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Advances `state` by one time step in place.
    ///
    /// The right-hand side splits as `spatial + coupling * f_t^2`, where only
    /// the velocity depends on the guess for the new level, so the spatial
    /// parts are evaluated once per step and each corrector pass is a
    /// pointwise update. Boundary entries do not feed back into any interior
    /// update and are therefore set once after the corrector loop, which is
    /// equivalent to setting them after every pass.
    pub fn step(&mut self, state: &mut FieldState) -> Result<StepReport> {
        let n = self.grid.n_points();
        if state.f_cur.len() != n || state.f_prev.len() != n {
            return Err(Error::Contract(format!(
                "state has {}/{} entries but the grid has {n} points",
                state.f_prev.len(),
                state.f_cur.len()
            )));
        }
        let dt = self.dt;
        let dt2 = dt * dt;
        let inv_2dt = 0.5 / dt;
        let inv_2dr = 0.5 / self.grid.dr();

        let cur: &[f64] = &state.f_cur;
        let prev = &state.f_prev[1..n - 1];
        for (i, win) in cur.windows(3).enumerate() {
            let (left, here, right) = (win[0], win[1], win[2]);
            let lap = self.w_out[i] * (right - here) - self.w_in[i] * (here - left);
            let fr = (right - left) * inv_2dr;
            let inv_denom = 1.0 / (here * here + self.r2[i]);
            let coupling = 2.0 * here * inv_denom;
            self.spatial[i] = lap - 4.0 * self.r[i] * fr * inv_denom - coupling * fr * fr;
            self.coupling[i] = coupling;
            self.base[i] = 2.0 * here - prev[i];
        }
        self.guess.copy_from_slice(&self.base);

        let corrected = |g: f64, base: f64, spatial: f64, coupling: f64, p: f64| {
            let v = (g - p) * inv_2dt;
            base + dt2 * (spatial + coupling * v * v)
        };
        for _ in 1..self.corrector_iters {
            for ((((g, &base), &spatial), &coupling), &p) in self
                .guess
                .iter_mut()
                .zip(&self.base)
                .zip(&self.spatial)
                .zip(&self.coupling)
                .zip(prev)
            {
                *g = corrected(*g, base, spatial, coupling, p);
            }
        }
        let mut max_delta = 0.0_f64;
        for ((((g, &base), &spatial), &coupling), &p) in self
            .guess
            .iter_mut()
            .zip(&self.base)
            .zip(&self.spatial)
            .zip(&self.coupling)
            .zip(prev)
        {
            let updated = corrected(*g, base, spatial, coupling, p);
            max_delta = max_delta.max((updated - *g).abs());
            *g = updated;
        }

        let next: &mut [f64] = &mut state.f_prev;
        next[1..n - 1].copy_from_slice(&self.guess);
        apply_boundaries(next);
        std::mem::swap(&mut state.f_prev, &mut state.f_cur);
        state.step_index += 1;
        state.t = state.step_index as f64 * dt;

        let finite = self.guess.iter().all(|g| g.is_finite());
        if !finite || !state.f_cur.origin().is_finite() || state.f_cur.origin() <= 0.0 {
            return Err(Error::BlowUpPassed {
                step: state.step_index,
                t: state.t,
            });
        }
        Ok(StepReport {
            corrector_delta: max_delta,
        })
    }
}

/// One-off step; builds the stencil tables on every call; use [`Stepper`]
/// in loops.
pub fn step(state: &mut FieldState, cfg: &SimConfig, grid: &RadialGrid) -> Result<StepReport> {
    Stepper::new(cfg, grid).step(state)
}

/// Evolves from the initial flat profile until the origin drops to
/// `stop_height`, the step budget runs out, or the singularity is crossed.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    let grid = cfg.grid()?;
    let mut state = initialize(cfg)?;
    let mut stepper = Stepper::new(cfg, &grid);

    let mut slice_steps: Vec<(u64, usize)> = cfg
        .slice_times
        .iter()
        .enumerate()
        .map(|(i, &t)| ((t / cfg.dt).round() as u64, i))
        .collect();
    slice_steps.sort();
    let mut pending = slice_steps.into_iter().peekable();
    let mut slices: Vec<(usize, TimeSlice)> = Vec::new();

    let mut take_slices = |state: &FieldState, slices: &mut Vec<(usize, TimeSlice)>| {
        while let Some(&(k, i)) = pending.peek() {
            if k > state.step_index {
                break;
            }
            if k == state.step_index {
                slices.push((
                    i,
                    TimeSlice {
                        t: state.t,
                        values: state.f_cur.clone(),
                    },
                ));
            }
            pending.next();
        }
    };

    let mut trace = OriginTrace::default();
    trace.samples.push(OriginSample {
        t: 0.0,
        f: state.f_cur.origin(),
    });
    take_slices(&state, &mut slices);

    let halt = loop {
        if state.step_index >= cfg.max_steps {
            break HaltReason::MaxSteps;
        }
        match stepper.step(&mut state) {
            Ok(_) => {}
            Err(Error::BlowUpPassed { .. }) => break HaltReason::BlowUpPassed,
            Err(e) => return Err(e),
        }
        let origin = state.f_cur.origin();
        if state.step_index % cfg.sample_every == 0 {
            trace.samples.push(OriginSample { t: state.t, f: origin });
        }
        take_slices(&state, &mut slices);
        if origin <= cfg.stop_height {
            break HaltReason::ReachedStopHeight;
        }
    };

    slices.sort_by_key(|(i, _)| *i);
    Ok(RunOutput {
        trace,
        slices: slices.into_iter().map(|(_, s)| s).collect(),
        halt,
        steps: state.step_index,
        grid,
    })
}
