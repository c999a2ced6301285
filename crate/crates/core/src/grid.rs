//! Uniform radial mesh and the discrete spatial operators of the radial
//! charge-1 field equation
//!
//! ```text
//! f_tt = f_rr + 3 f_r / r - 4 r f_r / (f^2 + r^2) + 2 f (f_t^2 - f_r^2) / (f^2 + r^2)
//! ```
//!
//! The `f_rr + 3 f_r / r` part is the radial Laplacian of four dimensions,
//! `r^-3 d/dr (r^3 d/dr f)`, and is discretised in flux form: the naive
//! centred expansion grows without bound at the origin. All operators here
//! are pure stencils over the interior points `j = 1..n-2`; the two boundary
//! entries of every output are zero and belong to the solver.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Minimum number of grid points: the origin formula reads indices 0..2 and
/// the outer one reads `n - 2`.
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    dr: f64,
    n_points: usize,
}

impl RadialGrid {
    pub fn new(dr: f64, n_points: usize) -> Result<Self> {
        if !(dr.is_finite() && dr > 0.0) {
            return Err(Error::Config(format!("dr must be positive and finite, got {dr}")));
        }
        if n_points < MIN_POINTS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        Ok(Self { dr, n_points })
    }

    /// Grid covering `[0, r_max]`. The point count is `round(r_max / dr) + 1`,
    /// so the realised outer radius is `(n - 1) * dr` and may differ from the
    /// requested one by less than `dr / 2`.
    pub fn with_extent(dr: f64, r_max: f64) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::Config(format!("r_max must be positive and finite, got {r_max}")));
        }
        if !(dr.is_finite() && dr > 0.0) {
            return Err(Error::Config(format!("dr must be positive and finite, got {dr}")));
        }
        let n = (r_max / dr).round() as usize + 1;
        Self::new(dr, n)
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn r_max(&self) -> f64 {
        (self.n_points - 1) as f64 * self.dr
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.dr
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.r(j)).collect()
    }

    /// Samples `f` at every grid point.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField((0..self.n_points).map(|j| f(self.r(j))).collect())
    }

    pub fn constant(&self, value: f64) -> RadialField {
        RadialField(vec![value; self.n_points])
    }

    fn check(&self, f: &RadialField, what: &str) -> Result<()> {
        if f.len() != self.n_points {
            return Err(Error::Contract(format!(
                "{what} has {} entries but the grid has {} points",
                f.len(),
                self.n_points
            )));
        }
        Ok(())
    }
}

/// Samples of `f(r_j, t)` at a fixed time, one per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField(pub Vec<f64>);

impl RadialField {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn origin(&self) -> f64 {
        self.0[0]
    }
}

impl Deref for RadialField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for RadialField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for RadialField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Flux-form `r^-3 d/dr (r^3 d/dr f)` at interior point `j` (`1 <= j <= n-2`).
#[inline(always)]
pub(crate) fn flux_laplacian_at(f: &[f64], j: usize, dr: f64) -> f64 {
    let r = j as f64 * dr;
    let half = 0.5 * dr;
    let outer = (r + half).powi(3) * (f[j + 1] - f[j]);
    let inner = (r - half).powi(3) * (f[j] - f[j - 1]);
    (outer - inner) / (dr * dr * r.powi(3))
}

#[inline(always)]
pub(crate) fn centered_dr_at(f: &[f64], j: usize, dr: f64) -> f64 {
    (f[j + 1] - f[j - 1]) / (2.0 * dr)
}

/// Discrete `L f = r^-3 d/dr (r^3 d/dr f)` in conservative form; zero at
/// both boundary entries.
pub fn radial_operator_l(f: &RadialField, grid: &RadialGrid) -> Result<RadialField> {
    grid.check(f, "field")?;
    let n = grid.n_points();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = flux_laplacian_at(f, j, grid.dr());
    }
    Ok(RadialField(out))
}

/// Centred first derivative in `r`; zero at both boundary entries.
pub fn centered_dr(f: &RadialField, grid: &RadialGrid) -> Result<RadialField> {
    grid.check(f, "field")?;
    let n = grid.n_points();
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = centered_dr_at(f, j, grid.dr());
    }
    Ok(RadialField(out))
}

/// Right-hand side of the field equation at the interior points, given the
/// field and its time derivative at the same time level.
pub fn rhs(f: &RadialField, dtf: &RadialField, grid: &RadialGrid) -> Result<RadialField> {
    grid.check(f, "field")?;
    grid.check(dtf, "time derivative")?;
    if !f.is_finite() || !dtf.is_finite() {
        return Err(Error::BlowUpPassed { step: 0, t: f64::NAN });
    }
    let lap = radial_operator_l(f, grid)?;
    let fr = centered_dr(f, grid)?;
    let n = grid.n_points();
    let mut out = vec![0.0; n];
    for j in 1..n - 1 {
        let r = grid.r(j);
        let denom = f[j] * f[j] + r * r;
        out[j] = lap[j] - 4.0 * r * fr[j] / denom
            + 2.0 * f[j] / denom * (dtf[j] * dtf[j] - fr[j] * fr[j]);
    }
    Ok(RadialField(out))
}
