//! Adiabatic (cutoff-Lagrangian) prediction for the origin trajectory.
//!
//! Restricting the kinetic term to the static family `f / z` and cutting the
//! integral off at radius `R` gives the conserved quantity
//!
//! ```text
//! f_t^2 / 2 * [ln(1 + R^2/f^2) - R^2/(f^2 + R^2)] = c^2 / 2
//! ```
//!
//! so along a shrinking trajectory `c t = integral_{f}^{f0} sqrt(bracket) df`.
//! [`collapse_time_integral`] evaluates the right side by adaptive Simpson
//! quadrature and [`predict_trajectory`] inverts it by bracketed root finding.

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, DEFAULT_MAX_DEPTH};

/// Absolute tolerance on the collapse integral.
pub const QUAD_TOL: f64 = 1e-10;
/// Lowest height the inverse map searches, relative to `f0`.
pub const FLOOR_FRACTION: f64 = 1e-6;
/// Bracket width at which root finding stops.
pub const ROOT_TOL: f64 = 1e-9;
/// Root finding also stops once the collapse time matches to this accuracy.
const TIME_TOL: f64 = 1e-11;
const MAX_ROOT_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicModel {
    pub c: f64,
    pub cutoff: f64,
    pub f0: f64,
}

impl GeodesicModel {
    pub fn new(c: f64, cutoff: f64, f0: f64) -> Result<Self> {
        for (name, v) in [("c", c), ("R", cutoff), ("f0", f0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if cutoff <= f0 {
            log::warn!("cutoff R = {cutoff} does not exceed f0 = {f0}; large-R estimates will be poor");
        }
        Ok(Self { c, cutoff, f0 })
    }

    pub fn f_floor(&self) -> f64 {
        FLOOR_FRACTION * self.f0
    }

    /// Collapse time to the quadrature floor; no trajectory time beyond this
    /// can be predicted.
    pub fn max_time(&self) -> Result<f64> {
        collapse_time_integral(self.f_floor(), self)
    }
}

/// `ln(1 + x) - x / (1 + x)` with `x = R^2 / f^2`, positive for every
/// `x > 0`. Small `x` uses the series `sum_{k>=2} (-1)^k (k-1)/k x^k` to
/// avoid cancellation.
pub fn bracket(f: f64, cutoff: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("height must be positive and finite, got {f}")));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::Domain(format!("cutoff must be positive and finite, got {cutoff}")));
    }
    let ratio = cutoff / f;
    let x = ratio * ratio;
    if x < 1e-2 {
        let mut sum = 0.0;
        let mut power = x * x;
        for k in 2..=12 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k - 1) as f64 / k as f64 * power;
            power *= x;
        }
        return Ok(sum);
    }
    Ok(x.ln_1p() - cutoff * cutoff / (f * f + cutoff * cutoff))
}

/// `sqrt(ln(1 + R^2/f^2) - R^2/(f^2 + R^2))`.
pub fn integrand(f: f64, cutoff: f64) -> Result<f64> {
    bracket(f, cutoff).map(f64::sqrt)
}

/// Time for the cutoff model to shrink from `f0` to `f_target`:
/// `(1/c) * integral_{f_target}^{f0} integrand(f, R) df`.
pub fn collapse_time_integral(f_target: f64, model: &GeodesicModel) -> Result<f64> {
    if !(f_target > 0.0 && f_target.is_finite()) {
        return Err(Error::Domain(format!(
            "target height must be positive and finite, got {f_target}"
        )));
    }
    if f_target > model.f0 {
        return Err(Error::Domain(format!(
            "target height {f_target} exceeds the initial height {}",
            model.f0
        )));
    }
    integrand(model.f0, model.cutoff)?;
    let cutoff = model.cutoff;
    // f > 0 throughout the interval, so the bracket cannot fail
    let g = |f: f64| integrand(f, cutoff).unwrap_or(f64::NAN);
    let area = adaptive_simpson(g, f_target, model.f0, QUAD_TOL, DEFAULT_MAX_DEPTH)?;
    Ok(area / model.c)
}

/// Height reached at time `t`, by Illinois-type regula falsi with a bisection
/// fallback on the monotone map `f -> collapse_time_integral(f)`.
pub fn predict_height(t: f64, model: &GeodesicModel) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(model.f0);
    }
    let floor = model.f_floor();
    let t_max = collapse_time_integral(floor, model)?;
    if t > t_max {
        return Err(Error::OutOfRange { t, max_time: t_max });
    }
    // residual(f) = time(f) - t, decreasing in f: positive at the floor
    let residual = |f: f64| collapse_time_integral(f, model).map(|s| s - t);
    let (mut lo, mut hi) = (floor, model.f0);
    let (mut r_lo, mut r_hi) = (t_max - t, -t);
    let mut side = 0_i8;
    for _ in 0..MAX_ROOT_ITERS {
        let width = hi - lo;
        let mut f = (lo * r_hi - hi * r_lo) / (r_hi - r_lo);
        if !(f > lo && f < hi) {
            f = 0.5 * (lo + hi);
        }
        let r = residual(f)?;
        if r.abs() <= TIME_TOL {
            return Ok(f);
        }
        if r > 0.0 {
            lo = f;
            r_lo = r;
            if side == 1 {
                r_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = f;
            r_hi = r;
            if side == -1 {
                r_lo *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= ROOT_TOL * 1e-3 {
            break;
        }
        // force progress when the secant stalls on one side
        if hi - lo > 0.5 * width {
            let mid = 0.5 * (lo + hi);
            let r = residual(mid)?;
            if r > 0.0 {
                lo = mid;
                r_lo = r;
            } else {
                hi = mid;
                r_hi = r;
            }
            side = 0;
        }
    }
    if hi - lo > ROOT_TOL {
        return Err(Error::Domain(format!(
            "root finding for t = {t} stalled with bracket [{lo}, {hi}]"
        )));
    }
    Ok(if r_lo.abs() < r_hi.abs() { lo } else { hi })
}

/// Predicted `(t, f(0, t))` pairs.
pub fn predict_trajectory(model: &GeodesicModel, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| predict_height(t, model).map(|f| (t, f)))
        .collect()
}

/// `-c / integrand(f, R)`; negative on the shrinking branch.
pub fn predicted_velocity(f: f64, model: &GeodesicModel) -> Result<f64> {
    Ok(-model.c / integrand(f, model.cutoff)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(c: f64, cutoff: f64, f0: f64) -> GeodesicModel {
        GeodesicModel::new(c, cutoff, f0).unwrap()
    }

    #[test]
    fn integrand_reference_values() {
        // 30-digit references
        assert!((integrand(3.0, 3.0).unwrap() - 0.439_485_131_216_000_65).abs() < 1e-15);
        assert!((integrand(1.0, 100.0).unwrap() - 2.865_404_047_770_142_3).abs() < 1e-14);
    }

    #[test]
    fn integrand_small_ratio_series() {
        let x: f64 = 1e-6;
        let v = integrand(1.0, x.sqrt()).unwrap();
        // leading term x / sqrt(2), next correction relative -2x/3
        assert!((v - x / 2f64.sqrt()).abs() < 1e-6 * x);
        let bracket_value = bracket(1.0, x.sqrt()).unwrap();
        assert!((bracket_value - (x * x / 2.0 - 2.0 * x.powi(3) / 3.0)).abs() < 1e-24);
        assert!(v > 0.0);
    }

    #[test]
    fn domain_errors() {
        let m = model(1.0, 100.0, 1.0);
        assert!(matches!(integrand(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(integrand(-1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(collapse_time_integral(0.0, &m), Err(Error::Domain(_))));
        assert!(matches!(collapse_time_integral(1.5, &m), Err(Error::Domain(_))));
        assert!(matches!(predicted_velocity(0.0, &m), Err(Error::Domain(_))));
        assert!(GeodesicModel::new(0.0, 1.0, 1.0).is_err());
        assert!(GeodesicModel::new(1.0, f64::NAN, 1.0).is_err());
        // allowed but warned
        assert!(GeodesicModel::new(1.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn collapse_integral_reference() {
        let m = model(1.0, 100.0, 1.0);
        assert_eq!(collapse_time_integral(1.0, &m).unwrap(), 0.0);
        let t = collapse_time_integral(0.5, &m).unwrap();
        // 30-digit reference quadrature
        assert!((t - 1.484_903_405_003_020_8).abs() < 1e-9, "{t}");
        let slow = model(0.5, 100.0, 1.0);
        assert!((collapse_time_integral(0.5, &slow).unwrap() - 2.0 * t).abs() < 1e-9);
    }

    #[test]
    fn collapse_integral_is_monotone() {
        let m = model(0.03, 50.0, 1.0);
        let ts: Vec<f64> = (1..=20)
            .map(|k| collapse_time_integral(1.0 - 0.049 * k as f64, &m).unwrap())
            .collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn velocity_reference_and_monotonicity() {
        let m = model(1.0, 3.0, 3.0);
        assert!((predicted_velocity(3.0, &m).unwrap() + 2.275_389_834_539_167).abs() < 1e-13);
        let m = model(0.03, 50.0, 1.0);
        let speeds: Vec<f64> = (1..100)
            .map(|k| predicted_velocity(k as f64 * 0.01, &m).unwrap().abs())
            .collect();
        // the bracket grows like 2 ln(R/f), so |f_t| falls as f shrinks
        assert!(speeds.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trajectory_starts_at_f0_and_decreases() {
        let m = model(0.0267, 62.1, 1.0);
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 2.0).collect();
        let traj = predict_trajectory(&m, &times).unwrap();
        assert_eq!(traj[0], (0.0, 1.0));
        assert!(traj.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn round_trip_through_inverse() {
        let m = model(0.03, 50.0, 1.0);
        for &t in &[0.5, 10.0, 30.0, 55.0] {
            let f = predict_height(t, &m).unwrap();
            let back = collapse_time_integral(f, &m).unwrap();
            assert!((back - t).abs() < 1e-8, "{t} -> {f} -> {back}");
        }
    }

    #[test]
    fn out_of_range_time() {
        let m = model(1.0, 10.0, 1.0);
        let max = m.max_time().unwrap();
        match predict_height(max * 1.01, &m) {
            Err(Error::OutOfRange { max_time, .. }) => assert!((max_time - max).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(predict_height(-1.0, &m).is_err());
    }

    #[test]
    fn finite_difference_of_trajectory_matches_velocity() {
        let m = model(0.03, 50.0, 1.0);
        let h = 1e-2;
        for &t in &[5.0, 20.0, 40.0] {
            let up = predict_height(t + h, &m).unwrap();
            let down = predict_height(t - h, &m).unwrap();
            let fd = (up - down) / (2.0 * h);
            let exact = predicted_velocity(predict_height(t, &m).unwrap(), &m).unwrap();
            assert!(((fd - exact) / exact).abs() < 1e-5, "{fd} vs {exact}");
        }
    }
}
