//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DEPTH: u32 = 60;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> Self {
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        Self { a, b, fa, fm, fb, whole }
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Each panel is split in two; the split is accepted when the two halves
/// agree with the whole-panel Simpson estimate to `15 tol`, and the
/// Richardson-corrected sum is returned. The tolerance is halved at every
/// level. A panel that is still unresolved at `max_depth` is an error.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!(
            "quadrature needs finite bounds and positive tolerance, got [{a}, {b}], tol {tol}"
        )));
    }
    let m = 0.5 * (a + b);
    let root = Panel::new(a, b, f(a), f(m), f(b));
    let mut total = 0.0;
    let mut worst = 0.0_f64;
    let mut unresolved = false;
    // explicit stack instead of recursion: (panel, tolerance, depth)
    let mut stack = vec![(root, tol, 0_u32)];
    while let Some((p, eps, depth)) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let left = Panel::new(p.a, m, p.fa, f(lm), p.fm);
        let right = Panel::new(m, p.b, p.fm, f(rm), p.fb);
        let delta = left.whole + right.whole - p.whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature {
                lo: a,
                hi: b,
                estimate: f64::NAN,
                error_estimate: f64::NAN,
            });
        }
        if delta.abs() <= 15.0 * eps || depth >= max_depth {
            if delta.abs() > 15.0 * eps {
                unresolved = true;
                worst = worst.max(delta.abs() / 15.0);
            }
            total += left.whole + right.whole + delta / 15.0;
        } else {
            stack.push((right, 0.5 * eps, depth + 1));
            stack.push((left, 0.5 * eps, depth + 1));
        }
    }
    if unresolved {
        return Err(Error::Quadrature {
            lo: a,
            hi: b,
            estimate: total,
            error_estimate: worst,
        });
    }
    Ok(total)
}
