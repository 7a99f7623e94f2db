//! Bracketed root finding for monotone scalar equations.
//!
//! All projections reduce to one-dimensional monotone equations with a known
//! sign change. The finder below is the Illinois variant of regula falsi with
//! a bisection fallback whenever the bracket stops shrinking quickly, so it
//! keeps the superlinear rate on smooth equations and the guaranteed rate of
//! bisection on the rest.

const MAX_ITER: usize = 400;

/// Finds a root of `f` in `[a, b]`, where `f(a)` and `f(b)` differ in sign.
///
/// Stops once the bracket is narrower than `atol + 4ε·max(|a|, |b|)` or no
/// float lies strictly between its ends. Returns `None` when the bracket is
/// invalid or the iteration cap is hit.
pub(crate) fn find_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, atol: f64) -> Option<f64> {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }

    // which end was retained last: -1 for a, +1 for b
    let mut side = 0i8;
    let mut last_width = b - a;
    for iter in 0..MAX_ITER {
        let width = b - a;
        if width <= atol + 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            return Some(if fa.abs() < fb.abs() { a } else { b });
        }

        let bisect = iter % 3 == 2 && width > 0.5 * last_width;
        if iter % 3 == 2 {
            last_width = width;
        }
        let mut c = if bisect { 0.5 * (a + b) } else { (a * fb - b * fa) / (fb - fa) };
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
            if !(c > a && c < b) {
                return Some(if fa.abs() < fb.abs() { a } else { b });
            }
        }

        let fc = f(c);
        if fc == 0.0 {
            return Some(c);
        }
        if !fc.is_finite() {
            return None;
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    None
}
