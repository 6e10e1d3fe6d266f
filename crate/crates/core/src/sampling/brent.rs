use crate::error::{Error, Result};

/// Iteration cap for [`brent_root`].
pub const MAX_ITERATIONS: usize = 200;

/// Brent's method: bisection, secant and inverse quadratic interpolation,
/// keeping the root bracketed throughout.
///
/// Stops when the bracket half-width falls below `tol` (plus a relative
/// machine-precision term) or `f` vanishes exactly.
pub fn brent_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::numerical("function is NaN at a bracket end"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::validation(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }

    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..MAX_ITERATIONS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic interpolation
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::numerical(format!("function is NaN at {b}")));
        }
    }
    Err(Error::numerical(format!(
        "Brent iteration did not converge in {MAX_ITERATIONS} steps (bracket [{b}, {c}])"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(hi) > 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_root() {
        let r = brent_root(|x| x - 2.0, 0.0, 5.0, 1e-13).unwrap();
        assert!((r - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cubic_root_matches_bisection() {
        let f = |x: f64| x * x * x - x - 2.0;
        let oracle = bisect(f, 1.0, 2.0);
        assert!((oracle - 1.5213797).abs() < 1e-6);
        let r = brent_root(f, 1.0, 2.0, 1e-13).unwrap();
        assert!((r - oracle).abs() < 1e-12);
    }

    #[test]
    fn same_sign_rejected() {
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn reversed_bracket_and_exact_endpoint() {
        let r = brent_root(|x| x - 2.0, 5.0, 0.0, 1e-13).unwrap();
        assert!((r - 2.0).abs() < 1e-13);
        assert_eq!(brent_root(|x| x - 1.0, 1.0, 3.0, 1e-13).unwrap(), 1.0);
    }

    #[test]
    fn flat_step_function_terminates() {
        // discontinuous sign change: converges onto the jump
        let r = brent_root(|x| if x < 0.3 { -1.0 } else { 1.0 }, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.3).abs() < 1e-11);
    }
}
