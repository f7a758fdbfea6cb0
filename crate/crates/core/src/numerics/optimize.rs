//! One-dimensional maximization and root finding.

use crate::error::{Error, Result};

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmax, max)`. Stops when the bracket is narrower than `xtol`
/// or stops shrinking in floating point.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = f(d);
        }
        if !(c > a && d < b && c < d) {
            break;
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid scan of `f` on `[a, b]` with spacing `step`; returns the index and
/// abscissa of the largest sample together with the grid spacing used.
pub fn scan_argmax<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, step: f64) -> ScanResult {
    let count = ((b - a) / step).round() as usize;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..=count {
        let v = f(a + i as f64 * step);
        if v > best.1 {
            best = (i, v);
        }
    }
    ScanResult {
        index: best.0,
        last_index: count,
        x: a + best.0 as f64 * step,
        value: best.1,
        step,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanResult {
    pub index: usize,
    pub last_index: usize,
    pub x: f64,
    pub value: f64,
    pub step: f64,
}

impl ScanResult {
    pub fn is_interior(&self) -> bool {
        self.index > 0 && self.index < self.last_index
    }
}

/// Bisection for a root of `f` in `[a, b]`; `f(a)` and `f(b)` must differ in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Convergence(format!(
            "no sign change on [{a}, {b}]: f(a)={fa:e}, f(b)={fb:e}"
        )));
    }
    for _ in 0..300 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= xtol || mid <= a.min(b) || mid >= a.max(b) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Safeguarded Newton iteration for an increasing function.
///
/// `eval` returns `(g(x), g'(x))` with `g` increasing, `g(lo) <= 0 <= g(hi)`.
/// Newton steps that leave the bracket fall back to bisection.
pub fn newton_bisect_increasing<F>(eval: F, mut lo: f64, mut hi: f64, start: f64, xtol: f64) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = start.clamp(lo, hi);
    for _ in 0..200 {
        let (g, dg) = eval(x);
        if g == 0.0 {
            return x;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - g / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= xtol * x.abs().max(1.0) || hi - lo <= xtol {
            return next;
        }
        x = next;
    }
    x
}
