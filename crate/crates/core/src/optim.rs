//! One-dimensional maximization used by the coordinate-ascent fitters.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
///
/// Returns `(argmax, value)`. Non-finite function values are treated as `-inf`.
/// The interval endpoints are evaluated as well, so a boundary maximum is found
/// even when `f` is monotone.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iterations: usize) -> (f64, f64) {
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let v = eval(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Golden-section search over `ln x` for a positive parameter spanning orders of magnitude.
pub fn golden_max_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iterations: usize) -> (f64, f64) {
    let (u, v) = golden_max(|u| f(u.exp()), lo.ln(), hi.ln(), iterations);
    (u.exp(), v)
}

/// Coarse log-spaced grid scan followed by a golden refinement around the best grid point.
pub fn grid_golden_max_log<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid: usize,
    iterations: usize,
) -> (f64, f64) {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (grid.max(2) - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..grid.max(2) {
        let v = f((llo + step * k as f64).exp());
        if v > best.1 {
            best = (k, v);
        }
    }
    let left = (llo + step * best.0.saturating_sub(1) as f64).max(llo);
    let right = (llo + step * (best.0 + 1) as f64).min(lhi);
    let (u, v) = golden_max(|u| f(u.exp()), left, right, iterations);
    if v >= best.1 {
        (u.exp(), v)
    } else {
        ((llo + step * best.0 as f64).exp(), best.1)
    }
}
