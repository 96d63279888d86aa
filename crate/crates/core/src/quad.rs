//! Quadrature and interpolation primitives on uniform grids.

/// Cumulative composite Simpson integral of uniformly spaced samples,
/// anchored at `anchor`: returns `F[j] = ∫_{x_anchor}^{x_j} y` for every `j`.
///
/// Points at an even offset from the anchor are chained with the 3-point
/// Simpson rule. Points at an odd offset branch off their even neighbour with
/// the 3-point half-interval rule `h/12 (5 y0 + 8 y1 - y2)`, which is exact
/// for quadratics.
pub fn cumulative_simpson(y: &[f64], h: f64, anchor: usize) -> Vec<f64> {
    let n = y.len();
    assert!(anchor < n, "anchor {anchor} out of range for {n} samples");
    let mut out = vec![0.0; n];
    if n == 1 {
        return out;
    }
    assert!(n >= 3, "cumulative Simpson needs at least 3 samples");

    let mut j = anchor + 2;
    while j < n {
        out[j] = out[j - 2] + h / 3.0 * (y[j - 2] + 4.0 * y[j - 1] + y[j]);
        j += 2;
    }
    let mut j = anchor as isize - 2;
    while j >= 0 {
        let k = j as usize;
        out[k] = out[k + 2] - h / 3.0 * (y[k] + 4.0 * y[k + 1] + y[k + 2]);
        j -= 2;
    }

    let mut j = anchor + 1;
    while j < n {
        out[j] = out[j - 1] + half_cell_forward(y, h, j - 1);
        j += 2;
    }
    let mut j = anchor as isize - 1;
    while j >= 0 {
        let k = j as usize;
        out[k] = out[k + 1] - half_cell_forward(y, h, k);
        j -= 2;
    }
    out
}

/// `∫_{x_i}^{x_{i+1}} y` from three neighbouring samples.
fn half_cell_forward(y: &[f64], h: f64, i: usize) -> f64 {
    if i + 2 < y.len() {
        h / 12.0 * (5.0 * y[i] + 8.0 * y[i + 1] - y[i + 2])
    } else {
        h / 12.0 * (-y[i - 1] + 8.0 * y[i] + 5.0 * y[i + 1])
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Cubic Hermite interpolation on `[x0, x0 + h]` at local coordinate `s ∈ [0, 1]`.
#[inline]
pub fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to `x`.
#[inline]
pub fn hermite_derivative(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -6.0 * s2 + 6.0 * s;
    let dh11 = 3.0 * s2 - 2.0 * s;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Fritsch–Carlson limiting of endpoint slopes so the Hermite cubic on a cell
/// with increasing data stays monotone.
#[inline]
pub fn monotone_slopes(y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> (f64, f64) {
    let secant = (y1 - y0) / h;
    if secant <= 0.0 {
        return (0.0, 0.0);
    }
    let a = (d0 / secant).max(0.0);
    let b = (d1 / secant).max(0.0);
    let r2 = a * a + b * b;
    if r2 > 9.0 {
        let tau = 3.0 / r2.sqrt();
        (tau * a * secant, tau * b * secant)
    } else {
        (a * secant, b * secant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumulative_simpson_exact_for_cubics() {
        let h = 0.1;
        let anchor = 7;
        let xs: Vec<f64> = (0..20).map(|j| (j as f64 - anchor as f64) * h).collect();
        let y: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - 2.0 * x + 1.0).collect();
        let f = cumulative_simpson(&y, h, anchor);
        for (x, v) in xs.iter().zip(&f) {
            let exact = x * x * x - x * x + x;
            assert!((v - exact).abs() < 1e-13, "x={x} got {v} want {exact}");
        }
        assert_eq!(f[anchor], 0.0);
    }

    #[test]
    fn cumulative_simpson_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / n as f64;
            let y: Vec<f64> = (0..=n).map(|j| (j as f64 * h - 1.0).exp()).collect();
            let f = cumulative_simpson(&y, h, n / 2);
            (0..=n)
                .map(|j| {
                    let x = j as f64 * h - 1.0;
                    (f[j] - (x.exp() - 1.0)).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 12.0, "convergence ratio {ratio}");
    }

    #[test]
    fn adaptive_simpson_peaked() {
        let b = 100.0;
        let v = adaptive_simpson(|t| t * b / (1.0 + t * t * b * b), 0.0, 1.0, 1e-10);
        let exact = (1.0 + b * b).ln() / (2.0 * b);
        assert!((v - exact).abs() < 1e-8);
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let p = |x: f64| x * x * x - 0.5 * x;
        let dp = |x: f64| 3.0 * x * x - 0.5;
        let (x0, h) = (0.3, 0.2);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let x = x0 + s * h;
            let v = hermite(p(x0), p(x0 + h), dp(x0), dp(x0 + h), h, s);
            let d = hermite_derivative(p(x0), p(x0 + h), dp(x0), dp(x0 + h), h, s);
            assert!((v - p(x)).abs() < 1e-14);
            assert!((d - dp(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_slopes_limit_overshoot() {
        let (d0, d1) = monotone_slopes(0.0, 1.0, 10.0, 10.0, 1.0);
        assert!(d0 * d0 + d1 * d1 <= 9.0 + 1e-12);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=100 {
            let v = hermite(0.0, 1.0, d0, d1, 1.0, k as f64 / 100.0);
            assert!(v >= last);
            last = v;
        }
    }
}
