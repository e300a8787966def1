//! Numerical kernels: normalized sinc, erfc and its inverse, trigamma,
//! closed-form sums of shifted sinc² combs, and adaptive Simpson quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Normalized sinc, `sin(πx)/(πx)`, with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let px = PI * x;
    if px.abs() < 1e-4 {
        // Taylor branch avoids 0/0 rounding near the removable singularity.
        let p2 = px * px;
        return 1.0 - p2 / 6.0 + p2 * p2 / 120.0;
    }
    (px).sin() / px
}

/// `sinc(x)²`.
#[inline]
pub fn sinc2(x: f64) -> f64 {
    let s = sinc(x);
    s * s
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Inverse of [`erfc`] on the open interval (0, 2).
///
/// Bisection brackets the root, then safeguarded Newton steps polish it.
pub fn erfc_inv(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 2.0) {
        return Err(Error::Domain(format!("erfc_inv requires 0 < y < 2, got {y}")));
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    if y > 1.0 {
        return erfc_inv(2.0 - y).map(|x| -x);
    }
    // erfc is decreasing; root lies in [0, 27) for representable y.
    let (mut lo, mut hi) = (0.0_f64, 27.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let two_over_sqrt_pi = 2.0 / PI.sqrt();
    for _ in 0..4 {
        let fx = erfc(x) - y;
        let dfx = -two_over_sqrt_pi * (-x * x).exp();
        if dfx == 0.0 {
            break;
        }
        let next = x - fx / dfx;
        if !(next >= lo && next <= hi) {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Trigamma function ψ₁(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / x;
    let z2 = z * z;
    // Asymptotic series with Bernoulli coefficients.
    let tail = z
        + 0.5 * z2
        + z * z2 * (1.0 / 6.0 + z2 * (-1.0 / 30.0 + z2 * (1.0 / 42.0 + z2 * (-1.0 / 30.0 + z2 * (5.0 / 66.0)))));
    acc + tail
}

/// `Σ_{n=1}^{count} sinc²(x − n)` in closed form.
///
/// Uses `Σ_n 1/(x−n)² = ψ₁` differences, so the cost is independent of `count`.
pub fn sinc2_comb(x: f64, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let nn = count as f64;
    let s = (PI * x).sin();
    let s2 = s * s / (PI * PI);
    let frac = x - x.round();
    if x > 0.0 && x < nn + 1.0 {
        if frac.abs() < 1e-6 {
            // Near an interior integer the closed form cancels; sum the
            // same identity with the nearest term split off.
            let j = x.round();
            let near = if j >= 1.0 && j <= nn { sinc2(x - j) } else { 0.0 };
            let mut rest = 0.0;
            if j > 1.0 {
                rest += trigamma(x - j + 1.0) - trigamma(x);
                rest += inv_sq_sum_upper(x, j, nn);
            } else {
                rest += inv_sq_sum_upper(x, j.max(0.0), nn);
            }
            return near + s2 * rest;
        }
        1.0 - s2 * (trigamma(x) + trigamma(nn + 1.0 - x))
    } else if x <= 0.0 {
        s2 * (trigamma(1.0 - x) - trigamma(nn + 1.0 - x))
    } else {
        s2 * (trigamma(x - nn) - trigamma(x))
    }
}

// Σ_{n=j+1}^{count} 1/(x−n)² for x within 1e-6 of j.
fn inv_sq_sum_upper(x: f64, j: f64, nn: f64) -> f64 {
    if j >= nn {
        return 0.0;
    }
    // n − x runs over (j+1−x) .. (nn−x), all ≥ ~1.
    trigamma(j + 1.0 - x) - trigamma(nn + 1.0 - x)
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-15, max_subdivisions: 1 << 20 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) || self.max_subdivisions < 1 {
            return Err(Error::Domain(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }
}

/// Adaptive Simpson quadrature of `f` over `[lo, hi]` starting from 8 panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: QuadratureSpec) -> Result<f64> {
    integrate_panels(f, lo, hi, 8, spec)
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
}

/// Adaptive Simpson quadrature seeded with `panels` equal sub-intervals.
///
/// Seed with enough panels to resolve the fastest oscillation of `f`;
/// refinement then proceeds panel by panel.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize, spec: QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("integration bounds [{lo}, {hi}]")));
    }
    let panels = panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut stack = Vec::with_capacity(panels + 64);
    let mut coarse = 0.0;
    let mut coarse_abs = 0.0;
    let mut fa = f(lo);
    for i in 0..panels {
        let a = lo + width * i as f64;
        let b = if i + 1 == panels { hi } else { a + width };
        let fm = f(0.5 * (a + b));
        let fb = f(b);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        coarse += whole;
        coarse_abs += whole.abs();
        stack.push(Panel { a, b, fa, fm, fb, whole, tol: 0.0 });
        fa = fb;
    }
    if !coarse.is_finite() {
        return Err(Error::Domain("integrand is not finite".into()));
    }
    let total_tol = spec.abs_tol.max(spec.rel_tol * coarse.abs().max(1e-3 * coarse_abs));
    for p in stack.iter_mut() {
        p.tol = total_tol * (p.b - p.a) / (hi - lo);
    }
    stack.reverse();

    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut err = 0.0;
    let mut splits = 0usize;
    let mut exhausted = false;
    let min_width = (hi - lo) * 1e-15;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let h = p.b - p.a;
        let left = h / 12.0 * (p.fa + 4.0 * flm + p.fm);
        let right = h / 12.0 * (p.fm + 4.0 * frm + p.fb);
        let delta = left + right - p.whole;
        let accept = delta.abs() <= 15.0 * p.tol || h < min_width;
        if accept || exhausted {
            if !accept {
                err += delta.abs() / 15.0;
            }
            // Kahan summation keeps many small panels from drifting.
            let y = left + right + delta / 15.0 - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            continue;
        }
        splits += 1;
        if splits >= spec.max_subdivisions {
            exhausted = true;
        }
        stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: 0.5 * p.tol });
        stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: 0.5 * p.tol });
    }
    if exhausted && err > total_tol {
        return Err(Error::ToleranceNotMet { estimate: sum, error: err, subdivisions: splits });
    }
    Ok(sum)
}
