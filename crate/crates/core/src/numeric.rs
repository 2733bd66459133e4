//! Small numerical toolbox: standard-normal helpers, a Gamma quantile,
//! adaptive Simpson quadrature, golden-section minimization and bisection.

use crate::error::{Error, Result};
use statrs::function::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Standard normal quantile; `p` in (0,1).
pub fn std_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Gamma(shape, scale) quantile via Wilson-Hilferty start and safeguarded
/// Newton on the regularized incomplete gamma. `p` in [0,1); exact 0 maps
/// to 0. Quantiles below ~1e-12 saturate at the incomplete-gamma series
/// floor; callers consume the result on absolute scales where that is
/// immaterial.
pub fn gamma_quantile(shape: f64, scale: f64, p: f64) -> f64 {
    debug_assert!(shape > 0.0 && scale > 0.0);
    if p <= 0.0 {
        return 0.0;
    }
    // probabilities at the f64 ceiling map to the largest resolvable level
    let p = p.min(1.0 - 1e-16);

    // Wilson-Hilferty; for tiny p it can go non-positive, fall back to the
    // small-x expansion P(x) ~ (x/scale)^k / Gamma(k+1).
    let z = std_normal_quantile(p);
    let c = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * shape.sqrt());
    let mut x = if c > 0.0 {
        shape * scale * c.powi(3)
    } else {
        0.0
    };
    if x <= 0.0 {
        x = scale * ((p.ln() + ln_gamma(shape + 1.0)) / shape).exp();
    }

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..32 {
        let f = gamma_lr(shape, x / scale) - p;
        if f.abs() <= 1e-13 * p {
            return x;
        }
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        // log-space density to avoid overflow for large shapes
        let ln_pdf = (shape - 1.0) * (x / scale).ln() - x / scale - ln_gamma(shape) - scale.ln();
        let step = f / ln_pdf.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(scale) };
        }
        if (next - x).abs() <= 1e-14 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Gamma(shape, scale) pdf, safe for large shapes.
pub fn gamma_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * (x / scale).ln() - x / scale - ln_gamma(shape) - scale.ln()).exp()
}

/// Adaptive Simpson quadrature with absolute tolerance. Leaves that hit the
/// depth cap contribute their Richardson error estimate to an error budget;
/// the call fails only if that budget exceeds `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    let mid = 0.5 * (lo + hi);
    let fmid = f(mid);
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    let (value, err) = simpson_rec(f, lo, hi, flo, fmid, fhi, whole, tol, 52);
    if err > tol.max(1e-15 * value.abs()) {
        return Err(Error::QuadratureFailure { lo, hi, tol });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let lmid = 0.5 * (lo + mid);
    let rmid = 0.5 * (mid + hi);
    let flm = f(lmid);
    let frm = f(rmid);
    let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || hi - lo < 1e-300 {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = simpson_rec(f, lo, mid, flo, flm, fmid, left, 0.5 * tol, depth - 1);
    let (rv, re) = simpson_rec(f, mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth - 1);
    (lv + rv, le + re)
}

/// Tanh-sinh quadrature on [lo, hi]: spectrally accurate for smooth
/// integrands and for integrable endpoint singularities. Levels are
/// refined until two successive estimates agree within `tol` (absolute).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (lo + hi);
    const T_MAX: f64 = 4.0;
    // nodes are carried as distances from the endpoints so that points
    // exponentially close to lo/hi do not round onto them
    let node = |t: f64| {
        let q = std::f64::consts::FRAC_PI_2 * t.sinh();
        let dist = 2.0 / ((2.0 * q).exp() + 1.0); // 1 - tanh(q)
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / q.cosh().powi(2);
        (dist, w)
    };
    // a node whose offset rounds onto an endpoint evaluates f at the
    // endpoint itself; for integrable singularities its true weighted
    // contribution is below machine scale, so non-finite values drop out
    let guarded = move |x: f64| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let eval_pair = |dist: f64| guarded(lo + half * dist) + guarded(hi - half * dist);
    let mut h = 1.0;
    let mut sum = std::f64::consts::FRAC_PI_2 * guarded(mid); // t = 0 node
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        let (dist, w) = node(k as f64 * h);
        sum += w * eval_pair(dist);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..10 {
        h *= 0.5;
        // add the odd nodes of the refined grid
        let mut t = h;
        while t <= T_MAX {
            let (dist, w) = node(t);
            sum += w * eval_pair(dist);
            t += 2.0 * h;
        }
        let cur = sum * h * half;
        if (cur - prev).abs() <= tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureFailure { lo, hi, tol })
}

/// Golden-section search for a minimum of `f` on [lo, hi]; returns the
/// midpoint of the final bracket once it is narrower than `xtol`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > xtol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Bisection for a sign change of `f` on [lo, hi]; requires f(lo) and f(hi)
/// of opposite sign (callers bracket first).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if (flo <= 0.0) == (fmid <= 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
