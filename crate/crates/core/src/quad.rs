//! Quadrature and 1-D root/optimization utilities.

use crate::error::{Error, Result};

const TS_TMAX: f64 = 6.2;
const TS_MAX_LEVEL: u32 = 9;

/// Tanh-sinh rule on `[a, b]` for a vector-valued integrand.
///
/// Nodes are placed by their distance to the nearer endpoint so integrable
/// endpoint singularities are resolved without cancellation. Returns the
/// estimate and the last level-to-level change of the first component.
pub fn tanh_sinh_vec<const N: usize, F>(mut f: F, a: f64, b: f64, rtol: f64) -> ([f64; N], f64)
where
    F: FnMut(f64) -> [f64; N],
{
    if !(b > a) {
        return ([0.0; N], 0.0);
    }
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut eval_at = |t: f64, acc: &mut [f64; N]| {
        let u = pi2 * t.sinh();
        // e = exp(-2|u|); distance from the endpoint is (b-a) e/(1+e)
        let e = (-2.0 * u.abs()).exp();
        let d = (b - a) * e / (1.0 + e);
        if d <= 0.0 {
            return;
        }
        let w = (b - a) * pi2 * t.cosh() * 2.0 * e / ((1.0 + e) * (1.0 + e));
        let x = if u < 0.0 { a + d } else { b - d };
        if x <= a || x >= b {
            return;
        }
        let v = f(x);
        for k in 0..N {
            if v[k].is_finite() {
                acc[k] += w * v[k];
            }
        }
    };

    let mut h = 0.5;
    let mut sum = [0.0; N];
    eval_at(0.0, &mut sum);
    let mut k = 1;
    while (k as f64) * h <= TS_TMAX {
        let t = k as f64 * h;
        eval_at(t, &mut sum);
        eval_at(-t, &mut sum);
        k += 1;
    }
    let mut est = sum.map(|s| s * h);
    let mut err = f64::INFINITY;
    for _level in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= TS_TMAX {
            let t = k as f64 * h;
            eval_at(t, &mut sum);
            eval_at(-t, &mut sum);
            k += 2;
        }
        let new = sum.map(|s| s * h);
        err = (new[0] - est[0]).abs();
        let scale = new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = (0..N).fold(0.0f64, |m, i| m.max((new[i] - est[i]).abs()));
        est = new;
        if _level >= 3 && worst <= rtol * scale {
            break;
        }
    }
    (est, err)
}

/// Scalar tanh-sinh.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rtol: f64) -> (f64, f64) {
    let (v, e) = tanh_sinh_vec::<1, _>(|x| [f(x)], a, b, rtol);
    (v[0], e)
}

const GK_XK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525637376,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const GK_WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * GK_WK[10];
    let mut rg = 0.0;
    for j in 0..10 {
        let dx = h * GK_XK[j];
        let s = f(c - dx) + f(c + dx);
        rk += GK_WK[j] * s;
        if j % 2 == 1 {
            rg += GK_WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (10/21) on `[a, b]`.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rtol: f64,
    atol: f64,
    max_sub: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut parts = vec![(a, b, gk21(&mut f, a, b))];
    loop {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= atol.max(rtol * total.abs()) {
            return Ok((total, err));
        }
        if parts.len() >= max_sub {
            if err <= 1e3 * atol.max(rtol * total.abs()) {
                return Ok((total, err));
            }
            return Err(Error::Quadrature { achieved: err, target: rtol * total.abs() });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |m, (i, p)| if p.2 .1 > m.1 { (i, p.2 .1) } else { m });
        let (lo, hi, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk21(&mut f, lo, mid)));
        parts.push((mid, hi, gk21(&mut f, mid, hi)));
    }
}

const GL16_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// Fixed 16-point Gauss-Legendre rule on one panel.
pub fn gauss_legendre16<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..8 {
        s += GL16_W[i] * (f(c - h * GL16_X[i]) + f(c + h * GL16_X[i]));
    }
    s * h
}

/// Integral over `(lo, hi)` in the variable `u = ln s`, with tanh-sinh panels
/// between consecutive breakpoints. `lo` and `hi` must be positive.
pub fn log_panels<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, breaks: &[f64], rtol: f64) -> f64 {
    if !(hi > lo) || lo <= 0.0 {
        return 0.0;
    }
    let mut edges = vec![lo.ln()];
    let mut bs: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).map(f64::ln).collect();
    bs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.extend(bs);
    edges.push(hi.ln());
    // keep panels no wider than 4 in log units
    let mut fine = vec![edges[0]];
    for w in edges.windows(2) {
        let n = ((w[1] - w[0]) / 4.0).ceil().max(1.0) as usize;
        for k in 1..=n {
            fine.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
        }
    }
    let mut total = 0.0;
    for w in fine.windows(2) {
        if w[1] > w[0] {
            total += tanh_sinh(
                |u| {
                    let s = u.exp();
                    f(s) * s
                },
                w[0],
                w[1],
                rtol,
            )
            .0;
        }
    }
    total
}

/// Composite 16-point Gauss-Legendre in `u = ln s` on panels at most `width` wide,
/// split at `breaks`.
pub fn log_panels_gl<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, breaks: &[f64], width: f64) -> f64 {
    if !(hi > lo) || lo <= 0.0 {
        return 0.0;
    }
    let mut edges = vec![lo.ln()];
    let mut bs: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).map(f64::ln).collect();
    bs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.extend(bs);
    edges.push(hi.ln());
    let mut total = 0.0;
    for w in edges.windows(2) {
        let n = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        for k in 0..n {
            let a = w[0] + h * k as f64;
            total += gauss_legendre16(
                |u| {
                    let s = u.exp();
                    f(s) * s
                },
                a,
                a + h,
            );
        }
    }
    total
}

/// Bisection for an increasing function on `[lo, hi]` with `g(lo) <= 0 <= g(hi)`.
pub fn bisect<F: FnMut(f64) -> f64>(mut g: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol * mid.abs().max(1e-300) {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Brent's method for a root of `g` bracketed by `[a, b]`.
pub fn brent<F: FnMut(f64) -> f64>(mut g: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Range(format!("root not bracketed on [{a:e}, {b:e}] (values {fa:e}, {fb:e})")));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
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
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol * b.abs().max(1e-300);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = g(b);
    }
    Ok(b)
}

/// Golden-section maximization on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= xtol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}
