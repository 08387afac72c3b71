//! Laplace exponent `phi`, `H`, `b`, their inverses, and the variational
//! quantities `M(t,l)`, `N(t,l)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::quad;

pub const LAM_MIN: f64 = 1e-9;
pub const LAM_MAX: f64 = 1e9;
pub const PER_DECADE: usize = 96;
const V_MAX: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Phi,
    H,
    B,
    /// inverse of the decreasing function `phi'`
    DPhi,
}

/// Cached monotone representation of `phi`, `phi'`, `H` for one kernel.
#[derive(Debug, Clone)]
pub struct BernsteinTable {
    kernel: KernelSpec,
    pub rtol: f64,
    x0: f64,
    dx: f64,
    // per node: phi, phi', H, phi''
    vals: Vec<[f64; 4]>,
    ln_phi: Vec<f64>,
    ln_h: Vec<f64>,
    // ln t and ln s along the b^{-1} parametrisation, in increasing t order
    b_ln_t: Vec<f64>,
    b_ln_s: Vec<f64>,
    b_slope: Vec<f64>,
}

/// `[phi, phi', H, phi'']` at `lam > 0` by quadrature in `v = lam u`.
pub fn laplace_integrals(kernel: &KernelSpec, lam: f64, rtol: f64) -> Result<[f64; 4]> {
    let mut vmax = V_MAX;
    let mut edges = vec![0.0, 1.0, 8.0];
    for b in kernel.breakpoints() {
        edges.push(lam * b);
    }
    if let Some(e) = kernel.support_end() {
        vmax = vmax.min(lam * e);
    }
    let mut lo_edge = edges.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    while lo_edge < 1.0 {
        lo_edge *= 8.0;
        edges.push(lo_edge);
    }
    edges.push(vmax);
    edges.retain(|v| *v >= 0.0 && *v <= vmax && v.is_finite());
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
    let mut acc = [0.0; 4];
    let mut err = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (v, e) = quad::tanh_sinh_vec::<4, _>(
            |v| {
                let f = (-v).exp() * kernel.w(v / lam);
                [f, (1.0 - v) * f, v * f, (2.0 * v - v * v) * f]
            },
            a,
            b,
            rtol,
        );
        for k in 0..4 {
            acc[k] += v[k];
        }
        err += e;
    }
    if !(acc[0] > 0.0) || err > 1e-6 * acc[0] {
        return Err(Error::Quadrature { achieved: err, target: rtol * acc[0].abs() });
    }
    Ok([acc[0], acc[1] / lam, acc[2], -acc[3] / (lam * lam)])
}

fn hermite(t: f64, y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

/// Piecewise cubic Hermite through `(xs, ys)` with slopes `ds`; `xs` increasing.
fn hermite_table(xs: &[f64], ys: &[f64], ds: &[f64], x: f64) -> Option<f64> {
    if !(x >= xs[0] && x <= xs[xs.len() - 1]) {
        return None;
    }
    let i = (xs.partition_point(|v| *v <= x).max(1) - 1).min(xs.len() - 2);
    let h = xs[i + 1] - xs[i];
    Some(hermite((x - xs[i]) / h, ys[i], ys[i + 1], ds[i], ds[i + 1], h))
}

impl BernsteinTable {
    pub fn new(kernel: KernelSpec) -> Result<Self> {
        Self::with_tolerance(kernel, 1e-12)
    }

    pub fn with_tolerance(kernel: KernelSpec, rtol: f64) -> Result<Self> {
        kernel.validate()?;
        let x0 = LAM_MIN.ln();
        let decades = (LAM_MAX / LAM_MIN).log10();
        let n = (decades * PER_DECADE as f64).round() as usize + 1;
        let dx = (LAM_MAX.ln() - x0) / (n - 1) as f64;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let lam = (x0 + dx * i as f64).exp();
            vals.push(laplace_integrals(&kernel, lam, rtol)?);
        }
        let ln_phi = vals.iter().map(|v| v[0].ln()).collect();
        let ln_h = vals.iter().map(|v| v[2].ln()).collect();
        let mut t = Self {
            kernel,
            rtol,
            x0,
            dx,
            vals,
            ln_phi,
            ln_h,
            b_ln_t: vec![],
            b_ln_s: vec![],
            b_slope: vec![],
        };
        t.build_b();
        Ok(t)
    }

    fn build_b(&mut self) {
        // t(mu) = phi'(mu)/H(mu) decreases, s(mu) = 1/H(mu) decreases
        let n = self.vals.len();
        let mut lt = Vec::with_capacity(n);
        let mut ls = Vec::with_capacity(n);
        let mut sl = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let mu = self.lam(i);
            let [_, d1, h, d2] = self.vals[i];
            let dlnh = -mu * mu * d2 / h;
            let dlnt = mu * d2 / d1 - dlnh;
            lt.push((d1 / h).ln());
            ls.push(-h.ln());
            sl.push(-dlnh / dlnt);
        }
        self.b_ln_t = lt;
        self.b_ln_s = ls;
        self.b_slope = sl;
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    fn lam(&self, i: usize) -> f64 {
        (self.x0 + self.dx * i as f64).exp()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.vals.len()).map(|i| self.lam(i)).collect()
    }

    /// Cached `[phi, phi', H, phi'']` at grid node `i`.
    pub fn node(&self, i: usize) -> (f64, [f64; 4]) {
        (self.lam(i), self.vals[i])
    }

    pub fn all(&self, lam: f64) -> Result<[f64; 4]> {
        if !(lam > 0.0) {
            return Err(Error::Domain(format!("lambda = {lam} must be positive")));
        }
        laplace_integrals(&self.kernel, lam, self.rtol)
    }

    /// `phi(lambda)` by quadrature; `phi(0) = 0`.
    pub fn phi(&self, lam: f64) -> Result<f64> {
        if lam == 0.0 {
            return Ok(0.0);
        }
        Ok(self.all(lam)?[0])
    }

    pub fn phi_prime(&self, lam: f64) -> Result<f64> {
        Ok(self.all(lam)?[1])
    }

    #[allow(non_snake_case)]
    pub fn H(&self, lam: f64) -> Result<f64> {
        if lam == 0.0 {
            return Ok(0.0);
        }
        Ok(self.all(lam)?[2])
    }

    fn cell(&self, lam: f64) -> Option<(usize, f64)> {
        let x = lam.ln();
        let f = (x - self.x0) / self.dx;
        if !(f >= 0.0) || f > (self.vals.len() - 1) as f64 {
            return None;
        }
        let i = (f.floor() as usize).min(self.vals.len() - 2);
        Some((i, f - i as f64))
    }

    /// `phi` from the cache (log-log cubic Hermite with exact slopes).
    pub fn phi_fast(&self, lam: f64) -> f64 {
        if lam == 0.0 {
            return 0.0;
        }
        match self.cell(lam) {
            Some((i, t)) => {
                let d = |j: usize| self.lam(j) * self.vals[j][1] / self.vals[j][0];
                hermite(t, self.ln_phi[i], self.ln_phi[i + 1], d(i), d(i + 1), self.dx).exp()
            }
            None => self.phi(lam).unwrap_or(f64::NAN),
        }
    }

    pub fn phi_prime_fast(&self, lam: f64) -> f64 {
        match self.cell(lam) {
            Some((i, t)) => {
                let y = |j: usize| self.vals[j][1].ln();
                let d = |j: usize| self.lam(j) * self.vals[j][3] / self.vals[j][1];
                hermite(t, y(i), y(i + 1), d(i), d(i + 1), self.dx).exp()
            }
            None => self.phi_prime(lam).unwrap_or(f64::NAN),
        }
    }

    pub fn h_fast(&self, lam: f64) -> f64 {
        match self.cell(lam) {
            Some((i, t)) => {
                let d = |j: usize| {
                    let l = self.lam(j);
                    -l * l * self.vals[j][3] / self.vals[j][2]
                };
                hermite(t, self.ln_h[i], self.ln_h[i + 1], d(i), d(i + 1), self.dx).exp()
            }
            None => self.H(lam).unwrap_or(f64::NAN),
        }
    }

    fn lam_axis(&self) -> Vec<f64> {
        (0..self.vals.len()).map(|i| self.x0 + self.dx * i as f64).collect()
    }

    /// `phi^{-1}(y)` from the cache; exact inversion outside the cached range.
    pub fn phi_inv_fast(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let ly = y.ln();
        let n = self.vals.len();
        if ly >= self.ln_phi[0] && ly <= self.ln_phi[n - 1] {
            let i = (self.ln_phi.partition_point(|v| *v <= ly).max(1) - 1).min(n - 2);
            let h = self.ln_phi[i + 1] - self.ln_phi[i];
            let d = |j: usize| self.vals[j][0] / (self.lam(j) * self.vals[j][1]);
            let xi = self.x0 + self.dx * i as f64;
            return hermite((ly - self.ln_phi[i]) / h, xi, xi + self.dx, d(i), d(i + 1), h).exp();
        }
        self.invert(Which::Phi, y).unwrap_or(f64::NAN)
    }

    pub fn h_inv_fast(&self, y: f64) -> f64 {
        let ly = y.ln();
        let n = self.vals.len();
        if ly >= self.ln_h[0] && ly <= self.ln_h[n - 1] {
            let i = (self.ln_h.partition_point(|v| *v <= ly).max(1) - 1).min(n - 2);
            let h = self.ln_h[i + 1] - self.ln_h[i];
            let d = |j: usize| {
                let l = self.lam(j);
                -self.vals[j][2] / (l * l * self.vals[j][3])
            };
            let xi = self.x0 + self.dx * i as f64;
            return hermite((ly - self.ln_h[i]) / h, xi, xi + self.dx, d(i), d(i + 1), h).exp();
        }
        self.invert(Which::H, y).unwrap_or(f64::NAN)
    }

    /// `b^{-1}(t)` from the cache.
    pub fn b_inv_fast(&self, t: f64) -> f64 {
        match hermite_table(&self.b_ln_t, &self.b_ln_s, &self.b_slope, t.ln()) {
            Some(v) => v.exp(),
            None => self.invert(Which::B, t).unwrap_or(f64::NAN),
        }
    }

    /// Monotone inversion refined by quadrature: `phi^{-1}`, `H^{-1}` or `b^{-1}`.
    pub fn invert(&self, which: Which, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Range(format!("{which:?}^(-1) needs 0 < y < inf, got {y}")));
        }
        let ly = y.ln();
        // g(x) increasing in x = ln(lambda) in all three cases
        let g = |x: f64| -> f64 {
            let lam = x.exp();
            match laplace_integrals(&self.kernel, lam, self.rtol) {
                Ok(v) => match which {
                    Which::Phi => v[0].ln() - ly,
                    Which::H => v[2].ln() - ly,
                    Which::B => ly - (v[1] / v[2]).ln(),
                    Which::DPhi => ly - v[1].ln(),
                },
                Err(_) => f64::NAN,
            }
        };
        let seed = match which {
            Which::Phi => self.seed_from(&self.ln_phi, ly, false),
            Which::H => self.seed_from(&self.ln_h, ly, false),
            Which::B => {
                let lt: Vec<f64> = self.vals.iter().map(|v| (v[1] / v[2]).ln()).collect();
                self.seed_from(&lt, ly, true)
            }
            Which::DPhi => {
                let lt: Vec<f64> = self.vals.iter().map(|v| v[1].ln()).collect();
                self.seed_from(&lt, ly, true)
            }
        };
        let (mut a, mut b) = (seed - 0.05, seed + 0.05);
        let (mut ga, mut gb) = (g(a), g(b));
        let mut k = 0;
        while !(ga <= 0.0) {
            a -= 2.0f64.powi(k);
            ga = g(a);
            k += 1;
            if k > 12 || a < -745.0 {
                return Err(Error::Range(format!("{which:?}^(-1)({y:e}) below the table: value at lambda={:e}", a.exp())));
            }
        }
        k = 0;
        while !(gb >= 0.0) {
            b += 2.0f64.powi(k);
            gb = g(b);
            k += 1;
            if k > 12 || b > 700.0 {
                return Err(Error::Range(format!("{which:?}^(-1)({y:e}) above the table: value at lambda={:e}", b.exp())));
            }
        }
        let x = quad::brent(g, a, b, 1e-15, 200)?;
        let mu = x.exp();
        match which {
            Which::B => Ok(1.0 / self.all(mu)?[2]),
            _ => Ok(mu),
        }
    }

    fn seed_from(&self, tab: &[f64], ly: f64, decreasing: bool) -> f64 {
        let n = tab.len();
        let axis = self.lam_axis();
        let idx = if decreasing {
            tab.iter().position(|v| *v <= ly)
        } else {
            tab.iter().position(|v| *v >= ly)
        };
        match idx {
            Some(0) => {
                // extrapolate with the end slope
                let s = (tab[1] - tab[0]) / self.dx;
                axis[0] + (ly - tab[0]) / s
            }
            Some(i) => {
                let f = (ly - tab[i - 1]) / (tab[i] - tab[i - 1]);
                axis[i - 1] + f * self.dx
            }
            None => {
                let s = (tab[n - 1] - tab[n - 2]) / self.dx;
                axis[n - 1] + (ly - tab[n - 1]) / s
            }
        }
    }

    /// `b(s) = s phi'(H^{-1}(1/s))`.
    pub fn b(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("b evaluated at s = {s}")));
        }
        let mu = self.invert(Which::H, 1.0 / s)?;
        Ok(s * self.phi_prime(mu)?)
    }

    /// `inf { s > 0 : s^alpha / phi(s) >= lam }` on the running-supremum envelope.
    /// The flag is set when `alpha < 1`, where the target need not be monotone.
    pub fn bar_phi_alpha(&self, alpha: f64, lam: f64) -> Result<(f64, bool)> {
        if !(alpha > 0.0) {
            return Err(Error::Precondition("alpha must be positive".into()));
        }
        if lam == 0.0 {
            return Ok((0.0, alpha < 1.0));
        }
        let flagged = alpha < 1.0;
        let g = |s: f64| alpha * s.ln() - self.phi_fast(s).ln();
        let target = lam.ln();
        let grid = self.grid();
        let mut prev = None;
        for &s in &grid {
            if g(s) >= target {
                let lo = match prev {
                    Some(p) => p,
                    None => {
                        if flagged {
                            return Ok((0.0, true));
                        }
                        let mut lo = s / 10.0;
                        while g(lo) >= target {
                            lo /= 10.0;
                            if lo < 1e-300 {
                                return Ok((0.0, flagged));
                            }
                        }
                        lo
                    }
                };
                return Ok((self.refine_bar(alpha, target, lo, s)?, flagged));
            }
            prev = Some(s);
        }
        let mut hi = grid[grid.len() - 1];
        let mut lo = hi;
        while g(hi) < target {
            lo = hi;
            hi *= 10.0;
            if hi > 1e300 {
                return Err(Error::Range(format!("bar_phi: lambda = {lam:e} out of range")));
            }
        }
        Ok((self.refine_bar(alpha, target, lo, hi)?, flagged))
    }

    fn refine_bar(&self, alpha: f64, target: f64, lo: f64, hi: f64) -> Result<f64> {
        let g = |x: f64| alpha * x - self.phi(x.exp()).map(f64::ln).unwrap_or(f64::NAN) - target;
        let x = quad::brent(g, lo.ln(), hi.ln(), 1e-14, 200)?;
        Ok(x.exp())
    }

    /// Comparability ratios of `phi(lam)` with `lam int_0^{1/lam} w` and of `H(lam)` with
    /// `lam^2 int_0^{1/lam} s w(s) ds`.
    pub fn phi_hw_ratios(&self, lam: f64) -> Result<(f64, f64)> {
        let v = self.all(lam)?;
        let k = &self.kernel;
        let u = 1.0 / lam;
        let iw = k.int_w(0.0, u);
        let mut br = k.breakpoints();
        if let Some(e) = k.support_end() {
            br.push(e);
        }
        let lo = u * 1e-14;
        let isw = quad::log_panels(|s| s * k.w(s), lo, u.min(k.support_end().unwrap_or(f64::INFINITY)), &br, 1e-10)
            + 0.5 * lo * lo * k.w(lo);
        Ok((v[0] / (lam * iw), v[2] / (lam * lam * isw)))
    }
}

/// Scaling function `Phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhiShape {
    Power { alpha: f64 },
    /// `sum c_i s^{a_i}`
    Sum { terms: Vec<(f64, f64)> },
}

impl PhiShape {
    pub fn power(alpha: f64) -> Self {
        PhiShape::Power { alpha }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            PhiShape::Power { alpha } => s.powf(*alpha),
            PhiShape::Sum { terms } => terms.iter().map(|(c, a)| c * s.powf(*a)).sum(),
        }
    }

    pub fn inv(&self, y: f64) -> f64 {
        match self {
            PhiShape::Power { alpha } => y.powf(1.0 / alpha),
            PhiShape::Sum { .. } => {
                let mut lo = 1e-300f64;
                let mut hi = 1.0f64;
                while self.eval(hi) < y {
                    hi *= 2.0;
                }
                lo = lo.max(hi * 1e-300);
                quad::bisect(|x| self.eval(x.exp()) - y, lo.ln(), hi.ln(), 1e-16, 400).exp()
            }
        }
    }

    pub fn alpha1(&self) -> f64 {
        match self {
            PhiShape::Power { alpha } => *alpha,
            PhiShape::Sum { terms } => terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn alpha2(&self) -> f64 {
        match self {
            PhiShape::Power { alpha } => *alpha,
            PhiShape::Sum { terms } => terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarOpt {
    pub value: f64,
    pub argmax: f64,
    pub unimodal: bool,
}

fn maximize_log<F: Fn(f64) -> f64>(f: F, guess: f64) -> Result<VarOpt> {
    let step = 4f64.ln();
    let mut m = guess.ln();
    let (mut a, mut b) = (m - step, m + step);
    let (mut fa, mut fm, mut fb) = (f(a), f(m), f(b));
    let mut n = 0;
    loop {
        if !(fa.is_finite() || fa == f64::NEG_INFINITY) || !fm.is_finite() {
            return Err(Error::Range("variational objective not finite near the bracket".into()));
        }
        if fa >= fm && fa >= fb {
            b = m;
            fb = fm;
            m = a;
            fm = fa;
            a -= step;
            fa = f(a);
        } else if fb > fm {
            a = m;
            fa = fm;
            m = b;
            fm = fb;
            b += step;
            fb = f(b);
        } else {
            break;
        }
        n += 1;
        if n > 400 {
            return Err(Error::Range("no interior maximum found".into()));
        }
    }
    let _ = (fa, fb);
    // unimodality scan
    let pts: Vec<f64> = (0..33).map(|i| f(a + (b - a) * i as f64 / 32.0)).collect();
    let peaks = (1..32).filter(|&i| pts[i] > pts[i - 1] && pts[i] >= pts[i + 1]).count();
    let (x, v) = quad::golden_max(&f, a, b, 1e-13);
    Ok(VarOpt { value: v, argmax: x.exp(), unimodal: peaks <= 1 })
}

/// `M(t,l) = sup_{s>0} { l/s - t/Phi(s) }`.
#[allow(non_snake_case)]
pub fn calM(shape: &PhiShape, t: f64, l: f64) -> Result<f64> {
    Ok(calM_detail(shape, t, l)?.value)
}

#[allow(non_snake_case)]
pub fn calM_detail(shape: &PhiShape, t: f64, l: f64) -> Result<VarOpt> {
    let a1 = shape.alpha1();
    if !(a1 > 1.0) {
        return Err(Error::Precondition(format!("lower scaling index {a1} must exceed 1")));
    }
    if !(t > 0.0 && l > 0.0) {
        return Err(Error::Domain("M needs t, l > 0".into()));
    }
    let guess = (t * a1 / l).powf(1.0 / (a1 - 1.0));
    maximize_log(|x| l * (-x).exp() - t / shape.eval(x.exp()), guess)
}

/// `N(t,l) = sup_{s>0} { l/s - t phi^{-1}(1/Phi(s)) }`.
#[allow(non_snake_case)]
pub fn calN(table: &BernsteinTable, shape: &PhiShape, t: f64, l: f64) -> Result<f64> {
    Ok(calN_detail(table, shape, t, l)?.value)
}

#[allow(non_snake_case)]
pub fn calN_detail(table: &BernsteinTable, shape: &PhiShape, t: f64, l: f64) -> Result<VarOpt> {
    let a1 = shape.alpha1();
    if !(a1 > 1.0) {
        return Err(Error::Precondition(format!("lower scaling index {a1} must exceed 1")));
    }
    if !(t > 0.0 && l > 0.0) {
        return Err(Error::Domain("N needs t, l > 0".into()));
    }
    let beta = table.phi_prime_fast(1.0) / table.phi_fast(1.0);
    let e = a1 / beta;
    let guess = (t * e / l).powf(1.0 / (e - 1.0));
    maximize_log(|x| l * (-x).exp() - t * table.phi_inv_fast(1.0 / shape.eval(x.exp())), guess)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caputo(beta: f64) -> BernsteinTable {
        BernsteinTable::new(KernelSpec::caputo(beta)).unwrap()
    }

    #[test]
    fn stable_examples() {
        let t = caputo(0.5);
        assert!((t.phi(4.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(t.phi(0.0).unwrap(), 0.0);
        assert!((t.H(4.0).unwrap() - 1.0).abs() < 1e-11);
        assert!((t.phi_prime(4.0).unwrap() - 0.25).abs() < 1e-11);
        assert!((t.invert(Which::Phi, 2.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((t.invert(Which::H, 1.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((t.invert(Which::B, 1.0).unwrap() - 2.0).abs() < 1e-9);
        assert!((t.b(2.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((t.b_inv_fast(1.0) - 2.0).abs() < 1e-8);
        assert!((t.phi_inv_fast(2.0) - 4.0).abs() < 1e-8);
        assert!((t.phi_fast(3.7) / 3.7f64.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_phi_closed_form() {
        // phi = [sqrt(pi lam) erf(sqrt lam) - (1 - e^{-lam})] / sqrt(pi)
        let t = BernsteinTable::new(KernelSpec::truncated(0.5, 1.0, 1.0 / statrs::function::gamma::gamma(0.5))).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        for lam in [0.01, 1.0, 100.0, 1e4] {
            let exact = ((std::f64::consts::PI * lam).sqrt() * statrs::function::erf::erf(lam.sqrt()) - (1.0 - (-lam).exp())) / sp;
            let v = t.phi(lam).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-9, "{lam} {v} {exact}");
        }
        // the correction to lam^{1/2} is O(lam^{-1/2}) relative
        assert!((t.phi(100.0).unwrap() - 9.435810416452243).abs() < 1e-9);
    }

    #[test]
    fn bar_phi() {
        let t = caputo(0.5);
        let (v, fl) = t.bar_phi_alpha(2.0, 8.0).unwrap();
        assert!((v - 4.0).abs() < 1e-9 && !fl);
        assert_eq!(t.bar_phi_alpha(2.0, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn variational_examples() {
        let sq = PhiShape::power(2.0);
        assert!((calM(&sq, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        for l in [1e-3, 0.1, 7.0, 1e3] {
            assert!((calM(&sq, l * l, l).unwrap() - 0.25).abs() < 1e-12);
        }
        let v = calM(&PhiShape::power(3.0), 1.0, 3.0).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        assert!(calM(&PhiShape::power(1.0), 1.0, 1.0).is_err());
        let t = caputo(0.5);
        let n = calN(&t, &sq, 1.0, 4.0).unwrap();
        assert!((n - 3.0).abs() < 1e-8, "{n}");
    }
}
