//! Tail kernels `w` and their Levy measures `-dw`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailClass {
    Power,
    Exponential,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Power {
        beta: f64,
        scale: f64,
    },
    Truncated {
        beta: f64,
        delta: f64,
        scale: f64,
    },
    Subexp {
        beta: f64,
        theta: f64,
        c0: f64,
        #[serde(rename = "smallBeta")]
        small_beta: f64,
    },
    #[serde(alias = "distributedorder")]
    Distributed {
        weights: Vec<(f64, f64)>,
    },
    Tabulated {
        knots: Vec<(f64, f64)>,
        #[serde(default)]
        atoms: Vec<(f64, f64)>,
        tail: TailClass,
    },
}

impl KernelSpec {
    /// `w(s) = s^{-beta} / Gamma(1 - beta)`, so that `phi(lambda) = lambda^beta`.
    pub fn caputo(beta: f64) -> Self {
        KernelSpec::Power { beta, scale: 1.0 / gamma(1.0 - beta) }
    }

    pub fn truncated(beta: f64, delta: f64, scale: f64) -> Self {
        KernelSpec::Truncated { beta, delta, scale }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            KernelSpec::Power { beta, scale } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return bad("power: beta must lie in (0,1)");
                }
                if !(*scale > 0.0) {
                    return bad("power: scale must be positive");
                }
            }
            KernelSpec::Truncated { beta, delta, scale } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return bad("truncated: beta must lie in (0,1)");
                }
                if !(*delta > 0.0) || !(*scale > 0.0) {
                    return bad("truncated: delta and scale must be positive");
                }
            }
            KernelSpec::Subexp { beta, theta, c0, small_beta } => {
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return bad("subexp: beta must lie in (0,1]");
                }
                if !(*theta > 0.0) || !(*c0 > 0.0) {
                    return bad("subexp: theta and c0 must be positive");
                }
                if !(*small_beta > 0.0 && *small_beta < 1.0) {
                    return bad("subexp: smallBeta must lie in (0,1)");
                }
            }
            KernelSpec::Distributed { weights } => {
                if weights.is_empty() {
                    return bad("distributed: empty weight list");
                }
                if weights.iter().any(|(b, k)| !(*b > 0.0 && *b < 1.0) || !(*k >= 0.0)) {
                    return bad("distributed: need beta_i in (0,1), kappa_i >= 0");
                }
                if weights.iter().all(|(_, k)| *k == 0.0) {
                    return bad("distributed: all weights zero");
                }
            }
            KernelSpec::Tabulated { knots, atoms, tail } => {
                if knots.len() < 2 {
                    return bad("tabulated: need at least two knots");
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return bad("tabulated: knot abscissae must increase");
                    }
                    if !(w[1].1 < w[0].1) {
                        return bad("tabulated: knot values must strictly decrease");
                    }
                }
                let last = knots.len() - 1;
                for (i, k) in knots.iter().enumerate() {
                    let zero_ok = i == last && *tail == TailClass::Truncated;
                    if !(k.0 > 0.0) || !(k.1 > 0.0 || (zero_ok && k.1 == 0.0)) {
                        return bad("tabulated: knots must be positive");
                    }
                }
                if *tail == TailClass::Truncated && knots[last].1 != 0.0 {
                    return bad("tabulated: truncated tail needs w = 0 at the last knot");
                }
                for a in atoms {
                    if !knots.iter().any(|k| k.0 == a.0) {
                        return bad("tabulated: atoms allowed only at knots");
                    }
                    if !(a.1 > 0.0) {
                        return bad("tabulated: atom masses must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    /// Right endpoint of the support of `-dw`, if finite.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            KernelSpec::Truncated { delta, .. } => Some(*delta),
            KernelSpec::Tabulated { knots, tail: TailClass::Truncated, .. } => Some(knots[knots.len() - 1].0),
            _ => None,
        }
    }

    /// Points where `w` changes analytic form.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            KernelSpec::Truncated { delta, .. } => vec![*delta],
            KernelSpec::Subexp { .. } => vec![1.0],
            KernelSpec::Tabulated { knots, .. } => knots.iter().map(|k| k.0).collect(),
            _ => vec![],
        }
    }

    fn atom_at(&self, s: f64) -> f64 {
        match self {
            KernelSpec::Tabulated { atoms, .. } => atoms.iter().filter(|a| a.0 == s).map(|a| a.1).sum(),
            _ => 0.0,
        }
    }

    /// Evaluate `w(s)`.
    pub fn eval_w(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("w evaluated at s = {s}")));
        }
        Ok(self.w(s))
    }

    /// `w(s)` for `s > 0` without the domain check.
    pub fn w(&self, s: f64) -> f64 {
        match self {
            KernelSpec::Power { beta, scale } => scale * s.powf(-beta),
            KernelSpec::Truncated { beta, delta, scale } => {
                if s >= *delta {
                    0.0
                } else {
                    scale * (s.powf(-beta) - delta.powf(-beta))
                }
            }
            KernelSpec::Subexp { beta, theta, c0, small_beta } => {
                if s <= 1.0 {
                    c0 * (-theta).exp() * s.powf(-small_beta)
                } else {
                    c0 * (-theta * s.powf(*beta)).exp()
                }
            }
            KernelSpec::Distributed { weights } => {
                weights.iter().map(|(b, k)| k * s.powf(-b) / gamma(1.0 - b)).sum()
            }
            KernelSpec::Tabulated { knots, tail, .. } => tab_eval(knots, *tail, s, self),
        }
    }

    /// Levy density `nu(s) = -w'(s)`.
    pub fn levy_density(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("density evaluated at s = {s}")));
        }
        match self {
            KernelSpec::Power { beta, scale } => Ok(scale * beta * s.powf(-beta - 1.0)),
            KernelSpec::Truncated { beta, delta, scale } => {
                Ok(if s >= *delta { 0.0 } else { scale * beta * s.powf(-beta - 1.0) })
            }
            KernelSpec::Subexp { beta, theta, c0, small_beta } => Ok(if s <= 1.0 {
                c0 * (-theta).exp() * small_beta * s.powf(-small_beta - 1.0)
            } else {
                c0 * theta * beta * s.powf(beta - 1.0) * (-theta * s.powf(*beta)).exp()
            }),
            KernelSpec::Distributed { weights } => {
                Ok(weights.iter().map(|(b, k)| k * b * s.powf(-b - 1.0) / gamma(1.0 - b)).sum())
            }
            KernelSpec::Tabulated { knots, tail, .. } => {
                if self.atom_at(s) > 0.0 {
                    return Err(Error::AtomHere(s));
                }
                let h = 1e-7 * s;
                let (a, b) = (s - h, s + h);
                let seg = |x: f64| knots.iter().filter(|k| k.0 <= x).count();
                if seg(a) != seg(b) {
                    // derivative taken on the right piece at a knot
                    let wb = tab_eval(knots, *tail, s + 2.0 * h, self);
                    let wa = tab_eval(knots, *tail, s, self);
                    return Ok(((wa - wb) / (2.0 * h)).max(0.0));
                }
                Ok(((tab_eval(knots, *tail, a, self) - tab_eval(knots, *tail, b, self)) / (2.0 * h)).max(0.0))
            }
        }
    }

    /// Point masses of `-dw` as `(s, jump)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            KernelSpec::Tabulated { atoms, .. } => atoms.clone(),
            _ => vec![],
        }
    }

    /// Solve `w(s) = y`. For kernels with atoms, a `y` inside a jump returns the atom location.
    pub fn inverse_w(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Range(format!("w^(-1) needs 0 < y < inf, got {y}")));
        }
        match self {
            KernelSpec::Power { beta, scale } => Ok((y / scale).powf(-1.0 / beta)),
            KernelSpec::Truncated { beta, delta, scale } => Ok((y / scale + delta.powf(-beta)).powf(-1.0 / beta)),
            KernelSpec::Subexp { beta, theta, c0, small_beta } => {
                let c = c0 * (-theta).exp();
                if y >= c {
                    Ok((y / c).powf(-1.0 / small_beta))
                } else {
                    Ok(((c0 / y).ln() / theta).powf(1.0 / beta))
                }
            }
            KernelSpec::Distributed { weights } => self.inverse_w_distributed(weights, y),
            _ => self.inverse_w_bisect(y),
        }
    }

    // Newton on ln w(e^x), whose slope is minus a weighted mean of the betas
    fn inverse_w_distributed(&self, weights: &[(f64, f64)], y: f64) -> Result<f64> {
        let terms: Vec<(f64, f64)> =
            weights.iter().filter(|(_, k)| *k > 0.0).map(|(b, k)| (*b, k / statrs::function::gamma::gamma(1.0 - b))).collect();
        let ly = y.ln();
        let kap: f64 = terms.iter().map(|t| t.1).sum();
        let bm: f64 = terms.iter().map(|t| t.0 * t.1).sum::<f64>() / kap;
        let mut x = -(ly - kap.ln()) / bm;
        for _ in 0..60 {
            let (mut w, mut d) = (0.0, 0.0);
            for (b, c) in &terms {
                let v = c * (-b * x).exp();
                w += v;
                d += b * v;
            }
            let step = (w.ln() - ly) / (d / w);
            if !step.is_finite() {
                break;
            }
            x += step;
            if step.abs() < 1e-14 * x.abs().max(1.0) {
                return Ok(x.exp());
            }
        }
        self.inverse_w_bisect(y)
    }

    fn inverse_w_bisect(&self, y: f64) -> Result<f64> {
        let mut lo = 1.0;
        let mut hi = 1.0;
        let mut n = 0;
        while self.w(lo) < y {
            lo *= 0.5;
            n += 1;
            if n > 4000 || lo == 0.0 {
                return Err(Error::Range(format!("y = {y:e} above the range of w")));
            }
        }
        n = 0;
        while self.w(hi) >= y {
            if let Some(e) = self.support_end() {
                if hi >= e {
                    return Ok(e);
                }
                hi = (hi * 2.0).min(e);
            } else {
                hi *= 2.0;
            }
            n += 1;
            if n > 4000 || !hi.is_finite() {
                return Err(Error::Range(format!("y = {y:e} below the range of w")));
            }
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if b - a < 1e-15 {
                break;
            }
            if self.w(m.exp()) >= y {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(b.exp())
    }

    /// `int_a^b w(u) du` for `0 <= a < b`.
    pub fn int_w(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let pow_int = |beta: f64, a: f64, b: f64| (b.powf(1.0 - beta) - a.powf(1.0 - beta)) / (1.0 - beta);
        match self {
            KernelSpec::Power { beta, scale } => scale * pow_int(*beta, a, b),
            KernelSpec::Truncated { beta, delta, scale } => {
                let b = b.min(*delta);
                if a >= b {
                    return 0.0;
                }
                scale * (pow_int(*beta, a, b) - delta.powf(-beta) * (b - a))
            }
            KernelSpec::Distributed { weights } => {
                weights.iter().map(|(be, k)| k / gamma(1.0 - be) * pow_int(*be, a, b)).sum()
            }
            KernelSpec::Subexp { theta, c0, small_beta, .. } => {
                let c = c0 * (-theta).exp();
                let mut v = 0.0;
                if a < 1.0 {
                    v += c * pow_int(*small_beta, a, b.min(1.0));
                }
                if b > 1.0 {
                    let lo = a.max(1.0);
                    let hi = b.min(lo + 1e4);
                    v += quad::log_panels(|s| self.w(s), lo, hi, &[], 1e-12);
                }
                v
            }
            KernelSpec::Tabulated { knots, .. } => {
                let first = knots[0].0;
                let mut v = 0.0;
                let mut lo = a;
                if a < first {
                    let p = tab_slope(knots, 0);
                    let hi = b.min(first);
                    // power extension below the first knot
                    v += self.w(first) * first.powf(p) * pow_int(p, a, hi);
                    lo = hi;
                }
                if b > lo {
                    let mut br = self.breakpoints();
                    if let Some(e) = self.support_end() {
                        br.push(e);
                    }
                    let hi = match self.support_end() {
                        Some(e) => b.min(e),
                        None => b.min(knots[knots.len() - 1].0 * 1e6),
                    };
                    v += quad::log_panels(|s| self.w(s), lo, hi, &br, 1e-12);
                }
                v
            }
        }
    }

    /// Small-jump drift `d_eps = int_0^eps s nu(ds) = int_0^eps w - eps w(eps)`.
    pub fn small_jump_mean(&self, eps: f64) -> f64 {
        (self.int_w(0.0, eps) - eps * self.w(eps)).max(0.0)
    }

    /// `int_0^inf min(1,s) (-dw)(ds) = int_0^1 w(u) du`.
    pub fn ker_integral(&self) -> f64 {
        self.int_w(0.0, 1.0)
    }

    /// Structural condition check on logarithmic grids.
    pub fn check_conditions(&self) -> ConditionReport {
        check_conditions(self)
    }
}

fn tab_slope(knots: &[(f64, f64)], i: usize) -> f64 {
    let (s0, w0) = knots[i];
    let (s1, w1) = knots[i + 1];
    (w0.ln() - w1.ln()) / (s1.ln() - s0.ln())
}

fn tab_eval(knots: &[(f64, f64)], tail: TailClass, s: f64, k: &KernelSpec) -> f64 {
    let n = knots.len();
    if s < knots[0].0 {
        let p = tab_slope(knots, 0);
        return knots[0].1 * (s / knots[0].0).powf(-p);
    }
    let last = knots[n - 1];
    if s >= last.0 {
        return match tail {
            TailClass::Truncated => 0.0,
            TailClass::Power => {
                let p = tab_slope(knots, n - 2);
                last.1 * (s / last.0).powf(-p)
            }
            TailClass::Exponential => {
                let p = tab_slope(knots, n - 2);
                last.1 * (-(p / last.0) * (s - last.0)).exp()
            }
        };
    }
    let i = knots.partition_point(|kn| kn.0 <= s) - 1;
    let (s0, w0) = knots[i];
    let (s1, w1) = knots[i + 1];
    // left limit at the right knot includes the atom there
    let w1m = w1 + k.atom_at(s1);
    if tail == TailClass::Truncated && i + 1 == n - 1 {
        return w0 + (w1m - w0) * (s - s0) / (s1 - s0);
    }
    let f = (s.ln() - s0.ln()) / (s1.ln() - s0.ln());
    (w0.ln() + f * (w1m.ln() - w0.ln())).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SPoly {
    pub t_s: f64,
    pub delta1: f64,
    pub c: f64,
    pub empirical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LPoly {
    pub delta2: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sub {
    pub beta: f64,
    pub theta: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trunc {
    pub t_f: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub delta3: f64,
    pub slope_min: f64,
    pub slope_max: f64,
}

/// One ratio-inequality family `w(R)/w(r) >= c (R/r)^{-delta}` checked on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub condition: String,
    pub exponent: f64,
    pub range: (f64, f64),
    pub pairs: usize,
    pub c: f64,
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub ker_ok: bool,
    pub ker_integral: f64,
    pub spoly: Option<SPoly>,
    pub lpoly: Option<LPoly>,
    pub sub: Option<Sub>,
    pub trunc: Option<Trunc>,
    pub evidence: Vec<Evidence>,
    pub diagnostics: Vec<String>,
}

const PER_DECADE: usize = 64;

fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * PER_DECADE as f64).round().max(2.0) as usize + 1;
    quad::logspace(lo, hi, n)
}

/// Min over pairs `r <= R` in `grid` of `w(R) R^d / (w(r) r^d)`, with the worst pair.
fn ls_constant(k: &KernelSpec, grid: &[f64], d: f64) -> (f64, (f64, f64), Vec<f64>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = grid[0];
    let mut c = f64::INFINITY;
    let mut worst = (grid[0], grid[0]);
    let mut running = Vec::with_capacity(grid.len());
    for &s in grid {
        let g = (k.w(s).ln()) + d * s.ln();
        if g > best {
            best = g;
            arg = s;
        }
        let v = (g - best).exp();
        if v < c {
            c = v;
            worst = (arg, s);
        }
        running.push(c);
    }
    (c, worst, running)
}

fn max_slope(k: &KernelSpec, lo: f64, hi: f64) -> (f64, f64) {
    let g = log_grid(lo, hi);
    let mut mx = f64::NEG_INFINITY;
    let mut mn = f64::INFINITY;
    for w in g.windows(2) {
        let s = (k.w(w[0]).ln() - k.w(w[1]).ln()) / (w[1].ln() - w[0].ln());
        mx = mx.max(s);
        mn = mn.min(s);
    }
    (mn, mx)
}

pub fn check_conditions(k: &KernelSpec) -> ConditionReport {
    let mut rep = ConditionReport {
        ker_ok: false,
        ker_integral: f64::NAN,
        spoly: None,
        lpoly: None,
        sub: None,
        trunc: None,
        evidence: vec![],
        diagnostics: vec![],
    };
    if let Err(e) = k.validate() {
        rep.diagnostics.push(e.to_string());
        return rep;
    }
    if let KernelSpec::Tabulated { knots, .. } = k {
        if knots.len() < 4 {
            rep.diagnostics.push(format!("insufficient resolution: {} knots (need at least 4)", knots.len()));
            return rep;
        }
    }
    let ki = k.ker_integral();
    rep.ker_integral = ki;
    rep.ker_ok = ki.is_finite() && ki > 0.0;

    let (lo, mut hi) = (1e-6f64, 1e6f64);
    if let Some(e) = k.support_end() {
        hi = hi.min(e);
    }
    let (_, delta1) = max_slope(k, 1e-6, 1e-4);

    if let Some(tf) = k.support_end() {
        let g = log_grid(lo, tf / 2.0);
        let (c, worst, _) = ls_constant(k, &g, delta1);
        rep.evidence.push(Evidence {
            condition: "spoly".into(),
            exponent: delta1,
            range: (lo, tf / 2.0),
            pairs: g.len() * (g.len() + 1) / 2,
            c,
            worst,
        });
        rep.spoly = Some(SPoly { t_s: tf / 2.0, delta1, c, empirical: false });
        // secant slopes on [t_f/4, t_f]
        let pts: Vec<f64> = (0..32).map(|i| tf / 4.0 + 0.75 * tf * i as f64 / 31.0).collect();
        let (mut smin, mut smax) = (f64::INFINITY, 0.0f64);
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let sl = (k.w(pts[i]) - k.w(pts[j])) / (pts[j] - pts[i]);
                smin = smin.min(sl);
                smax = smax.max(sl);
            }
        }
        let kk = smax.max(1.0 / smin).max(1.0);
        rep.trunc = Some(Trunc { t_f: tf, k: kk, delta3: delta1, slope_min: smin, slope_max: smax });
        rep.evidence.push(Evidence {
            condition: "trunc-lipschitz".into(),
            exponent: 1.0,
            range: (tf / 4.0, tf),
            pairs: 32 * 31 / 2,
            c: 1.0 / kk,
            worst: (smin, smax),
        });
    } else {
        let g = log_grid(lo, hi);
        let (c_all, worst_all, running) = ls_constant(k, &g, delta1);
        let idx = running.iter().rposition(|c| *c >= 0.25).unwrap_or(0);
        let t_s = g[idx];
        let c = running[idx];
        rep.evidence.push(Evidence {
            condition: "spoly".into(),
            exponent: delta1,
            range: (lo, t_s),
            pairs: (idx + 1) * (idx + 2) / 2,
            c,
            worst: if idx + 1 == g.len() { worst_all } else { (g[0], t_s) },
        });
        let _ = c_all;
        rep.spoly = Some(SPoly { t_s, delta1, c, empirical: true });

        let (mn, mx) = max_slope(k, 1e4, 1e6);
        if mx.is_finite() && mn > 0.0 && mx / mn < 1.5 {
            let g = log_grid(1.0, 1e6);
            let (c, worst, _) = ls_constant(k, &g, mx);
            rep.evidence.push(Evidence {
                condition: "lpoly".into(),
                exponent: mx,
                range: (1.0, 1e6),
                pairs: g.len() * (g.len() + 1) / 2,
                c,
                worst,
            });
            if c >= 0.25 {
                rep.lpoly = Some(LPoly { delta2: mx, c });
            }
        }
    }

    match k {
        KernelSpec::Subexp { beta, theta, c0, .. } => {
            let g = log_grid(1.0, 1e6);
            let ok = g.iter().all(|&t| k.w(t) <= c0 * (-theta * t.powf(*beta)).exp() * (1.0 + 1e-12));
            if ok {
                rep.sub = Some(Sub { beta: *beta, theta: *theta, c0: *c0 });
            } else {
                rep.diagnostics.push("sub: declared bound violated on grid".into());
            }
        }
        KernelSpec::Tabulated { knots, tail: TailClass::Exponential, .. } => {
            let n = knots.len();
            let theta = tab_slope(knots, n - 2) / knots[n - 1].0;
            let last = knots[n - 1];
            let c0 = (1..n)
                .map(|i| knots[i].1 * (theta * knots[i].0).exp())
                .fold(last.1 * (theta * last.0).exp(), f64::max);
            rep.sub = Some(Sub { beta: 1.0, theta, c0 });
        }
        _ => {}
    }
    rep
}

/// The five kernel variants used for cross-kernel checks.
pub fn builtin_kernels() -> Vec<(String, KernelSpec)> {
    let tab_src = KernelSpec::caputo(0.6);
    let knots: Vec<(f64, f64)> = quad::logspace(1e-3, 1e3, 25).into_iter().map(|s| (s, tab_src.w(s))).collect();
    vec![
        ("power".into(), KernelSpec::caputo(0.5)),
        ("truncated".into(), KernelSpec::truncated(0.5, 1.0, 1.0 / gamma(0.5))),
        ("subexp".into(), KernelSpec::Subexp { beta: 0.5, theta: 1.0, c0: 1.0, small_beta: 0.5 }),
        ("distributed".into(), KernelSpec::Distributed { weights: vec![(0.3, 1.0), (0.7, 1.0)] }),
        ("tabulated".into(), KernelSpec::Tabulated { knots, atoms: vec![], tail: TailClass::Power }),
    ]
}
