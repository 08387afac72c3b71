//! Regime classification and structural tail bounds for `P(S_r >= t)` and `P(S_r <= t)`.

use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinTable, Which};
use crate::error::{Error, Result};
use crate::kernel::ConditionReport;

/// `1/(4e^2)`, the small-time threshold for `r phi(1/t)`.
pub const NEAR: f64 = 0.033833820809153176;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeTag {
    SmallTPoly,
    LargeTPoly,
    Subexp,
    TruncatedSmallR,
    TruncatedLinear,
    LowerTail,
    UniversalLower,
}

impl RegimeTag {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeTag::SmallTPoly => "small-t-poly",
            RegimeTag::LargeTPoly => "large-t-poly",
            RegimeTag::Subexp => "subexp",
            RegimeTag::TruncatedSmallR => "truncated-small-r",
            RegimeTag::TruncatedLinear => "truncated-linear",
            RegimeTag::LowerTail => "lower-tail",
            RegimeTag::UniversalLower => "universal-lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub constraints: Vec<String>,
    pub margin: f64,
}

/// Knobs for thresholds whose constants are existence statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailParams {
    pub margin: f64,
    /// large-time horizon `T`
    pub big_t: f64,
    /// `L` in `r/t <= L` (subexponential and truncated-linear)
    pub l_ratio: f64,
    /// `L` in `r phi(1/t) <= L` for the universal lower bound
    pub l_universal: f64,
    /// `N` in `r >= N b^{-1}(t)`
    pub n_lower: f64,
    /// `k` in the sharper subexponential form
    pub k_sub: f64,
}

impl Default for TailParams {
    fn default() -> Self {
        Self { margin: 2.0, big_t: 1.0, l_ratio: 0.5, l_universal: 1.0, n_lower: 1.0, k_sub: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperForm {
    pub tag: RegimeTag,
    /// kernel-dependent part with the free constant set to 1
    pub value: f64,
    /// `ln value`, finite even where `value` underflows
    pub ln_value: f64,
    /// `X` in a factor `exp(-c X)` left to the fit, if any
    pub exp_arg: Option<f64>,
    pub form: String,
    /// alternative sharper form where one exists
    pub alt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTailBounds {
    pub exponent: f64,
    pub upper: f64,
    /// `exp(-exponent)`; the true lower bound is `c1 exp(-c2 exponent)`
    pub lower_form: f64,
}

pub fn n_t(t: f64, t_f: f64) -> u32 {
    (t / t_f).floor() as u32 + 1
}

pub struct TailTheory<'a> {
    pub table: &'a BernsteinTable,
    pub report: ConditionReport,
    pub params: TailParams,
}

fn le(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-12)
}

impl<'a> TailTheory<'a> {
    pub fn new(table: &'a BernsteinTable, params: TailParams) -> Self {
        let report = table.kernel().check_conditions();
        Self { table, report, params }
    }

    fn phi(&self, lam: f64) -> f64 {
        self.table.phi_fast(lam)
    }

    /// Largest `r` admitted by the truncated small-`r` regime.
    pub fn trunc_r0(&self) -> Option<f64> {
        let tr = self.report.trunc.as_ref()?;
        let m = self.params.margin;
        // r phi(1/r) is increasing in r
        let g = |lr: f64| {
            let r = lr.exp();
            (r * self.phi(1.0 / r) / (NEAR / m)).ln()
        };
        let top = (tr.t_f / (6.0 * m)).ln();
        let r = if g(top) <= 0.0 { top } else { crate::quad::bisect(g, -40.0, top, 1e-12, 200) };
        Some(r.exp())
    }

    /// First matching regime in a fixed priority order, so the result is a partition.
    pub fn classify(&self, r: f64, t: f64) -> Result<Regime> {
        if !(r > 0.0 && t > 0.0) {
            return Err(Error::Domain("r and t must be positive".into()));
        }
        let m = self.params.margin;
        let rp = r * self.phi(1.0 / t);
        let mk = |tag, c: Vec<String>| Ok(Regime { tag, constraints: c, margin: m });
        if let Some(tr) = &self.report.trunc {
            if t >= tr.t_f / 2.0 {
                let r0 = self.trunc_r0().unwrap();
                if le(r, r0) {
                    return mk(
                        RegimeTag::TruncatedSmallR,
                        vec![format!("t >= t_f/2 = {}", tr.t_f / 2.0), format!("r <= r0 = {r0:e} (margin {m})")],
                    );
                }
                if le(r / t, self.params.l_ratio / m) {
                    return mk(RegimeTag::TruncatedLinear, vec![format!("r/t <= {}", self.params.l_ratio / m)]);
                }
            }
        }
        if self.report.sub.is_some() && t >= self.params.big_t && le(r / t, self.params.l_ratio / m) {
            return mk(RegimeTag::Subexp, vec![format!("r/t <= {}", self.params.l_ratio / m)]);
        }
        if let Some(sp) = &self.report.spoly {
            if le(t, sp.t_s) && le(rp, NEAR / m) {
                return mk(
                    RegimeTag::SmallTPoly,
                    vec![format!("t <= t_s = {}", sp.t_s), format!("r phi(1/t) <= 1/(4e^2 {m})")],
                );
            }
        }
        if self.report.lpoly.is_some() && t >= self.params.big_t && le(rp, NEAR / m) {
            return mk(
                RegimeTag::LargeTPoly,
                vec![format!("t >= T = {}", self.params.big_t), format!("r phi(1/t) <= 1/(4e^2 {m})")],
            );
        }
        if let Ok(bi) = self.table.invert(Which::B, t) {
            if r >= m * self.params.n_lower * bi {
                return mk(RegimeTag::LowerTail, vec![format!("r >= {m} N b^-1(t) = {:e}", m * self.params.n_lower * bi)]);
            }
        }
        if le(rp, self.params.l_universal / m) {
            return mk(RegimeTag::UniversalLower, vec![format!("r phi(1/t) <= L/{m}")]);
        }
        Err(Error::Regime(format!("(r, t) = ({r:e}, {t:e}) is unclassified")))
    }

    /// Structural upper form for the regime of `(r, t)`.
    pub fn upper_bound_form(&self, r: f64, t: f64) -> Result<UpperForm> {
        let reg = self.classify(r, t)?;
        let k = self.table.kernel();
        let out = |ln_value: f64, exp_arg, form: &str, alt| {
            Ok(UpperForm { tag: reg.tag, value: ln_value.exp(), ln_value, exp_arg, form: form.to_string(), alt })
        };
        match reg.tag {
            RegimeTag::SmallTPoly | RegimeTag::LargeTPoly => out((r * k.w(t)).ln(), None, "r w(t)", None),
            RegimeTag::Subexp => {
                let s = self.report.sub.as_ref().unwrap();
                let a = r.ln() - (s.theta / 2.0) * t.powf(s.beta);
                let b = r * (-s.theta * t.powf(s.beta) + self.params.k_sub * r).exp();
                out(a, None, "r exp(-(theta/2) t^beta)", Some(b))
            }
            RegimeTag::TruncatedSmallR => {
                let tf = self.report.trunc.as_ref().unwrap().t_f;
                let n = n_t(t, tf) as f64;
                let v = (r + (n * tf - t).powf(n)).ln() + n * r.ln();
                out(v, Some(t * t.ln()), "[r + (n t_f - t)^n] r^n exp(-c t log t)", None)
            }
            RegimeTag::TruncatedLinear => out(0.0, Some(t * (t / r).ln()), "exp(-c t log(t/r))", None),
            RegimeTag::LowerTail | RegimeTag::UniversalLower => Err(Error::Regime(format!(
                "no upper form for ({r:e}, {t:e}) in regime {}",
                reg.tag.name()
            ))),
        }
    }
}

/// `e^{-eL} r w(t)`, valid when `r phi(1/t) <= L`.
pub fn lower_bound_universal(table: &BernsteinTable, r: f64, t: f64, l: f64) -> Result<f64> {
    let rp = r * table.phi(1.0 / t)?;
    if !le(rp, l) {
        return Err(Error::Regime(format!("r phi(1/t) = {rp:e} exceeds L = {l:e}")));
    }
    Ok((-std::f64::consts::E * l).exp() * r * table.kernel().w(t))
}

/// Bounds on `P(S_r <= t)` through `r H((phi')^{-1}(t/r))`, valid for `r >= N b^{-1}(t)`.
pub fn lower_tail_bounds(table: &BernsteinTable, r: f64, t: f64, n: f64) -> Result<LowerTailBounds> {
    let bi = table.invert(Which::B, t)?;
    if r < n * bi * (1.0 - 1e-12) {
        return Err(Error::Regime(format!("r = {r:e} below N b^-1(t) = {:e}", n * bi)));
    }
    let lam = table.invert(Which::DPhi, t / r)?;
    let e = r * table.H(lam)?;
    Ok(LowerTailBounds { exponent: e, upper: (-e).exp(), lower_form: (-e).exp() })
}

/// Smallest `C` with `H(1/t)^{d+1} <= C phi(1/t)^d w(t)` over `ts`.
pub fn cauchy_constant(table: &BernsteinTable, delta: f64, ts: &[f64]) -> Result<f64> {
    let k = table.kernel();
    let mut c = 0.0f64;
    for &t in ts {
        let v = table.all(1.0 / t)?;
        c = c.max(v[2].powf(delta + 1.0) / (v[0].powf(delta) * k.w(t)));
    }
    Ok(c)
}

/// Smallest `C` with `phi(1/t)^{d+1} <= C w(t)` over `ts`.
pub fn decay_constant(table: &BernsteinTable, delta: f64, ts: &[f64]) -> Result<f64> {
    let k = table.kernel();
    let mut c = 0.0f64;
    for &t in ts {
        c = c.max(table.phi(1.0 / t)?.powf(delta + 1.0) / k.w(t));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_t_arithmetic() {
        assert_eq!(n_t(1.75, 1.0), 2);
        assert_eq!(n_t(0.5, 1.0), 1);
        assert_eq!(n_t(3.0, 1.0), 4);
    }

    #[test]
    fn near_constant() {
        assert!((NEAR - 0.25 * (-2.0f64).exp()).abs() < 1e-17);
    }
}
