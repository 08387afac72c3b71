//! Fundamental solution `p(t,x,y) = E[q(E_t,x,y)]` and the solution `u(t,x)`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::heat::{Geometry, HKModel, Probe};
use crate::kernel::KernelSpec;
use crate::quad::log_panels_gl;
use crate::sim::{sample_e_t, upper_tail_prob_tilted, PathEnsemble, SimConfig, TailEstimate};

const GRID: usize = 4096;

/// Law of `E_t` at a fixed `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum EtLaw {
    /// `P(E_t <= r) = erf(c r / (2 sqrt t))`, the half-stable case with `phi = c lambda^{1/2}`.
    HalfStable { t: f64, c: f64 },
    Empirical(EmpiricalLaw),
}

/// Gaussian-smoothed CDF of `ln E_t`, tabulated on a log grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub t: f64,
    pub bandwidth: f64,
    pub n: usize,
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
    dens: Vec<f64>,
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

impl EmpiricalLaw {
    pub fn from_samples(t: f64, samples: &[f64]) -> Result<Self> {
        let mut ls: Vec<f64> = samples.iter().filter(|v| **v > 0.0 && v.is_finite()).map(|v| v.ln()).collect();
        if ls.len() < 100 {
            return Err(Error::Precondition("need at least 100 positive samples of E_t".into()));
        }
        ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ls.len();
        let mean = ls.iter().sum::<f64>() / n as f64;
        let sd = (ls.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let iqr = ls[3 * n / 4] - ls[n / 4];
        let h = 0.9 * sd.min(iqr / 1.34).max(1e-12) * (n as f64).powf(-0.2);
        let lo = ls[0] - 6.0 * h;
        let hi = ls[n - 1] + 6.0 * h;
        let step = (hi - lo) / (GRID - 1) as f64;
        // bin on the grid, then smooth
        let mut counts = vec![0.0; GRID];
        for v in &ls {
            let i = (((v - lo) / step).round() as usize).min(GRID - 1);
            counts[i] += 1.0 / n as f64;
        }
        let reach = (6.0 * h / step).ceil() as isize;
        let mut cdf = vec![0.0; GRID];
        let mut dens = vec![0.0; GRID];
        for (i, c) in counts.iter().enumerate().filter(|(_, c)| **c > 0.0) {
            let a = (i as isize - reach).max(0) as usize;
            let b = ((i as isize + reach) as usize).min(GRID - 1);
            for j in a..=b {
                let z = (j as f64 - i as f64) * step / h;
                dens[j] += c * (-0.5 * z * z).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
            }
            for (j, f) in cdf.iter_mut().enumerate().skip(a) {
                *f += c * if j > b { 1.0 } else { norm_cdf((j as f64 - i as f64) * step / h) };
            }
        }
        // monotone projection
        for j in 1..GRID {
            if cdf[j] < cdf[j - 1] {
                cdf[j] = cdf[j - 1];
            }
        }
        Ok(Self { t, bandwidth: h, n, lo, step, cdf, dens })
    }

    fn interp(&self, v: &[f64], r: f64) -> f64 {
        let x = (r.ln() - self.lo) / self.step;
        if x <= 0.0 {
            return v[0];
        }
        if x >= (GRID - 1) as f64 {
            return v[GRID - 1];
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        v[i] * (1.0 - f) + v[i + 1] * f
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo.exp(), (self.lo + self.step * (GRID - 1) as f64).exp())
    }
}

impl EtLaw {
    /// Closed form when the kernel is a power kernel with exponent 1/2, otherwise `None`.
    pub fn closed_form(kernel: &KernelSpec, t: f64) -> Option<Self> {
        match kernel {
            KernelSpec::Power { beta, scale } if (*beta - 0.5).abs() < 1e-15 => {
                Some(EtLaw::HalfStable { t, c: scale * std::f64::consts::PI.sqrt() })
            }
            _ => None,
        }
    }

    /// Closed form where available, else the smoothed empirical law of a fresh `E_t` ensemble.
    pub fn for_kernel(kernel: &KernelSpec, cfg: &SimConfig, t: f64, phi_inv_t: f64) -> Result<Self> {
        if let Some(l) = Self::closed_form(kernel, t) {
            return Ok(l);
        }
        let e = sample_e_t(kernel, cfg, &[t], &[phi_inv_t])?;
        Ok(EtLaw::Empirical(EmpiricalLaw::from_samples(t, &e.column(0))?))
    }

    pub fn t(&self) -> f64 {
        match self {
            EtLaw::HalfStable { t, .. } => *t,
            EtLaw::Empirical(e) => e.t,
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            EtLaw::HalfStable { .. } => None,
            EtLaw::Empirical(e) => Some(e.bandwidth),
        }
    }

    /// `P(E_t <= r) = P(S_r >= t)`
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            EtLaw::HalfStable { t, c } => erf(c * r / (2.0 * t.sqrt())),
            EtLaw::Empirical(e) => e.interp(&e.cdf, r),
        }
    }

    pub fn density(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            EtLaw::HalfStable { t, c } => c * (-(c * r).powi(2) / (4.0 * t)).exp() / (std::f64::consts::PI * t).sqrt(),
            EtLaw::Empirical(e) => e.interp(&e.dens, r) / r,
        }
    }

    /// Integration window `(lo, hi)` in `r` outside of which the law carries no mass to double precision.
    pub fn window(&self) -> (f64, f64) {
        match self {
            EtLaw::HalfStable { t, c } => {
                let s = 2.0 * t.sqrt() / c;
                (s * 1e-16, s * 720f64.sqrt())
            }
            EtLaw::Empirical(e) => e.range(),
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            EtLaw::HalfStable { t, c } => 2.0 * t.sqrt() / c,
            EtLaw::Empirical(e) => (e.lo + e.step * (GRID / 2) as f64).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub value: f64,
    pub se: f64,
    pub method: String,
    /// smoothing bandwidth of an empirical `E_t` density, in `ln r` units
    pub bandwidth: Option<f64>,
    pub censored: usize,
}

/// `int_0^inf q(r) g_t(r) dr`; `breaks` are kinks of `q` in `r`.
pub fn p_quadrature<F: Fn(f64) -> f64>(q: F, law: &EtLaw, breaks: &[f64], rtol: f64) -> Result<PValue> {
    if law.bandwidth().is_some() && rtol < 1e-2 {
        return Err(Error::Precondition(format!(
            "empirical E_t density (bandwidth {:.3e}) cannot support relative target {rtol:e}; use >= 1e-2",
            law.bandwidth().unwrap()
        )));
    }
    let (lo, hi) = law.window();
    let mut br: Vec<f64> = breaks.to_vec();
    br.push(law.scale());
    // panel width in ln r: 1 resolves the closed-form density to ~1e-12, finer targets halve it
    let width = if rtol < 1e-10 { 0.5 } else { 1.0 };
    let v = log_panels_gl(|r| q(r) * law.density(r), lo, hi, &br, width);
    // mass below the window, with q evaluated at the window edge
    let head = q(lo) * law.cdf(lo);
    let method = if law.bandwidth().is_some() { "quadrature-empirical" } else { "quadrature" };
    Ok(PValue { value: v + head, se: 0.0, method: method.into(), bandwidth: law.bandwidth(), censored: 0 })
}

/// Ensemble mean of `q` over column `j` of an `E_t` ensemble.
pub fn p_mc<F: Fn(f64) -> f64>(q: F, ens: &PathEnsemble, j: usize) -> Result<PValue> {
    let e = ens.column(j);
    let n = e.len() as f64;
    let vals: Vec<f64> = e.iter().map(|r| q(*r)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    if mean > 0.0 && se / mean > 0.1 {
        // variance share by quartile of E_t
        let mut idx: Vec<usize> = (0..e.len()).collect();
        idx.sort_by(|a, b| e[*a].partial_cmp(&e[*b]).unwrap());
        let total: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
        let shares: Vec<String> = idx
            .chunks(e.len().div_ceil(4))
            .map(|c| format!("{:.3}", c.iter().map(|i| (vals[*i] - mean).powi(2)).sum::<f64>() / total))
            .collect();
        return Err(Error::IncreasePaths {
            rel_se: se / mean,
            detail: format!("variance share by E_t quartile [{}], n = {}", shares.join(", "), e.len()),
        });
    }
    Ok(PValue { value: mean, se, method: "mc".into(), bandwidth: None, censored: ens.censored_count(j) })
}

/// Kinks in `r` of the model kernel at distance `rho`.
pub fn model_breaks(model: &HKModel, p: &Probe) -> Vec<f64> {
    let mut b = vec![1.0];
    for v in [p.rho, p.delta_x, p.delta_y] {
        if v > 0.0 && v.is_finite() {
            b.push(model.big_phi(v));
        }
    }
    b
}

pub fn p_model_quadrature(model: &HKModel, law: &EtLaw, x: f64, y: f64, rtol: f64) -> Result<PValue> {
    let pr = model.geometry.probe(x, y)?;
    p_quadrature(|r| model.q_probe(r, &pr).unwrap_or(f64::NAN), law, &model_breaks(model, &pr), rtol)
}

pub fn p_model_mc(model: &HKModel, ens: &PathEnsemble, j: usize, x: f64, y: f64) -> Result<PValue> {
    let pr = model.geometry.probe(x, y)?;
    p_mc(|r| model.q_probe(r, &pr).unwrap_or(f64::NAN), ens, j)
}

/// Pieces of the domain as `(a, b)` with `a < b`, possibly infinite.
fn domain_pieces(g: &Geometry) -> Vec<(f64, f64)> {
    match g {
        Geometry::Interval { r } => vec![(0.0, *r)],
        Geometry::HalfLine => vec![(0.0, f64::INFINITY)],
        Geometry::Exterior => vec![(f64::NEG_INFINITY, -1.0), (1.0, f64::INFINITY)],
        Geometry::FreeSpace => vec![(f64::NEG_INFINITY, f64::INFINITY)],
    }
}

/// Far cutoff for unbounded pieces.
const FAR: f64 = 1e6;

/// `u(t,x) = int_D p(t,x,y) f(y) dy` with the inner value from `p_model_quadrature`.
pub fn solve_u<F: Fn(f64) -> f64>(model: &HKModel, law: &EtLaw, x: f64, f: F, rtol: f64) -> Result<PValue> {
    let g = &model.geometry;
    g.delta(x)?;
    let inner = |y: f64| p_model_quadrature(model, law, x, y, rtol).map(|p| p.value).unwrap_or(0.0) * f(y);
    let near = 1e-12 * law.scale().powf(1.0 / model.alpha).min(1.0);
    let mut total = 0.0;
    for (a, b) in domain_pieces(g) {
        // integrate in the distance h = |y - x| on each side of x
        let sides: [(f64, f64, f64); 2] = [(-1.0, x - b, x - a), (1.0, a - x, b - x)];
        for (sgn, h0, h1) in sides {
            let lo = h0.max(0.0);
            let hi = h1.min(FAR);
            if hi <= lo {
                continue;
            }
            let lo = if lo == 0.0 { near } else { lo };
            // boundary breaks: where y meets the piece ends
            let brk = [h0.abs(), h1.abs(), 1e-6, 1e-3, 1.0];
            total += log_panels_gl(|h| inner(x + sgn * h), lo, hi, &brk, 1.0);
        }
    }
    Ok(PValue { value: total, se: 0.0, method: "quadrature".into(), bandwidth: law.bandwidth(), censored: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub delta: f64,
    pub u: f64,
    /// `u / Phi(delta)^gamma`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySweep {
    pub t: f64,
    pub gamma: f64,
    pub rows: Vec<BoundaryRow>,
    /// max/min of the ratio column
    pub band: f64,
}

/// `u(t, x)` for `f = 1` at points `x` with `delta_D(x)` in `deltas`, against `Phi(delta)^gamma`.
pub fn boundary_sweep(model: &HKModel, law: &EtLaw, deltas: &[f64], rtol: f64) -> Result<BoundarySweep> {
    let gamma = model.class().0;
    let rows = deltas
        .iter()
        .map(|&d| {
            let x = match model.geometry {
                Geometry::Exterior => 1.0 + d,
                _ => d,
            };
            let u = solve_u(model, law, x, |_| 1.0, rtol)?.value;
            Ok(BoundaryRow { delta: d, u, ratio: u / model.big_phi(d).powf(gamma) })
        })
        .collect::<Result<Vec<_>>>()?;
    let hi = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(BoundarySweep { t: law.t(), gamma, rows, band: hi / lo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub r_lo: f64,
    pub r_hi: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityProbe {
    pub panels: Vec<Panel>,
    pub total: f64,
    pub diverges: bool,
    /// fitted `d ln(contribution) / d ln r` over the last panels
    pub slope: f64,
}

/// Dyadic panel sums of `int_0^{r_top} q0(r) d_r P(E_t <= r)` refined toward `r = 0`.
///
/// `cdf(r)` returns `P(S_r >= t)`. Refinement stops when a panel falls below `1e-3`
/// of the running total (convergence) or when the contributions stop decaying
/// over the last six panels (divergence).
pub fn singularity_probe<Q, C>(q0: Q, mut cdf: C, r_top: f64, max_panels: usize) -> Result<SingularityProbe>
where
    Q: Fn(f64) -> f64,
    C: FnMut(f64) -> Result<f64>,
{
    let mut panels = Vec::new();
    let mut hi = r_top;
    let mut f_hi = cdf(hi)?;
    let mut total = 0.0;
    let mut slope = f64::NAN;
    let tail = 6;
    for _ in 0..max_panels {
        let lo = hi / 2.0;
        let f_lo = cdf(lo)?;
        let c = q0((lo * hi).sqrt()) * (f_hi - f_lo).max(0.0);
        total += c;
        panels.push(Panel { r_lo: lo, r_hi: hi, contribution: c });
        hi = lo;
        f_hi = f_lo;
        if panels.len() >= tail {
            let last = &panels[panels.len() - tail..];
            slope = fit_slope(last);
            if c < 1e-3 * total && slope > 0.0 {
                return Ok(SingularityProbe { panels, total, diverges: false, slope });
            }
            // slopes below 1/4 are read as no decay
            if panels.len() >= 2 * tail && slope < 0.25 {
                return Ok(SingularityProbe { panels, total, diverges: true, slope });
            }
        }
    }
    Ok(SingularityProbe { panels, total, diverges: !(slope >= 0.25), slope })
}

fn fit_slope(ps: &[Panel]) -> f64 {
    let pts: Vec<(f64, f64)> =
        ps.iter().filter(|p| p.contribution > 0.0).map(|p| ((p.r_lo * p.r_hi).sqrt().ln(), p.contribution.ln())).collect();
    if pts.len() < 3 {
        // vanishing panels: treat as fast decay
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `P(S_r >= t)` for the probe: importance sampling with the mean-matching tilt.
pub fn tail_cdf_tilted<'a>(kernel: &'a KernelSpec, cfg: &'a SimConfig, t: f64) -> impl FnMut(f64) -> Result<f64> + 'a {
    let mut k = 0u64;
    move |r: f64| {
        k += 1;
        let c = SimConfig { seed: cfg.seed.wrapping_add(k), ..cfg.clone() };
        let e: TailEstimate = upper_tail_prob_tilted(kernel, &c, r, t)?;
        Ok(e.p)
    }
}
