//! Bounded-ratio checks and exponent-constant fits over regime grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinTable;
use crate::error::{Error, Result};
use crate::estimates::{theorem_estimate_prepared, Estimate, EstimateCase, Tag};
use crate::fundsol::{p_model_mc, p_model_quadrature, EtLaw};
use crate::heat::{Geometry, HKModel};
use crate::kernel::{ConditionReport, KernelSpec};
use crate::quad::logspace;
use crate::sim::{sample_e_t, SimConfig};

/// One aligned grid entry: observed value with its standard error, and the predicted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: BTreeMap<String, f64>,
    pub observed: f64,
    /// zero for exact observations
    pub se: f64,
    pub predicted: f64,
    #[serde(default)]
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub coords: BTreeMap<String, f64>,
    pub observed: f64,
    pub se: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpread {
    pub n: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// `c` in `exp(-c X)`
    pub c: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub intercept: f64,
    /// max absolute deviation of the log ratio from the fitted line
    pub residual: f64,
    pub t_stat: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub case: String,
    pub grid: String,
    pub n_points: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
    /// ratios with the observed value moved to its `3 se` envelope
    pub envelope_min: f64,
    pub envelope_max: f64,
    pub envelope_spread: f64,
    pub budget: f64,
    pub pass: bool,
    pub offenders: Vec<Offender>,
    /// keyed by branch label up to the first `:`
    pub branches: BTreeMap<String, BranchSpread>,
    pub fit: Option<ExpFit>,
    pub residual_cap: Option<f64>,
    pub notes: Vec<String>,
}

const WORST: usize = 5;

fn branch_key(b: &str) -> String {
    b.split(':').next().unwrap_or("").trim().to_string()
}

fn spread_of(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        (hi / lo).max(1.0)
    } else {
        f64::INFINITY
    }
}

/// Ratio `observed / predicted` over aligned grids; passes iff the `3 se` envelope spread is within `budget`.
pub fn two_sided_check(case: &str, grid: &str, points: &[Point], budget: f64) -> Result<RatioReport> {
    if points.is_empty() {
        return Err(Error::Regime(format!("{case}: empty grid")));
    }
    if !(budget >= 1.0) {
        return Err(Error::Config(format!("spread budget {budget} must be at least 1")));
    }
    for p in points {
        if !(p.predicted > 0.0 && p.predicted.is_finite()) {
            return Err(Error::Domain(format!("predicted value {:e} at {:?} is not positive", p.predicted, p.coords)));
        }
        if !(p.observed.is_finite() && p.se >= 0.0) {
            return Err(Error::Domain(format!("observed value {:e} (se {:e}) at {:?}", p.observed, p.se, p.coords)));
        }
    }
    let ratio: Vec<f64> = points.iter().map(|p| p.observed / p.predicted).collect();
    let lo: Vec<f64> = points.iter().map(|p| (p.observed - 3.0 * p.se).max(0.0) / p.predicted).collect();
    let hi: Vec<f64> = points.iter().map(|p| (p.observed + 3.0 * p.se) / p.predicted).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (rmin, rmax) = (min(&ratio), max(&ratio));
    let (emin, emax) = (min(&lo), max(&hi));
    let envelope_spread = spread_of(emin, emax);

    // worst points by distance of ln ratio from the median
    let mut ln: Vec<f64> = ratio.iter().map(|r| if *r > 0.0 { r.ln() } else { f64::NEG_INFINITY }).collect();
    let mut sorted = ln.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = sorted[sorted.len() / 2];
    for v in ln.iter_mut() {
        *v = (*v - med).abs();
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|a, b| ln[*b].partial_cmp(&ln[*a]).unwrap().then(a.cmp(b)));
    let offenders = idx
        .iter()
        .take(WORST.min(points.len()))
        .filter(|i| ln[**i] > 0.0)
        .map(|&i| Offender {
            coords: points[i].coords.clone(),
            observed: points[i].observed,
            se: points[i].se,
            predicted: points[i].predicted,
            ratio: ratio[i],
            branch: points[i].branch.clone(),
        })
        .collect();

    let mut branches: BTreeMap<String, BranchSpread> = BTreeMap::new();
    for (p, r) in points.iter().zip(&ratio) {
        let e = branches.entry(branch_key(&p.branch)).or_insert(BranchSpread {
            n: 0,
            ratio_min: f64::INFINITY,
            ratio_max: f64::NEG_INFINITY,
            spread: 1.0,
        });
        e.n += 1;
        e.ratio_min = e.ratio_min.min(*r);
        e.ratio_max = e.ratio_max.max(*r);
        e.spread = spread_of(e.ratio_min, e.ratio_max);
    }

    Ok(RatioReport {
        case: case.into(),
        grid: grid.into(),
        n_points: points.len(),
        ratio_min: rmin,
        ratio_max: rmax,
        spread: spread_of(rmin, rmax),
        envelope_min: emin,
        envelope_max: emax,
        envelope_spread,
        budget,
        pass: envelope_spread <= budget,
        offenders,
        branches,
        fit: None,
        residual_cap: None,
        notes: vec![],
    })
}

fn lsq(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - icpt - slope * a).collect();
    let ssr: f64 = res.iter().map(|r| r * r).sum();
    let se = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    let maxdev = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    (slope, icpt, se, maxdev)
}

/// Least-squares fit of `log_ratio ~ a - c X`. `log_se`, when given, is the standard error of each
/// log ratio; `c_low`/`c_high` come from refitting on the `3 se` envelopes.
pub fn exp_constant_fit(log_ratio: &[f64], x: &[f64], log_se: Option<&[f64]>) -> Result<ExpFit> {
    if log_ratio.len() != x.len() || log_se.is_some_and(|s| s.len() != x.len()) {
        return Err(Error::Precondition("grids are not aligned".into()));
    }
    if x.len() < 3 {
        return Err(Error::Precondition(format!("{} points, need at least 3", x.len())));
    }
    if log_ratio.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::Domain("log ratio and X must be finite".into()));
    }
    let (xlo, xhi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(xlo > 0.0) || (xhi / xlo).log10() < 1.5 {
        return Err(Error::Precondition(format!("X spans [{xlo:e}, {xhi:e}], need positive X over 1.5 decades")));
    }
    let (slope, icpt, se, residual) = lsq(x, log_ratio);
    let t_stat = if se > 0.0 { slope.abs() / se } else { f64::INFINITY };
    if t_stat < 2.0 {
        return Err(Error::NoSignal(format!("slope {slope:.3e} with t-statistic {t_stat:.2}")));
    }
    let c = -slope;
    let (c_low, c_high) = match log_se {
        Some(s) => {
            let up: Vec<f64> = log_ratio.iter().zip(s).map(|(y, e)| y + 3.0 * e).collect();
            let dn: Vec<f64> = log_ratio.iter().zip(s).map(|(y, e)| y - 3.0 * e).collect();
            let (a, b) = (-lsq(x, &up).0, -lsq(x, &dn).0);
            (a.min(b).min(c), a.max(b).max(c))
        }
        None => (c, c),
    };
    Ok(ExpFit { c, c_low, c_high, intercept: icpt, residual, t_stat, n: x.len() })
}

/// Overrides for the candidate axes of a regime grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub t: Option<[f64; 2]>,
    /// distance of `x` to the boundary
    pub delta: Option<[f64; 2]>,
    pub rho: Option<[f64; 2]>,
    /// include `y = x`
    pub diagonal: bool,
    /// cap on points per axis while refining
    pub max_per_axis: Option<usize>,
    /// keep only points whose exponent argument `X` lies in this window
    pub exp_arg: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeGrid {
    pub tag: Tag,
    pub description: String,
    pub requested: usize,
    pub points: Vec<GridPoint>,
    pub per_axis: usize,
    pub candidates: usize,
}

impl RegimeGrid {
    pub fn achieved(&self) -> usize {
        self.points.len()
    }
}

fn t_window(tag: Tag, rep: &ConditionReport, m: &HKModel, horizon: f64, kernel: &KernelSpec) -> Result<[f64; 2]> {
    use Tag::*;
    let tf = rep.trunc.as_ref().map(|t| t.t_f);
    let small = |hi: f64| [hi * 1e-4, hi];
    Ok(match tag {
        SpecialsmallIA | SpecialsmallIB | SpecialsmallIiA | SpecialsmallIiB | SpecialsmallIiC | MainsmallI
        | MainsmallIiA | MainsmallIiB | MainsmallIiC => {
            let ts = rep.spoly.as_ref().map(|s| s.t_s).ok_or_else(|| Error::Regime("no small-time condition".into()))?;
            small(ts.min(horizon))
        }
        Example2I | Example2Ii => small(1.0),
        SpeciallargeI | SpeciallargeIi | SpeciallargeIii | SpeciallargeIv | SpeciallargeV | MainlargeI | MainlargeIi
        | SpecialsubI | SpecialsubIi | MainsubI | MainsubIi => [horizon, horizon * 1e3],
        Example2Iii => [1.0, 1e3],
        SpecialtruncI | SpecialtruncIi | SpecialtruncIii | Main2I | Main2Ii => {
            let tf = tf.ok_or_else(|| Error::Regime("needs a truncated kernel".into()))?;
            let top = (m.d / m.alpha + 2.0 * m.gamma).floor().max(1.0) + 2.0;
            [tf / 2.0, top * tf]
        }
        Example1Small | Example1Large => {
            let delta = match kernel {
                KernelSpec::Truncated { delta, .. } => *delta,
                _ => return Err(Error::Regime("the truncated-kernel example needs a truncated kernel".into())),
            };
            if tag == Example1Small {
                [delta * 1e-3, delta / 2.0]
            } else {
                [delta / 2.0, delta * (m.d / m.alpha + 3.0)]
            }
        }
    })
}

fn positions(g: &Geometry, delta: [f64; 2], n: usize) -> Vec<f64> {
    match g {
        Geometry::Interval { .. } | Geometry::HalfLine => logspace(delta[0], delta[1], n),
        Geometry::Exterior => logspace(delta[0], delta[1], n).into_iter().map(|d| 1.0 + d).collect(),
        Geometry::FreeSpace => vec![0.0],
    }
}

/// Log-spaced `(t, x, y)` grid filtered by the case's regime predicates (margin from the case).
/// Refines until `resolution` points are admissible or the per-axis cap is reached.
pub fn regime_grid(case: &EstimateCase, resolution: usize, spec: &GridSpec) -> Result<RegimeGrid> {
    let table = BernsteinTable::new(case.kernel.clone())?;
    regime_grid_with(&table, case, resolution, spec)
}

pub fn regime_grid_with(table: &BernsteinTable, case: &EstimateCase, resolution: usize, spec: &GridSpec) -> Result<RegimeGrid> {
    let rep = table.kernel().check_conditions();
    let m = &case.model;
    m.validate()?;
    let g = &m.geometry;
    let tw = match spec.t {
        Some(t) => t,
        None => t_window(case.tag, &rep, m, case.horizon, &case.kernel)?,
    };
    let scale = g.diam().unwrap_or(10.0);
    let dw = spec.delta.unwrap_or(match g {
        Geometry::Interval { r } => [r * 1e-4, r / 2.0],
        _ => [1e-4, 10.0],
    });
    let rw = spec.rho.unwrap_or([scale * 1e-5, scale]);
    let cap = spec.max_per_axis.unwrap_or(24).max(2);
    let axes = if matches!(g, Geometry::FreeSpace) { 2.0 } else { 3.0 };
    let mut n = (((resolution.max(1) as f64) * 2.0).powf(1.0 / axes).ceil() as usize).clamp(2, cap);
    let mut first_err: Option<Error> = None;
    loop {
        let mut pts = vec![];
        let mut cand = 0usize;
        for &t in &logspace(tw[0], tw[1], n) {
            for &x in &positions(g, dw, n) {
                let mut ys = vec![];
                if spec.diagonal {
                    ys.push(x);
                }
                for &r in &logspace(rw[0], rw[1], n) {
                    ys.push(x + r);
                    if !matches!(g, Geometry::FreeSpace) {
                        ys.push(x - r);
                    }
                }
                for y in ys {
                    match g.probe(x, y) {
                        Ok(p) if p.delta_min > 0.0 => {}
                        _ => continue,
                    }
                    cand += 1;
                    let c = EstimateCase { t, x, y, ..case.clone() };
                    match theorem_estimate_prepared(table, &rep, &c) {
                        Ok(e) if e.exp_arg.zip(spec.exp_arg).is_some_and(|(v, [lo, hi])| v < lo || v > hi) => {}
                        Ok(e) => pts.push(GridPoint { t, x, y, estimate: e }),
                        Err(e) => {
                            first_err.get_or_insert(e);
                        }
                    }
                }
            }
        }
        if pts.len() >= resolution || n >= cap {
            if pts.is_empty() {
                let why = first_err.map(|e| e.to_string()).unwrap_or_else(|| "no candidates".into());
                return Err(Error::Regime(format!(
                    "empty admissible set for {} over {cand} candidates ({why})",
                    case.tag.name()
                )));
            }
            let mut description = format!(
                "t in [{:e}, {:e}], delta in [{:e}, {:e}], rho in [{:e}, {:e}], {n} per axis, margin {}",
                tw[0], tw[1], dw[0], dw[1], rw[0], rw[1], case.margin
            );
            if let Some([lo, hi]) = spec.exp_arg {
                description.push_str(&format!(", X in [{lo:e}, {hi:e}]"));
            }
            return Ok(RegimeGrid { tag: case.tag, description, requested: resolution, points: pts, per_axis: n, candidates: cand });
        }
        n = ((n as f64 * 1.5).ceil() as usize).min(cap);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Quadrature,
    Mc,
}

fn default_resolution() -> usize {
    100
}

fn default_margin() -> f64 {
    2.0
}

fn default_horizon() -> f64 {
    1.0
}

/// Input of [`run_compare`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub tag: Tag,
    pub kernel: KernelSpec,
    pub model: HKModel,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub method: Method,
    /// required for `mc` and for kernels without a closed-form `E_t` law
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// defaults to 50
    #[serde(default)]
    pub budget: Option<f64>,
    /// cap on the fit residual in log units for forms with an exponential factor, defaults to 1
    #[serde(default)]
    pub residual_cap: Option<f64>,
}

pub const DEFAULT_BUDGET: f64 = 50.0;
pub const DEFAULT_RESIDUAL_CAP: f64 = 1.0;

impl CompareConfig {
    pub fn case_at(&self, t: f64, x: f64, y: f64) -> EstimateCase {
        EstimateCase {
            tag: self.tag,
            kernel: self.kernel.clone(),
            model: self.model.clone(),
            t,
            x,
            y,
            margin: self.margin,
            horizon: self.horizon,
        }
    }
}

fn coords(t: f64, x: f64, y: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([("t".to_string(), t), ("x".to_string(), x), ("y".to_string(), y)])
}

/// Observed `p(t, x, y)` at every grid point, as `(value, se)`.
pub fn observe(cfg: &CompareConfig, table: &BernsteinTable, grid: &RegimeGrid) -> Result<Vec<(f64, f64)>> {
    let mut ts: Vec<f64> = grid.points.iter().map(|p| p.t).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let col = |t: f64| ts.iter().position(|v| *v == t).unwrap();
    let phis: Vec<f64> = ts.iter().map(|t| table.phi(1.0 / t)).collect::<Result<_>>()?;
    let need_sim = || cfg.sim.clone().ok_or_else(|| Error::Config("`sim` is required for this kernel or method".into()));
    match cfg.method {
        Method::Mc => {
            let sim = need_sim()?;
            let ens = sample_e_t(&cfg.kernel, &sim, &ts, &phis)?;
            grid.points
                .iter()
                .map(|p| p_model_mc(&cfg.model, &ens, col(p.t), p.x, p.y).map(|v| (v.value, v.se)))
                .collect()
        }
        Method::Quadrature => {
            let mut laws = Vec::with_capacity(ts.len());
            for (t, ph) in ts.iter().zip(&phis) {
                let law = match EtLaw::closed_form(&cfg.kernel, *t) {
                    Some(l) => l,
                    None => EtLaw::for_kernel(&cfg.kernel, &need_sim()?, *t, *ph)?,
                };
                laws.push(law);
            }
            grid.points
                .iter()
                .map(|p| {
                    let law = &laws[col(p.t)];
                    let rtol = if law.bandwidth().is_some() { 1e-2 } else { 1e-6 };
                    p_model_quadrature(&cfg.model, law, p.x, p.y, rtol).map(|v| (v.value, v.se))
                })
                .collect()
        }
    }
}

/// Regime grid, observed `p`, theorem form, ratio check; forms with an exponential factor get
/// their constant fitted first and the check runs against the fitted form.
pub fn run_compare(cfg: &CompareConfig) -> Result<RatioReport> {
    let table = BernsteinTable::new(cfg.kernel.clone())?;
    let grid = regime_grid_with(&table, &cfg.case_at(1.0, 0.0, 0.0), cfg.resolution, &cfg.grid)?;
    let obs = observe(cfg, &table, &grid)?;
    compare_observed(cfg, &grid, &obs)
}

pub fn compare_observed(cfg: &CompareConfig, grid: &RegimeGrid, obs: &[(f64, f64)]) -> Result<RatioReport> {
    let budget = cfg.budget.unwrap_or(DEFAULT_BUDGET);
    let cap = cfg.residual_cap.unwrap_or(DEFAULT_RESIDUAL_CAP);
    let mut notes = vec![];
    if grid.achieved() < grid.requested {
        notes.push(format!("{} admissible points of {} requested", grid.achieved(), grid.requested));
    }
    // structural part: the form with exp(-X) divided out
    let structural: Vec<f64> =
        grid.points.iter().map(|p| p.estimate.value * p.estimate.exp_arg.map_or(1.0, f64::exp)).collect();
    let with_exp: Vec<usize> = (0..grid.points.len()).filter(|i| grid.points[*i].estimate.exp_arg.is_some()).collect();
    let mut fit = None;
    let mut fit_ok = true;
    if !with_exp.is_empty() {
        let usable: Vec<usize> =
            with_exp.iter().cloned().filter(|i| obs[*i].0 > 0.0 && structural[*i] > 0.0 && structural[*i].is_finite()).collect();
        let lr: Vec<f64> = usable.iter().map(|i| (obs[*i].0 / structural[*i]).ln()).collect();
        let xs: Vec<f64> = usable.iter().map(|i| grid.points[*i].estimate.exp_arg.unwrap()).collect();
        let se: Vec<f64> = usable.iter().map(|i| obs[*i].1 / obs[*i].0).collect();
        match exp_constant_fit(&lr, &xs, Some(&se)) {
            Ok(f) => fit = Some(f),
            Err(e) => {
                fit_ok = false;
                notes.push(format!("exponential fit unavailable: {e}"));
            }
        }
        if usable.len() < with_exp.len() {
            notes.push(format!("{} points with zero observed value left out of the fit", with_exp.len() - usable.len()));
        }
    }
    let c = fit.as_ref().map_or(1.0, |f| f.c);
    let points: Vec<Point> = grid
        .points
        .iter()
        .zip(obs)
        .zip(&structural)
        .map(|((p, o), s)| Point {
            coords: coords(p.t, p.x, p.y),
            observed: o.0,
            se: o.1,
            predicted: s * p.estimate.exp_arg.map_or(1.0, |x| (-c * x).exp()),
            branch: p.estimate.branch.clone(),
        })
        .collect();
    let method = match cfg.method {
        Method::Quadrature => "quadrature",
        Method::Mc => "mc",
    };
    let mut rep = two_sided_check(&cfg.tag.name(), &format!("{} ({method})", grid.description), &points, budget)?;
    if !with_exp.is_empty() {
        rep.residual_cap = Some(cap);
        rep.pass = rep.pass && fit_ok && fit.as_ref().is_some_and(|f| f.residual <= cap);
    }
    rep.fit = fit;
    rep.notes.extend(notes);
    Ok(rep)
}

fn fmt_coords(c: &BTreeMap<String, f64>) -> String {
    c.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect::<Vec<_>>().join(" ")
}

impl RatioReport {
    /// Aligned-column rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let rows: Vec<(&str, String)> = vec![
            ("case", self.case.clone()),
            ("grid", self.grid.clone()),
            ("points", self.n_points.to_string()),
            ("ratio min", format!("{:.6e}", self.ratio_min)),
            ("ratio max", format!("{:.6e}", self.ratio_max)),
            ("spread", format!("{:.6e}", self.spread)),
            ("envelope spread", format!("{:.6e}", self.envelope_spread)),
            ("budget", format!("{:.6e}", self.budget)),
            ("verdict", verdict.into()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<16} {v}");
        }
        if let Some(f) = &self.fit {
            let _ = writeln!(
                s,
                "{:<16} c={:.6e} c_low={:.6e} c_high={:.6e} residual={:.6e} t={:.3e} cap={:.3e}",
                "fit",
                f.c,
                f.c_low,
                f.c_high,
                f.residual,
                f.t_stat,
                self.residual_cap.unwrap_or(f64::NAN)
            );
        }
        let _ = writeln!(s, "\n{:<24} {:>6} {:>14} {:>14} {:>14}", "branch", "n", "ratio min", "ratio max", "spread");
        for (k, b) in &self.branches {
            let _ = writeln!(s, "{:<24} {:>6} {:>14.6e} {:>14.6e} {:>14.6e}", k, b.n, b.ratio_min, b.ratio_max, b.spread);
        }
        let _ = writeln!(s, "\n{:>14} {:>14} {:>14}  coordinates", "ratio", "observed", "predicted");
        for o in &self.offenders {
            let _ = writeln!(s, "{:>14.6e} {:>14.6e} {:>14.6e}  {}", o.ratio, o.observed, o.predicted, fmt_coords(&o.coords));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(obs: &[f64], pred: &[f64]) -> Vec<Point> {
        obs.iter()
            .zip(pred)
            .enumerate()
            .map(|(i, (o, p))| Point {
                coords: BTreeMap::from([("i".to_string(), i as f64)]),
                observed: *o,
                se: 0.0,
                predicted: *p,
                branch: String::new(),
            })
            .collect()
    }

    #[test]
    fn constant_ratio_is_absorbed() {
        let o: Vec<f64> = (1..20).map(|i| (i as f64).powi(3)).collect();
        let r = two_sided_check("c", "g", &pts(&o, &o), 8.0).unwrap();
        assert_eq!(r.spread, 1.0);
        assert!(r.pass);
        let p2: Vec<f64> = o.iter().map(|v| 2.0 * v).collect();
        let r = two_sided_check("c", "g", &pts(&o, &p2), 8.0).unwrap();
        assert!((r.spread - 1.0).abs() < 1e-15 && r.pass);
        assert!((r.ratio_min - 0.5).abs() < 1e-15);
    }

    #[test]
    fn outlier_is_reported() {
        let mut o = vec![1.0; 30];
        o[17] = 100.0;
        let r = two_sided_check("c", "g", &pts(&o, &[1.0; 30]), 8.0).unwrap();
        assert!(!r.pass);
        assert_eq!(r.offenders[0].coords["i"], 17.0);
        assert_eq!(r.offenders.len(), 1);
    }

    #[test]
    fn nonpositive_prediction_is_an_error() {
        assert!(two_sided_check("c", "g", &pts(&[1.0, 1.0], &[1.0, 0.0]), 8.0).is_err());
        assert!(two_sided_check("c", "g", &[], 8.0).is_err());
    }

    #[test]
    fn envelope_widens_the_spread() {
        let mut p = pts(&[1.0, 1.0], &[1.0, 1.0]);
        p[0].se = 0.1;
        let r = two_sided_check("c", "g", &p, 8.0).unwrap();
        assert_eq!(r.spread, 1.0);
        assert!((r.envelope_spread - 1.3 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn exact_exponential() {
        let x = logspace(0.1, 10.0, 30);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        let f = exp_constant_fit(&y, &x, None).unwrap();
        assert!((f.c - 2.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn narrow_span_and_flat_trend_rejected() {
        let x = logspace(1.0, 20.0, 10);
        let y = vec![0.0; 10];
        assert!(matches!(exp_constant_fit(&y, &x, None), Err(Error::Precondition(_))));
        let x = logspace(0.1, 10.0, 10);
        let y: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        assert!(matches!(exp_constant_fit(&y, &x, None), Err(Error::NoSignal(_))));
    }
}
