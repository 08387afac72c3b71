//! Compound-Poisson simulation of the driftless subordinator with Levy measure `-dw`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub cutoff_eps: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub compensate: bool,
    #[serde(default)]
    pub refine_steps: usize,
}

fn yes() -> bool {
    true
}

impl SimConfig {
    pub fn new(cutoff_eps: f64, n_paths: usize, seed: u64) -> Self {
        Self { cutoff_eps, n_paths, seed, compensate: true, refine_steps: 0 }
    }

    pub fn validate(&self, kernel: &KernelSpec) -> Result<()> {
        if !(self.cutoff_eps > 0.0) {
            return Err(Error::Config("cutoff_eps must be positive".into()));
        }
        if let Some(e) = kernel.support_end() {
            if self.cutoff_eps >= e {
                return Err(Error::Config(format!("cutoff_eps {} outside the support (0, {e})", self.cutoff_eps)));
            }
        }
        if self.n_paths < 100 {
            return Err(Error::Config("n_paths must be at least 100".into()));
        }
        Ok(())
    }
}

/// Deterministic per-path generator: ChaCha8 keyed by `seed`, stream `path`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(path);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    SAt,
    Crossing,
}

/// Per-path samples, row-major `n_paths x points.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub kind: EnsembleKind,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    /// `S_{E_t} - t` for crossing ensembles.
    pub overshoot: Vec<f64>,
    pub censored: Vec<bool>,
    pub n_paths: usize,
    pub seed: u64,
    pub eps: f64,
}

impl PathEnsemble {
    pub fn column(&self, j: usize) -> Vec<f64> {
        let m = self.points.len();
        (0..self.n_paths).map(|i| self.values[i * m + j]).collect()
    }

    pub fn censored_count(&self, j: usize) -> usize {
        let m = self.points.len();
        (0..self.n_paths).filter(|i| self.censored.get(i * m + j).copied().unwrap_or(false)).count()
    }

    /// Empirical `P(value <= x)` in column `j`.
    pub fn cdf(&self, j: usize, x: f64) -> TailEstimate {
        let c = self.column(j);
        binomial(c.iter().filter(|v| **v <= x).count(), c.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p: f64,
    pub se: f64,
    pub n_paths: usize,
    pub regime: Option<String>,
}

pub fn binomial(hits: usize, n: usize) -> TailEstimate {
    let p = hits as f64 / n as f64;
    TailEstimate { p, se: (p * (1.0 - p) / n as f64).sqrt(), n_paths: n, regime: None }
}

/// Compound-Poisson sampler with jumps above `eps`.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    pub kernel: &'a KernelSpec,
    pub eps: f64,
    pub rate: f64,
    pub drift: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(kernel: &'a KernelSpec, cfg: &SimConfig) -> Result<Self> {
        cfg.validate(kernel)?;
        let rate = kernel.w(cfg.cutoff_eps);
        if !rate.is_finite() || rate > 1e9 {
            return Err(Error::Config(format!(
                "w(eps) = {rate:e} too large for simulation; raise cutoff_eps above {}",
                cfg.cutoff_eps
            )));
        }
        let drift = if cfg.compensate { kernel.small_jump_mean(cfg.cutoff_eps) } else { 0.0 };
        Ok(Self { kernel, eps: cfg.cutoff_eps, rate, drift })
    }

    #[inline]
    pub fn jump<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        self.kernel.inverse_w(u * self.rate).unwrap_or(self.eps)
    }

    fn poisson<R: Rng>(&self, mean: f64, rng: &mut R) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
    }

    /// One path of `S` evaluated at increasing `rs`.
    pub fn path_at<R: Rng>(&self, rs: &[f64], rng: &mut R, out: &mut [f64]) {
        let mut s = 0.0;
        let mut prev = 0.0;
        for (k, &r) in rs.iter().enumerate() {
            let n = self.poisson((r - prev) * self.rate, rng);
            for _ in 0..n {
                s += self.jump(rng);
            }
            out[k] = s + self.drift * r;
            prev = r;
        }
    }

    /// First passage times over increasing levels `ts`; returns `(E_t, overshoot, censored)`.
    pub fn crossing<R: Rng>(&self, ts: &[f64], budgets: &[f64], rng: &mut R) -> Vec<(f64, f64, bool)> {
        let mut out = Vec::with_capacity(ts.len());
        let mut r = 0.0;
        let mut s = 0.0;
        let mut j = 0;
        let rmax = budgets.iter().copied().fold(0.0, f64::max);
        while j < ts.len() {
            let gap: f64 = Exp1.sample(rng);
            let gap = gap / self.rate;
            let r_next = r + gap;
            // drift segment [r, r_next)
            while j < ts.len() && self.drift > 0.0 && s + self.drift * gap > ts[j] {
                let e = r + (ts[j] - s) / self.drift;
                if e > budgets[j] {
                    out.push((budgets[j], 0.0, true));
                } else {
                    out.push((e, 0.0, false));
                }
                j += 1;
            }
            if j == ts.len() {
                break;
            }
            s += self.drift * gap;
            r = r_next;
            s += self.jump(rng);
            while j < ts.len() && s > ts[j] {
                if r > budgets[j] {
                    out.push((budgets[j], 0.0, true));
                } else {
                    out.push((r, s - ts[j], false));
                }
                j += 1;
            }
            if r > rmax {
                while j < ts.len() {
                    out.push((budgets[j], 0.0, true));
                    j += 1;
                }
            }
        }
        out
    }
}

/// Samples of `S_r` at each requested `r` (sorted ascending internally).
pub fn sample_s_at(kernel: &KernelSpec, cfg: &SimConfig, rs: &[f64]) -> Result<PathEnsemble> {
    if rs.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("r must be positive".into()));
    }
    let sp = Sampler::new(kernel, cfg)?;
    let mut order: Vec<usize> = (0..rs.len()).collect();
    order.sort_by(|a, b| rs[*a].partial_cmp(&rs[*b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|i| rs[*i]).collect();
    let m = rs.len();
    let mut values = vec![0.0; cfg.n_paths * m];
    let mut buf = vec![0.0; m];
    for p in 0..cfg.n_paths {
        let mut rng = path_rng(cfg.seed, p as u64);
        sp.path_at(&sorted, &mut rng, &mut buf);
        for (k, &i) in order.iter().enumerate() {
            values[p * m + i] = buf[k];
        }
    }
    Ok(PathEnsemble {
        kind: EnsembleKind::SAt,
        points: rs.to_vec(),
        values,
        overshoot: vec![],
        censored: vec![],
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        eps: cfg.cutoff_eps,
    })
}

/// Samples of `E_t` at each level `t`. `phi_inv_t[j]` is `phi(1/t_j)` and sets the censoring budget `1e6/phi(1/t)`.
pub fn sample_e_t(kernel: &KernelSpec, cfg: &SimConfig, ts: &[f64], phi_at_inv_t: &[f64]) -> Result<PathEnsemble> {
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("t must be positive".into()));
    }
    let sp = Sampler::new(kernel, cfg)?;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|a, b| ts[*a].partial_cmp(&ts[*b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|i| ts[*i]).collect();
    let budgets: Vec<f64> = order.iter().map(|i| 1e6 / phi_at_inv_t[*i]).collect();
    let m = ts.len();
    let mut values = vec![0.0; cfg.n_paths * m];
    let mut over = vec![0.0; cfg.n_paths * m];
    let mut cens = vec![false; cfg.n_paths * m];
    for p in 0..cfg.n_paths {
        let mut rng = path_rng(cfg.seed, p as u64);
        let res = sp.crossing(&sorted, &budgets, &mut rng);
        for (k, &i) in order.iter().enumerate() {
            values[p * m + i] = res[k].0;
            over[p * m + i] = res[k].1;
            cens[p * m + i] = res[k].2;
        }
    }
    Ok(PathEnsemble {
        kind: EnsembleKind::Crossing,
        points: ts.to_vec(),
        values,
        overshoot: over,
        censored: cens,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        eps: cfg.cutoff_eps,
    })
}

fn check_zero(est: TailEstimate, expected: f64) -> Result<TailEstimate> {
    if est.p == 0.0 && expected > 0.0 && (est.n_paths as f64) < 10.0 / expected {
        return Err(Error::InsufficientPaths { n_paths: est.n_paths, expected });
    }
    Ok(est)
}

/// `P(S_r >= t)` by direct simulation.
pub fn upper_tail_prob(kernel: &KernelSpec, cfg: &SimConfig, r: f64, t: f64) -> Result<TailEstimate> {
    let e = sample_s_at(kernel, cfg, &[r])?;
    let hits = e.values.iter().filter(|v| **v >= t).count();
    check_zero(binomial(hits, cfg.n_paths), rough_upper(kernel, r, t))
}

/// Order-of-magnitude guess of `P(S_r >= t)` used only for diagnostics.
fn rough_upper(kernel: &KernelSpec, r: f64, t: f64) -> f64 {
    let w = kernel.w(t);
    if w > 0.0 {
        return (r * w).min(1.0);
    }
    match kernel.support_end() {
        Some(tf) => {
            // at least n jumps of size about t/n are needed
            let n = (t / tf).floor() + 1.0;
            let a = r * kernel.w(t / n) / n;
            (a.powf(n) / statrs::function::gamma::gamma(n + 1.0)).min(1.0)
        }
        None => 0.0,
    }
}

/// `P(S_r <= t)` by direct simulation.
pub fn lower_tail_prob(kernel: &KernelSpec, cfg: &SimConfig, r: f64, t: f64) -> Result<TailEstimate> {
    let e = sample_s_at(kernel, cfg, &[r])?;
    let hits = e.values.iter().filter(|v| **v <= t).count();
    check_zero(binomial(hits, cfg.n_paths), 1e-300)
}

/// Exact sample of `S_r` for the stable subordinator with `phi(lambda) = lambda^beta` (Kanter).
pub fn exact_stable_sampler<R: Rng>(beta: f64, r: f64, rng: &mut R) -> f64 {
    let u = std::f64::consts::PI * (1.0 - rng.random::<f64>());
    let e: f64 = Exp1.sample(rng);
    let a = ((beta * u).sin() / u.sin()).powf(1.0 / (1.0 - beta)) * ((1.0 - beta) * u).sin() / (beta * u).sin();
    r.powf(1.0 / beta) * (a / e).powf((1.0 - beta) / beta)
}

pub fn exact_stable_samples(beta: f64, r: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|i| exact_stable_sampler(beta, r, &mut path_rng(seed, i as u64))).collect()
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    let (n, m) = (x.len() as f64, y.len() as f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_against<F: Fn(f64) -> f64>(a: &[f64], cdf: F) -> f64 {
    let mut x = a.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = x.len() as f64;
    x.iter().enumerate().fold(0.0f64, |d, (i, v)| {
        let f = cdf(*v);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut x = v.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let pos = q * (x.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < x.len() {
        x[i] * (1.0 - f) + x[i + 1] * f
    } else {
        x[i]
    }
}

/// Exponentially tilted sampler for kernels with bounded support.
///
/// Jumps above `eps` follow `e^{theta s} nu(ds)` normalised; the likelihood ratio
/// of one path is `exp(-theta sum J + r kappa(theta))`, `kappa = int (e^{theta s} - 1) nu`.
#[derive(Debug, Clone)]
pub struct TiltedSampler<'a> {
    base: Sampler<'a>,
    pub theta: f64,
    pub rate: f64,
    pub kappa: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
}

impl<'a> TiltedSampler<'a> {
    pub fn new(kernel: &'a KernelSpec, cfg: &SimConfig, theta: f64) -> Result<Self> {
        let base = Sampler::new(kernel, cfg)?;
        let end = kernel
            .support_end()
            .ok_or_else(|| Error::Precondition("tilting needs a kernel with bounded support".into()))?;
        let eps = base.eps;
        // bins: geometric near eps, then width <= 0.1/theta
        let mut edges = vec![eps];
        let width = if theta > 0.0 { 0.1 / theta } else { end };
        let mut x = eps;
        while x < end {
            let nx = (x * 2.0).min(x + width).min(end);
            edges.push(nx);
            x = nx;
        }
        let mut cum = vec![0.0];
        let mut total = 0.0;
        for w in edges.windows(2) {
            let m = bin_mass(kernel, w[0], w[1], theta);
            total += m;
            cum.push(total);
        }
        let kappa = total - base.rate;
        Ok(Self { base, theta, rate: total, kappa, edges, cum })
    }

    fn jump<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.rate;
        let b = (self.cum.partition_point(|c| *c <= u).max(1) - 1).min(self.edges.len() - 2);
        let (lo, hi) = (self.edges[b], self.edges[b + 1]);
        let k = self.base.kernel;
        let (wl, wh) = (k.w(lo), k.w(hi));
        loop {
            let v: f64 = 1.0 - rng.random::<f64>();
            let y = wh + v * (wl - wh);
            let s = if y > 0.0 { k.inverse_w(y).unwrap_or(hi).clamp(lo, hi) } else { hi };
            if rng.random::<f64>() <= (self.theta * (s - hi)).exp() {
                return s;
            }
        }
    }

    /// One weighted sample `(S_r, weight)`.
    pub fn sample<R: Rng>(&self, r: f64, rng: &mut R) -> (f64, f64) {
        let n = self.base.poisson(r * self.rate, rng);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += self.jump(rng);
        }
        (sum + self.base.drift * r, (-self.theta * sum + r * self.kappa).exp())
    }
}

fn bin_mass(k: &KernelSpec, a: f64, b: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        return k.w(a) - k.w(b);
    }
    // int_a^b e^{theta s} nu(ds) = e^{theta a} w(a) - e^{theta b} w(b) + theta int_a^b e^{theta s} w(s) ds
    let i = quad::tanh_sinh(|s| (theta * s).exp() * k.w(s), a, b, 1e-13).0;
    (theta * a).exp() * k.w(a) - (theta * b).exp() * k.w(b) + theta * i
}

/// Tilt solving `r d + r int s e^{theta s} nu(ds) = t` on `[eps, end]`.
pub fn solve_tilt(kernel: &KernelSpec, cfg: &SimConfig, r: f64, t: f64) -> Result<f64> {
    let sp = Sampler::new(kernel, cfg)?;
    let end = kernel
        .support_end()
        .ok_or_else(|| Error::Precondition("tilting needs a kernel with bounded support".into()))?;
    let mean = |theta: f64| {
        // int s e^{theta s} nu(ds) on [eps, end] by parts
        let eps = sp.eps;
        let i = quad::log_panels(|s| (1.0 + theta * s) * (theta * s).exp() * kernel.w(s), eps, end, &[end / 2.0], 1e-12);
        r * sp.drift + r * (eps * (theta * eps).exp() * kernel.w(eps) + i)
    };
    if mean(0.0) >= t {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while mean(hi) < t {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Range("tilt parameter above 1e4".into()));
        }
    }
    quad::brent(|th| (mean(th) / t).ln(), 0.0, hi, 1e-10, 200)
}

/// `P(S_r >= t)` by importance sampling; uses the tilt solving the mean equation.
pub fn upper_tail_prob_tilted(kernel: &KernelSpec, cfg: &SimConfig, r: f64, t: f64) -> Result<TailEstimate> {
    let theta = solve_tilt(kernel, cfg, r, t)?;
    tilted_tail(kernel, cfg, r, &[t], theta).map(|mut v| v.remove(0))
}

/// Weighted tail estimates at several levels from one tilted ensemble.
pub fn tilted_tail(kernel: &KernelSpec, cfg: &SimConfig, r: f64, ts: &[f64], theta: f64) -> Result<Vec<TailEstimate>> {
    let ts_ = TiltedSampler::new(kernel, cfg, theta)?;
    let m = ts.len();
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    for p in 0..cfg.n_paths {
        let mut rng = path_rng(cfg.seed, p as u64);
        let (s, w) = ts_.sample(r, &mut rng);
        for j in 0..m {
            if s >= ts[j] {
                s1[j] += w;
                s2[j] += w * w;
            }
        }
    }
    let n = cfg.n_paths as f64;
    Ok((0..m)
        .map(|j| {
            let mean = s1[j] / n;
            let var = (s2[j] / n - mean * mean).max(0.0);
            TailEstimate { p: mean, se: (var / n).sqrt(), n_paths: cfg.n_paths, regime: None }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism() {
        let k = KernelSpec::caputo(0.5);
        let c = SimConfig::new(1e-4, 200, 7);
        let a = sample_s_at(&k, &c, &[0.5, 1.0]).unwrap();
        let b = sample_s_at(&k, &c, &[0.5, 1.0]).unwrap();
        assert_eq!(a, b);
        for i in 0..200 {
            assert!(a.values[2 * i] <= a.values[2 * i + 1]);
        }
    }

    #[test]
    fn config_errors() {
        let k = KernelSpec::truncated(0.5, 1.0, 1.0);
        assert!(SimConfig::new(2.0, 1000, 1).validate(&k).is_err());
        assert!(SimConfig::new(0.1, 10, 1).validate(&k).is_err());
        let p = KernelSpec::caputo(0.9);
        assert!(Sampler::new(&p, &SimConfig::new(1e-12, 1000, 1)).is_err());
    }

    #[test]
    fn ks_basics() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
    }

    #[test]
    fn kanter_scaling() {
        // S_r = r^2 S_1 in law for beta = 1/2; with common randomness the identity is exact
        let mut r1 = path_rng(3, 0);
        let mut r2 = path_rng(3, 0);
        let a = exact_stable_sampler(0.5, 3.0, &mut r1);
        let b = exact_stable_sampler(0.5, 1.0, &mut r2);
        assert!((a / (9.0 * b) - 1.0).abs() < 1e-12);
    }
}
