//! Model transition kernels `q(t,x,y)` over one-dimensional geometries with `V(x,r) = r^d`.

use serde::{Deserialize, Serialize};

use crate::bernstein::{calM, BernsteinTable, PhiShape, Which};
use crate::error::{Error, Result};
use crate::tail::NEAR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Geometry {
    /// `(0, r)`
    Interval { r: f64 },
    HalfLine,
    /// `|u| > 1`
    Exterior,
    FreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub rho: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_star: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if let Geometry::Interval { r } = self {
            if !(*r > 0.0 && r.is_finite()) {
                return Err(Error::Config("interval length must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Geometry::Interval { r } => x > 0.0 && x < *r,
            Geometry::HalfLine => x > 0.0 && x.is_finite(),
            Geometry::Exterior => x.abs() > 1.0 && x.is_finite(),
            Geometry::FreeSpace => x.is_finite(),
        }
    }

    /// Distance to the complement; infinite in free space.
    pub fn delta(&self, x: f64) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("x = {x} is outside the domain")));
        }
        Ok(match self {
            Geometry::Interval { r } => x.min(r - x),
            Geometry::HalfLine => x,
            Geometry::Exterior => x.abs() - 1.0,
            Geometry::FreeSpace => f64::INFINITY,
        })
    }

    pub fn probe(&self, x: f64, y: f64) -> Result<Probe> {
        let (dx, dy) = (self.delta(x)?, self.delta(y)?);
        Ok(Probe {
            rho: (x - y).abs(),
            delta_x: dx,
            delta_y: dy,
            delta_star: dx * dy,
            delta_min: dx.min(dy),
            delta_max: dx.max(dy),
        })
    }

    /// `R_D`, `None` when unbounded.
    pub fn diam(&self) -> Option<f64> {
        match self {
            Geometry::Interval { r } => Some(*r),
            _ => None,
        }
    }

    pub fn bounded(&self) -> bool {
        self.diam().is_some()
    }

    /// `T_D = 1 / phi^{-1}(R_D^{-alpha} / (4e^2))`.
    pub fn t_d(&self, table: &BernsteinTable, alpha: f64) -> Result<Option<f64>> {
        match self.diam() {
            Some(rd) => Ok(Some(1.0 / table.invert(Which::Phi, NEAR * rd.powf(-alpha))?)),
            None => Ok(None),
        }
    }

    /// `n` evenly spaced interior points of a natural window.
    pub fn sample_points(&self, n: usize) -> Vec<f64> {
        let (a, b) = match self {
            Geometry::Interval { r } => (0.0, *r),
            Geometry::HalfLine => (0.0, 4.0),
            Geometry::Exterior => (1.0, 5.0),
            Geometry::FreeSpace => (-2.0, 2.0),
        };
        (1..=n).map(|i| a + (b - a) * i as f64 / (n + 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    J1,
    J2,
    J3,
    J4,
    D1,
    D2,
    D3,
    #[serde(rename = "HK_J")]
    HkJ,
    #[serde(rename = "HK_D")]
    HkD,
    #[serde(rename = "HK_M")]
    HkM,
}

impl Family {
    pub fn is_diffusive(&self) -> bool {
        matches!(self, Family::D1 | Family::D2 | Family::D3 | Family::HkD | Family::HkM)
    }

    pub fn is_general(&self) -> bool {
        matches!(self, Family::HkJ | Family::HkD | Family::HkM)
    }

    /// Display families whose large-time branch decays like `e^{-lambda t}`.
    pub fn killed(&self) -> bool {
        matches!(self, Family::J1 | Family::J4 | Family::D1)
    }

    /// `(gamma, lambda > 0, k)` of the general class the display family belongs to.
    pub fn class(&self, alpha: f64) -> Option<(f64, bool, u8)> {
        Some(match self {
            Family::J1 | Family::D1 => (0.5, true, 1),
            Family::J2 | Family::D2 => (0.5, false, 1),
            Family::J3 | Family::D3 => (0.5, false, 2),
            Family::J4 => ((alpha - 1.0) / alpha, true, 1),
            _ => return None,
        })
    }
}

fn one() -> f64 {
    1.0
}

fn one_u8() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HKModel {
    pub family: Family,
    pub alpha: f64,
    pub d: f64,
    /// general families only
    #[serde(default)]
    pub gamma: f64,
    /// general families: 0 or the decay rate of the killed branch
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one_u8")]
    pub k: u8,
    #[serde(default)]
    pub psi_exponent: Option<f64>,
    #[serde(default = "one")]
    pub exp_constant: f64,
    /// rate in the `e^{-lambda t}` branch of J1, J4 and D1
    #[serde(default = "one")]
    pub lambda_rate: f64,
    pub geometry: Geometry,
}

impl HKModel {
    pub fn new(family: Family, alpha: f64, d: f64, geometry: Geometry) -> Result<Self> {
        let m = HKModel {
            family,
            alpha,
            d,
            gamma: 0.0,
            lambda: 0.0,
            k: 1,
            psi_exponent: None,
            exp_constant: 1.0,
            lambda_rate: 1.0,
            geometry,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn general(family: Family, alpha: f64, d: f64, gamma: f64, lambda: f64, k: u8, geometry: Geometry) -> Result<Self> {
        let m = HKModel {
            family,
            alpha,
            d,
            gamma,
            lambda,
            k,
            psi_exponent: None,
            exp_constant: 1.0,
            lambda_rate: 1.0,
            geometry,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.geometry.validate()?;
        if !(self.alpha > 0.0 && self.d > 0.0) {
            return bad("alpha and d must be positive".into());
        }
        if self.family.is_diffusive() && self.alpha <= 1.0 {
            return bad(format!("{:?} needs alpha > 1, got {}", self.family, self.alpha));
        }
        if self.family == Family::J4 && self.alpha <= 1.0 {
            return bad("J4 needs alpha > 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) || self.lambda < 0.0 || !(self.k == 1 || self.k == 2) {
            return bad("need gamma in [0,1), lambda >= 0, k in {1,2}".into());
        }
        let killed = self.family.killed() || (self.family.is_general() && self.lambda > 0.0);
        if killed && !self.geometry.bounded() {
            return bad(format!("{:?} with lambda > 0 needs a bounded geometry", self.family));
        }
        if !(self.exp_constant > 0.0 && self.lambda_rate > 0.0) {
            return bad("exp_constant and lambda_rate must be positive".into());
        }
        if let Some(a) = self.psi_exponent {
            if !(a > 0.0) {
                return bad("psi_exponent must be positive".into());
            }
        }
        Ok(())
    }

    /// `(gamma, lambda, k)` of the underlying general class.
    pub fn class(&self) -> (f64, f64, u8) {
        match self.family.class(self.alpha) {
            Some((g, killed, k)) => (g, if killed { self.lambda_rate } else { 0.0 }, k),
            None => (self.gamma, self.lambda, self.k),
        }
    }

    pub fn phi_scale(&self) -> PhiShape {
        PhiShape::power(self.alpha)
    }

    pub fn big_phi(&self, r: f64) -> f64 {
        r.powf(self.alpha)
    }

    pub fn big_phi_inv(&self, y: f64) -> f64 {
        y.powf(1.0 / self.alpha)
    }

    pub fn volume(&self, r: f64) -> f64 {
        r.powf(self.d)
    }

    /// `Psi = Phi v l^{alpha_Psi}`, so that `Psi >= Phi` everywhere.
    pub fn psi(&self, l: f64) -> f64 {
        let p = self.big_phi(l);
        match self.psi_exponent {
            Some(a) => p.max(l.powf(a)),
            None => p,
        }
    }

    /// Boundary exponent of the display families.
    fn boundary_exp(&self) -> f64 {
        if self.family == Family::J4 {
            self.alpha - 1.0
        } else {
            self.alpha / 2.0
        }
    }

    pub fn a_gamma(&self, k: u8, t: f64, p: &Probe) -> f64 {
        let (g, _, _) = self.class();
        a_gamma(self.alpha, g, k, t, p)
    }

    /// `q^j(t, l) = t / (t V(Phi^{-1}(t)) + Psi(l) V(l))`.
    pub fn q_j(&self, t: f64, l: f64) -> f64 {
        let v = if l > 0.0 { self.psi(l) * self.volume(l) } else { 0.0 };
        t / (t * self.volume(self.big_phi_inv(t)) + v)
    }

    /// `q^d(c, t, l) = exp(-c M(t,l)) / V(Phi^{-1}(t))`.
    pub fn q_d(&self, t: f64, l: f64) -> Result<f64> {
        let m = if l > 0.0 { calM(&self.phi_scale(), t, l)? } else { 0.0 };
        Ok((-self.exp_constant * m).exp() / self.volume(self.big_phi_inv(t)))
    }

    pub fn q_eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain("t must be positive".into()));
        }
        let p = self.geometry.probe(x, y)?;
        self.q_probe(t, &p)
    }

    pub fn q_probe(&self, t: f64, p: &Probe) -> Result<f64> {
        let a = self.alpha;
        let e = self.boundary_exp();
        let interior = |scale: f64| bf(p.delta_min, scale, e) * bf(p.delta_max, scale, e);
        let jump = || (t.powf(-self.d / a)).min(t / p.rho.powf(self.d + a));
        let diff = || t.powf(-self.d / a) * (-self.exp_constant * p.rho.powf(a / (a - 1.0)) / t.powf(1.0 / (a - 1.0))).exp();
        let killed = || (-self.lambda_rate * t).exp() * p.delta_min.powf(e) * p.delta_max.powf(e);
        let s = t.powf(1.0 / a);
        Ok(match self.family {
            Family::J1 | Family::J4 if t >= 1.0 => killed(),
            Family::D1 if t >= 1.0 => killed(),
            Family::J1 | Family::J2 | Family::J4 => interior(s) * jump(),
            Family::J3 => interior(s.min(1.0)) * jump(),
            Family::D1 | Family::D2 => interior(s) * diff(),
            Family::D3 => interior(s.min(1.0)) * diff(),
            Family::HkJ | Family::HkD | Family::HkM => {
                let (g, lam, k) = self.class();
                if t >= 1.0 && lam > 0.0 {
                    return Ok(a_gamma(a, g, 1, 1.0, p) * (-lam * t).exp());
                }
                let kk = if t <= 1.0 { 1 } else { k };
                let ak = a_gamma(a, g, kk, t, p);
                let mut q = 0.0;
                if self.family != Family::HkD {
                    q += self.q_j(t, p.rho);
                }
                if self.family != Family::HkJ {
                    q += self.q_d(t, p.rho)?;
                }
                ak * q
            }
        })
    }
}

/// `(1 ^ delta/scale)^e`
fn bf(delta: f64, scale: f64, e: f64) -> f64 {
    if delta >= scale {
        1.0
    } else {
        (delta / scale).powf(e)
    }
}

/// `a_1^gamma(t,x,y) = prod (Phi(delta)/(Phi(delta)+t))^gamma`, `a_2^gamma(t) = a_1^gamma(t/(t+1))`.
pub fn a_gamma(alpha: f64, gamma: f64, k: u8, t: f64, p: &Probe) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    let t = if k == 2 { t / (t + 1.0) } else { t };
    let f = |d: f64| {
        if d.is_infinite() {
            1.0
        } else {
            let ph = d.powf(alpha);
            (ph / (ph + t)).powf(gamma)
        }
    };
    f(p.delta_min) * f(p.delta_max)
}
