use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use serde_path_to_error::Segment;
use subtail::bernstein::BernsteinTable;
use subtail::compare::{run_compare, CompareConfig, Method, RatioReport};
use subtail::estimates::{theorem_estimate, EstimateCase};
use subtail::fundsol::{boundary_sweep, p_model_mc, p_model_quadrature, EtLaw};
use subtail::heat::HKModel;
use subtail::quad::logspace;
use subtail::sim::{sample_e_t, upper_tail_prob, upper_tail_prob_tilted, SimConfig};
use subtail::tail::{TailParams, TailTheory};
use subtail::KernelSpec;

use crate::out::{fmt_f, Csv, Outputs, RunManifest};
use crate::{Args, Fail, Sub};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Range {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Range {
    fn points(&self) -> Result<Vec<f64>, Fail> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.n >= 1) {
            return Err(subtail::Error::Config(format!("bad range {self:?}")).into());
        }
        Ok(logspace(self.lo, self.hi, self.n))
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut s = String::new();
    for seg in path.iter() {
        s.push('/');
        match seg {
            Segment::Seq { index } => s.push_str(&index.to_string()),
            Segment::Map { key } => s.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => s.push_str(variant),
            Segment::Unknown => s.push('?'),
        }
    }
    s
}

fn parse<T: DeserializeOwned>(v: &Value) -> Result<T, Fail> {
    serde_path_to_error::deserialize(v.clone()).map_err(|e| Fail::schema(json_pointer(e.path()), e.inner().to_string()))
}

fn set_sim(v: &mut Value, a: &Args) {
    if let Some(sim) = v.get_mut("sim").and_then(|s| s.as_object_mut()) {
        if let Some(seed) = a.seed {
            sim.insert("seed".into(), json!(seed));
        }
        if let Some(n) = a.paths {
            sim.insert("n_paths".into(), json!(n));
        }
    }
}

fn apply_overrides(a: &Args, v: &mut Value) -> Result<(), Fail> {
    if !v.is_object() {
        return Err(Fail::schema(String::new(), "configuration must be a JSON object".into()));
    }
    set_sim(v, a);
    match a.subcommand {
        Sub::Estimate | Sub::Compare => {
            if let Some(c) = &a.case {
                v["tag"] = json!(c);
            }
        }
        _ => {}
    }
    match a.subcommand {
        Sub::Compare | Sub::Boundary => {
            if let Some(b) = a.budget {
                v["budget"] = json!(b);
            }
        }
        Sub::Report => {
            if let Some(cases) = v.get_mut("cases").and_then(|c| c.as_array_mut()) {
                if let Some(tag) = &a.case {
                    cases.retain(|c| c.get("tag").and_then(|t| t.as_str()) == Some(tag.as_str()));
                    if cases.is_empty() {
                        return Err(subtail::Error::Config(format!("no report case has tag {tag}")).into());
                    }
                }
                for c in cases.iter_mut() {
                    set_sim(c, a);
                    if let Some(b) = a.budget {
                        c["budget"] = json!(b);
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

fn seed_of(v: &Value) -> Option<u64> {
    v.pointer("/sim/seed").and_then(|s| s.as_u64())
}

pub fn run(a: &Args) -> Result<u8, Fail> {
    let t0 = Instant::now();
    let text = std::fs::read_to_string(&a.config).map_err(|e| Fail {
        code: 2,
        payload: json!({ "error": "config", "message": format!("cannot read {}: {e}", a.config.display()) }),
    })?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Fail::schema(String::new(), e.to_string()))?;
    apply_overrides(a, &mut v)?;
    let mut outs = Outputs::new(&a.out);
    let code = match a.subcommand {
        Sub::PhiTable => phi_table(&v, &mut outs)?,
        Sub::Conditions => conditions(&v, &mut outs)?,
        Sub::Tails => tails(&v, &mut outs)?,
        Sub::Fundsol => fundsol(&v, &mut outs)?,
        Sub::Estimate => estimate(&v, &mut outs)?,
        Sub::Compare => compare(&v, &mut outs)?,
        Sub::Boundary => boundary(&v, &mut outs)?,
        Sub::Report => report(&v, &mut outs)?,
    };
    let manifest = RunManifest {
        config_path: Some(a.config.display().to_string()),
        subcommand: a.subcommand.name().into(),
        seed: a.seed.or_else(|| seed_of(&v)),
        parameters: v,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs: outs.names(),
        wall_clock_ms: Some(t0.elapsed().as_millis()),
    };
    outs.write_all(&manifest)?;
    Ok(code)
}

fn default_lambda() -> Range {
    Range { lo: 1e-3, hi: 1e3, n: 64 }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiTableCfg {
    kernel: KernelSpec,
    #[serde(default = "default_lambda")]
    lambda: Range,
}

fn phi_table(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: PhiTableCfg = parse(v)?;
    let t = BernsteinTable::new(c.kernel)?;
    let mut csv = Csv::new(&["lambda", "phi", "dphi", "H", "s", "b"]);
    for lam in c.lambda.points()? {
        let s = 1.0 / lam;
        csv.row(vec![
            fmt_f(lam),
            fmt_f(t.phi(lam)?),
            fmt_f(t.phi_prime(lam)?),
            fmt_f(t.H(lam)?),
            fmt_f(s),
            fmt_f(t.b(s)?),
        ]);
    }
    outs.csv("phi_table.csv", csv);
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelCfg {
    kernel: KernelSpec,
}

fn conditions(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: KernelCfg = parse(v)?;
    c.kernel.validate()?;
    outs.json("conditions.json", &c.kernel.check_conditions());
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Rt {
    r: f64,
    t: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TailsCfg {
    kernel: KernelSpec,
    sim: SimConfig,
    points: Vec<Rt>,
    #[serde(default)]
    params: TailParams,
    /// importance sampling for rare events
    #[serde(default)]
    tilted: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn tails(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: TailsCfg = parse(v)?;
    let table = BernsteinTable::new(c.kernel.clone())?;
    let th = TailTheory::new(&table, c.params.clone());
    let mut csv = Csv::new(&["r", "t", "regime", "p", "se", "upper_form", "exp_arg"]);
    for p in &c.points {
        let est = if c.tilted {
            upper_tail_prob_tilted(&c.kernel, &c.sim, p.r, p.t)?
        } else {
            upper_tail_prob(&c.kernel, &c.sim, p.r, p.t)?
        };
        let regime = th.classify(p.r, p.t).map(|g| g.tag.name().to_string()).unwrap_or_else(|_| "unclassified".into());
        let form = th.upper_bound_form(p.r, p.t).ok();
        csv.row(vec![
            fmt_f(p.r),
            fmt_f(p.t),
            regime,
            fmt_f(est.p),
            fmt_f(est.se),
            opt(form.as_ref().map(|f| f.value)),
            opt(form.and_then(|f| f.exp_arg)),
        ]);
    }
    outs.csv("tails.csv", csv);
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Xy {
    x: f64,
    y: f64,
}

fn default_rtol() -> f64 {
    1e-6
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FundsolCfg {
    kernel: KernelSpec,
    model: HKModel,
    ts: Vec<f64>,
    points: Vec<Xy>,
    #[serde(default)]
    method: Method,
    #[serde(default)]
    sim: Option<SimConfig>,
    #[serde(default = "default_rtol")]
    rtol: f64,
}

fn law_for(kernel: &KernelSpec, sim: &Option<SimConfig>, table: &BernsteinTable, t: f64) -> Result<EtLaw, Fail> {
    if let Some(l) = EtLaw::closed_form(kernel, t) {
        return Ok(l);
    }
    let sim = sim.as_ref().ok_or_else(|| subtail::Error::Config("`sim` is required for this kernel".into()))?;
    Ok(EtLaw::for_kernel(kernel, sim, t, table.phi(1.0 / t)?)?)
}

fn fundsol(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: FundsolCfg = parse(v)?;
    c.model.validate()?;
    let table = BernsteinTable::new(c.kernel.clone())?;
    let mut csv = Csv::new(&["t", "x", "y", "p", "se", "method"]);
    match c.method {
        Method::Quadrature => {
            for &t in &c.ts {
                let law = law_for(&c.kernel, &c.sim, &table, t)?;
                let rtol = if law.bandwidth().is_some() { c.rtol.max(1e-2) } else { c.rtol };
                for p in &c.points {
                    let r = p_model_quadrature(&c.model, &law, p.x, p.y, rtol)?;
                    csv.row(vec![fmt_f(t), fmt_f(p.x), fmt_f(p.y), fmt_f(r.value), fmt_f(r.se), r.method]);
                }
            }
        }
        Method::Mc => {
            let sim = c.sim.as_ref().ok_or_else(|| subtail::Error::Config("`sim` is required for mc".into()))?;
            let phis: Vec<f64> = c.ts.iter().map(|t| table.phi(1.0 / t)).collect::<subtail::Result<_>>()?;
            let ens = sample_e_t(&c.kernel, sim, &c.ts, &phis)?;
            for (j, &t) in c.ts.iter().enumerate() {
                for p in &c.points {
                    let r = p_model_mc(&c.model, &ens, j, p.x, p.y)?;
                    csv.row(vec![fmt_f(t), fmt_f(p.x), fmt_f(p.y), fmt_f(r.value), fmt_f(r.se), r.method]);
                }
            }
        }
    }
    outs.csv("fundsol.csv", csv);
    Ok(0)
}

fn estimate(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: EstimateCase = parse(v)?;
    outs.json("estimate.json", &theorem_estimate(&c)?);
    Ok(0)
}

fn compare(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: CompareConfig = parse(v)?;
    let r = run_compare(&c)?;
    print!("{}", r.to_text());
    outs.json("ratio_report.json", &r);
    outs.text("ratio_report.txt", r.to_text());
    Ok(if r.pass { 0 } else { 1 })
}

fn default_deltas() -> Range {
    Range { lo: 1e-4, hi: 1e-1, n: 7 }
}

fn default_band() -> f64 {
    4.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryCfg {
    kernel: KernelSpec,
    model: HKModel,
    ts: Vec<f64>,
    #[serde(default = "default_deltas")]
    deltas: Range,
    #[serde(default)]
    sim: Option<SimConfig>,
    #[serde(default = "default_rtol")]
    rtol: f64,
    /// allowed max/min of `u / Phi(delta)^gamma` per `t`
    #[serde(default = "default_band")]
    budget: f64,
}

fn boundary(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: BoundaryCfg = parse(v)?;
    c.model.validate()?;
    let table = BernsteinTable::new(c.kernel.clone())?;
    let deltas = c.deltas.points()?;
    let mut csv = Csv::new(&["t", "delta", "u", "ratio"]);
    let mut sweeps = vec![];
    for &t in &c.ts {
        let law = law_for(&c.kernel, &c.sim, &table, t)?;
        let rtol = if law.bandwidth().is_some() { c.rtol.max(1e-2) } else { c.rtol };
        let s = boundary_sweep(&c.model, &law, &deltas, rtol)?;
        for r in &s.rows {
            csv.row(vec![fmt_f(t), fmt_f(r.delta), fmt_f(r.u), fmt_f(r.ratio)]);
        }
        sweeps.push(s);
    }
    let pass = sweeps.iter().all(|s| s.band <= c.budget);
    let summary: Vec<Value> =
        sweeps.iter().map(|s| json!({ "t": s.t, "gamma": s.gamma, "band": s.band, "pass": s.band <= c.budget })).collect();
    outs.csv("boundary.csv", csv);
    outs.json("boundary.json", &json!({ "budget": c.budget, "pass": pass, "sweeps": summary }));
    Ok(if pass { 0 } else { 1 })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportCfg {
    cases: Vec<CompareConfig>,
}

#[derive(Serialize)]
struct Entry {
    pass: bool,
    spread: Option<f64>,
    envelope_spread: Option<f64>,
    budget: Option<f64>,
    n_points: usize,
    error: Option<String>,
}

fn report(v: &Value, outs: &mut Outputs) -> Result<u8, Fail> {
    let c: ReportCfg = parse(v)?;
    let mut matrix: BTreeMap<String, Entry> = BTreeMap::new();
    let mut reports: BTreeMap<String, RatioReport> = BTreeMap::new();
    for case in &c.cases {
        let mut key = case.tag.name();
        let mut i = 2;
        while matrix.contains_key(&key) {
            key = format!("{}#{i}", case.tag.name());
            i += 1;
        }
        let e = match run_compare(case) {
            Ok(r) => {
                let e = Entry {
                    pass: r.pass,
                    spread: Some(r.spread),
                    envelope_spread: Some(r.envelope_spread),
                    budget: Some(r.budget),
                    n_points: r.n_points,
                    error: None,
                };
                reports.insert(key.clone(), r);
                e
            }
            Err(err) => Entry {
                pass: false,
                spread: None,
                envelope_spread: None,
                budget: None,
                n_points: 0,
                error: Some(err.to_string()),
            },
        };
        matrix.insert(key, e);
    }
    let mut txt = String::new();
    let _ = writeln!(txt, "{:<24} {:>6} {:>8} {:>14} {:>14} {:>10}", "case", "result", "points", "spread", "envelope", "budget");
    for (k, e) in &matrix {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            txt,
            "{:<24} {:>6} {:>8} {:>14} {:>14} {:>10}",
            k,
            if e.pass { "PASS" } else { "FAIL" },
            e.n_points,
            f(e.spread),
            f(e.envelope_spread),
            e.budget.map(|b| format!("{b}")).unwrap_or_else(|| "-".into())
        );
        if let Some(err) = &e.error {
            let _ = writeln!(txt, "  error: {err}");
        }
    }
    print!("{txt}");
    let all = matrix.values().all(|e| e.pass);
    outs.json("report.json", &json!({ "matrix": matrix, "reports": reports, "pass": all }));
    outs.text("report.txt", txt);
    Ok(if all { 0 } else { 1 })
}
