use proptest::prelude::*;
use subtail::bernstein::BernsteinTable;
use subtail::estimates::*;
use subtail::heat::{Family, Geometry, HKModel, Probe};
use subtail::kernel::KernelSpec;
use subtail::quad::logspace;
use subtail::tail::NEAR;

fn probe(rho: f64, dx: f64, dy: f64) -> Probe {
    Probe { rho, delta_x: dx, delta_y: dy, delta_star: dx * dy, delta_min: dx.min(dy), delta_max: dx.max(dy) }
}

fn spread(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::MIN, f64::max);
    let mn = v.iter().copied().fold(f64::MAX, f64::min);
    mx / mn
}

#[test]
fn s_p_examples() {
    let s = s_p(0.0, 1.0, 4.0, 1.0, 1.0).unwrap();
    assert!((s.direct - 4f64.ln()).abs() < 1e-10);
    assert_eq!(s.branch, "iv");
    assert_eq!(s.asymptotic, 4f64.ln());
    for (p, d) in [(0.0, 1.5), (0.5, 0.8), (0.2, 0.3), (0.8, 0.1), (-0.5, 0.7)] {
        for a in logspace(1e-6, 1.0, 7) {
            for ratio in logspace(2.5, 1e6, 7) {
                let s = s_p(p, a, a * ratio, 1.0, d).unwrap();
                let exact = {
                    let e = 1.0 - p - d;
                    ((a * ratio).powf(e) - a.powf(e)) / e
                };
                assert!((s.direct / exact - 1.0).abs() < 1e-9);
                assert!(s.direct >= s.lower_terms / 8.0, "{p} {d} {a} {ratio}");
                if d > 1.0 - p {
                    assert_eq!(s.branch, "ii");
                } else {
                    assert_eq!(s.branch, "iii");
                }
                let r = s.direct / s.asymptotic;
                if d > 1.0 - p + 0.2 || d < 1.0 - p - 0.2 {
                    assert!((0.25..=4.0).contains(&r), "{p} {d} {a} {ratio}: {r}");
                }
            }
        }
    }
}

#[test]
fn i_gamma_examples() {
    // Phi(rho) = 1 and 1/(2e^2 phi) = 4
    let phi_t = 1.0 / (8.0 * E2);
    let v = i_gamma(1.0, 1.0, 0.0, 1, phi_t, &probe(1.0, 1.0, 1.0));
    assert!((v.value - 4f64.ln()).abs() < 1e-9);
    let v = i_gamma(1.0, 1.0, 0.0, 1, 1.0, &probe(1.0, 1.0, 1.0));
    assert_eq!(v.value, 0.0);
    assert!(v.note.unwrap().starts_with("regime"));
    // saturated boundary factors
    let big = probe(1.0, 1e9, 1e9);
    let g = i_gamma(1.0, 1.0, 0.5, 1, phi_t, &big).value;
    assert!((g / v_zero(phi_t) - 1.0).abs() < 0.01);
}

fn v_zero(phi_t: f64) -> f64 {
    i_gamma(1.0, 1.0, 0.0, 1, phi_t, &probe(1.0, 1.0, 1.0)).value
}

#[test]
fn j_dominates_first_term() {
    let tab = BernsteinTable::new(KernelSpec::caputo(0.5)).unwrap();
    let m = HKModel::new(Family::J1, 1.5, 1.0, Geometry::Interval { r: 1.0 }).unwrap();
    for t in logspace(1e-4, 0.5, 6) {
        for x in [0.01, 0.2, 0.5] {
            let p = m.geometry.probe(x, x + 1e-3).unwrap();
            let phi_t = tab.phi(1.0 / t).unwrap();
            let first = subtail::heat::a_gamma(1.5, 0.5, 1, 1.0 / phi_t, &p) * phi_t.powf(1.0 / 1.5);
            assert!(j_gamma_probe(&m, &tab, 1, t, &p).unwrap() >= first);
        }
    }
}

#[test]
fn closed_form_case_g_example() {
    // two boundary distances 0.1 at separation 0.05 in scenario 1
    let phi_t = 0.1;
    let c = closed_i_gamma(1.0, 2.0, 0.5, phi_t, &probe(0.05, 0.1, 0.1)).unwrap();
    assert_eq!((c.case, c.scenario), ('g', 1));
    assert!((c.value - 40.0).abs() < 1e-9);
}

/// Closed form against quadrature per case over the scenario grid.
#[test]
fn closed_vs_quadrature_spread() {
    let tab = BernsteinTable::new(KernelSpec::caputo(0.5)).unwrap();
    let cases = [
        ('a', 1.0, 0.25, 0.15),
        ('b', 1.0, 0.2, 0.4),
        ('c', 1.0, 0.4, 0.4),
        ('d', 1.0, 0.6, 0.4),
        ('e', 1.0, 0.7, 0.4),
        ('f', 1.0, 1.0, 0.4),
        ('g', 1.0, 2.0, 0.4),
    ];
    let geo = Geometry::HalfLine;
    for (case, a, d, g) in cases {
        let mut ratios = vec![];
        let mut seen = [0usize; 3];
        for t in logspace(1e-4, 1.0, 5) {
            let phi_t = tab.phi(1.0 / t).unwrap();
            let lmax = (1.0 / (8.0 * E2 * phi_t)).powf(1.0 / a);
            for l in logspace(1e-3, 1.0, 6) {
                let l = l * lmax;
                for dx in logspace(1e-5, 10.0, 9) {
                    for y in [dx + l, dx - l] {
                        if y <= 0.0 {
                            continue;
                        }
                        let p = geo.probe(dx, y).unwrap();
                        let c = closed_i_gamma(a, d, g, phi_t, &p).unwrap();
                        assert_eq!(c.case, case);
                        seen[c.scenario as usize - 1] += 1;
                        ratios.push(i_gamma(a, d, g, 1, phi_t, &p).value / c.value);
                    }
                }
            }
        }
        assert!(ratios.len() >= 60 && seen.iter().all(|n| *n > 0), "{case}: {seen:?}");
        assert!(spread(&ratios) <= 8.0, "case {case}: spread {}", spread(&ratios));
    }
}

#[test]
fn scenario_three_reduces_to_gamma_zero() {
    let phi_t = 10.0;
    let p = probe(1e-3, 5.0, 5.0);
    let c = closed_i_gamma(1.0, 0.5, 0.4, phi_t, &p).unwrap();
    let z = closed_i_gamma(1.0, 0.5, 0.0, phi_t, &p).unwrap();
    assert_eq!(c.scenario, 3);
    assert_eq!(c.value, z.value);
    let q = i_gamma(1.0, 0.5, 0.0, 1, phi_t, &p).value;
    assert!((0.125..=8.0).contains(&(q / z.value)));
}

/// Adjacent branches of `F_k` and `F_c` stay within a factor 8 near their common boundary.
#[test]
fn branch_continuity() {
    for alpha in [0.8, 1.2, 1.6] {
        for rho in logspace(1e-3, 0.1, 5) {
            for dm in logspace(1e-3, 0.3, 5) {
                let p = probe(rho, dm, 2.0 * dm);
                let phi_t = 1.0;
                let eps = 1e-9;
                let a = alpha;
                // alpha/2 < s < alpha against s > alpha, at s = alpha +- eps, are separated by a log;
                // the power branches meet their neighbours continuously
                let below = f_alpha_k(a, a / 2.0 + eps, phi_t, &p).0;
                let at = f_alpha_k(a, a / 2.0, phi_t, &p).0;
                let above = f_alpha_k(a, a / 2.0 - eps, phi_t, &p).0;
                assert!(below > 0.0 && at > 0.0 && above > 0.0);
                assert!(at / below <= 8.0 && below / at <= 8.0, "{a} {rho} {dm}: {at} {below}");
                assert!(at / above <= 8.0 && above / at <= 8.0, "{a} {rho} {dm}: {at} {above}");
                if a > 1.0 {
                    let c0 = f_alpha_c(a, 1.0, phi_t, &p).unwrap().0;
                    let c1 = f_alpha_c(a, 1.0 + eps, phi_t, &p).unwrap().0;
                    let c2 = f_alpha_c(a, 1.0 - eps, phi_t, &p).unwrap().0;
                    assert!(c0 / c1 <= 8.0 && c1 / c0 <= 8.0);
                    assert!(c0 / c2 <= 8.0 && c2 / c0 <= 8.0);
                }
                // s -> alpha from below meets the equality branch when rho ~ delta
                if rho >= dm {
                    let l = f_alpha_k(a, a - eps, phi_t, &p).0;
                    let e = f_alpha_k(a, a, phi_t, &p).0;
                    assert!(e / l <= 8.0 && l / e <= 8.0, "{a} {rho} {dm}: {l} {e}");
                }
            }
        }
    }
}

fn case(tag: &str, kernel: KernelSpec, model: HKModel, t: f64, x: f64, y: f64) -> EstimateCase {
    EstimateCase { tag: Tag::parse(tag).unwrap(), kernel, model, t, x, y, margin: 2.0, horizon: 1.0 }
}

#[test]
fn example_one_values() {
    let k = KernelSpec::truncated(0.5, 1.0, 1.0);
    let m = HKModel::new(Family::D2, 2.0, 1.0, Geometry::FreeSpace).unwrap();
    let e = theorem_estimate(&case("example1-small", k.clone(), m, 0.25, 0.0, 0.5)).unwrap();
    assert!((e.value - 0.25f64.powf(-0.25)).abs() < 1e-12);
    assert_eq!(e.branch, "near, d < alpha");

    let m = HKModel::new(Family::J2, 1.0, 2.0, Geometry::FreeSpace).unwrap();
    for (t, finite) in [(1.5, false), (2.5, true)] {
        assert_eq!(example1_diagonal_finite(1.0, 2.0, 1.0, t), finite);
        let e = theorem_estimate(&case("example1-large", k.clone(), m.clone(), t, 0.0, 0.0)).unwrap();
        assert_eq!(e.value.is_finite(), finite, "{t}: {e:?}");
    }
    assert!(!example1_diagonal_finite(1.0, 2.0, 1.0, 1.999));
    assert!(example1_diagonal_finite(1.0, 2.0, 1.0, 2.0));
}

#[test]
fn truncated_weight() {
    assert_eq!(subtail::tail::n_t(1.75, 1.0), 2);
    assert_eq!((2.0 * 1.0 - 1.75f64).powi(2), 0.0625);
    // the weight enters the main2 (i)(a) form
    let k = KernelSpec::truncated(0.5, 1.0, 1.0);
    let m = HKModel::general(Family::HkJ, 1.0, 2.5, 0.4, 0.0, 1, Geometry::HalfLine).unwrap();
    let e = theorem_estimate(&case("main2-i", k, m, 1.75, 1.0, 1.1)).unwrap();
    assert!(e.branch.starts_with("a:"), "{e:?}");
    assert!(e.value > 0.0 && e.value.is_finite());
}

#[test]
fn regime_errors_name_predicate() {
    let k = KernelSpec::caputo(0.5);
    let m = HKModel::new(Family::J2, 1.0, 0.5, Geometry::FreeSpace).unwrap();
    let err = theorem_estimate(&case("mainsmall-i", k.clone(), m.clone(), 1.0, 0.0, 1.0)).unwrap_err();
    assert!(err.to_string().contains("near-diagonal"), "{err}");
    let ok = theorem_estimate(&case("mainsmall-ii-a", k.clone(), m.clone(), 1.0, 0.0, 1.0)).unwrap();
    assert_eq!(ok.branch, "off-diagonal-j");
    let err = theorem_estimate(&case("speciallarge-i", k, m, 2.0, 0.0, 1.0)).unwrap_err();
    assert!(matches!(err, subtail::Error::Regime(_)));
}

/// Every tag evaluates to a positive value somewhere inside its regime.
#[test]
fn every_tag_fires() {
    let caputo = KernelSpec::caputo(0.5);
    let trunc = KernelSpec::truncated(0.5, 1.0, 1.0);
    let sub = KernelSpec::Subexp { beta: 0.5, theta: 1.0, c0: 1.0, small_beta: 0.5 };
    let dist = KernelSpec::Distributed { weights: vec![(0.3, 1.0), (0.7, 1.0)] };
    let iv = Geometry::Interval { r: 1.0 };
    let m = |f: Family, a: f64, d: f64, g: Geometry| HKModel::new(f, a, d, g).unwrap();
    let gen = |f: Family, lam: f64, g: Geometry| HKModel::general(f, 1.5, 1.0, 0.5, lam, 1, g).unwrap();
    let near = (1e-3, 0.3, 0.3001);
    let far = (1e-3, 0.1, 0.9);
    let list: Vec<(&str, KernelSpec, HKModel, (f64, f64, f64))> = vec![
        ("specialsmall-i-a", caputo.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), near),
        ("specialsmall-i-b", caputo.clone(), m(Family::J4, 1.5, 1.0, iv.clone()), near),
        ("specialsmall-ii-a", caputo.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), far),
        ("specialsmall-ii-b", caputo.clone(), m(Family::J4, 1.5, 1.0, iv.clone()), far),
        ("specialsmall-ii-c", caputo.clone(), m(Family::D1, 2.0, 1.0, iv.clone()), far),
        ("speciallarge-i", caputo.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("speciallarge-ii", caputo.clone(), m(Family::J4, 1.5, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("speciallarge-iii", caputo.clone(), m(Family::J2, 1.0, 0.5, Geometry::HalfLine), (5.0, 1.0, 1.2)),
        ("speciallarge-iv", caputo.clone(), m(Family::D2, 2.0, 0.5, Geometry::HalfLine), (5.0, 1.0, 2.0)),
        ("speciallarge-v", caputo.clone(), m(Family::J3, 1.0, 1.0, Geometry::Exterior), (5.0, 1.5, 1.51)),
        ("specialsub-i", sub.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("specialsub-ii", sub.clone(), m(Family::J4, 1.5, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("specialtrunc-i", trunc.clone(), m(Family::J1, 1.0, 2.0, iv.clone()), (1.5, 0.3, 0.6)),
        ("specialtrunc-ii", trunc.clone(), m(Family::J4, 1.5, 2.0, iv.clone()), (1.5, 0.3, 0.6)),
        ("specialtrunc-iii", trunc.clone(), m(Family::J2, 1.0, 2.0, Geometry::HalfLine), (1.5, 1.0, 1.2)),
        ("mainsmall-i", caputo.clone(), gen(Family::HkJ, 0.0, Geometry::HalfLine), near),
        ("mainsmall-ii-a", caputo.clone(), gen(Family::HkJ, 0.0, Geometry::HalfLine), far),
        ("mainsmall-ii-b", caputo.clone(), gen(Family::HkD, 0.0, Geometry::HalfLine), far),
        ("mainsmall-ii-c", caputo.clone(), gen(Family::HkM, 0.0, Geometry::HalfLine), far),
        ("mainlarge-i", caputo.clone(), gen(Family::HkJ, 0.0, Geometry::HalfLine), (5.0, 1.0, 1.01)),
        ("mainlarge-ii", caputo.clone(), gen(Family::HkJ, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("mainsub-i", sub.clone(), gen(Family::HkJ, 0.0, Geometry::HalfLine), (5.0, 1.0, 1.01)),
        ("mainsub-ii", sub.clone(), gen(Family::HkJ, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
        ("main2-i", trunc.clone(), gen(Family::HkJ, 0.0, Geometry::HalfLine), (1.5, 1.0, 1.2)),
        ("main2-ii", trunc.clone(), gen(Family::HkJ, 1.0, iv.clone()), (1.5, 0.3, 0.6)),
        ("example1-small", trunc.clone(), m(Family::J2, 1.0, 0.5, Geometry::FreeSpace), (0.25, 0.0, 0.1)),
        ("example1-large", trunc.clone(), m(Family::J2, 1.0, 0.5, Geometry::FreeSpace), (1.5, 0.0, 0.1)),
        ("example2-i", dist.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), near),
        ("example2-ii", dist.clone(), m(Family::D1, 2.0, 1.0, iv.clone()), far),
        ("example2-iii", dist.clone(), m(Family::J1, 1.0, 1.0, iv.clone()), (5.0, 0.3, 0.6)),
    ];
    assert_eq!(list.len(), Tag::all().len());
    let mut bad = vec![];
    for (tag, k, model, (t, x, y)) in list {
        match theorem_estimate(&case(tag, k, model, t, x, y)) {
            Ok(e) if e.value > 0.0 && e.value.is_finite() && e.tag.name() == tag => {}
            other => bad.push(format!("{tag}: {other:?}")),
        }
    }
    assert!(bad.is_empty(), "{bad:#?}");
}

/// Large-time `J_2` against its decomposition through an isolated point at distance 1;
/// the near part carries the `w(t)` of the left side and the integral up to `Phi = 2`.
#[test]
fn j2_isolated_point_decomposition() {
    let tab = BernsteinTable::new(KernelSpec::caputo(0.5)).unwrap();
    let (a, d, g) = (1.0, 0.5, 0.5);
    let m2 = HKModel::general(Family::HkJ, a, d, g, 0.0, 2, Geometry::HalfLine).unwrap();
    let free = HKModel::general(Family::HkJ, a, d, 0.0, 0.0, 1, Geometry::FreeSpace).unwrap();
    let w = |t: f64| tab.kernel().w(t);
    let mut ratios = vec![];
    for t in logspace(4e3, 1e6, 5) {
        for x in logspace(1e-3, 10.0, 6) {
            for rho in logspace(1e-3, 3.0, 6) {
                let y = x + rho;
                let p = m2.geometry.probe(x, y).unwrap();
                let lhs = j_gamma_probe(&m2, &tab, 2, t, &p).unwrap();
                // isolated point at distance 1 when rho < 1
                let pf = free.geometry.probe(0.0, rho.max(1.0)).unwrap();
                let bnd = (x.powf(a).min(1.0) * y.powf(a).min(1.0)).powf(g);
                let mut rhs = bnd * j_gamma_probe(&free, &tab, 1, t, &pf).unwrap();
                if rho <= 1.0 {
                    rhs += w(t) * i_gamma(a, d, g, 1, NEAR, &p).value;
                }
                ratios.push(lhs / rhs);
            }
        }
    }
    assert!(spread(&ratios) <= 8.0, "spread {}", spread(&ratios));
}

proptest! {
    #[test]
    fn f_k_nonnegative_and_symmetric(a in 0.3f64..2.0, s in -1.0f64..3.0, rho in 1e-4f64..2.0,
                                     dx in 1e-4f64..2.0, dy in 1e-4f64..2.0, ph in 1e-3f64..1e3) {
        let p = probe(rho, dx, dy);
        let q = probe(rho, dy, dx);
        let v = f_alpha_k(a, s, ph, &p);
        prop_assert!(v.0 >= 0.0);
        prop_assert_eq!(v, f_alpha_k(a, s, ph, &q));
    }

    #[test]
    fn closed_form_symmetric(rho in 1e-4f64..0.01, dx in 1e-4f64..2.0, dy in 1e-4f64..2.0) {
        let phi_t = 1.0;
        let a = closed_i_gamma(1.0, 0.4, 0.4, phi_t, &probe(rho, dx, dy)).unwrap();
        let b = closed_i_gamma(1.0, 0.4, 0.4, phi_t, &probe(rho, dy, dx)).unwrap();
        prop_assert_eq!(a, b);
    }
}
