//! Acceptance criteria 1–10, one PASS/FAIL line each.

use std::time::{Duration, Instant};

use jnc_core::czkernel::KernelSpec;
use jnc_core::hardy::{epsilon_window, epsilon_window_exact, EpsilonWindow};
use jnc_core::lab::{run, DomainSpec, ExperimentConfig, ExperimentName, ExperimentResult};
use jnc_core::lattice::{GridFunction, Region, Window};
use jnc_core::polyproj::{moment_projection, multi_indices, residual_moments, Frame, Polynomial};
use jnc_core::spaces::{jn_con_norm, jn_partition_oracle, norm_scale, NormParams, SearchConfig};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = Ratio<i64>;

/// Print the verdict line and fail the test on a violation or overrun.
fn verdict(id: u32, ok: bool, detail: String, start: Instant, budget: Duration) {
    let took = start.elapsed();
    let pass = ok && took <= budget;
    println!(
        "{} criterion {id}: {detail} ({:.2}s of {:.0}s)",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn prop(r: &ExperimentResult, name: &str) -> (f64, bool) {
    let p = r.property(name).unwrap_or_else(|| panic!("{name} missing"));
    (p.value, p.holds)
}

fn summary(r: &ExperimentResult, key: &str) -> f64 {
    r.summary[key].as_f64().unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn criterion_01_projection() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_moment, mut worst_repro) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let n = 1 + case % 2;
        let s = (case / 2) % 3;
        let w = if n == 1 {
            Window::interval(-1.0, 1.0, 64).unwrap()
        } else {
            Window::square([-1.0, -1.0], 2.0, 24).unwrap()
        };
        let q = Region::cube(
            [
                rng.gen_range(-0.3..0.3),
                if n == 2 { rng.gen_range(-0.3..0.3) } else { 0.0 },
            ],
            rng.gen_range(0.6..1.2),
        );
        let (a, b) = (rng.gen_range(1.0..8.0), rng.gen_range(-1.0..1.0));
        let f = GridFunction::from_fn(w.clone(), |x| {
            (a * x[0] + b).sin() * (1.0 + x[1] * x[1]) + (x[0] - b).abs()
        });
        let p = moment_projection(&f, &q, s).unwrap();
        let (moments, l1) = residual_moments(&f, &q, &p);
        let scale = l1.max(f64::MIN_POSITIVE);
        worst_moment = moments.iter().fold(worst_moment, |m, v| m.max(v.abs() / scale));

        let dim = multi_indices(n, s).len();
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let poly = Polynomial::new(
            n,
            s,
            Frame {
                anchor: [b, -b],
                scale: 0.7,
            },
            coeffs,
        )
        .unwrap();
        let g = poly.sample(&w);
        let pg = moment_projection(&g, &q, s).unwrap();
        let norm = g.sup_abs().max(f64::MIN_POSITIVE);
        for i in w.select(&q, jnc_core::lattice::Policy::Restrict).cells {
            let x = w.midpoint(i);
            worst_repro = worst_repro.max((pg.eval(&x) - g.values[i]).abs() / norm);
        }
    }
    let mut errs = Vec::new();
    for cells in [32, 64, 128] {
        let w = Window::interval(-1.0, 1.0, cells).unwrap();
        let f = GridFunction::from_fn(w, |x| x[0] * x[0]);
        let p = moment_projection(&f, &Region::cube([0.0, 0.0], 2.0), 1).unwrap();
        errs.push((p.eval(&[0.0, 0.0]) - 1.0 / 3.0).abs());
    }
    let rates = [errs[0] / errs[1], errs[1] / errs[2]];
    let second_order = rates.iter().all(|r| (3.5..4.5).contains(r));
    verdict(
        1,
        worst_moment <= 1e-8 && worst_repro <= 1e-10 && second_order,
        format!(
            "moments {worst_moment:.1e}, reproduction {worst_repro:.1e}, x² rates {:.2}/{:.2}",
            rates[0], rates[1]
        ),
        start,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_02_norm_oracle() {
    let start = Instant::now();
    let step = GridFunction::from_fn(Window::interval(0.0, 1.0, 4).unwrap(), |x| {
        if x[0] < 0.5 {
            1.0
        } else {
            0.0
        }
    });
    let p11 = NormParams::new(1.0, 1.0, 0, 0.0).unwrap();
    let step_value = jn_con_norm(&step, &p11, &SearchConfig::full()).unwrap().value;
    let mut worst = (step_value - 0.5).abs();
    let mut instances = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = rng.gen_range(2..=16);
        let w = Window::interval(0.0, 1.0, cells).unwrap();
        let f = GridFunction::new(w, (0..cells).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let s = rng.gen_range(0..=1usize.min(cells - 1));
        let params = NormParams::new(
            rng.gen_range(1.0..4.0),
            rng.gen_range(1.0..4.0),
            s,
            rng.gen_range(-0.5..0.5),
        )
        .unwrap();
        let fast = jn_con_norm(&f, &params, &SearchConfig::full())
            .unwrap_or_else(|e| panic!("seed {seed} cells {cells} {params:?}: {e}"))
            .value;
        let oracle = jn_partition_oracle(&f, &params).unwrap();
        worst = worst.max((fast - oracle).abs() / oracle.max(1.0));
        instances += 1;
    }
    verdict(
        2,
        worst <= 1e-12,
        format!("{instances} instances, step value {step_value}, max relative gap {worst:.1e}"),
        start,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_03_seminorm_kernel() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 1..=2 {
        let w = if n == 1 {
            Window::interval(-1.0, 1.0, 256).unwrap()
        } else {
            Window::square([-1.0, -1.0], 2.0, 32).unwrap()
        };
        for s in 0..=2 {
            let params = NormParams::new(2.0, 2.0, s, 0.1).unwrap();
            let search = SearchConfig::default();
            let basis = multi_indices(n, s);
            for k in 0..basis.len() {
                let mut c = vec![0.0; basis.len()];
                c[k] = 1.0;
                let f = Polynomial::new(n, s, Frame::ORIGIN, c).unwrap().sample(&w);
                let scale = norm_scale(&f, &params, &search).max(f64::MIN_POSITIVE);
                worst = worst.max(jn_con_norm(&f, &params, &search).unwrap().value / scale);
            }
        }
    }
    verdict(
        3,
        worst <= 1e-8,
        format!("max ‖x^γ‖/scale {worst:.1e}"),
        start,
        Duration::from_secs(5),
    );
}

#[test]
fn criterion_04_equivalence() {
    let start = Instant::now();
    let r = run(&ExperimentConfig::default_for(ExperimentName::Equivalence)).unwrap();
    let insufficient = r.summary["search_insufficient"].as_bool().unwrap();
    let mut ok = !insufficient;
    let mut parts = Vec::new();
    for name in [
        "jn_bracket_spread",
        "rm_bracket_spread",
        "jn_bracket_refinement_factor",
        "rm_bracket_refinement_factor",
    ] {
        let (v, holds) = prop(&r, name);
        ok &= holds;
        parts.push(format!("{name} {v:.3}"));
    }
    verdict(4, ok, parts.join(", "), start, Duration::from_secs(120));
}

#[test]
fn criterion_05_vanishing_moments() {
    let start = Instant::now();
    let base = ExperimentConfig::default_for(ExperimentName::VanishingMoments);
    let hilbert = run(&base).unwrap();
    let mut riesz = base.clone();
    riesz.kernel = KernelSpec::Riesz { axis: 0 };
    riesz.domain = DomainSpec {
        lower: vec![-1.0, -1.0],
        upper: vec![1.0, 1.0],
    };
    riesz.refinements = vec![64];
    riesz.atom_cells = 2;
    riesz.atom_side = 0.25;
    riesz.monomial_padding = 16;
    let riesz = run(&riesz).unwrap();
    let perturbed = run(&ExperimentConfig {
        kernel: KernelSpec::Perturbed,
        ..base
    })
    .unwrap();
    let (dh, dr, dp) = (
        summary(&hilbert, "defect_max"),
        summary(&riesz, "defect_max"),
        summary(&perturbed, "defect_max"),
    );
    let (mh, mr, mp) = (
        prop(&hilbert, "monomial_poly_distance"),
        prop(&riesz, "monomial_poly_distance"),
        prop(&perturbed, "monomial_poly_distance"),
    );
    let ok = dh <= 5e-3 && dr <= 5e-3 && dp >= 10.0 * dh.max(dr) && mh.1 && mr.1 && !mp.1;
    verdict(
        5,
        ok,
        format!(
            "defect hilbert {dh:.2e}, riesz {dr:.2e}, perturbed {dp:.2e}; T̃(1) distance {:.1e}/{:.1e}/{:.2}",
            mh.0, mr.0, mp.0
        ),
        start,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_06_boundedness_stability() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default_for(ExperimentName::JnBoundedness);
    assert_eq!(cfg.refinements, vec![128, 256]);
    assert_eq!(cfg.family.count, 20);
    let r = run(&cfg).unwrap();
    let (f, holds) = prop(&r, "ratio_refinement_factor");
    let (m128, m256) = (summary(&r, "max_ratio_128"), summary(&r, "max_ratio_256"));
    verdict(
        6,
        holds && f <= 2.0,
        format!("max ratio {m128:.3} → {m256:.3}, factor {f:.3}"),
        start,
        Duration::from_secs(180),
    );
}

#[test]
fn criterion_07_molecule_pipeline() {
    let start = Instant::now();
    let img = run(&ExperimentConfig::default_for(ExperimentName::AtomImage)).unwrap();
    let dec = run(&ExperimentConfig::default_for(ExperimentName::Decomposition)).unwrap();
    let eps = summary(&img, "epsilon");
    let (_, certified) = prop(&img, "certified_with_one_constant");
    let (residual, res_ok) = prop(&dec, "reconstruction_residual");
    let (gap, gap_ok) = prop(&dec, "closed_form_gap");
    let ok = eps == 0.3 && certified && res_ok && residual <= 1e-6 && gap_ok && gap <= 0.1;
    verdict(
        7,
        ok,
        format!(
            "C = {:.3}, residual {residual:.1e}, closed-form gap {gap:.2e}",
            summary(&img, "constant")
        ),
        start,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_08_duality() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default_for(ExperimentName::Duality);
    assert_eq!((cfg.atoms, cfg.family.count), (10, 5));
    let r = run(&cfg).unwrap();
    let (sens, s_ok) = prop(&r, "padding_certified");
    let (mis, m_ok) = prop(&r, "pairing_mismatch");
    let (cross, c_ok) = prop(&r, "moment_form_mismatch");
    let ok = s_ok && m_ok && c_ok && mis <= 1e-3 && cross <= 1e-3;
    verdict(
        8,
        ok,
        format!("mismatch {mis:.1e}, padding sensitivity {sens:.1e}, moment form {cross:.1e}"),
        start,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_09_epsilon_window() {
    let start = Instant::now();
    let params = NormParams::new(2.0, 2.0, 0, 0.25).unwrap();
    let exact = epsilon_window(&params, 1.0, 1).unwrap()
        == EpsilonWindow::Interval {
            lower: Q::new(1, 6),
            upper: Q::new(1, 2),
        };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut checked, mut bad) = (0, 0);
    while checked < 100 {
        let n = rng.gen_range(1..=2i64);
        let s = rng.gen_range(0..=2i64);
        let inv_p = Q::new(1, rng.gen_range(1..=8));
        let inv_q = Q::new(rng.gen_range(1..=7), 8);
        let delta = Q::new(rng.gen_range(1..=8), 8);
        let (lo, hi) = (inv_q - inv_p, (Q::from_integer(s) + delta) / Q::from_integer(n));
        if lo >= hi {
            continue;
        }
        let alpha = lo + (hi - lo) * Q::new(rng.gen_range(1..32), 32);
        let Some(eps) = epsilon_window_exact(inv_p, inv_q, s as usize, alpha, delta, n as usize)
            .unwrap()
            .midpoint()
        else {
            checked += 1;
            continue;
        };
        let c = (inv_q - inv_p - alpha) / eps;
        let inv_qp = Q::from_integer(1) - inv_q;
        let first = c + inv_qp + Q::new(s, n) < Q::from_integer(0);
        let second = -inv_qp - (Q::from_integer(s) + delta) / Q::from_integer(n) <= c;
        if !(first && second && eps > Q::from_integer(0) && eps < Q::from_integer(1)) {
            bad += 1;
        }
        checked += 1;
    }
    verdict(
        9,
        exact && bad == 0,
        format!("[1/6, 1/2) exact: {exact}, {bad} of {checked} draws violate"),
        start,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let mut differing = Vec::new();
    for name in ExperimentName::ALL {
        let cfg = ExperimentConfig::default_for(name);
        let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
        if a.to_csv().unwrap() != b.to_csv().unwrap() || a.to_json().unwrap() != b.to_json().unwrap() {
            differing.push(name.as_str());
        }
    }
    verdict(
        10,
        differing.is_empty(),
        format!(
            "{} experiments run twice, differing: {differing:?}",
            ExperimentName::ALL.len()
        ),
        start,
        Duration::from_secs(600),
    );
}
