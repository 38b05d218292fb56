use jnc_core::czkernel::{
    apply_cz, apply_cz_on, apply_modified, apply_modified_on, apply_truncated, kernel_transpose, modified_on_monomial,
    padded_window, poly_distance, sample_pairs, standard_kernel_check, vanishing_moment_defect, AtomRef,
    CorrectionSpec, KernelSpec,
};
use jnc_core::hardy::make_atom;
use jnc_core::lattice::{GridFunction, Region, Window};
use jnc_core::polyproj::{multi_indices, Frame, MultiIndex};
use jnc_core::spaces::NormParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Σ_{|x−y| ≥ η} K(x, y) f(y) h` by a plain double loop on a 1-D window.
fn truncated_oracle(k: &dyn Fn(f64, f64) -> f64, f: &GridFunction, eta: f64) -> Vec<f64> {
    let w = &f.window;
    (0..w.len())
        .map(|i| {
            let x = w.midpoint(i)[0];
            (0..w.len())
                .filter(|&j| (w.midpoint(j)[0] - x).abs() >= eta - 1e-12)
                .map(|j| k(x, w.midpoint(j)[0]) * f.values[j] * w.h())
                .sum()
        })
        .collect()
}

fn smooth(seed: u64, w: &Window) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c) = (
        rng.gen_range(1.0..6.0),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(0.2..0.6),
    );
    GridFunction::from_fn(w.clone(), |x| (a * x[0]).sin() * (-(x[0] - b).powi(2) / (c * c)).exp())
}

#[test]
fn truncated_operators_match_double_loop() {
    let w = Window::interval(-1.0, 1.0, 64).unwrap();
    let f = smooth(3, &w);
    for (spec, k) in [
        (
            KernelSpec::Hilbert,
            Box::new(|x: f64, y: f64| 1.0 / (x - y)) as Box<dyn Fn(f64, f64) -> f64>,
        ),
        (
            KernelSpec::Perturbed,
            Box::new(|x: f64, y: f64| (2.0 + x.sin()) / (x - y)),
        ),
        (
            KernelSpec::SmoothBump { width: 0.3 },
            Box::new(|x: f64, y: f64| (-(x - y).powi(2) / 0.09).exp()),
        ),
    ] {
        for m in [1, 3] {
            let eta = m as f64 * w.h();
            let got = apply_truncated(&spec, &f, eta).unwrap();
            let want = truncated_oracle(&k, &f, eta);
            for (g, o) in got.values.iter().zip(&want) {
                assert!((g - o).abs() < 1e-12 * (1.0 + o.abs()), "{spec:?}: {g} vs {o}");
            }
        }
    }
}

#[test]
fn hilbert_of_identity_at_origin() {
    let w = Window::interval(-1.0, 1.0, 401).unwrap();
    let f = GridFunction::from_fn(w.clone(), |y| y[0]);
    let eta = (0.25 / w.h()).round() * w.h();
    let t = apply_truncated(&KernelSpec::Hilbert, &f, eta).unwrap();
    assert!((t.values[200] + (2.0 - 2.0 * eta)).abs() < 2.0 * w.h());
    assert!((t.values[200] + 1.5).abs() < 2.0 * w.h() + 0.01);
}

#[test]
fn riesz_second_derivatives_match_finite_differences() {
    let n = 2;
    let e = 1e-4;
    let x = [0.4, -0.3];
    let y = [-0.7, 0.55];
    for axis in 0..2 {
        let k = KernelSpec::Riesz { axis };
        for g in multi_indices(n, 2).into_iter().filter(|g| g.order() == 2) {
            let comps = g.components();
            let (a, b) = if comps[0] == 2 {
                (0, 0)
            } else if comps[1] == 2 {
                (1, 1)
            } else {
                (0, 1)
            };
            let shift = |p: [f64; 2], i: usize, t: f64| {
                let mut q = p;
                q[i] += t;
                q
            };
            let fd = (k.eval(n, &shift(shift(x, a, e), b, e), &y)
                - k.eval(n, &shift(shift(x, a, e), b, -e), &y)
                - k.eval(n, &shift(shift(x, a, -e), b, e), &y)
                + k.eval(n, &shift(shift(x, a, -e), b, -e), &y))
                / (4.0 * e * e);
            let exact = k.d1(n, &g, &x, &y);
            assert!(
                (fd - exact).abs() < 1e-4 * (1.0 + exact.abs()),
                "axis {axis} {g:?}: {fd} vs {exact}"
            );
            let fd2 = (k.eval(n, &x, &shift(shift(y, a, e), b, e))
                - k.eval(n, &x, &shift(shift(y, a, e), b, -e))
                - k.eval(n, &x, &shift(shift(y, a, -e), b, e))
                + k.eval(n, &x, &shift(shift(y, a, -e), b, -e)))
                / (4.0 * e * e);
            let exact2 = k.d2(n, &g, &x, &y);
            assert!((fd2 - exact2).abs() < 1e-4 * (1.0 + exact2.abs()));
        }
    }
}

#[test]
fn hilbert_cauchy_increments_shrink_on_smooth_input() {
    let mut inc = Vec::new();
    for cells in [128, 256, 512] {
        let w = Window::interval(-1.0, 1.0, cells).unwrap();
        let f = GridFunction::from_fn(w, |x| (3.0 * x[0]).sin() * (1.0 - x[0] * x[0]).powi(2));
        let r = apply_cz(&KernelSpec::Hilbert, &f).unwrap();
        assert!(!r.diverging, "{cells}: {:?} tol {}", r.increments, r.tolerance);
        inc.push(r.increments[1]);
    }
    assert!(inc[1] < inc[0] && inc[2] < inc[1], "{inc:?}");
}

#[test]
fn modified_minus_plain_is_constant_for_hilbert() {
    let w = Window::interval(-1.0, 1.0, 128).unwrap();
    let f = smooth(11, &w);
    let corr = CorrectionSpec::new([0.0, 0.0], 0.25, 0).unwrap();
    let m = apply_modified(&KernelSpec::Hilbert, &corr, &f).unwrap();
    let plain = apply_cz(&KernelSpec::Hilbert, &f).unwrap();
    let diff = m.cz.values.axpy(-1.0, &plain.values).unwrap();
    let scale = plain.values.sup_abs();
    assert!(poly_distance(&diff, &Region::cube([0.0, 0.0], 2.0), 0, scale).unwrap() <= 1e-6);
}

#[test]
fn canonical_output_is_independent_of_base_ball() {
    for (k, s) in [(KernelSpec::Hilbert, 0), (KernelSpec::Perturbed, 1)] {
        let w = Window::interval(-1.0, 1.0, 128).unwrap();
        let f = smooth(5, &w);
        let a = apply_modified(&k, &CorrectionSpec::new([0.0, 0.0], 0.25, s).unwrap(), &f).unwrap();
        let b = apply_modified(&k, &CorrectionSpec::new([0.3, 0.0], 0.1, s).unwrap(), &f).unwrap();
        let diff = a.canonical.axpy(-1.0, &b.canonical).unwrap();
        assert!(diff.sup_abs() <= 1e-6 * a.canonical.sup_abs().max(1e-300), "{k:?}");
    }
}

#[test]
fn riesz_size_constant_at_most_one() {
    let pairs = sample_pairs(2, 200, 2.0, 0.05, 9);
    for axis in 0..2 {
        let c = standard_kernel_check(&KernelSpec::Riesz { axis }, 2, 0, &pairs).unwrap();
        assert!(c.size[0] <= 1.0 + 1e-12);
        assert!(c.regularity.is_finite());
    }
    let h = standard_kernel_check(&KernelSpec::Hilbert, 1, 1, &sample_pairs(1, 100, 2.0, 0.05, 2)).unwrap();
    assert!((h.size[0] - 1.0).abs() < 1e-12);
}

#[test]
fn l2_ratio_bounded_on_random_family() {
    let w = Window::interval(-1.0, 1.0, 256).unwrap();
    let big = padded_window(&w, 4).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let f = smooth(seed, &w);
        let t = apply_cz_on(&KernelSpec::Hilbert, &f, &big, None).unwrap();
        ratios.push(t.values.l2() / f.l2());
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(max <= 1.05 * std::f64::consts::PI, "{ratios:?}");
}

#[test]
fn vanishing_moments_separate_hilbert_from_perturbed() {
    let params = NormParams::new(2.0, 2.0, 0, 0.25).unwrap();
    let support = Window::interval(-0.5, 0.5, 16).unwrap();
    let atoms: Vec<_> = (0..10)
        .map(|i| make_atom(100 + i, &support, &params).unwrap())
        .collect();
    let refs: Vec<_> = atoms
        .iter()
        .map(|a| AtomRef {
            values: &a.values,
            support: Region::cube([0.0, 0.0], 1.0),
        })
        .collect();
    let h = vanishing_moment_defect(&KernelSpec::Hilbert, 0, &refs, 512).unwrap();
    let p = vanishing_moment_defect(&KernelSpec::Perturbed, 0, &refs, 512).unwrap();
    assert!(h.defect <= 5e-3, "{}", h.defect);
    assert!(p.defect >= 10.0 * h.defect, "{} vs {}", p.defect, h.defect);
    assert!(h.mismatch <= 1e-3);
}

#[test]
fn monomial_image_is_polynomial_only_for_convolution_kernels() {
    let eval = Window::interval(-1.0, 1.0, 32).unwrap();
    let corr = CorrectionSpec::new([0.0, 0.0], 0.25, 0).unwrap();
    let nu = MultiIndex::zero(1);
    let whole = Region::cube([0.0, 0.0], 2.0);
    let dist = |k: &KernelSpec| {
        let r = modified_on_monomial(&kernel_transpose(k), &corr, &nu, Frame::ORIGIN, &eval, 64, 1.0, 5e-3).unwrap();
        poly_distance(&r.extrapolated, &whole, 0, 1.0).unwrap()
    };
    let h = dist(&KernelSpec::Hilbert);
    let p = dist(&KernelSpec::Perturbed);
    assert!(h <= 5e-3, "{h}");
    assert!(p >= 10.0 * 5e-3, "{p}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_linear_in_kernel(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let w = Window::interval(-1.0, 1.0, 48).unwrap();
        let f = smooth(seed, &w);
        let k1 = KernelSpec::Hilbert;
        let k2 = KernelSpec::SmoothBump { width: 0.4 };
        let sum = KernelSpec::Sum { kernels: vec![
            KernelSpec::Scaled { factor: a, kernel: Box::new(k1.clone()) },
            KernelSpec::Scaled { factor: b, kernel: Box::new(k2.clone()) },
        ] };
        let t1 = apply_cz(&k1, &f).unwrap().values;
        let t2 = apply_cz(&k2, &f).unwrap().values;
        let ts = apply_cz(&sum, &f).unwrap().values;
        for i in 0..w.len() {
            let want = a * t1.values[i] + b * t2.values[i];
            prop_assert!((ts.values[i] - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn operator_is_linear_in_input(s1 in any::<u64>(), s2 in any::<u64>(), c in -3.0f64..3.0) {
        let w = Window::interval(-1.0, 1.0, 48).unwrap();
        let (f, g) = (smooth(s1, &w), smooth(s2, &w));
        let k = KernelSpec::Perturbed;
        let lhs = apply_cz(&k, &f.axpy(c, &g).unwrap()).unwrap().values;
        let rhs = apply_cz(&k, &f).unwrap().values.axpy(c, &apply_cz(&k, &g).unwrap().values).unwrap();
        for i in 0..w.len() {
            prop_assert!((lhs.values[i] - rhs.values[i]).abs() <= 1e-10 * (1.0 + rhs.values[i].abs()));
        }
    }

    #[test]
    fn transpose_is_involutive(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        prop_assume!((x - y).abs() > 1e-3);
        for k in [KernelSpec::Hilbert, KernelSpec::Perturbed] {
            let t = kernel_transpose(&k);
            prop_assert_eq!(kernel_transpose(&t), k.clone());
            prop_assert_eq!(t.eval(1, &[x, 0.0], &[y, 0.0]), k.eval(1, &[y, 0.0], &[x, 0.0]));
        }
    }

    #[test]
    fn base_ball_change_is_polynomial(seed in any::<u64>(), cx in -0.4f64..0.4, r in 0.05f64..0.3) {
        let w = Window::interval(-1.0, 1.0, 64).unwrap();
        let f = smooth(seed, &w);
        let k = KernelSpec::Perturbed;
        let a = apply_modified_on(&k, &CorrectionSpec::new([0.0, 0.0], 0.25, 1).unwrap(), &f, &w, None).unwrap();
        let b = apply_modified_on(&k, &CorrectionSpec::new([cx, 0.0], r, 1).unwrap(), &f, &w, None).unwrap();
        let d = a.cz.values.axpy(-1.0, &b.cz.values).unwrap();
        let scale = a.cz.values.sup_abs();
        prop_assert!(poly_distance(&d, &Region::cube([0.0, 0.0], 2.0), 1, scale).unwrap() <= 1e-6);
    }
}
