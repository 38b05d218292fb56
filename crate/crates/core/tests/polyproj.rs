use jnc_core::lattice::{GridFunction, Region, Window};
use jnc_core::polyproj::{
    dual_basis, moment_projection, multi_indices, normalized_inner, orthonormal_basis, residual_moments, sup_poly_norm,
    Frame, Polynomial,
};
use jnc_core::tol;
use proptest::prelude::*;

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            let pivot = a[c].clone();
            for (x, y) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                *x -= m * y;
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least-squares projection on the midpoints of `[c − ℓ/2, c + ℓ/2)` in the
/// 1-D frame `(x − c)/ℓ`, from the normal equations.
fn oracle_1d(f: &GridFunction, c: f64, l: f64, s: usize) -> Vec<f64> {
    let w = &f.window;
    let pts: Vec<(f64, f64)> = (0..w.len())
        .map(|i| (w.midpoint(i)[0], f.values[i]))
        .filter(|(x, _)| *x >= c - l / 2.0 && *x < c + l / 2.0)
        .collect();
    let t = |x: f64, k: usize| ((x - c) / l).powi(k as i32);
    let a = (0..=s)
        .map(|i| {
            (0..=s)
                .map(|j| pts.iter().map(|(x, _)| t(*x, i) * t(*x, j)).sum())
                .collect()
        })
        .collect();
    let b = (0..=s).map(|i| pts.iter().map(|(x, v)| t(*x, i) * v).sum()).collect();
    solve(a, b)
}

#[test]
fn square_projects_to_one_third_at_second_order() {
    let mut errs = Vec::new();
    for cells in [32, 64, 128] {
        let w = Window::interval(-1.0, 1.0, cells).unwrap();
        let f = GridFunction::from_fn(w, |x| x[0] * x[0]);
        let p = moment_projection(&f, &Region::cube([0.0, 0.0], 2.0), 1).unwrap();
        let e = (p.eval(&[0.0, 0.0]) - 1.0 / 3.0)
            .abs()
            .max(p.eval(&[0.7, 0.0]) - p.eval(&[0.0, 0.0]));
        errs.push(e.abs());
    }
    for k in 0..2 {
        let rate = errs[k] / errs[k + 1];
        assert!((3.5..4.5).contains(&rate), "rate {rate} from {errs:?}");
    }
}

#[test]
fn degree_zero_is_the_average() {
    let w = Window::interval(0.0, 3.0, 30).unwrap();
    let f = GridFunction::from_fn(w, |x| (3.0 * x[0]).sin());
    let q = Region::cube([1.0, 0.0], 1.2);
    let p = moment_projection(&f, &q, 0).unwrap();
    assert!((p.eval(&[2.9, 0.0]) - f.average(&q).unwrap()).abs() < 1e-14);
}

#[test]
fn legendre_basis_and_duals() {
    let w = Window::interval(-1.0, 1.0, 2000).unwrap();
    let q = Region::cube([0.0, 0.0], 2.0);
    let phi = orthonormal_basis(&w, &q, 1).unwrap();
    assert!((phi[0].eval(&[0.3, 0.0]).abs() - 1.0).abs() < 1e-6);
    assert!((phi[1].eval(&[0.5, 0.0]).abs() - 3f64.sqrt() * 0.5).abs() < 1e-6);
    for (i, u) in phi.iter().enumerate() {
        for (j, v) in phi.iter().enumerate() {
            let ip = normalized_inner(&w, &q, u, v).unwrap();
            assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    let psi = dual_basis(&w, &q, 1).unwrap();
    assert!((psi[0].eval(&[0.4, 0.0]) - 1.0).abs() < 1e-6);
    assert!((psi[1].eval(&[0.5, 0.0]) - 1.5).abs() < 1e-6);
}

#[test]
fn sup_norm_scaling() {
    let w = Window::interval(-4.0, 4.0, 800).unwrap();
    let p = Polynomial::new(1, 1, Frame::ORIGIN, vec![0.0, 1.0]).unwrap();
    let small = sup_poly_norm(&p, &Region::ball([0.0, 0.0], 1.0), &w).unwrap();
    let big = sup_poly_norm(&p, &Region::ball([0.0, 0.0], 2.0), &w).unwrap();
    assert!((small - 1.0).abs() <= w.h() / 2.0 + 1e-12);
    assert!(big <= 1.1 * 2.0 * small);
}

fn coeff_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_normal_equation_oracle(cells in 16usize..80, s in 0usize..3, c in -0.3f64..0.3, l in 0.6f64..1.2, seed in 0u64..1000) {
        let w = Window::interval(-1.0, 1.0, cells).unwrap();
        let f = GridFunction::from_fn(w, |x| ((seed as f64 + 1.0) * x[0]).sin() + x[0].abs());
        let q = Region::cube([c, 0.0], l);
        let p = moment_projection(&f, &q, s).unwrap();
        let coef = oracle_1d(&f, c, l, s);
        for x in [-0.5, 0.0, 0.2, 0.45] {
            let want: f64 = (0..=s).map(|k| coef[k] * (x / l).powi(k as i32)).sum();
            let got = p.eval(&[c + x, 0.0]);
            prop_assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn reproduces_polynomials_2d(s in 0usize..3, coeffs in coeff_strategy(6), ax in -1.0f64..1.0, scale in 0.3f64..3.0) {
        let dim = multi_indices(2, s).len();
        let poly = Polynomial::new(2, s, Frame { anchor: [ax, -ax], scale }, coeffs[..dim].to_vec()).unwrap();
        let w = Window::square([-1.0, -1.0], 2.0, 16).unwrap();
        let f = poly.sample(&w);
        let q = Region::cube([0.1, -0.2], 1.0);
        let p = moment_projection(&f, &q, s).unwrap();
        let norm = f.sup_abs().max(1e-300);
        for x in [[0.0, 0.0], [0.3, -0.6], [-0.2, 0.1]] {
            prop_assert!((p.eval(&x) - poly.eval(&x)).abs() <= tol::REPRODUCTION_REL * norm);
        }
    }

    #[test]
    fn residual_moments_vanish(s in 0usize..3, n in 1usize..3, seed in 0u64..10_000) {
        let w = if n == 1 { Window::interval(-1.0, 1.0, 64).unwrap() } else { Window::square([-1.0, -1.0], 2.0, 24).unwrap() };
        let k = seed as f64 * 0.001 + 1.0;
        let f = GridFunction::from_fn(w, |x| (k * x[0]).cos() * (2.0 - x[1]) + (x[0] * x[1] * 5.0).sin());
        let q = Region::cube([0.05, 0.0], 1.5);
        let p = moment_projection(&f, &q, s).unwrap();
        let (moments, l1) = residual_moments(&f, &q, &p);
        for m in moments {
            prop_assert!(m.abs() <= tol::MOMENT_REL * l1.max(1e-300));
        }
    }
}
