use jnc_core::lattice::{annulus, lq_of, GridFunction, Policy, Region, Window};
use proptest::prelude::*;

fn line(a: f64, b: f64, cells: usize) -> Window {
    Window::interval(a, b, cells).unwrap()
}

#[test]
fn identity_integrates_to_one_half() {
    let f = GridFunction::from_fn(line(0.0, 1.0, 64), |x| x[0]);
    let v = f.integrate(&Region::cube([0.5, 0.0], 1.0));
    assert!((v - 0.5).abs() < 1e-3);
}

#[test]
fn constant_integral_and_zero_function() {
    let w = line(0.0, 1.0, 50);
    let one = GridFunction::from_fn(w.clone(), |_| 1.0);
    assert!((one.integrate(&Region::cube([0.5, 0.0], 1.0)) - 1.0).abs() <= w.h());
    let zero = GridFunction::zeros(w);
    assert_eq!(zero.integrate(&Region::cube([0.3, 0.0], 0.4)), 0.0);
    assert_eq!(zero.lq_norm(&Region::cube([0.5, 0.0], 1.0), 2.0).unwrap(), 0.0);
}

#[test]
fn step_average_and_l2() {
    let w = line(0.0, 1.0, 64);
    let f = GridFunction::from_fn(w, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
    let all = Region::cube([0.5, 0.0], 1.0);
    assert_eq!(f.average(&all).unwrap(), 0.5);
    assert!((f.lq_norm(&all, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    let c = GridFunction::from_fn(line(0.0, 1.0, 10), |_| -2.5);
    assert_eq!(c.average(&all).unwrap(), -2.5);
}

#[test]
fn odd_function_average_vanishes() {
    let w = line(-1.0, 1.0, 40);
    let f = GridFunction::from_fn(w.clone(), |x| x[0]);
    assert!(f.average(&Region::cube([0.0, 0.0], 2.0)).unwrap().abs() <= w.h());
}

#[test]
fn annulus_membership() {
    let a = annulus([0.0, 0.0], 1.0, 1).unwrap();
    assert!(a.contains(1, &[0.75, 0.0]));
    assert!(!a.contains(1, &[0.25, 0.0]));
    assert!(!a.contains(1, &[1.0, 0.0]));
}

#[test]
fn region_outside_window_is_empty_or_counted() {
    let w = line(0.0, 1.0, 16);
    let f = GridFunction::from_fn(w.clone(), |_| 1.0);
    assert!(f.average(&Region::cube([5.0, 0.0], 1.0)).is_err());
    let sel = w.select(&Region::cube([1.0, 0.0], 1.0), Policy::ZeroExtend);
    assert_eq!(sel.count(), 16);
    assert_eq!(sel.outside.len(), 8);
}

proptest! {
    #[test]
    fn annuli_tile_the_outer_cube(cells in 8usize..40, l in 0u32..4, z in -0.3f64..0.3, r in 0.05f64..0.2) {
        let w = Window::square([-2.0, -2.0], 4.0, cells).unwrap();
        let outer = w.select(&Region::cube([z, -z], r * 2f64.powi(l as i32)), Policy::Restrict);
        let mut seen = vec![0u32; w.len()];
        for j in 0..=l {
            for i in w.select(&annulus([z, -z], r, j).unwrap(), Policy::Restrict).cells {
                seen[i] += 1;
            }
        }
        for (i, &count) in seen.iter().enumerate() {
            prop_assert_eq!(count, outer.cells.contains(&i) as u32);
        }
    }

    #[test]
    fn lq_is_homogeneous(vals in proptest::collection::vec(-5.0f64..5.0, 1..50), c in -3.0f64..3.0, q in 1.0f64..6.0) {
        let a = lq_of(&vals, q, 0.1).unwrap();
        let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
        let b = lq_of(&scaled, q, 0.1).unwrap();
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn transfer_round_trip(cells in 4usize..32, shift in 0usize..8, seed in any::<u64>()) {
        let w = line(0.0, cells as f64, cells);
        let big = line(-(shift as f64), (cells + shift) as f64, cells + 2 * shift);
        let f = GridFunction::from_fn(w.clone(), |x| ((x[0] + 1.0) * (seed % 97) as f64).sin());
        let g = f.transfer(&big).unwrap().transfer(&w).unwrap();
        prop_assert_eq!(f, g);
    }

    #[test]
    fn ball_is_subset_of_circumscribed_cube(cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.1f64..0.8) {
        let w = Window::square([-1.0, -1.0], 2.0, 24).unwrap();
        let ball = w.select(&Region::ball([cx, cy], r), Policy::Restrict);
        let cube = w.select(&Region::cube([cx, cy], 2.0 * r), Policy::Restrict);
        for i in &ball.cells {
            prop_assert!(cube.cells.contains(i));
        }
    }
}
