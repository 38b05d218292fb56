//! Seeded test-function families.
//!
//! Every member is defined on the continuum and sampled at cell midpoints,
//! so one seed yields the same function at every refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hardy::{make_atom, AtomRecord};
use crate::lattice::{GridFunction, Point, Window};
use crate::polyproj::{multi_indices, MultiIndex};
use crate::spaces::NormParams;

use super::config::{FamilyKind, FamilySpec};

/// Generator for case `index`: one ChaCha stream per case.
pub fn case_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Seed handed to sub-generators such as [`make_atom`].
pub fn case_seed(seed: u64, index: usize) -> u64 {
    case_rng(seed, index).gen()
}

/// `exp(1 − 1/(1 − t²))` on `|t| < 1`, zero elsewhere.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// One continuum component of an oscillating family member.
#[derive(Clone, Debug, PartialEq)]
pub enum Component {
    /// `amp·1_{|x − c|_∞ < half}`.
    Indicator { center: Point, half: f64, amp: f64 },
    /// `amp·sin(freq·(x − c)·dir + phase)·bump(|x − c|/radius)`.
    Wave {
        center: Point,
        radius: f64,
        freq: f64,
        dir: Point,
        phase: f64,
        amp: f64,
    },
}

impl Component {
    pub fn eval(&self, n: usize, x: &Point) -> f64 {
        match self {
            Component::Indicator { center, half, amp } => {
                if (0..n).all(|a| (x[a] - center[a]).abs() < *half) {
                    *amp
                } else {
                    0.0
                }
            }
            Component::Wave {
                center,
                radius,
                freq,
                dir,
                phase,
                amp,
            } => {
                let r = (0..n).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                let proj: f64 = (0..n).map(|a| (x[a] - center[a]) * dir[a]).sum();
                amp * (freq * proj + phase).sin() * bump(r / radius)
            }
        }
    }
}

/// Continuum description of one family member.
#[derive(Clone, Debug, PartialEq)]
pub enum Member {
    Sum(Vec<Component>),
    Step {
        axis: usize,
        threshold: f64,
        amp: f64,
    },
    Polynomial {
        anchor: Point,
        scale: f64,
        terms: Vec<(MultiIndex, f64)>,
    },
    Constant(f64),
    Atom(AtomRecord),
}

/// Axis-wise center and half extent of the sampling domain.
fn geometry(w: &Window) -> (Point, f64) {
    (w.center(), w.min_side() / 2.0)
}

fn components(rng: &mut ChaCha8Rng, n: usize, center: Point, half: f64, smooth: bool) -> Vec<Component> {
    let count = rng.gen_range(1..=8);
    (0..count)
        .map(|_| {
            let mut c = center;
            for v in c.iter_mut().take(n) {
                *v += rng.gen_range(-0.6..0.6) * half;
            }
            let amp = rng.gen_range(-1.0..1.0);
            let width = rng.gen_range(0.08..0.4) * half;
            if !smooth && rng.gen_bool(0.5) {
                Component::Indicator {
                    center: c,
                    half: width,
                    amp,
                }
            } else {
                let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let dir = if n == 1 { [1.0, 0.0] } else { [theta.cos(), theta.sin()] };
                let freq = rng.gen_range(1.0..6.0) * std::f64::consts::PI / half;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                Component::Wave {
                    center: c,
                    radius: 1.5 * width,
                    freq,
                    dir,
                    phase,
                    amp,
                }
            }
        })
        .collect()
}

/// Continuum member `index` of `spec` over the domain of `w`.
pub fn member(spec: &FamilySpec, index: usize, w: &Window, params: &NormParams) -> Result<Member> {
    let n = w.n();
    let (center, half) = geometry(w);
    let mut rng = case_rng(spec.seed, index);
    Ok(match spec.kind {
        FamilyKind::RandomOsc => Member::Sum(components(&mut rng, n, center, half, false)),
        FamilyKind::SmoothOsc => Member::Sum(components(&mut rng, n, center, half, true)),
        FamilyKind::Step => Member::Step {
            axis: rng.gen_range(0..n),
            threshold: rng.gen_range(-0.5..0.5) * half,
            amp: rng.gen_range(0.5..2.0),
        },
        FamilyKind::Polynomial => {
            let terms = multi_indices(n, params.s)
                .into_iter()
                .map(|g| (g, rng.gen_range(-1.0..1.0)))
                .collect();
            Member::Polynomial {
                anchor: center,
                scale: half,
                terms,
            }
        }
        FamilyKind::Constant => Member::Constant(rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }),
        FamilyKind::Zero => Member::Constant(0.0),
        FamilyKind::Atom => {
            let cells = (w.cells()[0] / 4).max(params.s + 2);
            let side = cells as f64 * w.h();
            let support = Window::centered(n, center, side, cells)?;
            Member::Atom(make_atom(case_seed(spec.seed, index), &support, params)?)
        }
    })
}

impl Member {
    /// Sample on `w`; atoms are zero-extended.
    pub fn sample(&self, w: &Window) -> Result<GridFunction> {
        let n = w.n();
        Ok(match self {
            Member::Sum(parts) => GridFunction::from_fn(w.clone(), |x| parts.iter().map(|c| c.eval(n, x)).sum()),
            Member::Step { axis, threshold, amp } => {
                GridFunction::from_fn(w.clone(), |x| if x[*axis] >= *threshold { *amp } else { 0.0 })
            }
            Member::Polynomial { anchor, scale, terms } => GridFunction::from_fn(w.clone(), |x| {
                terms.iter().map(|(g, c)| c * g.eval(x, anchor, *scale)).sum()
            }),
            Member::Constant(c) => GridFunction::from_fn(w.clone(), |_| *c),
            Member::Atom(a) => a.values.transfer(w)?,
        })
    }
}

/// Member `index` sampled on `w`.
pub fn sample(spec: &FamilySpec, index: usize, w: &Window, params: &NormParams) -> Result<GridFunction> {
    member(spec, index, w, params)?.sample(w)
}
