//! Standard kernels, truncated and modified singular integral operators, and
//! vanishing-moment diagnostics.
//!
//! The principal value is realized by excluding every source cell whose
//! midpoint lies closer than `η = m·h` to the evaluation midpoint. Distances
//! are compared in integer lattice units, so the exclusion set is exactly
//! symmetric and odd kernels cancel exactly on symmetric data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dist, GridFunction, Point, Policy, Region, Window};
use crate::polyproj::{moment_projection_with, multi_indices, Frame, MultiIndex, Polynomial};
use crate::tol;

/// Built-in kernels and their combinations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `1/(x − y)` on the line.
    Hilbert,
    /// `(x_j − y_j)/|x − y|^{n+1}` with `j = axis`.
    Riesz { axis: usize },
    /// `(2 + sin x)/(x − y)` on the line.
    Perturbed,
    /// `exp(−|x − y|²/w²)`.
    SmoothBump { width: f64 },
    /// `K(y, x)`.
    Transpose { kernel: Box<KernelSpec> },
    /// `c·K(x, y)`.
    Scaled { factor: f64, kernel: Box<KernelSpec> },
    /// `Σ K_i(x, y)`.
    Sum { kernels: Vec<KernelSpec> },
}

/// Highest derivative order with closed-form evaluators for the Riesz kernels.
const RIESZ_MAX_ORDER: usize = 2;

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `∂^γ (u_j |u|^{−(n+1)})` for `|γ| ≤ 2`.
fn riesz_derivative(n: usize, j: usize, g: &MultiIndex, u: &Point) -> f64 {
    let m = (n + 1) as f64;
    let r2: f64 = (0..n).map(|a| u[a] * u[a]).sum();
    let r = r2.sqrt();
    let base = r.powf(-m);
    let comps = g.components();
    let mut axes = Vec::new();
    for (a, &c) in comps.iter().enumerate() {
        for _ in 0..c {
            axes.push(a);
        }
    }
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    match axes.as_slice() {
        [] => u[j] * base,
        [a] => d(*a, j) * base - m * u[j] * u[*a] * base / r2,
        [a, b] => {
            let (a, b) = (*a, *b);
            -m * (d(a, j) * u[b] + d(b, j) * u[a] + d(a, b) * u[j]) * base / r2
                + m * (m + 2.0) * u[j] * u[a] * u[b] * base / (r2 * r2)
        }
        _ => f64::NAN,
    }
}

/// Physicists' Hermite polynomial `H_k(t)`.
fn hermite(k: u32, t: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * t);
    if k == 0 {
        return h0;
    }
    for i in 1..k {
        let h2 = 2.0 * t * h1 - 2.0 * i as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn bump_derivative(n: usize, width: f64, g: &MultiIndex, u: &Point) -> f64 {
    (0..n)
        .map(|a| {
            let t = u[a] / width;
            let k = g.get(a);
            (-1.0 / width).powi(k as i32) * hermite(k, t) * (-t * t).exp()
        })
        .product()
}

impl KernelSpec {
    /// Kernel by name: `hilbert`, `riesz_1`, `riesz_2`, `perturbed`, `smooth_bump`.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "hilbert" => KernelSpec::Hilbert,
            "perturbed" => KernelSpec::Perturbed,
            "smooth_bump" => KernelSpec::SmoothBump { width: 1.0 },
            _ => match name.strip_prefix("riesz_").and_then(|j| j.parse::<usize>().ok()) {
                Some(j) if (1..=2).contains(&j) => KernelSpec::Riesz { axis: j - 1 },
                _ => return Err(Error::Config(format!("unknown kernel {name:?}"))),
            },
        })
    }

    /// Required dimension, if any.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            KernelSpec::Hilbert | KernelSpec::Perturbed => Some(1),
            KernelSpec::Riesz { .. } | KernelSpec::SmoothBump { .. } => None,
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.dimension(),
            KernelSpec::Sum { kernels } => kernels.iter().find_map(|k| k.dimension()),
        }
    }

    /// Hölder exponent of the regularity condition.
    pub fn delta(&self) -> f64 {
        match self {
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.delta(),
            KernelSpec::Sum { kernels } => kernels.iter().map(|k| k.delta()).fold(1.0, f64::min),
            _ => 1.0,
        }
    }

    /// Highest derivative order with closed-form evaluators.
    pub fn max_order(&self) -> usize {
        match self {
            KernelSpec::Riesz { .. } => RIESZ_MAX_ORDER,
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.max_order(),
            KernelSpec::Sum { kernels } => kernels.iter().map(|k| k.max_order()).min().unwrap_or(tol::MAX_DEGREE),
            _ => tol::MAX_DEGREE,
        }
    }

    pub fn convolution_type(&self) -> bool {
        match self {
            KernelSpec::Perturbed => false,
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.convolution_type(),
            KernelSpec::Sum { kernels } => kernels.iter().all(|k| k.convolution_type()),
            _ => true,
        }
    }

    /// `K(x, y) = −K(y, x)`.
    pub fn antisymmetric(&self) -> bool {
        match self {
            KernelSpec::Hilbert | KernelSpec::Riesz { .. } => true,
            KernelSpec::Perturbed | KernelSpec::SmoothBump { .. } => false,
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.antisymmetric(),
            KernelSpec::Sum { kernels } => kernels.iter().all(|k| k.antisymmetric()),
        }
    }

    /// Check the kernel can act on `n`-dimensional data with Taylor order `s`.
    pub fn check(&self, n: usize, s: usize) -> Result<()> {
        if let Some(d) = self.dimension() {
            if d != n {
                return Err(Error::Config(format!("kernel needs dimension {d}, window has {n}")));
            }
        }
        self.check_axes(n)?;
        if s > self.max_order() {
            return Err(Error::Config(format!(
                "missing derivative evaluators: order {s} requested, closed forms available up to {}",
                self.max_order()
            )));
        }
        Ok(())
    }

    fn check_axes(&self, n: usize) -> Result<()> {
        match self {
            KernelSpec::Riesz { axis } if *axis >= n => {
                Err(Error::Config(format!("riesz axis {} in dimension {n}", axis + 1)))
            }
            KernelSpec::SmoothBump { width } if !(*width > 0.0) => Err(Error::Config(format!("bump width {width}"))),
            KernelSpec::Transpose { kernel } | KernelSpec::Scaled { kernel, .. } => kernel.check_axes(n),
            KernelSpec::Sum { kernels } => kernels.iter().try_for_each(|k| k.check_axes(n)),
            _ => Ok(()),
        }
    }

    /// `K(x, y)` for `x ≠ y`.
    pub fn eval(&self, n: usize, x: &Point, y: &Point) -> f64 {
        match self {
            KernelSpec::Hilbert => 1.0 / (x[0] - y[0]),
            KernelSpec::Perturbed => (2.0 + x[0].sin()) / (x[0] - y[0]),
            KernelSpec::Riesz { axis } => {
                let u = [x[0] - y[0], x[1] - y[1]];
                if n == 1 {
                    1.0 / u[0]
                } else {
                    let r2 = u[0] * u[0] + u[1] * u[1];
                    u[*axis] / (r2 * r2.sqrt())
                }
            }
            KernelSpec::SmoothBump { width } => {
                let r2: f64 = (0..n).map(|a| (x[a] - y[a]).powi(2)).sum();
                (-r2 / (width * width)).exp()
            }
            KernelSpec::Transpose { kernel } => kernel.eval(n, y, x),
            KernelSpec::Scaled { factor, kernel } => factor * kernel.eval(n, x, y),
            KernelSpec::Sum { kernels } => kernels.iter().map(|k| k.eval(n, x, y)).sum(),
        }
    }

    /// `∂^γ_{(1)} K(x, y)`: derivative in the first variable.
    pub fn d1(&self, n: usize, g: &MultiIndex, x: &Point, y: &Point) -> f64 {
        let k = g.order();
        match self {
            KernelSpec::Hilbert => sign(k) * factorial(k) / (x[0] - y[0]).powi(k as i32 + 1),
            KernelSpec::Perturbed => {
                let u = x[0] - y[0];
                (0..=k)
                    .map(|i| {
                        let a = if i == 0 {
                            2.0 + x[0].sin()
                        } else {
                            (x[0] + i as f64 * std::f64::consts::FRAC_PI_2).sin()
                        };
                        let j = k - i;
                        binom(k, i) * a * sign(j) * factorial(j) / u.powi(j as i32 + 1)
                    })
                    .sum()
            }
            KernelSpec::Riesz { axis } => riesz_derivative(n, *axis, g, &[x[0] - y[0], x[1] - y[1]]),
            KernelSpec::SmoothBump { width } => bump_derivative(n, *width, g, &[x[0] - y[0], x[1] - y[1]]),
            KernelSpec::Transpose { kernel } => kernel.d2(n, g, y, x),
            KernelSpec::Scaled { factor, kernel } => factor * kernel.d1(n, g, x, y),
            KernelSpec::Sum { kernels } => kernels.iter().map(|kk| kk.d1(n, g, x, y)).sum(),
        }
    }

    /// `∂^γ_{(2)} K(x, y)`: derivative in the second variable.
    pub fn d2(&self, n: usize, g: &MultiIndex, x: &Point, y: &Point) -> f64 {
        let k = g.order();
        match self {
            KernelSpec::Hilbert => factorial(k) / (x[0] - y[0]).powi(k as i32 + 1),
            KernelSpec::Perturbed => (2.0 + x[0].sin()) * factorial(k) / (x[0] - y[0]).powi(k as i32 + 1),
            KernelSpec::Riesz { axis } => sign(k) * riesz_derivative(n, *axis, g, &[x[0] - y[0], x[1] - y[1]]),
            KernelSpec::SmoothBump { width } => sign(k) * bump_derivative(n, *width, g, &[x[0] - y[0], x[1] - y[1]]),
            KernelSpec::Transpose { kernel } => kernel.d1(n, g, y, x),
            KernelSpec::Scaled { factor, kernel } => factor * kernel.d2(n, g, x, y),
            KernelSpec::Sum { kernels } => kernels.iter().map(|kk| kk.d2(n, g, x, y)).sum(),
        }
    }
}

fn sign(k: u32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `K̃(x, y) = K(y, x)`.
pub fn kernel_transpose(k: &KernelSpec) -> KernelSpec {
    match k {
        KernelSpec::Transpose { kernel } => (**kernel).clone(),
        _ => KernelSpec::Transpose {
            kernel: Box::new(k.clone()),
        },
    }
}

/// Number of lattice cells in `η`, rejecting sub-cell or off-lattice radii.
pub fn eta_cells(eta: f64, h: f64) -> Result<u64> {
    let t = eta / h;
    let m = t.round();
    if !(t >= 1.0 - 1e-9) {
        return Err(Error::InvalidParams(format!("η = {eta} below the pitch h = {h}")));
    }
    if (t - m).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidParams(format!("η = {eta} is not a multiple of h = {h}")));
    }
    Ok(m as u64)
}

struct Source {
    k: [i64; 2],
    y: Point,
    weight: f64,
}

/// Nonzero cells of `f` in the lattice coordinates of `eval`, weighted by `hⁿ`.
fn sources(f: &GridFunction, eval: &Window) -> Result<Vec<Source>> {
    let off = eval.lattice_offset(&f.window)?;
    let hn = f.window.cell_volume();
    Ok(f.values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| {
            let c = f.window.coords(i);
            let k = [c[0] as i64 + off[0], c[1] as i64 + off[1]];
            Source {
                k,
                y: eval.lattice_midpoint(k),
                weight: v * hn,
            }
        })
        .collect())
}

/// `T_η f` at every midpoint of `eval` for each `η = m_i·h`, `m` decreasing.
fn truncated_ladder(k: &KernelSpec, f: &GridFunction, eval: &Window, ms: &[u64]) -> Result<Vec<Vec<f64>>> {
    let n = eval.n();
    k.check(n, 0)?;
    let src = sources(f, eval)?;
    let thresholds: Vec<i64> = ms.iter().map(|&m| (m * m) as i64).collect();
    let rungs = ms.len();
    let per_point: Vec<Vec<f64>> = (0..eval.len())
        .into_par_iter()
        .map(|i| {
            let c = eval.coords(i);
            let ke = [c[0] as i64, c[1] as i64];
            let x = eval.lattice_midpoint(ke);
            let mut acc = vec![0.0; rungs];
            for s in &src {
                let d0 = s.k[0] - ke[0];
                let d1 = s.k[1] - ke[1];
                let d2 = d0 * d0 + d1 * d1;
                if d2 < thresholds[rungs - 1] {
                    continue;
                }
                let v = k.eval(n, &x, &s.y) * s.weight;
                for (r, &t) in thresholds.iter().enumerate() {
                    if d2 >= t {
                        acc[r] += v;
                    }
                }
            }
            acc
        })
        .collect();
    Ok((0..rungs).map(|r| per_point.iter().map(|a| a[r]).collect()).collect())
}

/// `T_η f` on the midpoints of `eval`, with `f` zero-extended.
pub fn apply_truncated_on(k: &KernelSpec, f: &GridFunction, eta: f64, eval: &Window) -> Result<GridFunction> {
    let m = eta_cells(eta, f.window.h())?;
    let vals = truncated_ladder(k, f, eval, &[m])?.remove(0);
    GridFunction::new(eval.clone(), vals)
}

/// `T_η f` on the window of `f`.
pub fn apply_truncated(k: &KernelSpec, f: &GridFunction, eta: f64) -> Result<GridFunction> {
    apply_truncated_on(k, f, eta, &f.window)
}

/// Per-point values along the `η ∈ {4h, 2h, h}` ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub eta_ladder_values: [f64; 3],
    pub converged: bool,
}

/// Result of a principal-value evaluation with its Cauchy increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub eta: [f64; 3],
    /// Values at `η = h`.
    pub values: GridFunction,
    /// Values at `η = 4h` and `η = 2h`.
    pub coarse: [GridFunction; 2],
    /// `max |T_{2h} − T_{4h}|` and `max |T_h − T_{2h}|`.
    pub increments: [f64; 2],
    pub tolerance: f64,
    pub converged: bool,
    /// Increments grew along the ladder.
    pub diverging: bool,
}

impl CzReport {
    pub fn point_records(&self) -> Vec<PointRecord> {
        let w = &self.values.window;
        (0..w.len())
            .map(|i| {
                let l = [
                    self.coarse[0].values[i],
                    self.coarse[1].values[i],
                    self.values.values[i],
                ];
                let inc = (l[2] - l[1]).abs();
                PointRecord {
                    point: w.midpoint(i)[..w.n()].to_vec(),
                    eta_ladder_values: l,
                    converged: inc <= self.tolerance,
                }
            })
            .collect()
    }

    fn shift_all(&mut self, p: &GridFunction) -> Result<()> {
        self.values = self.values.axpy(-1.0, p)?;
        for c in &mut self.coarse {
            *c = c.axpy(-1.0, p)?;
        }
        Ok(())
    }
}

/// Principal-value operator on the midpoints of `eval`, evaluated along the
/// ladder `η ∈ {4h, 2h, h}`. `tol` defaults to `1e−3·‖f‖_∞`.
pub fn apply_cz_on(k: &KernelSpec, f: &GridFunction, eval: &Window, tol: Option<f64>) -> Result<CzReport> {
    let h = f.window.h();
    let mut l = truncated_ladder(k, f, eval, &[4, 2, 1])?;
    let maxdiff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let increments = [maxdiff(&l[1], &l[0]), maxdiff(&l[2], &l[1])];
    let tolerance = tol.unwrap_or(tol::CZ_INCREMENT_REL * f.sup_abs());
    let fine = l.pop().expect("three rungs");
    let mid = l.pop().expect("three rungs");
    let coarse = l.pop().expect("three rungs");
    Ok(CzReport {
        eta: [4.0 * h, 2.0 * h, h],
        values: GridFunction::new(eval.clone(), fine)?,
        coarse: [
            GridFunction::new(eval.clone(), coarse)?,
            GridFunction::new(eval.clone(), mid)?,
        ],
        increments,
        tolerance,
        converged: increments[1] <= tolerance,
        diverging: increments[1] > 1.5 * increments[0] + f64::EPSILON * f.sup_abs(),
    })
}

/// [`apply_cz_on`] on the window of `f`.
pub fn apply_cz(k: &KernelSpec, f: &GridFunction) -> Result<CzReport> {
    apply_cz_on(k, f, &f.window, None)
}

/// Base ball `B₀ = B(x₀, r₀)` and Taylor order of the kernel correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSpec {
    pub center: Point,
    pub radius: f64,
    pub s: usize,
}

impl CorrectionSpec {
    pub fn new(center: Point, radius: f64, s: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParams(format!("base ball radius {radius}")));
        }
        Ok(Self { center, radius, s })
    }

    pub fn ball(&self) -> Region {
        Region::ball(self.center, self.radius)
    }
}

/// `Σ_{|γ|≤s} (x − x₀)^γ/γ! ∫_{ℝⁿ∖B₀} ∂^γ_{(1)}K(x₀, y) f(y) dy` as a polynomial.
pub fn taylor_correction(k: &KernelSpec, corr: &CorrectionSpec, f: &GridFunction) -> Result<Polynomial> {
    let w = &f.window;
    let n = w.n();
    k.check(n, corr.s)?;
    let ball = corr.ball();
    let basis = multi_indices(n, corr.s);
    let hn = w.cell_volume();
    let mut coeffs = vec![0.0; basis.len()];
    for (i, &v) in f.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let y = w.midpoint(i);
        if ball.contains(n, &y) {
            continue;
        }
        for (c, g) in coeffs.iter_mut().zip(&basis) {
            *c += k.d1(n, g, &corr.center, &y) / g.factorial() * v * hn;
        }
    }
    Polynomial::new(
        n,
        corr.s,
        Frame {
            anchor: corr.center,
            scale: 1.0,
        },
        coeffs,
    )
}

/// Central cube of a window: centered at the window center, half its shortest side.
pub fn reference_cube(w: &Window) -> Region {
    Region::cube(w.center(), w.min_side() / 2.0)
}

/// Modified operator output: raw ladder and the canonical representative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModifiedReport {
    pub cz: CzReport,
    pub correction: Polynomial,
    pub reference: Region,
    /// Raw values minus their projection on the reference cube.
    pub canonical: GridFunction,
}

/// `T̃_{B₀} f` with kernel `k` on the midpoints of `eval`.
pub fn apply_modified_on(
    k: &KernelSpec,
    corr: &CorrectionSpec,
    f: &GridFunction,
    eval: &Window,
    tol: Option<f64>,
) -> Result<ModifiedReport> {
    let correction = taylor_correction(k, corr, f)?;
    let mut cz = apply_cz_on(k, f, eval, tol)?;
    cz.shift_all(&correction.sample(eval))?;
    let reference = reference_cube(eval);
    let p = moment_projection_with(&cz.values, &reference, corr.s, Policy::Restrict)?;
    let canonical = cz.values.axpy(-1.0, &p.sample(eval))?;
    Ok(ModifiedReport {
        cz,
        correction,
        reference,
        canonical,
    })
}

/// [`apply_modified_on`] on the window of `f`.
pub fn apply_modified(k: &KernelSpec, corr: &CorrectionSpec, f: &GridFunction) -> Result<ModifiedReport> {
    apply_modified_on(k, corr, f, &f.window, None)
}

/// `‖g − P_E g‖_{L²(E)} / max(‖g‖_{L²(E)}, scale·|E|^{1/2})`.
pub fn poly_distance(g: &GridFunction, region: &Region, s: usize, scale: f64) -> Result<f64> {
    let (resid, norm, measure) = poly_residual(g, region, s)?;
    let denom = norm.max(scale * measure.sqrt());
    Ok(if denom > 0.0 { resid / denom } else { 0.0 })
}

/// `(‖g − P_E g‖_{L²(E)}, ‖g‖_{L²(E)}, |E|)`.
fn poly_residual(g: &GridFunction, region: &Region, s: usize) -> Result<(f64, f64, f64)> {
    let w = &g.window;
    let p = moment_projection_with(g, region, s, Policy::Restrict)?;
    let sel = w.select(region, Policy::Restrict);
    let hn = w.cell_volume();
    let (mut r2, mut g2) = (0.0, 0.0);
    for &i in &sel.cells {
        let v = g.values[i];
        let r = v - p.eval(&w.midpoint(i));
        r2 += r * r;
        g2 += v * v;
    }
    Ok(((r2 * hn).sqrt(), (g2 * hn).sqrt(), sel.cells.len() as f64 * hn))
}

/// Window sharing `inner`'s lattice, about `factor` times larger per axis and
/// centered on it.
pub fn padded_window(inner: &Window, factor: usize) -> Result<Window> {
    if factor == 0 {
        return Err(Error::InvalidParams("padding factor must be positive".into()));
    }
    let n = inner.n();
    let h = inner.h();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    for a in 0..n {
        let c = inner.cells()[a];
        let extra = (factor - 1) * c / 2;
        let total = factor * c;
        let lo = inner.lower()[a] - extra as f64 * h;
        lower.push(lo);
        upper.push(lo + total as f64 * h);
        cells.push(total);
    }
    Window::new(&lower, &upper, &cells)
}

/// `T̃_{B₀}(((y − anchor)/scale)^ν)` on `eval`, with the integral truncated to
/// the padded window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialReport {
    pub values: GridFunction,
    /// `2·g(2P) − g(P)`: first-order extrapolation to infinite padding under
    /// the `1/L` decay of the truncated tail.
    pub extrapolated: GridFunction,
    pub padding: usize,
    /// Distance from `P_s` of the change under doubling the padding, relative
    /// to the result.
    pub sensitivity: f64,
    pub truncation_warning: bool,
}

fn modified_monomial_raw(
    k: &KernelSpec,
    corr: &CorrectionSpec,
    nu: &MultiIndex,
    frame: Frame,
    eval: &Window,
    padding: usize,
) -> Result<GridFunction> {
    let big = padded_window(eval, padding)?;
    let src = GridFunction::from_fn(big, |y| nu.eval(y, &frame.anchor, frame.scale));
    let correction = taylor_correction(k, corr, &src)?;
    let t = apply_truncated_on(k, &src, eval.h(), eval)?;
    t.axpy(-1.0, &correction.sample(eval))
}

/// Modified operator on a monomial, with a padding-doubling sensitivity check.
/// `scale` sets the floor of the relative distances (see [`poly_distance`]).
pub fn modified_on_monomial(
    k: &KernelSpec,
    corr: &CorrectionSpec,
    nu: &MultiIndex,
    frame: Frame,
    eval: &Window,
    padding: usize,
    scale: f64,
    sensitivity_tol: f64,
) -> Result<MonomialReport> {
    if nu.order() as usize > corr.s {
        return Err(Error::InvalidParams(format!(
            "|ν| = {} exceeds s = {}",
            nu.order(),
            corr.s
        )));
    }
    if padding < 4 {
        return Err(Error::InvalidParams(format!("padding factor {padding} below 4")));
    }
    let g = modified_monomial_raw(k, corr, nu, frame, eval, padding)?;
    let g2 = modified_monomial_raw(k, corr, nu, frame, eval, 2 * padding)?;
    let diff = g.axpy(-1.0, &g2)?;
    let whole = Region::cube(eval.center(), eval.min_side());
    let (resid, _, measure) = poly_residual(&diff, &whole, corr.s)?;
    let (_, norm, _) = poly_residual(&g, &whole, corr.s)?;
    let denom = norm.max(scale * measure.sqrt());
    let sensitivity = if denom > 0.0 { resid / denom } else { 0.0 };
    let extrapolated = g.axpy(-2.0, &diff)?;
    Ok(MonomialReport {
        values: g,
        extrapolated,
        padding,
        sensitivity,
        truncation_warning: sensitivity > sensitivity_tol,
    })
}

/// One atom's moment diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDefect {
    pub gamma: MultiIndex,
    /// `∫_W T(a) ((x − c)/ℓ)^γ dx / ‖a‖₁`.
    pub defect: f64,
    /// Same with the dual form `∫ a·T̃(((y − c)/ℓ)^γ)`.
    pub dual: f64,
    /// `|defect − dual|`.
    pub mismatch: f64,
}

/// Moment defects over a set of atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub padding: usize,
    pub defect: f64,
    pub mismatch: f64,
    pub rows: Vec<AtomDefect>,
    pub truncation_warning: bool,
}

/// Inputs of [`vanishing_moment_defect`] for one atom: values and support cube.
pub struct AtomRef<'a> {
    pub values: &'a GridFunction,
    pub support: Region,
}

/// `max |∫_W T(a)(x) ((x − c)/ℓ)^γ dx| / ‖a‖₁` over atoms and `|γ| ≤ s`, with
/// `W` the support cube of `a` dilated by `padding`. Also evaluates the dual
/// form `∫ a·T̃_{B₀}(((y − c)/ℓ)^γ)` with `B₀` the ball around the support.
pub fn vanishing_moment_defect(
    k: &KernelSpec,
    s: usize,
    atoms: &[AtomRef<'_>],
    padding: usize,
) -> Result<DefectReport> {
    if padding < 4 {
        return Err(Error::InvalidParams(format!("padding factor {padding} below 4")));
    }
    let kt = kernel_transpose(k);
    let mut rows = Vec::new();
    for atom in atoms {
        let a = atom.values;
        let n = a.window.n();
        k.check(n, s)?;
        let c = atom.support.center();
        let ell = atom.support.size();
        let core = a.window.select(&atom.support, Policy::Restrict);
        let lower: Vec<f64> = (0..n).map(|d| c[d] - ell / 2.0).collect();
        let upper: Vec<f64> = (0..n).map(|d| c[d] + ell / 2.0).collect();
        let m = (ell / a.window.h()).round() as usize;
        let support_window = Window::new(&lower, &upper, &vec![m; n])?;
        let a_local = a.transfer(&support_window)?;
        if (a_local.l1() - a.l1()).abs() > 1e-12 * a.l1() || core.count() != support_window.len() {
            return Err(Error::InvalidParams(
                "atom values extend beyond its support cube".into(),
            ));
        }
        let eval = padded_window(&support_window, padding)?;
        let ta = apply_truncated_on(k, &a_local, a.window.h(), &eval)?;
        let corr = CorrectionSpec::new(c, ell, s)?;
        let l1 = a_local.l1();
        let hn = eval.cell_volume();
        for g in multi_indices(n, s) {
            let direct: f64 = (0..eval.len())
                .map(|i| ta.values[i] * g.eval(&eval.midpoint(i), &c, ell) * hn)
                .sum();
            let src = GridFunction::from_fn(eval.clone(), |y| g.eval(y, &c, ell));
            let tt = apply_truncated_on(&kt, &src, a.window.h(), &support_window)?;
            let correction = taylor_correction(&kt, &corr, &src)?;
            let dual: f64 = (0..support_window.len())
                .map(|i| {
                    let y = support_window.midpoint(i);
                    a_local.values[i] * (tt.values[i] - correction.eval(&y)) * hn
                })
                .sum();
            rows.push(AtomDefect {
                gamma: g,
                defect: direct.abs() / l1,
                dual: dual.abs() / l1,
                mismatch: (direct - dual).abs() / l1,
            });
        }
    }
    let defect = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
    let mismatch = rows.iter().map(|r| r.mismatch).fold(0.0, f64::max);
    Ok(DefectReport {
        padding,
        defect,
        mismatch,
        rows,
        truncation_warning: false,
    })
}

/// Empirical standard-kernel constants on one sample pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub distance: f64,
    pub size: f64,
    pub regularity: f64,
}

/// Empirical size and regularity constants of a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `sup |∂^γ K|·|x − y|^{n+|γ|}` for each order `|γ| = 0..=s`.
    pub size: Vec<f64>,
    /// `sup |∂^γK(x, y) − ∂^γK(x, z)|·|x − y|^{n+|γ|+δ}/|y − z|^δ` over
    /// `|x − y| ≥ 2|y − z|`, in either slot.
    pub regularity: f64,
    pub samples: Vec<KernelSample>,
}

/// Seeded sample pairs at distance at least `min_sep` in the cube `[−extent, extent]ⁿ`.
pub fn sample_pairs(n: usize, count: usize, extent: f64, min_sep: f64, seed: u64) -> Vec<(Point, Point)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut x = [0.0; 2];
        let mut y = [0.0; 2];
        for a in 0..n {
            x[a] = rng.gen_range(-extent..extent);
            y[a] = rng.gen_range(-extent..extent);
        }
        if dist(n, &x, &y) >= min_sep {
            out.push((x, y));
        }
    }
    out
}

/// Size and regularity constants on the given pairs, with the third point of
/// each regularity triple placed at `|y − z| ∈ {1/2, 1/4, 1/16}·|x − y|`.
pub fn standard_kernel_check(k: &KernelSpec, n: usize, s: usize, pairs: &[(Point, Point)]) -> Result<KernelConstants> {
    k.check(n, s)?;
    let delta = k.delta();
    let orders = multi_indices(n, s);
    let mut size = vec![0.0f64; s + 1];
    let mut regularity = 0.0f64;
    let mut samples = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let d = dist(n, x, y);
        if !(d > 0.0) {
            continue;
        }
        let mut local_size = 0.0f64;
        let mut local_reg = 0.0f64;
        for g in &orders {
            let o = g.order() as i32;
            let w = d.powi(n as i32 + o);
            let v = k.d1(n, g, x, y).abs().max(k.d2(n, g, x, y).abs()) * w;
            size[o as usize] = size[o as usize].max(v);
            local_size = local_size.max(v);
            for frac in [0.5, 0.25, 0.0625] {
                let t = frac * d;
                let mut dirs = vec![[1.0, 0.0]];
                if n == 2 {
                    dirs.push([0.0, 1.0]);
                    dirs.push([std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2]);
                }
                for e in dirs {
                    let z = [y[0] + t * e[0], y[1] + t * e[1]];
                    let zx = [x[0] + t * e[0], x[1] + t * e[1]];
                    let q2 = (k.d2(n, g, x, y) - k.d2(n, g, x, &z)).abs();
                    let q1 = (k.d1(n, g, x, y) - k.d1(n, g, &zx, y)).abs();
                    let q = q1.max(q2) * d.powf(n as f64 + o as f64 + delta) / t.powf(delta);
                    local_reg = local_reg.max(q);
                }
            }
        }
        regularity = regularity.max(local_reg);
        samples.push(KernelSample {
            distance: d,
            size: local_size,
            regularity: local_reg,
        });
    }
    Ok(KernelConstants {
        size,
        regularity,
        samples,
    })
}
