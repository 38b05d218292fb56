//! Norm functionals on grid functions.
//!
//! The congruent-cube norms take a supremum over side lengths `ℓ` of an
//! `ℓ^p`-aggregate over pairwise disjoint cubes of side `ℓ`. The search runs
//! over cell-aligned cubes: side lengths `m·h` from a configurable set and, at
//! each side, either the maximal tiling for every offset or (in 1-D) the exact
//! best packing at cell resolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dist, q_mean, GridFunction, Point, Policy, Region, Window};
use crate::polyproj::{moment_projection_with, poly_dim, Frame, Projector};
use crate::tol;

/// Serde helper writing `∞` as the string `"inf"`.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

/// `1/p` with `1/∞ = 0`.
pub fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Conjugate exponent `p'` with `1/p + 1/p' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn fmt_exp(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// Exponents `(p, q, s, α)` of the JN, Campanato and Riesz–Morrey scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    #[serde(with = "exponent")]
    pub p: f64,
    #[serde(with = "exponent")]
    pub q: f64,
    pub s: usize,
    pub alpha: f64,
}

impl NormParams {
    pub fn new(p: f64, q: f64, s: usize, alpha: f64) -> Result<Self> {
        let np = Self { p, q, s, alpha };
        np.validate()?;
        Ok(np)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if v.is_nan() || v < 1.0 {
                return Err(Error::InvalidExponent(format!("{name} = {v} (need {name} ≥ 1)")));
            }
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha = {}", self.alpha)));
        }
        if self.s > tol::MAX_DEGREE {
            return Err(Error::InvalidParams(format!(
                "s = {} exceeds {}",
                self.s,
                tol::MAX_DEGREE
            )));
        }
        Ok(())
    }

    /// Violations of the hypotheses for boundedness of modified operators on
    /// JN spaces: `q ∈ (1,∞)` and `α < (s+δ)/n`.
    pub fn jn_boundedness_violations(&self, n: usize, delta: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.q > 1.0 && self.q.is_finite()) {
            v.push(format!("q = {} not in (1, ∞)", fmt_exp(self.q)));
        }
        let top = (self.s as f64 + delta) / n as f64;
        if self.alpha >= top {
            v.push(format!("alpha = {} not below (s+δ)/n = {top}", self.alpha));
        }
        v
    }

    /// Violations of `1/q − 1/p < α < (s+δ)/n`, the Hardy-type boundedness range.
    pub fn hardy_boundedness_violations(&self, n: usize, delta: f64) -> Vec<String> {
        let mut v = Vec::new();
        let bottom = recip(self.q) - recip(self.p);
        let top = (self.s as f64 + delta) / n as f64;
        if self.alpha <= bottom {
            v.push(format!("alpha = {} not above 1/q − 1/p = {bottom}", self.alpha));
        }
        if self.alpha >= top {
            v.push(format!("alpha = {} not below (s+δ)/n = {top}", self.alpha));
        }
        v
    }
}

/// Which side lengths the congruent-cube search visits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "cells")]
pub enum SideSet {
    /// `m = 2^k` cells.
    Dyadic,
    /// Every `m ≥ 1`.
    All,
    /// Explicit side lengths in cells.
    Cells(Vec<usize>),
}

/// Search space of the congruent-cube norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub sides: SideSet,
    /// Minimal number of cells in a cube.
    pub min_cells: usize,
    /// Offset step, in cells.
    pub offset_stride: usize,
    /// Replace the per-offset maximal tilings by the exact best packing
    /// (one-dimensional windows only).
    pub packing: bool,
    pub policy: Policy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            sides: SideSet::Dyadic,
            min_cells: 4,
            offset_stride: 1,
            packing: false,
            policy: Policy::Restrict,
        }
    }
}

impl SearchConfig {
    /// Every side length and every cell-aligned placement.
    pub fn full() -> Self {
        Self {
            sides: SideSet::All,
            min_cells: 1,
            offset_stride: 1,
            packing: true,
            policy: Policy::Restrict,
        }
    }

    /// Admissible side lengths in cells for a window and degree.
    pub fn side_cells(&self, w: &Window, s: usize) -> Vec<usize> {
        let n = w.n();
        let max = *w.cells().iter().max().expect("non-empty");
        let limit = match self.policy {
            Policy::Restrict => *w.cells().iter().min().expect("non-empty"),
            Policy::ZeroExtend => max,
        };
        let need = self.min_cells.max(poly_dim(n, s)).max(1);
        let ok = |m: usize| m >= 1 && m <= limit && m.pow(n as u32) >= need;
        let mut v: Vec<usize> = match &self.sides {
            SideSet::Dyadic => (0..usize::BITS)
                .map(|k| 1usize << k)
                .take_while(|&m| m <= limit)
                .filter(|&m| ok(m))
                .collect(),
            SideSet::All => (1..=limit).filter(|&m| ok(m)).collect(),
            SideSet::Cells(c) => c.iter().copied().filter(|&m| ok(m)).collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Cell-aligned cube given by its first lattice cell and side in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCube {
    pub start: [i64; 2],
    pub side_cells: usize,
}

impl CellCube {
    pub fn region(&self, w: &Window) -> Region {
        let h = w.h();
        let mut c = [0.0; 2];
        for (a, ca) in c.iter_mut().enumerate().take(w.n()) {
            *ca = w.lower()[a] + (self.start[a] as f64 + self.side_cells as f64 / 2.0) * h;
        }
        Region::cube(c, self.side_cells as f64 * h)
    }
}

/// Where a supremum was attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Maximizer {
    /// A congruent collection of cubes; `offset` is set for a maximal tiling.
    Cubes {
        side: f64,
        side_cells: usize,
        offset: Option<[usize; 2]>,
        cubes: Vec<CellCube>,
    },
    /// All balls of one radius centered at cell midpoints.
    Balls { radius: f64 },
}

/// How much of the window the reported maximizer covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub policy: Policy,
    /// Fraction of window cells covered by the maximizing collection.
    pub covered_fraction: f64,
    /// Number of `(side, offset)` or radius items evaluated.
    pub items_searched: usize,
}

/// Norm value with its maximizer and per-piece contributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm: String,
    pub params: NormParams,
    pub value: f64,
    pub maximizer: Maximizer,
    /// `|Q|·v(Q)^p` per cube (or `v^p hⁿ` per ball center) for `p < ∞`; the raw
    /// per-piece value `v` for `p = ∞`.
    pub contributions: Vec<f64>,
    pub truncation: Truncation,
}

impl NormReport {
    pub fn csv_header() -> [&'static str; 10] {
        [
            "norm_name",
            "p",
            "q",
            "s",
            "alpha",
            "value",
            "argmax_side",
            "argmax_offset",
            "grid_cells",
            "policy",
        ]
    }

    pub fn csv_row(&self, grid_cells: usize) -> Vec<String> {
        let (side, offset) = match &self.maximizer {
            Maximizer::Cubes {
                side, offset, cubes, ..
            } => {
                let off = match offset {
                    Some(o) => format!("{}:{}", o[0], o[1]),
                    None if cubes.is_empty() => "none".into(),
                    None => "packing".into(),
                };
                (format!("{side}"), off)
            }
            Maximizer::Balls { radius } => (format!("{radius}"), "balls".into()),
        };
        vec![
            self.norm.clone(),
            fmt_exp(self.params.p),
            fmt_exp(self.params.q),
            self.params.s.to_string(),
            format!("{}", self.params.alpha),
            format!("{:e}", self.value),
            side,
            offset,
            grid_cells.to_string(),
            self.truncation.policy.as_str().into(),
        ]
    }
}

/// Which per-cube quantity a congruent-cube norm aggregates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// `|Q|^{−α}(⨍|f − P_Q f|^q)^{1/q}`.
    MeanOscillation,
    /// `|Q|^{−α−1/q}‖f‖_{L^q(Q)}`.
    Mass,
}

impl Functional {
    fn name(self, ball: bool) -> &'static str {
        match (self, ball) {
            (Functional::MeanOscillation, false) => "jn_con",
            (Functional::Mass, false) => "rm_con",
            (Functional::MeanOscillation, true) => "jn_ball",
            (Functional::Mass, true) => "rm_ball",
        }
    }
}

/// Per-piece value `v` from the values on the piece.
fn piece_value(
    func: Functional,
    params: &NormParams,
    values: &[f64],
    measure: f64,
    proj: Option<&Projector>,
) -> Result<f64> {
    let inner = match func {
        Functional::MeanOscillation => {
            let r = proj.expect("oscillation needs a projector").residual(values);
            q_mean(&r, params.q)?
        }
        Functional::Mass => q_mean(values, params.q)?,
    };
    Ok(measure.powf(-params.alpha) * inner)
}

fn aggregate_term(params: &NormParams, v: f64, weight: f64) -> f64 {
    if params.p.is_infinite() {
        v
    } else {
        weight * v.powf(params.p)
    }
}

fn finish(params: &NormParams, terms: &[f64]) -> f64 {
    if params.p.is_infinite() {
        terms.iter().fold(0.0, |a: f64, &b| a.max(b))
    } else {
        terms.iter().sum::<f64>().powf(1.0 / params.p)
    }
}

/// Shape data for cubes of one side length.
struct CubeShape {
    m: usize,
    proj: Option<Projector>,
    measure: f64,
}

impl CubeShape {
    fn new(w: &Window, m: usize, func: Functional, s: usize) -> Result<Self> {
        let n = w.n();
        let h = w.h();
        let half = m as f64 * h / 2.0;
        let proj = match func {
            Functional::MeanOscillation => {
                let mut pts = Vec::with_capacity(m.pow(n as u32));
                for i in 0..m {
                    if n == 1 {
                        pts.push([(i as f64 + 0.5) * h - half, 0.0]);
                    } else {
                        for j in 0..m {
                            pts.push([(i as f64 + 0.5) * h - half, (j as f64 + 0.5) * h - half]);
                        }
                    }
                }
                let frame = Frame {
                    anchor: [0.0; 2],
                    scale: half,
                };
                Some(Projector::new(
                    n,
                    s,
                    &pts,
                    frame,
                    w.cell_volume(),
                    &format!("cube of {m} cells"),
                )?)
            }
            Functional::Mass => None,
        };
        Ok(Self {
            m,
            proj,
            measure: (m as f64 * h).powi(n as i32),
        })
    }

    fn values(&self, f: &GridFunction, start: [i64; 2]) -> Vec<f64> {
        let w = &f.window;
        let m = self.m as i64;
        let mut v = Vec::with_capacity(self.m.pow(w.n() as u32));
        let r1 = if w.n() == 2 { m } else { 1 };
        for i in 0..m {
            for j in 0..r1 {
                let k = [start[0] + i, start[1] + j];
                v.push(w.checked_index(k).map_or(0.0, |idx| f.values[idx]));
            }
        }
        v
    }

    fn value(&self, f: &GridFunction, func: Functional, params: &NormParams, start: [i64; 2]) -> Result<f64> {
        piece_value(func, params, &self.values(f, start), self.measure, self.proj.as_ref())
    }
}

/// Cube starts along one axis congruent to `offset` modulo `m`.
fn axis_starts(len: usize, m: usize, offset: usize, policy: Policy) -> Vec<i64> {
    let (len, m, offset) = (len as i64, m as i64, offset as i64);
    match policy {
        Policy::Restrict => (0..).map(|t| offset + t * m).take_while(|&s| s + m <= len).collect(),
        Policy::ZeroExtend => {
            let first = if offset == 0 { 0 } else { offset - m };
            (0..).map(|t| first + t * m).take_while(|&s| s < len).collect()
        }
    }
}

/// Every cube start (at unit stride) along one axis.
fn all_starts(len: usize, m: usize, policy: Policy) -> Vec<i64> {
    let (len, m) = (len as i64, m as i64);
    match policy {
        Policy::Restrict => (0..=len - m).collect(),
        Policy::ZeroExtend => (1 - m..len).collect(),
    }
}

struct Candidate {
    value: f64,
    m: usize,
    offset: Option<[usize; 2]>,
    cubes: Vec<CellCube>,
    contributions: Vec<f64>,
}

fn tiling_candidate(
    f: &GridFunction,
    shape: &CubeShape,
    func: Functional,
    params: &NormParams,
    offset: [usize; 2],
    policy: Policy,
) -> Result<Candidate> {
    let w = &f.window;
    let m = shape.m;
    let s0 = axis_starts(w.cells()[0], m, offset[0], policy);
    let s1 = if w.n() == 2 {
        axis_starts(w.cells()[1], m, offset[1], policy)
    } else {
        vec![0]
    };
    let mut cubes = Vec::new();
    let mut terms = Vec::new();
    for &a in &s0 {
        for &b in &s1 {
            let start = [a, b];
            let v = shape.value(f, func, params, start)?;
            cubes.push(CellCube { start, side_cells: m });
            terms.push(aggregate_term(params, v, shape.measure));
        }
    }
    Ok(Candidate {
        value: finish(params, &terms),
        m,
        offset: Some(offset),
        cubes,
        contributions: terms,
    })
}

/// Exact best packing of cubes of `m` cells in a 1-D window by dynamic
/// programming over start positions.
fn packing_candidate(
    f: &GridFunction,
    shape: &CubeShape,
    func: Functional,
    params: &NormParams,
    policy: Policy,
) -> Result<Candidate> {
    let w = &f.window;
    let m = shape.m;
    let starts = all_starts(w.cells()[0], m, policy);
    let first = starts[0];
    let weights: Vec<f64> = starts
        .iter()
        .map(|&a| {
            shape
                .value(f, func, params, [a, 0])
                .map(|v| aggregate_term(params, v, shape.measure))
        })
        .collect::<Result<_>>()?;
    let k = weights.len();
    // best[i]: optimal sum over cubes starting at index ≥ i.
    let mut best = vec![0.0; k + m + 1];
    let mut take = vec![false; k];
    for i in (0..k).rev() {
        let with = weights[i] + best[i + m];
        if with >= best[i + 1] {
            best[i] = with;
            take[i] = true;
        } else {
            best[i] = best[i + 1];
        }
    }
    let mut cubes = Vec::new();
    let mut contributions = Vec::new();
    let mut i = 0;
    while i < k {
        if take[i] {
            cubes.push(CellCube {
                start: [first + i as i64, 0],
                side_cells: m,
            });
            contributions.push(weights[i]);
            i += m;
        } else {
            i += 1;
        }
    }
    Ok(Candidate {
        value: best[0].powf(1.0 / params.p),
        m,
        offset: None,
        cubes,
        contributions,
    })
}

fn congruent_norm(
    f: &GridFunction,
    params: &NormParams,
    search: &SearchConfig,
    func: Functional,
) -> Result<NormReport> {
    params.validate()?;
    let w = &f.window;
    let n = w.n();
    if search.offset_stride == 0 {
        return Err(Error::InvalidParams("offset stride must be positive".into()));
    }
    let sides = search.side_cells(w, params.s);
    if sides.is_empty() {
        return Err(Error::NoAdmissibleCube);
    }
    let packing = search.packing && !params.p.is_infinite();
    if packing && n != 1 {
        return Err(Error::InvalidParams("exact packing search is one-dimensional".into()));
    }
    let shapes: Vec<CubeShape> = sides
        .iter()
        .map(|&m| CubeShape::new(w, m, func, params.s))
        .collect::<Result<_>>()?;
    let mut items: Vec<(usize, [usize; 2])> = Vec::new();
    for (si, sh) in shapes.iter().enumerate() {
        if packing {
            items.push((si, [0, 0]));
            continue;
        }
        let offs: Vec<usize> = (0..sh.m).step_by(search.offset_stride).collect();
        let offs1 = if n == 2 { offs.clone() } else { vec![0] };
        for &a in &offs {
            for &b in &offs1 {
                items.push((si, [a, b]));
            }
        }
    }
    let candidates: Vec<Candidate> = items
        .par_iter()
        .map(|&(si, off)| {
            if packing {
                packing_candidate(f, &shapes[si], func, params, search.policy)
            } else {
                tiling_candidate(f, &shapes[si], func, params, off, search.policy)
            }
        })
        .collect::<Result<_>>()?;
    let mut best: Option<Candidate> = None;
    for c in candidates {
        if c.cubes.is_empty() {
            continue;
        }
        if best.as_ref().map_or(true, |b| c.value > b.value) {
            best = Some(c);
        }
    }
    let best = best.ok_or(Error::NoAdmissibleCube)?;
    let covered: usize = best.cubes.len() * best.m.pow(n as u32);
    let (cubes, contributions) = if params.p.is_infinite() {
        // Keep only the attaining cube.
        let (k, _) =
            best.contributions.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) },
            );
        (vec![best.cubes[k]], vec![best.contributions[k]])
    } else {
        (best.cubes, best.contributions)
    };
    let covered = if params.p.is_infinite() {
        best.m.pow(n as u32)
    } else {
        covered
    };
    Ok(NormReport {
        norm: func.name(false).into(),
        params: *params,
        value: best.value,
        maximizer: Maximizer::Cubes {
            side: best.m as f64 * w.h(),
            side_cells: best.m,
            offset: best.offset,
            cubes,
        },
        contributions,
        truncation: Truncation {
            policy: search.policy,
            covered_fraction: covered as f64 / w.len() as f64,
            items_searched: items.len(),
        },
    })
}

/// `‖f‖_{JN^con_{(p,q,s)_α}}` on the window (Campanato norm for `p = ∞`).
pub fn jn_con_norm(f: &GridFunction, params: &NormParams, search: &SearchConfig) -> Result<NormReport> {
    congruent_norm(f, params, search, Functional::MeanOscillation)
}

/// `‖f‖_{RM^con_{p,q,α}}` on the window.
pub fn rm_con_norm(f: &GridFunction, params: &NormParams, search: &SearchConfig) -> Result<NormReport> {
    congruent_norm(f, params, search, Functional::Mass)
}

/// Recompute a report's value from its stored maximizer, projecting on each
/// piece afresh.
pub fn recompute(f: &GridFunction, report: &NormReport) -> Result<f64> {
    let params = &report.params;
    let w = &f.window;
    let func = if report.norm.starts_with("jn") {
        Functional::MeanOscillation
    } else {
        Functional::Mass
    };
    match &report.maximizer {
        Maximizer::Cubes { cubes, .. } => {
            let mut terms = Vec::new();
            for c in cubes {
                let reg = c.region(w);
                let v = region_value(f, &reg, func, params, report.truncation.policy)?;
                terms.push(aggregate_term(
                    params,
                    v,
                    (c.side_cells as f64 * w.h()).powi(w.n() as i32),
                ));
            }
            Ok(finish(params, &terms))
        }
        Maximizer::Balls { radius } => ball_value(f, params, *radius, func, report.truncation.policy).map(|(v, _)| v),
    }
}

/// Per-piece value on an arbitrary region via a fresh projection.
fn region_value(f: &GridFunction, reg: &Region, func: Functional, params: &NormParams, policy: Policy) -> Result<f64> {
    let w = &f.window;
    let sel = w.select(reg, policy);
    let vals = sel.values(f);
    let measure = sel.count() as f64 * w.cell_volume();
    let inner = match func {
        Functional::MeanOscillation => {
            let p = moment_projection_with(f, reg, params.s, policy)?;
            let pts = sel.points(w);
            let r: Vec<f64> = vals.iter().zip(&pts).map(|(v, x)| v - p.eval(x)).collect();
            q_mean(&r, params.q)?
        }
        Functional::Mass => q_mean(&vals, params.q)?,
    };
    Ok(measure.powf(-params.alpha) * inner)
}

/// Exhaustive maximum over every collection of disjoint congruent cell-aligned
/// cubes in a 1-D window of at most 16 cells.
pub fn jn_partition_oracle(f: &GridFunction, params: &NormParams) -> Result<f64> {
    params.validate()?;
    let w = &f.window;
    if w.n() != 1 || w.len() > tol::ORACLE_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "oracle needs a 1-D window of at most {} cells, got {} cells in {} dimensions",
            tol::ORACLE_MAX_CELLS,
            w.len(),
            w.n()
        )));
    }
    if params.p.is_infinite() || params.q.is_infinite() {
        return Err(Error::InvalidParams("oracle needs finite p and q".into()));
    }
    let len = w.len();
    let h = w.h();
    let mut best = 0.0f64;
    for m in poly_dim(1, params.s).max(1)..=len {
        // Contribution of the cube starting at each cell.
        let mut weight = vec![0.0; len - m + 1];
        for (a, wt) in weight.iter_mut().enumerate() {
            let reg = Region::cube([w.lower()[0] + (a as f64 + m as f64 / 2.0) * h, 0.0], m as f64 * h);
            let p = moment_projection_with(f, &reg, params.s, Policy::Restrict)?;
            let osc: f64 = (a..a + m)
                .map(|i| (f.values[i] - p.eval(&w.midpoint(i))).abs().powf(params.q))
                .sum::<f64>()
                / m as f64;
            let size = m as f64 * h;
            *wt = size * (size.powf(-params.alpha) * osc.powf(1.0 / params.q)).powf(params.p);
        }
        // Enumerate every packing: at each cell either skip it or open a cube.
        fn walk(i: usize, m: usize, weight: &[f64], acc: f64, best: &mut f64) {
            if i >= weight.len() {
                *best = best.max(acc);
                return;
            }
            walk(i + 1, m, weight, acc, best);
            walk(i + m, m, weight, acc + weight[i], best);
        }
        let mut local = 0.0;
        walk(0, m, &weight, 0.0, &mut local);
        best = best.max(local.powf(1.0 / params.p));
    }
    Ok(best)
}

/// Scale against which "numerically zero" norm values are judged:
/// `‖f‖_∞ · max_Q |Q|^{−α} · |W|^{1/p}`.
pub fn norm_scale(f: &GridFunction, params: &NormParams, search: &SearchConfig) -> f64 {
    let w = &f.window;
    let sides = search.side_cells(w, params.s);
    let weight = sides
        .iter()
        .map(|&m| (m as f64 * w.h()).powi(w.n() as i32).powf(-params.alpha))
        .fold(0.0, f64::max);
    f.sup_abs() * weight * w.measure().powf(recip(params.p))
}

fn ball_value(
    f: &GridFunction,
    params: &NormParams,
    radius: f64,
    func: Functional,
    policy: Policy,
) -> Result<(f64, Vec<f64>)> {
    let w = &f.window;
    let hn = w.cell_volume();
    let terms: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let reg = Region::ball(w.midpoint(i), radius);
            region_value(f, &reg, func, params, policy).map(|v| aggregate_term(params, v, hn))
        })
        .collect::<Result<_>>()?;
    Ok((finish(params, &terms), terms))
}

fn ball_seminorm(f: &GridFunction, params: &NormParams, radii: &[f64], func: Functional) -> Result<NormReport> {
    params.validate()?;
    let w = &f.window;
    if radii.is_empty() {
        return Err(Error::InvalidParams("empty radius set".into()));
    }
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &r in radii {
        if !(r > 2.0 * w.h()) {
            return Err(Error::InvalidParams(format!(
                "radius {r} must exceed 2h = {}",
                2.0 * w.h()
            )));
        }
        let (v, terms) = ball_value(f, params, r, func, Policy::Restrict)?;
        if best.as_ref().map_or(true, |b| v > b.0) {
            best = Some((v, r, terms));
        }
    }
    let (value, radius, contributions) = best.expect("non-empty radii");
    Ok(NormReport {
        norm: func.name(true).into(),
        params: *params,
        value,
        maximizer: Maximizer::Balls { radius },
        contributions,
        truncation: Truncation {
            policy: Policy::Restrict,
            covered_fraction: 1.0,
            items_searched: radii.len(),
        },
    })
}

/// `sup_r [Σ_y (|B|^{−α}(⨍_B |f − P_B f|^q)^{1/q})^p hⁿ]^{1/p}` over balls
/// `B = B(y, r)` centered at cell midpoints and clipped to the window.
pub fn jn_ball_seminorm(f: &GridFunction, params: &NormParams, radii: &[f64]) -> Result<NormReport> {
    ball_seminorm(f, params, radii, Functional::MeanOscillation)
}

/// Ball analogue of the Riesz–Morrey norm.
pub fn rm_ball_seminorm(f: &GridFunction, params: &NormParams, radii: &[f64]) -> Result<NormReport> {
    ball_seminorm(f, params, radii, Functional::Mass)
}

/// Dyadic radii `h·2^k` with `2h < r ≤ max_radius`.
pub fn dyadic_radii(w: &Window, max_radius: f64) -> Vec<f64> {
    (2..40)
        .map(|k| w.h() * 2f64.powi(k))
        .filter(|&r| r > 2.0 * w.h() * (1.0 + 1e-12) && r <= max_radius * (1.0 + 1e-12))
        .collect()
}

/// `{Σ_y [⨍_{B(y,r)} |f|^q]^{p/q} hⁿ}^{1/p}`.
pub fn amalgam_norm(f: &GridFunction, p: f64, q: f64, r: f64) -> Result<f64> {
    let params = NormParams::new(p, q, 0, 0.0)?;
    if p.is_infinite() || q.is_infinite() {
        return Err(Error::InvalidExponent("amalgam norm needs finite p and q".into()));
    }
    if !(r > 2.0 * f.window.h()) {
        return Err(Error::InvalidParams(format!("radius {r} must exceed 2h")));
    }
    ball_value(f, &params, r, Functional::Mass, Policy::Restrict).map(|(v, _)| v)
}

/// Outcome of the tail-integral estimate around one ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostic {
    /// `∫_{W \ B} |f − P_B f| / |x − y|^{n+β}`.
    pub lhs: f64,
    /// `r^{−n/p − β + αn} ‖f‖_JN`.
    pub bound: f64,
    pub ratio: f64,
    pub jn_norm: f64,
}

/// Tail integral of `f − P_B f` against `|x − y|^{−n−β}` outside `B(x, r)`,
/// compared with `r^{−n/p−β+αn}‖f‖_JN`.
pub fn tail_integral_check(
    f: &GridFunction,
    center: Point,
    r: f64,
    beta: f64,
    params: &NormParams,
    search: &SearchConfig,
) -> Result<TailDiagnostic> {
    params.validate()?;
    let w = &f.window;
    let n = w.n() as f64;
    if !(beta > params.s as f64) {
        return Err(Error::InvalidParams(format!(
            "need β > s, got β = {beta}, s = {}",
            params.s
        )));
    }
    if !(params.alpha < recip(params.p) + beta / n) {
        return Err(Error::InvalidParams(format!(
            "need α < 1/p + β/n, got α = {}, 1/p + β/n = {}",
            params.alpha,
            recip(params.p) + beta / n
        )));
    }
    let ball = Region::ball(center, r);
    let p = moment_projection_with(f, &ball, params.s, Policy::Restrict)?;
    let hn = w.cell_volume();
    let lhs: f64 = (0..w.len())
        .filter_map(|i| {
            let y = w.midpoint(i);
            let d = dist(w.n(), &center, &y);
            (d >= r).then(|| (f.values[i] - p.eval(&y)).abs() / d.powf(n + beta) * hn)
        })
        .sum();
    let jn = jn_con_norm(f, params, search)?.value;
    let bound = r.powf(-n * recip(params.p) - beta + params.alpha * n) * jn;
    Ok(TailDiagnostic {
        lhs,
        bound,
        ratio: if bound > 0.0 { lhs / bound } else { 0.0 },
        jn_norm: jn,
    })
}

/// One row of a dyadic growth comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub k: u32,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// `(⨍_{Q_z(2^k r)} |f − P_{Q_z(r)} f|^v)^{1/v}` against
/// `k(2^{ks} + 2^{nk(α−1/u)}) r^{n(α−1/u)} ‖f‖_{JN(u,v,s,α)}` for `k = 1..=k_max`.
pub fn dyadic_growth(
    f: &GridFunction,
    z: Point,
    r: f64,
    k_max: u32,
    params: &NormParams,
    search: &SearchConfig,
) -> Result<Vec<GrowthRow>> {
    params.validate()?;
    let w = &f.window;
    let n = w.n() as f64;
    let (u, v, s, alpha) = (params.p, params.q, params.s, params.alpha);
    let core = Region::cube(z, r);
    let p = moment_projection_with(f, &core, s, Policy::Restrict)?;
    let jn = jn_con_norm(f, params, search)?.value;
    let mut rows = Vec::new();
    for k in 1..=k_max {
        let big = Region::cube(z, r * 2f64.powi(k as i32));
        let sel = w.select(&big, Policy::Restrict);
        let res: Vec<f64> = sel
            .cells
            .iter()
            .map(|&i| f.values[i] - p.eval(&w.midpoint(i)))
            .collect();
        let lhs = q_mean(&res, v)?;
        let e = alpha - recip(u);
        let kf = k as f64;
        let bound = kf * (2f64.powf(kf * s as f64) + 2f64.powf(n * kf * e)) * r.powf(n * e) * jn;
        rows.push(GrowthRow {
            k,
            lhs,
            bound,
            ratio: if bound > 0.0 { lhs / bound } else { 0.0 },
        });
    }
    Ok(rows)
}

/// Both sides of `Σ θ^k (⨍_{2^kB}|f − P_B f|^q)^{1/q} ≲ Σ θ^k (⨍_{2^kB}|f − P_{2^kB} f|^q)^{1/q}`
/// for `k = 1..=k_max`.
pub fn dyadic_sum_check(
    f: &GridFunction,
    ball: &Region,
    s: usize,
    q: f64,
    theta: f64,
    k_max: u32,
) -> Result<(f64, f64)> {
    let Region::Ball { center, radius } = *ball else {
        return Err(Error::InvalidParams("dyadic sums are taken over balls".into()));
    };
    if !(theta > 0.0 && theta < 2f64.powi(-(s as i32))) {
        return Err(Error::InvalidParams(format!("θ = {theta} outside (0, 2^-s)")));
    }
    let w = &f.window;
    let pb = moment_projection_with(f, ball, s, Policy::Restrict)?;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 1..=k_max {
        let big = Region::ball(center, radius * 2f64.powi(k as i32));
        let pk = moment_projection_with(f, &big, s, Policy::Restrict)?;
        let sel = w.select(&big, Policy::Restrict);
        let pts: Vec<Point> = sel.cells.iter().map(|&i| w.midpoint(i)).collect();
        let a: Vec<f64> = sel
            .cells
            .iter()
            .zip(&pts)
            .map(|(&i, x)| f.values[i] - pb.eval(x))
            .collect();
        let b: Vec<f64> = sel
            .cells
            .iter()
            .zip(&pts)
            .map(|(&i, x)| f.values[i] - pk.eval(x))
            .collect();
        let t = theta.powi(k as i32);
        lhs += t * q_mean(&a, q)?;
        rhs += t * q_mean(&b, q)?;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step4() -> GridFunction {
        let w = Window::interval(0.0, 1.0, 4).unwrap();
        GridFunction::from_fn(w, |x| if x[0] < 0.5 { 1.0 } else { 0.0 })
    }

    #[test]
    fn step_function_norm_and_oracle() {
        let f = step4();
        let params = NormParams::new(1.0, 1.0, 0, 0.0).unwrap();
        let full = jn_con_norm(&f, &params, &SearchConfig::full()).unwrap();
        assert!((full.value - 0.5).abs() < 1e-12);
        match &full.maximizer {
            Maximizer::Cubes { side, .. } => assert_eq!(*side, 1.0),
            _ => panic!("expected cubes"),
        }
        let oracle = jn_partition_oracle(&f, &params).unwrap();
        assert!((oracle - 0.5).abs() < 1e-12);
        assert!((recompute(&f, &full).unwrap() - full.value).abs() < 1e-12);
    }

    #[test]
    fn constants_have_zero_oscillation() {
        let w = Window::interval(0.0, 2.0, 32).unwrap();
        let f = GridFunction::from_fn(w, |_| 3.5);
        let params = NormParams::new(2.0, 2.0, 0, 0.1).unwrap();
        assert!(jn_con_norm(&f, &params, &SearchConfig::default()).unwrap().value < 1e-10);
    }

    #[test]
    fn riesz_morrey_examples() {
        let w = Window::interval(0.0, 1.0, 16).unwrap();
        let one = GridFunction::from_fn(w.clone(), |_| 1.0);
        let r = rm_con_norm(
            &one,
            &NormParams::new(f64::INFINITY, 2.0, 0, -0.5).unwrap(),
            &SearchConfig::default(),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let step = GridFunction::from_fn(w, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        let r = rm_con_norm(
            &step,
            &NormParams::new(f64::INFINITY, 1.0, 0, -1.0).unwrap(),
            &SearchConfig::default(),
        )
        .unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tiling_can_lose_to_mixed_packing() {
        // Cubes [0,2) and [3,5) oscillate; no single offset contains both.
        let w = Window::interval(0.0, 6.0, 6).unwrap();
        let f = GridFunction::new(w, vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let params = NormParams::new(1.0, 1.0, 0, 0.0).unwrap();
        let only2 = |packing| SearchConfig {
            sides: SideSet::Cells(vec![2]),
            min_cells: 1,
            offset_stride: 1,
            packing,
            policy: Policy::Restrict,
        };
        let tiled = jn_con_norm(&f, &params, &only2(false)).unwrap().value;
        let packed = jn_con_norm(&f, &params, &only2(true)).unwrap().value;
        assert!((tiled - 1.0).abs() < 1e-12);
        assert!((packed - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_or_infinite() {
        let w = Window::interval(0.0, 1.0, 32).unwrap();
        let f = GridFunction::zeros(w);
        assert!(matches!(
            jn_partition_oracle(&f, &NormParams::new(1.0, 1.0, 0, 0.0).unwrap()),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn tail_integral_closed_form() {
        let w = Window::interval(-4.0, 4.0, 4096).unwrap();
        let f = GridFunction::from_fn(w, |x| if (2.0..3.0).contains(&x[0]) { 1.0 } else { 0.0 });
        let params = NormParams::new(2.0, 2.0, 0, 0.0).unwrap();
        let d = tail_integral_check(&f, [0.0, 0.0], 1.0, 1.0, &params, &SearchConfig::default()).unwrap();
        assert!((d.lhs - 1.0 / 6.0).abs() < 0.02 / 6.0);
        assert!(tail_integral_check(&f, [0.0, 0.0], 1.0, 0.0, &params, &SearchConfig::default()).is_err());
    }

    #[test]
    fn amalgam_of_one() {
        let w = Window::interval(0.0, 1.0, 256).unwrap();
        let f = GridFunction::from_fn(w, |_| 1.0);
        assert!((amalgam_norm(&f, 2.0, 2.0, 0.05).unwrap() - 1.0).abs() < 0.05);
        assert!(amalgam_norm(&f, 2.0, 2.0, 0.001).is_err());
    }

    #[test]
    fn exponent_serde() {
        let p = NormParams::new(f64::INFINITY, 2.0, 1, 0.25).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"p":"inf","q":2.0,"s":1,"alpha":0.25}"#);
        assert_eq!(serde_json::from_str::<NormParams>(&s).unwrap(), p);
    }

    #[test]
    fn admissibility_reports() {
        let p = NormParams::new(2.0, 2.0, 0, 0.25).unwrap();
        assert!(p.hardy_boundedness_violations(1, 1.0).is_empty());
        assert_eq!(
            NormParams::new(2.0, 2.0, 0, -0.1)
                .unwrap()
                .hardy_boundedness_violations(1, 1.0)
                .len(),
            1
        );
        assert_eq!(
            NormParams::new(2.0, f64::INFINITY, 0, 2.0)
                .unwrap()
                .jn_boundedness_violations(1, 1.0)
                .len(),
            2
        );
    }
}
