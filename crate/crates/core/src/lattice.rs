//! Uniform lattices on rectangular windows, sampled functions, regions and
//! midpoint quadrature.
//!
//! Cells are indexed row-major with axis 0 slowest. A cell belongs to a region
//! when its midpoint does; region measure is the cell count times `hⁿ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// A point of ℝⁿ for `n ≤ 2`; the second coordinate is unused when `n = 1`.
pub type Point = [f64; 2];

/// Euclidean distance in the first `n` coordinates.
pub fn dist(n: usize, a: &Point, b: &Point) -> f64 {
    if n == 1 {
        (a[0] - b[0]).abs()
    } else {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// How integrals treat the part of a region lying outside the window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Clip regions to the window.
    #[default]
    Restrict,
    /// Treat the function as zero outside the window; region measure counts
    /// lattice cells beyond the window too.
    ZeroExtend,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Restrict => "restrict",
            Policy::ZeroExtend => "zero-extend",
        }
    }
}

/// A rectangular window `[lower, upper)` split into congruent square cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    n: usize,
    lower: Point,
    upper: Point,
    cells: [usize; 2],
    h: f64,
}

impl Window {
    pub fn new(lower: &[f64], upper: &[f64], cells: &[usize]) -> Result<Self> {
        let n = cells.len();
        if !(1..=2).contains(&n) || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidWindow(format!(
                "dimension must be 1 or 2 with matching corners, got {} / {} / {}",
                lower.len(),
                upper.len(),
                n
            )));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut c = [1usize; 2];
        let mut pitches = [0.0; 2];
        for k in 0..n {
            if !(lower[k].is_finite() && upper[k].is_finite()) || upper[k] <= lower[k] {
                return Err(Error::InvalidWindow(format!(
                    "axis {k}: need finite lower < upper, got [{}, {})",
                    lower[k], upper[k]
                )));
            }
            if cells[k] < 2 {
                return Err(Error::InvalidWindow(format!(
                    "axis {k}: need at least 2 cells, got {}",
                    cells[k]
                )));
            }
            lo[k] = lower[k];
            hi[k] = upper[k];
            c[k] = cells[k];
            pitches[k] = (upper[k] - lower[k]) / cells[k] as f64;
        }
        if n == 2 && (pitches[0] - pitches[1]).abs() > tol::PITCH_REL * pitches[0].abs() {
            return Err(Error::InvalidWindow(format!(
                "pitch differs across axes: {} vs {}",
                pitches[0], pitches[1]
            )));
        }
        Ok(Self {
            n,
            lower: lo,
            upper: hi,
            cells: c,
            h: pitches[0],
        })
    }

    /// One-dimensional window `[a, b)` with `cells` cells.
    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(&[a], &[b], &[cells])
    }

    /// Square window `[lower, lower + side)²` with `cells × cells` cells.
    pub fn square(lower: [f64; 2], side: f64, cells: usize) -> Result<Self> {
        Self::new(&lower, &[lower[0] + side, lower[1] + side], &[cells, cells])
    }

    /// Cube window of the given dimension centered at `center`.
    pub fn centered(n: usize, center: Point, side: f64, cells: usize) -> Result<Self> {
        let lower: Vec<f64> = (0..n).map(|k| center[k] - side / 2.0).collect();
        let upper: Vec<f64> = (0..n).map(|k| center[k] + side / 2.0).collect();
        Self::new(&lower, &upper, &vec![cells; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.n]
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.n]
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.n]
    }
    pub fn len(&self) -> usize {
        self.cells[0] * if self.n == 2 { self.cells[1] } else { 1 }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Volume `hⁿ` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }
    pub fn measure(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }
    pub fn center(&self) -> Point {
        let mut c = [0.0; 2];
        for k in 0..self.n {
            c[k] = 0.5 * (self.lower[k] + self.upper[k]);
        }
        c
    }
    /// Smallest side length over the axes.
    pub fn min_side(&self) -> f64 {
        (0..self.n)
            .map(|k| self.upper[k] - self.lower[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Flat index of the cell with axis coordinates `k`.
    pub fn index(&self, k: [usize; 2]) -> usize {
        if self.n == 1 {
            k[0]
        } else {
            k[0] * self.cells[1] + k[1]
        }
    }

    /// Axis coordinates of a flat index.
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        if self.n == 1 {
            [idx, 0]
        } else {
            [idx / self.cells[1], idx % self.cells[1]]
        }
    }

    /// Midpoint of the lattice cell with (possibly out-of-window) coordinates `k`.
    pub fn lattice_midpoint(&self, k: [i64; 2]) -> Point {
        let mut p = [0.0; 2];
        for a in 0..self.n {
            p[a] = self.lower[a] + (k[a] as f64 + 0.5) * self.h;
        }
        p
    }

    pub fn midpoint(&self, idx: usize) -> Point {
        let k = self.coords(idx);
        self.lattice_midpoint([k[0] as i64, k[1] as i64])
    }

    /// All cell midpoints in flat-index order.
    pub fn midpoints(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.midpoint(i)).collect()
    }

    /// Lattice coordinates of `other`'s first cell inside `self`'s lattice,
    /// provided both windows share pitch and alignment.
    pub fn lattice_offset(&self, other: &Window) -> Result<[i64; 2]> {
        if self.n != other.n {
            return Err(Error::Resample(format!("dimension {} vs {}", self.n, other.n)));
        }
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return Err(Error::Resample(format!("pitch {} vs {}", self.h, other.h)));
        }
        let mut off = [0i64; 2];
        for a in 0..self.n {
            let t = (other.lower[a] - self.lower[a]) / self.h;
            let r = t.round();
            if (t - r).abs() > 1e-7 {
                return Err(Error::Resample(format!("axis {a}: lattices are offset by {t} cells")));
            }
            off[a] = r as i64;
        }
        Ok(off)
    }

    /// Flat index of lattice coordinates, if inside the window.
    pub fn checked_index(&self, k: [i64; 2]) -> Option<usize> {
        for a in 0..self.n {
            if k[a] < 0 || k[a] >= self.cells[a] as i64 {
                return None;
            }
        }
        Some(self.index([k[0] as usize, k[1] as usize]))
    }

    /// Cells of `region` under `policy`.
    pub fn select(&self, region: &Region, policy: Policy) -> Selection {
        let (lo, hi) = region.bounding_box();
        let mut range = [(0i64, 0i64); 2];
        for a in 0..self.n {
            let kmin = ((lo[a] - self.lower[a]) / self.h - 0.5).floor() as i64 - 1;
            let kmax = ((hi[a] - self.lower[a]) / self.h - 0.5).ceil() as i64 + 1;
            range[a] = match policy {
                Policy::Restrict => (kmin.max(0), kmax.min(self.cells[a] as i64 - 1)),
                Policy::ZeroExtend => (kmin, kmax),
            };
        }
        let mut sel = Selection::default();
        let (r1lo, r1hi) = if self.n == 2 { range[1] } else { (0, 0) };
        for k0 in range[0].0..=range[0].1 {
            for k1 in r1lo..=r1hi {
                let k = [k0, k1];
                let p = self.lattice_midpoint(k);
                if !region.contains(self.n, &p) {
                    continue;
                }
                match self.checked_index(k) {
                    Some(i) => sel.cells.push(i),
                    None => sel.outside.push(p),
                }
            }
        }
        sel
    }
}

#[derive(Serialize, Deserialize)]
struct WindowSpec {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
}

impl Serialize for Window {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WindowSpec {
            n: self.n,
            lower: self.lower().to_vec(),
            upper: self.upper().to_vec(),
            cells: self.cells().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = WindowSpec::deserialize(d)?;
        if w.n != w.cells.len() {
            return Err(serde::de::Error::custom("n does not match cells"));
        }
        Window::new(&w.lower, &w.upper, &w.cells).map_err(serde::de::Error::custom)
    }
}

/// Cells picked out by a region: in-window flat indices, plus the midpoints of
/// lattice cells beyond the window when zero-extension is active.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    pub cells: Vec<usize>,
    pub outside: Vec<Point>,
}

impl Selection {
    pub fn count(&self) -> usize {
        self.cells.len() + self.outside.len()
    }
    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
    /// Midpoints of all selected cells, in-window ones first.
    pub fn points(&self, w: &Window) -> Vec<Point> {
        self.cells
            .iter()
            .map(|&i| w.midpoint(i))
            .chain(self.outside.iter().copied())
            .collect()
    }
    /// Values aligned with [`Selection::points`]; zero beyond the window.
    pub fn values(&self, f: &GridFunction) -> Vec<f64> {
        self.cells
            .iter()
            .map(|&i| f.values[i])
            .chain(std::iter::repeat(0.0).take(self.outside.len()))
            .collect()
    }
}

/// Integration domains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    /// `Q_z(r) = Π [z_i − r/2, z_i + r/2)`.
    Cube { center: Point, side: f64 },
    /// `B(x, r) = {y : |y − x| < r}`.
    Ball { center: Point, radius: f64 },
    /// `Q_z(2^j r) \ Q_z(2^{j−1} r)` with `j ≥ 1`.
    Annulus { center: Point, side: f64, level: u32 },
    /// `2Q \ Q` for `Q = Q_z(r)`.
    Shell { center: Point, side: f64 },
}

fn in_cube(n: usize, center: &Point, side: f64, x: &Point) -> bool {
    (0..n).all(|a| {
        let lo = center[a] - side / 2.0;
        x[a] >= lo && x[a] < lo + side
    })
}

impl Region {
    pub fn cube(center: Point, side: f64) -> Self {
        Region::Cube { center, side }
    }
    pub fn ball(center: Point, radius: f64) -> Self {
        Region::Ball { center, radius }
    }
    pub fn shell(center: Point, side: f64) -> Self {
        Region::Shell { center, side }
    }

    pub fn center(&self) -> Point {
        match *self {
            Region::Cube { center, .. }
            | Region::Ball { center, .. }
            | Region::Annulus { center, .. }
            | Region::Shell { center, .. } => center,
        }
    }

    /// Half the outer extent: the scale used to normalize monomials.
    pub fn half_size(&self) -> f64 {
        match *self {
            Region::Cube { side, .. } => side / 2.0,
            Region::Ball { radius, .. } => radius,
            Region::Annulus { side, level, .. } => side * 2f64.powi(level as i32) / 2.0,
            Region::Shell { side, .. } => side,
        }
    }

    /// Outer extent (side of the enclosing cube, or the ball diameter).
    pub fn size(&self) -> f64 {
        2.0 * self.half_size()
    }

    pub fn contains(&self, n: usize, x: &Point) -> bool {
        match *self {
            Region::Cube { center, side } => in_cube(n, &center, side, x),
            Region::Ball { center, radius } => dist(n, &center, x) < radius,
            Region::Annulus { center, side, level } => {
                let outer = side * 2f64.powi(level as i32);
                in_cube(n, &center, outer, x) && !in_cube(n, &center, outer / 2.0, x)
            }
            Region::Shell { center, side } => in_cube(n, &center, 2.0 * side, x) && !in_cube(n, &center, side, x),
        }
    }

    fn bounding_box(&self) -> (Point, Point) {
        let c = self.center();
        let h = self.half_size();
        ([c[0] - h, c[1] - h], [c[0] + h, c[1] + h])
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Region::Cube { side, .. } | Region::Shell { side, .. } => side > 0.0,
            Region::Ball { radius, .. } => radius > 0.0,
            Region::Annulus { side, level, .. } => side > 0.0 && level >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("degenerate region {self:?}")))
        }
    }
}

/// `Q_z(2^j r) \ Q_z(2^{j−1} r)` for `j ≥ 1`; level 0 is the core cube `Q_z(r)`.
pub fn annulus(z: Point, r: f64, j: u32) -> Result<Region> {
    let reg = if j == 0 {
        Region::Cube { center: z, side: r }
    } else {
        Region::Annulus {
            center: z,
            side: r,
            level: j,
        }
    };
    reg.validate()?;
    Ok(reg)
}

/// A real function sampled at the cell midpoints of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub window: Window,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                window.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at cell {i}")));
        }
        Ok(Self { window, values })
    }

    pub fn zeros(window: Window) -> Self {
        let values = vec![0.0; window.len()];
        Self { window, values }
    }

    pub fn from_fn(window: Window, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..window.len()).map(|i| f(&window.midpoint(i))).collect();
        Self { window, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            window: self.window.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c·other` on a shared window.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<Self> {
        if self.window != other.window {
            return Err(Error::Resample("axpy needs identical windows".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self {
            window: self.window.clone(),
            values,
        })
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ |f|` over the whole window.
    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.window.cell_volume()
    }

    /// `(∫ |f|²)^{1/2}` over the whole window.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.window.cell_volume()).sqrt()
    }

    /// Copy onto another window of the same lattice; cells not covered by
    /// `self` become zero.
    pub fn transfer(&self, target: &Window) -> Result<Self> {
        let off = self.window.lattice_offset(target)?;
        let mut out = GridFunction::zeros(target.clone());
        for (i, v) in out.values.iter_mut().enumerate() {
            let k = target.coords(i);
            let src = [k[0] as i64 + off[0], k[1] as i64 + off[1]];
            if let Some(j) = self.window.checked_index(src) {
                *v = self.values[j];
            }
        }
        Ok(out)
    }

    /// Midpoint rule over the cells of `region` inside the window.
    pub fn integrate(&self, region: &Region) -> f64 {
        self.integrate_diag(region).0
    }

    /// Midpoint rule plus an empty-region flag.
    pub fn integrate_diag(&self, region: &Region) -> (f64, bool) {
        let sel = self.window.select(region, Policy::Restrict);
        let s: f64 = sel.cells.iter().map(|&i| self.values[i]).sum();
        (s * self.window.cell_volume(), sel.is_empty())
    }

    /// Discrete measure of `region`.
    pub fn measure(&self, region: &Region, policy: Policy) -> f64 {
        self.window.select(region, policy).count() as f64 * self.window.cell_volume()
    }

    pub fn average(&self, region: &Region) -> Result<f64> {
        self.average_with(region, Policy::Restrict)
    }

    pub fn average_with(&self, region: &Region, policy: Policy) -> Result<f64> {
        let sel = self.window.select(region, policy);
        if sel.is_empty() {
            return Err(Error::EmptyRegion(format!("{region:?}")));
        }
        let s: f64 = sel.cells.iter().map(|&i| self.values[i]).sum();
        Ok(s / sel.count() as f64)
    }

    pub fn lq_norm(&self, region: &Region, q: f64) -> Result<f64> {
        let sel = self.window.select(region, Policy::Restrict);
        let v: Vec<f64> = sel.cells.iter().map(|&i| self.values[i]).collect();
        lq_of(&v, q, self.window.cell_volume())
    }
}

/// `(Σ |v|^q · w)^{1/q}`, or `max |v|` for `q = ∞`.
pub fn lq_of(values: &[f64], q: f64, weight: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent(format!("q = {q} (need q ≥ 1)")));
    }
    if q.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = if q == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if q == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(q)).sum()
    };
    Ok((s * weight).powf(1.0 / q))
}

/// `(⨍ |v|^q)^{1/q}`, or `max |v|` for `q = ∞`.
pub fn q_mean(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyRegion("q-mean of no cells".into()));
    }
    lq_of(values, q, 1.0 / values.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    values: Vec<f64>,
}

impl Serialize for GridFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFile {
            n: self.window.n(),
            lower: self.window.lower().to_vec(),
            upper: self.window.upper().to_vec(),
            cells: self.window.cells().to_vec(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let g = GridFile::deserialize(d)?;
        if g.n != g.cells.len() {
            return Err(serde::de::Error::custom("n does not match cells"));
        }
        let w = Window::new(&g.lower, &g.upper, &g.cells).map_err(serde::de::Error::custom)?;
        GridFunction::new(w, g.values).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_integrals() {
        let w = Window::interval(0.0, 1.0, 64).unwrap();
        let one = GridFunction::from_fn(w.clone(), |_| 1.0);
        assert!((one.integrate(&Region::cube([0.5, 0.0], 1.0)) - 1.0).abs() <= w.h());
        let x = GridFunction::from_fn(w.clone(), |p| p[0]);
        assert!((x.integrate(&Region::cube([0.5, 0.0], 1.0)) - 0.5).abs() < 1e-3);
        let zero = GridFunction::zeros(w);
        assert_eq!(zero.integrate(&Region::ball([0.3, 0.0], 0.2)), 0.0);
    }

    #[test]
    fn disjoint_region_flags_empty() {
        let w = Window::interval(0.0, 1.0, 8).unwrap();
        let f = GridFunction::from_fn(w, |_| 1.0);
        let (v, empty) = f.integrate_diag(&Region::cube([5.0, 0.0], 1.0));
        assert_eq!(v, 0.0);
        assert!(empty);
        assert!(f.average(&Region::cube([5.0, 0.0], 1.0)).is_err());
    }

    #[test]
    fn step_average_and_norm() {
        let w = Window::interval(0.0, 1.0, 16).unwrap();
        let f = GridFunction::from_fn(w, |p| if p[0] < 0.5 { 1.0 } else { 0.0 });
        let whole = Region::cube([0.5, 0.0], 1.0);
        assert_eq!(f.average(&whole).unwrap(), 0.5);
        assert!((f.lq_norm(&whole, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.lq_norm(&whole, f64::INFINITY).unwrap(), 1.0);
        assert!(f.lq_norm(&whole, 0.5).is_err());
    }

    #[test]
    fn odd_function_has_zero_average() {
        let w = Window::interval(-1.0, 1.0, 32).unwrap();
        let f = GridFunction::from_fn(w.clone(), |p| p[0]);
        assert!(f.average(&Region::cube([0.0, 0.0], 2.0)).unwrap().abs() <= w.h());
    }

    #[test]
    fn annulus_membership_and_level_zero() {
        let a = annulus([0.0, 0.0], 1.0, 1).unwrap();
        assert!(a.contains(1, &[0.75, 0.0]));
        assert!(!a.contains(1, &[0.25, 0.0]));
        assert!(!a.contains(1, &[1.0, 0.0]));
        assert!(a.contains(1, &[-1.0, 0.0]));
        assert_eq!(annulus([0.0, 0.0], 1.0, 0).unwrap(), Region::cube([0.0, 0.0], 1.0));
        assert!(annulus([0.0, 0.0], 0.0, 2).is_err());
    }

    #[test]
    fn annuli_partition_the_cube() {
        let w = Window::square([-4.0, -4.0], 8.0, 64).unwrap();
        let l = 3;
        let mut seen = vec![0u8; w.len()];
        for j in 0..=l {
            for i in w.select(&annulus([0.0, 0.0], 1.0, j).unwrap(), Policy::Restrict).cells {
                seen[i] += 1;
            }
        }
        let cube = w.select(&Region::cube([0.0, 0.0], 8.0), Policy::Restrict).cells;
        assert_eq!(cube.len(), w.len());
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn zero_extend_counts_outside_cells() {
        let w = Window::interval(0.0, 1.0, 4).unwrap();
        let f = GridFunction::from_fn(w, |_| 1.0);
        let r = Region::cube([1.0, 0.0], 1.0);
        assert_eq!(f.measure(&r, Policy::Restrict), 0.5);
        assert_eq!(f.measure(&r, Policy::ZeroExtend), 1.0);
        assert_eq!(f.average_with(&r, Policy::ZeroExtend).unwrap(), 0.5);
    }

    #[test]
    fn window_validation() {
        assert!(Window::interval(1.0, 0.0, 4).is_err());
        assert!(Window::interval(0.0, 1.0, 1).is_err());
        assert!(Window::new(&[0.0, 0.0], &[1.0, 2.0], &[4, 4]).is_err());
        assert!(Window::new(&[0.0, 0.0], &[1.0, 2.0], &[4, 8]).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let w = Window::new(&[0.0, 0.0], &[1.0, 0.5], &[4, 2]).unwrap();
        let f = GridFunction::from_fn(w, |p| p[0] * 3.0 - p[1]);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with("{\"n\":2,\"lower\":[0.0,0.0]"));
        let g: GridFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(
            serde_json::from_str::<GridFunction>(r#"{"n":1,"lower":[0],"upper":[1],"cells":[4],"values":[1,2]}"#)
                .is_err()
        );
    }

    #[test]
    fn transfer_between_aligned_windows() {
        let big = Window::interval(-2.0, 2.0, 16).unwrap();
        let small = Window::interval(0.0, 1.0, 4).unwrap();
        let f = GridFunction::from_fn(small.clone(), |p| p[0]);
        let g = f.transfer(&big).unwrap();
        assert_eq!(
            g.integrate(&Region::cube([0.0, 0.0], 4.0)),
            f.integrate(&Region::cube([0.5, 0.0], 1.0))
        );
        let back = g.transfer(&small).unwrap();
        assert_eq!(back, f);
        let shifted = Window::interval(0.1, 1.1, 4).unwrap();
        assert!(f.transfer(&shifted).is_err());
    }
}
