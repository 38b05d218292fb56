//! Polynomials of degree at most `s`, moment-matching projections and the
//! orthonormal and dual bases of a region.
//!
//! A projection onto `P_s(E)` is the unique polynomial whose discrete moments
//! `Σ (f − P) x^γ hⁿ` vanish for `|γ| ≤ s`. Monomials are centered at the region
//! and scaled by its half-size before the Gram matrix is formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, Point, Policy, Region, Selection, Window};
use crate::tol;

/// Exponent vector `γ = (γ₁, …, γₙ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    n: u8,
    g: [u8; 2],
}

impl MultiIndex {
    pub fn new(g: &[u32]) -> Result<Self> {
        if !(1..=2).contains(&g.len()) || g.iter().any(|&c| c > 64) {
            return Err(Error::InvalidParams(format!("bad multi-index {g:?}")));
        }
        let mut a = [0u8; 2];
        for (k, &c) in g.iter().enumerate() {
            a[k] = c as u8;
        }
        Ok(Self { n: g.len() as u8, g: a })
    }
    pub fn zero(n: usize) -> Self {
        Self { n: n as u8, g: [0; 2] }
    }
    pub fn n(&self) -> usize {
        self.n as usize
    }
    pub fn get(&self, k: usize) -> u32 {
        self.g[k] as u32
    }
    pub fn components(&self) -> Vec<u32> {
        (0..self.n()).map(|k| self.get(k)).collect()
    }
    /// `|γ| = Σ γᵢ`.
    pub fn order(&self) -> u32 {
        self.g[..self.n()].iter().map(|&c| c as u32).sum()
    }
    /// `γ! = Π γᵢ!`, exact in `f64` for the supported orders.
    pub fn factorial(&self) -> f64 {
        self.g[..self.n()]
            .iter()
            .map(|&c| (1..=c as u64).product::<u64>() as f64)
            .product()
    }
    /// `((x − c)/ρ)^γ`.
    pub fn eval(&self, x: &Point, anchor: &Point, scale: f64) -> f64 {
        let mut v = 1.0;
        for k in 0..self.n() {
            v *= ((x[k] - anchor[k]) / scale).powi(self.g[k] as i32);
        }
        v
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.components().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        MultiIndex::new(&v).map_err(serde::de::Error::custom)
    }
}

/// All `γ` with `|γ| ≤ s`, graded by order and then by decreasing first component.
pub fn multi_indices(n: usize, s: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for d in 0..=s as u8 {
        if n == 1 {
            out.push(MultiIndex { n: 1, g: [d, 0] });
        } else {
            for a in (0..=d).rev() {
                out.push(MultiIndex { n: 2, g: [a, d - a] });
            }
        }
    }
    out
}

/// `dim P_s(ℝⁿ)`.
pub fn poly_dim(n: usize, s: usize) -> usize {
    if n == 1 {
        s + 1
    } else {
        (s + 1) * (s + 2) / 2
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Affine frame defining the monomials `((x − anchor)/scale)^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub anchor: Point,
    pub scale: f64,
}

impl Frame {
    /// Raw monomials `x^γ`.
    pub const ORIGIN: Frame = Frame {
        anchor: [0.0, 0.0],
        scale: 1.0,
    };

    /// Monomials centered and scaled to a region.
    pub fn of_region(r: &Region) -> Self {
        Frame {
            anchor: r.center(),
            scale: r.half_size(),
        }
    }
}

/// `Σ_{|γ|≤s} a_γ ((x − c)/ρ)^γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    s: usize,
    anchor: Point,
    scale: f64,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(n: usize, s: usize, frame: Frame, coeffs: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&n) || s > tol::MAX_DEGREE {
            return Err(Error::InvalidParams(format!("n = {n}, s = {s}")));
        }
        if coeffs.len() != poly_dim(n, s) {
            return Err(Error::InvalidParams(format!(
                "expected {} coefficients, got {}",
                poly_dim(n, s),
                coeffs.len()
            )));
        }
        if !(frame.scale > 0.0) || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite polynomial".into()));
        }
        Ok(Self {
            n,
            s,
            anchor: frame.anchor,
            scale: frame.scale,
            coeffs,
        })
    }

    pub fn zero(n: usize, s: usize) -> Self {
        Self {
            n,
            s,
            anchor: [0.0; 2],
            scale: 1.0,
            coeffs: vec![0.0; poly_dim(n, s)],
        }
    }

    pub fn constant(n: usize, s: usize, c: f64) -> Self {
        let mut p = Self::zero(n, s);
        p.coeffs[0] = c;
        p
    }

    /// The monomial `((x − anchor)/scale)^γ` in `P_s` with `s = |γ|` at least.
    pub fn monomial(n: usize, s: usize, gamma: MultiIndex, frame: Frame) -> Result<Self> {
        let mut p = Self::new(n, s, frame, vec![0.0; poly_dim(n, s)])?;
        let k = multi_indices(n, s)
            .iter()
            .position(|g| *g == gamma)
            .ok_or_else(|| Error::InvalidParams(format!("|γ| > {s}")))?;
        p.coeffs[k] = 1.0;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn frame(&self) -> Frame {
        Frame {
            anchor: self.anchor,
            scale: self.scale,
        }
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn basis(&self) -> Vec<MultiIndex> {
        multi_indices(self.n, self.s)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        multi_indices(self.n, self.s)
            .iter()
            .zip(&self.coeffs)
            .map(|(g, a)| a * g.eval(x, &self.anchor, self.scale))
            .sum()
    }

    /// Largest `|γ|` with a coefficient above `rel_tol · max |a|`.
    pub fn degree(&self, rel_tol: f64) -> usize {
        let m = self.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        multi_indices(self.n, self.s)
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, a)| a.abs() > rel_tol * m)
            .map(|(g, _)| g.order() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Same polynomial expressed in another frame.
    pub fn reanchor(&self, frame: Frame) -> Polynomial {
        // (x − c)/ρ = t·(x − c')/ρ' + d, with t = ρ'/ρ and d = (c' − c)/ρ.
        let t = frame.scale / self.scale;
        let d = [
            (frame.anchor[0] - self.anchor[0]) / self.scale,
            (frame.anchor[1] - self.anchor[1]) / self.scale,
        ];
        let basis = multi_indices(self.n, self.s);
        let mut out = vec![0.0; basis.len()];
        for (g, &a) in basis.iter().zip(&self.coeffs) {
            if a == 0.0 {
                continue;
            }
            // Expand Π_k (t v_k + d_k)^{g_k}.
            let g0 = g.get(0);
            let g1 = if self.n == 2 { g.get(1) } else { 0 };
            for k0 in 0..=g0 {
                let c0 = binomial(g0, k0) * t.powi(k0 as i32) * d[0].powi((g0 - k0) as i32);
                for k1 in 0..=g1 {
                    let c1 = binomial(g1, k1) * t.powi(k1 as i32) * d[1].powi((g1 - k1) as i32);
                    let target = MultiIndex {
                        n: self.n as u8,
                        g: [k0 as u8, k1 as u8],
                    };
                    let pos = basis.iter().position(|b| *b == target).expect("degree is closed");
                    out[pos] += a * c0 * c1;
                }
            }
        }
        Polynomial {
            n: self.n,
            s: self.s,
            anchor: frame.anchor,
            scale: frame.scale,
            coeffs: out,
        }
    }

    /// `self + c·other`, in `self`'s frame.
    pub fn axpy(&self, c: f64, other: &Polynomial) -> Result<Polynomial> {
        if self.n != other.n || self.s != other.s {
            return Err(Error::InvalidParams("polynomial spaces differ".into()));
        }
        let o = other.reanchor(self.frame());
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + c * b).collect();
        Ok(Polynomial { coeffs, ..self.clone() })
    }

    /// Samples on every cell midpoint of a window.
    pub fn sample(&self, w: &Window) -> GridFunction {
        GridFunction::from_fn(w.clone(), |x| self.eval(x))
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    gamma: MultiIndex,
    a: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyFile {
    s: usize,
    anchor: Vec<f64>,
    scale: f64,
    coeffs: Vec<CoeffEntry>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyFile {
            s: self.s,
            anchor: self.anchor[..self.n].to_vec(),
            scale: self.scale,
            coeffs: multi_indices(self.n, self.s)
                .into_iter()
                .zip(&self.coeffs)
                .map(|(gamma, &a)| CoeffEntry { gamma, a })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = PolyFile::deserialize(d)?;
        let n = f.anchor.len();
        let mut anchor = [0.0; 2];
        anchor[..n].copy_from_slice(&f.anchor);
        let basis = multi_indices(n, f.s);
        let mut coeffs = vec![0.0; basis.len()];
        for e in f.coeffs {
            let k = basis
                .iter()
                .position(|g| *g == e.gamma)
                .ok_or_else(|| serde::de::Error::custom("coefficient outside P_s"))?;
            coeffs[k] += e.a;
        }
        Polynomial::new(n, f.s, Frame { anchor, scale: f.scale }, coeffs).map_err(serde::de::Error::custom)
    }
}

/// Least-squares machinery for one point set: projects value vectors onto
/// `P_s` in the discrete inner product `Σ u v · weight`.
#[derive(Clone, Debug)]
pub struct Projector {
    n: usize,
    s: usize,
    frame: Frame,
    /// Basis values, one row per point.
    design: DMatrix<f64>,
    /// `G⁻¹ Bᵀ weight`, mapping values to coefficients.
    solve: DMatrix<f64>,
    gram: DMatrix<f64>,
    condition: f64,
}

impl Projector {
    pub fn new(n: usize, s: usize, points: &[Point], frame: Frame, weight: f64, context: &str) -> Result<Self> {
        if s > tol::MAX_DEGREE {
            return Err(Error::InvalidParams(format!("s = {s} exceeds {}", tol::MAX_DEGREE)));
        }
        if points.is_empty() {
            return Err(Error::EmptyRegion(context.to_string()));
        }
        let basis = multi_indices(n, s);
        let dim = basis.len();
        if points.len() < dim {
            return Err(Error::IllConditioned {
                context: context.to_string(),
                condition: f64::INFINITY,
            });
        }
        let design = DMatrix::from_fn(points.len(), dim, |i, k| {
            basis[k].eval(&points[i], &frame.anchor, frame.scale)
        });
        let gram = design.transpose() * &design * weight;
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= tol::GRAM_CONDITION_MAX) {
            return Err(Error::IllConditioned {
                context: context.to_string(),
                condition,
            });
        }
        let chol = gram.clone().cholesky().ok_or_else(|| Error::IllConditioned {
            context: context.to_string(),
            condition,
        })?;
        let solve = chol.solve(&(design.transpose() * weight));
        Ok(Self {
            n,
            s,
            frame,
            design,
            solve,
            gram,
            condition,
        })
    }

    /// Projector for the cells of a region.
    pub fn for_region(w: &Window, region: &Region, s: usize, policy: Policy) -> Result<(Self, Selection)> {
        let sel = w.select(region, policy);
        let pts = sel.points(w);
        let p = Self::new(
            w.n(),
            s,
            &pts,
            Frame::of_region(region),
            w.cell_volume(),
            &format!("{region:?}"),
        )?;
        Ok((p, sel))
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    pub fn frame(&self) -> Frame {
        self.frame
    }
    pub fn len(&self) -> usize {
        self.design.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(values);
        (&self.solve * v).iter().copied().collect()
    }

    pub fn polynomial(&self, values: &[f64]) -> Polynomial {
        Polynomial {
            n: self.n,
            s: self.s,
            anchor: self.frame.anchor,
            scale: self.frame.scale,
            coeffs: self.coefficients(values),
        }
    }

    /// Values of the projection at the projector's points.
    pub fn fitted(&self, values: &[f64]) -> Vec<f64> {
        let c = DVector::from_vec(self.coefficients(values));
        (&self.design * c).iter().copied().collect()
    }

    /// `f − P f` at the projector's points.
    pub fn residual(&self, values: &[f64]) -> Vec<f64> {
        self.fitted(values).iter().zip(values).map(|(p, v)| v - p).collect()
    }

    /// Best constant `C` with `max |P f| ≤ C ⨍ |f|` over all `f` on these points:
    /// `m · max_{i,j} |K_ij|` where `P f(x_i) = Σ_j K_ij f_j`.
    pub fn stability_constant(&self) -> f64 {
        use rayon::prelude::*;
        let m = self.len();
        let kernel_max = (0..m)
            .into_par_iter()
            .map(|i| (self.design.row(i) * &self.solve).amax())
            .reduce(|| 0.0, f64::max);
        kernel_max * m as f64
    }
}

/// `P_E^{(s)} f` under the restrict policy.
pub fn moment_projection(f: &GridFunction, region: &Region, s: usize) -> Result<Polynomial> {
    moment_projection_with(f, region, s, Policy::Restrict)
}

pub fn moment_projection_with(f: &GridFunction, region: &Region, s: usize, policy: Policy) -> Result<Polynomial> {
    let (p, sel) = Projector::for_region(&f.window, region, s, policy)?;
    Ok(p.polynomial(&sel.values(f)))
}

/// Discrete moments `Σ_{E} (f − P)((x − c)/ρ)^γ hⁿ` in the region frame, for
/// `|γ| ≤ s`, alongside `‖f‖_{L¹(E)}`.
pub fn residual_moments(f: &GridFunction, region: &Region, p: &Polynomial) -> (Vec<f64>, f64) {
    let w = &f.window;
    let sel = w.select(region, Policy::Restrict);
    let frame = Frame::of_region(region);
    let hn = w.cell_volume();
    let basis = multi_indices(w.n(), p.s());
    let mut m = vec![0.0; basis.len()];
    let mut l1 = 0.0;
    for &i in &sel.cells {
        let x = w.midpoint(i);
        let r = f.values[i] - p.eval(&x);
        l1 += f.values[i].abs() * hn;
        for (k, g) in basis.iter().enumerate() {
            m[k] += r * g.eval(&x, &frame.anchor, frame.scale) * hn;
        }
    }
    (m, l1)
}

/// `max |P|` over the cell midpoints of `E`.
pub fn sup_poly_norm(p: &Polynomial, region: &Region, w: &Window) -> Result<f64> {
    let sel = w.select(region, Policy::Restrict);
    if sel.is_empty() {
        return Err(Error::EmptyRegion(format!("{region:?}")));
    }
    Ok(sel
        .cells
        .iter()
        .fold(0.0f64, |m, &i| m.max(p.eval(&w.midpoint(i)).abs())))
}

/// Best constant in `sup_E |P_E f| ≤ C ⨍_E |f|` for the cells of `E`.
pub fn projection_constant(w: &Window, region: &Region, s: usize) -> Result<f64> {
    let (p, _) = Projector::for_region(w, region, s, Policy::Restrict)?;
    Ok(p.stability_constant())
}

/// Gram matrix of the region-frame monomials under the normalized weight `1/|E|`.
fn normalized_gram(w: &Window, region: &Region, s: usize) -> Result<(DMatrix<f64>, Frame)> {
    let (p, sel) = Projector::for_region(w, region, s, Policy::Restrict)?;
    let measure = sel.count() as f64 * w.cell_volume();
    Ok((p.gram / measure, p.frame))
}

/// `{φ_ν}` orthonormal under `⟨u, v⟩_E = (1/|E|) Σ_E u v hⁿ`, obtained by
/// Gram–Schmidt in graded monomial order.
pub fn orthonormal_basis(w: &Window, region: &Region, s: usize) -> Result<Vec<Polynomial>> {
    let (g, frame) = normalized_gram(w, region, s)?;
    let l = g.cholesky().ok_or_else(|| Error::IllConditioned {
        context: format!("{region:?}"),
        condition: f64::INFINITY,
    })?;
    // Rows of L⁻¹ are the Gram–Schmidt coefficients.
    let linv = l.l().try_inverse().ok_or_else(|| Error::IllConditioned {
        context: format!("{region:?}"),
        condition: f64::INFINITY,
    })?;
    Ok((0..linv.nrows())
        .map(|i| Polynomial {
            n: w.n(),
            s,
            anchor: frame.anchor,
            scale: frame.scale,
            coeffs: linv.row(i).iter().copied().collect(),
        })
        .collect())
}

/// `{ψ_ν}` with `⟨ψ_ν, x^μ⟩_E = δ_{νμ}` under the normalized weight, where the
/// monomials are the raw `x^μ`.
pub fn dual_basis(w: &Window, region: &Region, s: usize) -> Result<Vec<Polynomial>> {
    dual_basis_in(w, region, s, Frame::ORIGIN)
}

/// Dual basis against the monomials of an arbitrary frame.
pub fn dual_basis_in(w: &Window, region: &Region, s: usize, target: Frame) -> Result<Vec<Polynomial>> {
    let n = w.n();
    let (g, frame) = normalized_gram(w, region, s)?;
    let basis = multi_indices(n, s);
    let dim = basis.len();
    // Row ν of T expresses the target monomial b_ν in region-frame monomials.
    let mut t = DMatrix::zeros(dim, dim);
    for (r, gamma) in basis.iter().enumerate() {
        let b = Polynomial::monomial(n, s, *gamma, target)?.reanchor(frame);
        for c in 0..dim {
            t[(r, c)] = b.coeffs[c];
        }
    }
    let c = (g * t.transpose()).try_inverse().ok_or_else(|| Error::IllConditioned {
        context: format!("{region:?}"),
        condition: f64::INFINITY,
    })?;
    Ok((0..dim)
        .map(|i| Polynomial {
            n,
            s,
            anchor: frame.anchor,
            scale: frame.scale,
            coeffs: c.row(i).iter().copied().collect(),
        })
        .collect())
}

/// `⟨u, v⟩_E = (1/|E|) Σ_E u v hⁿ` for two polynomials.
pub fn normalized_inner(w: &Window, region: &Region, u: &Polynomial, v: &Polynomial) -> Result<f64> {
    let sel = w.select(region, Policy::Restrict);
    if sel.is_empty() {
        return Err(Error::EmptyRegion(format!("{region:?}")));
    }
    let s: f64 = sel
        .cells
        .iter()
        .map(|&i| {
            let x = w.midpoint(i);
            u.eval(&x) * v.eval(&x)
        })
        .sum();
    Ok(s / sel.count() as f64)
}
