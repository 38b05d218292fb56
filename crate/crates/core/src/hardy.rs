//! Atoms, molecules, the admissible `ε` window, pairings, finite Hardy-type
//! norm bounds and the constructive molecule-to-atom decomposition.

use std::ops::{Add, Mul, Sub};

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{annulus, lq_of, GridFunction, Policy, Region, Window};
use crate::polyproj::{
    dual_basis_in, moment_projection_with, multi_indices, projection_constant, Frame, MultiIndex, Polynomial, Projector,
};
use crate::spaces::{recip, NormParams};
use crate::tol;

/// `1/q − 1/p − α`.
pub fn atom_exponent(params: &NormParams) -> f64 {
    recip(params.q) - recip(params.p) - params.alpha
}

/// Lattice-aligned window covering exactly the cube `region` of `w`'s lattice.
pub fn cube_window(w: &Window, region: &Region) -> Result<Window> {
    let Region::Cube { center, side } = *region else {
        return Err(Error::InvalidParams(format!("{region:?} is not a cube")));
    };
    let n = w.n();
    let m = (side / w.h()).round();
    if !(m >= 1.0) || (side / w.h() - m).abs() > 1e-9 * m {
        return Err(Error::DegenerateCube(format!(
            "side {side} is not a multiple of h = {}",
            w.h()
        )));
    }
    let lower: Vec<f64> = (0..n).map(|a| center[a] - side / 2.0).collect();
    let upper: Vec<f64> = (0..n).map(|a| center[a] + side / 2.0).collect();
    let cw = Window::new(&lower, &upper, &vec![m as usize; n])?;
    w.lattice_offset(&cw)?;
    Ok(cw)
}

/// The window viewed as a cube region.
fn window_cube(w: &Window) -> Result<Region> {
    let c = w.cells();
    if c.iter().any(|&k| k != c[0]) {
        return Err(Error::DegenerateCube(format!("window with cells {c:?} is not a cube")));
    }
    Ok(Region::cube(w.center(), c[0] as f64 * w.h()))
}

/// Margins of the three atom conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCertification {
    /// `∫_{ℝⁿ∖Q} |a|`.
    pub outside_mass: f64,
    pub support_ok: bool,
    /// `‖a‖_{L^q(Q)}`.
    pub norm: f64,
    /// `|Q|^{1/q−1/p−α}`.
    pub norm_bound: f64,
    pub norm_ratio: f64,
    pub norm_ok: bool,
    /// `|∫ a ((x − c)/ℓ)^γ| / ‖a‖₁` for `|γ| ≤ s`.
    pub moments: Vec<f64>,
    pub moment_tol: f64,
    pub moment_ok: bool,
}

impl AtomCertification {
    pub fn passed(&self) -> bool {
        self.support_ok && self.norm_ok && self.moment_ok
    }

    /// Names of the failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if !self.support_ok {
            f.push("support");
        }
        if !self.norm_ok {
            f.push("size");
        }
        if !self.moment_ok {
            f.push("moments");
        }
        f
    }
}

/// Check the support, size and moment conditions of an atom on `support`.
pub fn validate_atom(a: &GridFunction, support: &Region, params: &NormParams) -> AtomCertification {
    validate_atom_with(a, support, params, tol::MOMENT_REL)
}

pub fn validate_atom_with(
    a: &GridFunction,
    support: &Region,
    params: &NormParams,
    moment_tol: f64,
) -> AtomCertification {
    let w = &a.window;
    let n = w.n();
    let hn = w.cell_volume();
    let sel = w.select(support, Policy::Restrict);
    let mut inside = vec![false; w.len()];
    for &i in &sel.cells {
        inside[i] = true;
    }
    let outside_mass: f64 = a
        .values
        .iter()
        .zip(&inside)
        .filter(|(_, &ins)| !ins)
        .map(|(v, _)| v.abs() * hn)
        .sum();
    let vals: Vec<f64> = sel.cells.iter().map(|&i| a.values[i]).collect();
    let norm = lq_of(&vals, params.q, hn).unwrap_or(f64::NAN);
    let measure = support.size().powi(n as i32);
    let norm_bound = measure.powf(atom_exponent(params));
    let norm_ratio = norm / norm_bound;
    let l1: f64 = vals.iter().map(|v| v.abs() * hn).sum();
    let c = support.center();
    let ell = support.size();
    let moments: Vec<f64> = multi_indices(n, params.s)
        .iter()
        .map(|g| {
            let m: f64 = sel
                .cells
                .iter()
                .map(|&i| a.values[i] * g.eval(&w.midpoint(i), &c, ell) * hn)
                .sum();
            if l1 > 0.0 {
                m.abs() / l1
            } else {
                0.0
            }
        })
        .collect();
    AtomCertification {
        outside_mass,
        support_ok: outside_mass == 0.0,
        norm,
        norm_bound,
        norm_ratio,
        norm_ok: norm_ratio <= 1.0 + tol::NORM_SLACK,
        moment_ok: moments.iter().all(|&m| m <= moment_tol),
        moments,
        moment_tol,
    }
}

/// Atom on its support cube with its certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub support: Region,
    pub params: NormParams,
    pub values: GridFunction,
    pub certification: AtomCertification,
}

impl AtomRecord {
    /// Certify given values against a support cube.
    pub fn certify(values: GridFunction, support: Region, params: NormParams) -> Self {
        let certification = validate_atom(&values, &support, &params);
        Self {
            support,
            params,
            values,
            certification,
        }
    }

    pub fn side(&self) -> f64 {
        self.support.size()
    }
}

/// Remove the degree-`s` projection from `values` on its (cubic) window and
/// rescale to `‖a‖_q = |Q|^{1/q−1/p−α}`.
pub fn atom_from_values(values: GridFunction, params: &NormParams) -> Result<AtomRecord> {
    params.validate()?;
    if params.q.is_infinite() {
        return Err(Error::InvalidExponent("atoms with q = ∞ are not supported".into()));
    }
    let w = values.window.clone();
    let n = w.n();
    let support = window_cube(&w)?;
    if w.cells()[0] < params.s + 2 {
        return Err(Error::DegenerateCube(format!(
            "{} cells per side, need at least s + 2 = {}",
            w.cells()[0],
            params.s + 2
        )));
    }
    let pts = w.midpoints();
    let proj = Projector::new(
        n,
        params.s,
        &pts,
        Frame::of_region(&support),
        w.cell_volume(),
        "atom support",
    )?;
    let resid = proj.residual(&values.values);
    let raw = values.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let left = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if left <= 1e-12 * raw || left == 0.0 {
        return Err(Error::ZeroAtom);
    }
    let norm = lq_of(&resid, params.q, w.cell_volume())?;
    let target = support.size().powi(n as i32).powf(atom_exponent(params));
    let scaled: Vec<f64> = resid.iter().map(|v| v * target / norm).collect();
    let rec = AtomRecord::certify(GridFunction::new(w, scaled)?, support, *params);
    if !rec.certification.passed() {
        return Err(Error::Certification(format!(
            "constructed atom fails {:?}",
            rec.certification.failures()
        )));
    }
    Ok(rec)
}

/// Seeded atom on the cube `window`: uniform values on `(−1, 1)` with the
/// projection removed and the size condition met with equality.
pub fn make_atom(seed: u64, window: &Window, params: &NormParams) -> Result<AtomRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..window.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    atom_from_values(GridFunction::new(window.clone(), vals)?, params)
}

/// `[lower, upper)` of admissible `ε`, or empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpsilonWindow {
    Empty,
    Interval { lower: Ratio<i64>, upper: Ratio<i64> },
}

impl EpsilonWindow {
    pub fn contains(&self, eps: Ratio<i64>) -> bool {
        match self {
            EpsilonWindow::Empty => false,
            EpsilonWindow::Interval { lower, upper } => eps >= *lower && eps < *upper,
        }
    }

    pub fn contains_f64(&self, eps: f64) -> bool {
        match self {
            EpsilonWindow::Empty => false,
            EpsilonWindow::Interval { lower, upper } => eps >= to_f64(lower) && eps < to_f64(upper),
        }
    }

    /// Midpoint of the interval.
    pub fn midpoint(&self) -> Option<Ratio<i64>> {
        match self {
            EpsilonWindow::Empty => None,
            EpsilonWindow::Interval { lower, upper } => Some((lower + upper) / 2),
        }
    }
}

pub fn to_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact rational of a finite exponent parameter.
pub fn exact(x: f64) -> Result<Ratio<i64>> {
    Ratio::approximate_float(x).ok_or_else(|| Error::InvalidParams(format!("{x} has no rational approximation")))
}

/// `ε ∈ (0, 1)` with `c/ε + 1/q' + s/n < 0` and `−1/q' − (s+δ)/n ≤ c/ε`,
/// where `c = 1/q − 1/p − α`. Inputs are `1/p`, `1/q`, `α`, `δ` as rationals.
pub fn epsilon_window_exact(
    inv_p: Ratio<i64>,
    inv_q: Ratio<i64>,
    s: usize,
    alpha: Ratio<i64>,
    delta: Ratio<i64>,
    n: usize,
) -> Result<EpsilonWindow> {
    let c = inv_q - inv_p - alpha;
    let one = Ratio::from_integer(1);
    let n_r = Ratio::from_integer(n as i64);
    let s_r = Ratio::from_integer(s as i64);
    if !c.is_negative() {
        return Err(Error::InvalidParams(format!(
            "α = {alpha} must exceed 1/q − 1/p = {}",
            inv_q - inv_p
        )));
    }
    if alpha >= (s_r + delta) / n_r {
        return Err(Error::InvalidParams(format!(
            "α = {alpha} must be below (s+δ)/n = {}",
            (s_r + delta) / n_r
        )));
    }
    let inv_qp = one - inv_q;
    let a = inv_qp + s_r / n_r;
    let d = inv_qp + (s_r + delta) / n_r;
    let lower = -c / d;
    let upper = if a.is_zero() { one } else { (-c / a).min(one) };
    Ok(if lower < upper {
        EpsilonWindow::Interval { lower, upper }
    } else {
        EpsilonWindow::Empty
    })
}

/// [`epsilon_window_exact`] from floating parameters, each converted to the
/// nearest simple rational.
pub fn epsilon_window(params: &NormParams, delta: f64, n: usize) -> Result<EpsilonWindow> {
    params.validate()?;
    epsilon_window_exact(
        exact(recip(params.p))?,
        exact(recip(params.q))?,
        params.s,
        exact(params.alpha)?,
        exact(delta)?,
        n,
    )
}

/// Margins of the molecule conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeCertification {
    /// `‖M 1_{Q_z(r)}‖_q / |Q_z(r)|^{c}`.
    pub core_ratio: f64,
    /// `‖M 1_{L_j}‖_q / (2^{jnc/ε}|Q_z(r)|^{c})` for `j = 1..=j_max`.
    pub annulus_ratios: Vec<f64>,
    /// `|∫ M ((x − z)/r)^γ| / ‖M‖₁`.
    pub moments: Vec<f64>,
    pub moment_tol: f64,
    pub j_max: u32,
}

impl MoleculeCertification {
    /// `max` of the size ratios: the constant `C` making `M/C` pass (i)–(ii).
    pub fn constant(&self) -> f64 {
        self.annulus_ratios.iter().fold(self.core_ratio, |m, &v| m.max(v))
    }

    pub fn core_ok(&self) -> bool {
        self.core_ratio <= 1.0 + tol::NORM_SLACK
    }

    /// Levels `j ≥ 1` failing the annulus condition.
    pub fn failing_annuli(&self) -> Vec<u32> {
        self.annulus_ratios
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 1.0 + tol::NORM_SLACK)
            .map(|(k, _)| k as u32 + 1)
            .collect()
    }

    pub fn moment_ok(&self) -> bool {
        self.moments.iter().all(|&m| m <= self.moment_tol)
    }

    pub fn passed(&self) -> bool {
        self.core_ok() && self.failing_annuli().is_empty() && self.moment_ok()
    }
}

/// Largest `j` with `Q_z(2^j r)` inside the window.
pub fn max_level(w: &Window, z: [f64; 2], r: f64) -> Option<u32> {
    let fits = |side: f64| {
        (0..w.n()).all(|a| {
            z[a] - side / 2.0 >= w.lower()[a] - 1e-9 * w.h() && z[a] + side / 2.0 <= w.upper()[a] + 1e-9 * w.h()
        })
    };
    if !fits(r) {
        return None;
    }
    let mut j = 0;
    while j < 60 && fits(r * 2f64.powi(j as i32 + 1)) {
        j += 1;
    }
    Some(j)
}

/// Check the molecule conditions around `Q_z(r)` for `j ≤ j_max`.
pub fn validate_molecule(
    m: &GridFunction,
    z: [f64; 2],
    r: f64,
    params: &NormParams,
    eps: f64,
    j_max: u32,
    moment_tol: f64,
) -> Result<MoleculeCertification> {
    params.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("ε = {eps}")));
    }
    let w = &m.window;
    let n = w.n();
    let fit = max_level(w, z, r).ok_or_else(|| Error::InvalidParams("core cube exceeds the window".into()))?;
    if j_max > fit {
        return Err(Error::InvalidParams(format!(
            "Q_z(2^{j_max} r) exceeds the window (largest level {fit})"
        )));
    }
    let c = atom_exponent(params);
    let core_bound = r.powi(n as i32).powf(c);
    let core_ratio = m.lq_norm(&annulus(z, r, 0)?, params.q)? / core_bound;
    let mut annulus_ratios = Vec::new();
    for j in 1..=j_max {
        let bound = 2f64.powf(j as f64 * n as f64 * c / eps) * core_bound;
        annulus_ratios.push(m.lq_norm(&annulus(z, r, j)?, params.q)? / bound);
    }
    let l1 = m.l1();
    let hn = w.cell_volume();
    let moments = multi_indices(n, params.s)
        .iter()
        .map(|g| {
            let v: f64 = (0..w.len())
                .map(|i| m.values[i] * g.eval(&w.midpoint(i), &z, r) * hn)
                .sum();
            if l1 > 0.0 {
                v.abs() / l1
            } else {
                0.0
            }
        })
        .collect();
    Ok(MoleculeCertification {
        core_ratio,
        annulus_ratios,
        moments,
        moment_tol,
        j_max,
    })
}

/// A certified `(p, q, s, α, ε)`-molecule centered at `Q_z(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub center: [f64; 2],
    pub side: f64,
    pub params: NormParams,
    pub epsilon: f64,
    pub values: GridFunction,
    pub certification: MoleculeCertification,
}

impl MoleculeRecord {
    /// Certify `values` as a molecule on every level that fits the window,
    /// refusing on failure.
    pub fn new(
        values: GridFunction,
        center: [f64; 2],
        side: f64,
        params: NormParams,
        epsilon: f64,
        moment_tol: f64,
    ) -> Result<Self> {
        if params.p.is_infinite() || params.q.is_infinite() || params.p <= 1.0 || params.q <= 1.0 {
            return Err(Error::InvalidExponent("molecules need p, q ∈ (1, ∞)".into()));
        }
        let j_max = max_level(&values.window, center, side)
            .ok_or_else(|| Error::InvalidParams("core cube exceeds the window".into()))?;
        let certification = validate_molecule(&values, center, side, &params, epsilon, j_max, moment_tol)?;
        if !certification.passed() {
            let mut why = Vec::new();
            if !certification.core_ok() {
                why.push(format!("core ratio {:.6}", certification.core_ratio));
            }
            for j in certification.failing_annuli() {
                why.push(format!(
                    "annulus {j} ratio {:.6}",
                    certification.annulus_ratios[j as usize - 1]
                ));
            }
            if !certification.moment_ok() {
                why.push(format!("moments {:?} above {moment_tol:e}", certification.moments));
            }
            return Err(Error::Certification(format!("not a molecule: {}", why.join("; "))));
        }
        Ok(Self {
            center,
            side,
            params,
            epsilon,
            values,
            certification,
        })
    }
}

/// Vector-space operations needed by [`abel_transform`].
pub trait AbelTerm: Clone {
    type Scalar: Copy + Add<Output = Self::Scalar> + Sub<Output = Self::Scalar> + Mul<Output = Self::Scalar>;
    fn zero_like(&self) -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, c: Self::Scalar) -> Self;
}

impl AbelTerm for f64 {
    type Scalar = f64;
    fn zero_like(&self) -> Self {
        0.0
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, c: f64) -> Self {
        self * c
    }
}

impl AbelTerm for i64 {
    type Scalar = i64;
    fn zero_like(&self) -> Self {
        0
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, c: i64) -> Self {
        self * c
    }
}

impl AbelTerm for Vec<f64> {
    type Scalar = f64;
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn plus(&self, o: &Self) -> Self {
        self.iter().zip(o).map(|(a, b)| a + b).collect()
    }
    fn minus(&self, o: &Self) -> Self {
        self.iter().zip(o).map(|(a, b)| a - b).collect()
    }
    fn times(&self, c: f64) -> Self {
        self.iter().map(|a| a * c).collect()
    }
}

/// Both sides of `Σ_{j<k} a_j b_j = a_{k−1} Σ_{j<k} b_j − Σ_{j<k−1} B_j (a_{j+1} − a_j)`
/// with partial sums `B_j = Σ_{i≤j} b_i`.
pub fn abel_transform<A: AbelTerm>(a: &[A], b: &[A::Scalar], k: usize) -> Result<(A, A)> {
    if a.len() != b.len() {
        return Err(Error::InvalidParams(format!(
            "length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if k == 0 || k > a.len() {
        return Err(Error::InvalidParams(format!("k = {k} outside 1..={}", a.len())));
    }
    let mut lhs = a[0].zero_like();
    for j in 0..k {
        lhs = lhs.plus(&a[j].times(b[j]));
    }
    let mut partial = b[0];
    let mut correction = a[0].zero_like();
    for j in 0..k - 1 {
        correction = correction.plus(&a[j + 1].minus(&a[j]).times(partial));
        partial = partial + b[j + 1];
    }
    let rhs = a[k - 1].times(partial).minus(&correction);
    Ok((lhs, rhs))
}

/// `∫ f g` over the cells shared by both windows.
pub fn pairing(g: &GridFunction, f: &GridFunction) -> Result<f64> {
    let off = g.window.lattice_offset(&f.window)?;
    let mut s = 0.0;
    for (i, &fv) in f.values.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        let k = f.window.coords(i);
        if let Some(j) = g.window.checked_index([k[0] as i64 + off[0], k[1] as i64 + off[1]]) {
            s += g.values[j] * fv;
        }
    }
    Ok(s * g.window.cell_volume())
}

/// `Σ_groups (Σ_j |λ_j|^p)^{1/p}` over polymers of atoms on congruent,
/// pairwise disjoint cubes.
pub fn hk_upper_bound(groups: &[Vec<(f64, &AtomRecord)>], p: f64) -> Result<f64> {
    let mut total = 0.0;
    for (gi, group) in groups.iter().enumerate() {
        let Some((_, first)) = group.first() else { continue };
        let side = first.side();
        for (_, a) in group {
            if (a.side() - side).abs() > 1e-12 * side {
                return Err(Error::InvalidParams(format!(
                    "group {gi} mixes side lengths {side} and {}",
                    a.side()
                )));
            }
        }
        let n = first.values.window.n();
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                let (ci, cj) = (group[i].1.support.center(), group[j].1.support.center());
                if (0..n).all(|a| (ci[a] - cj[a]).abs() < side * (1.0 - 1e-12)) {
                    return Err(Error::InvalidParams(format!("group {gi}: cubes {i} and {j} overlap")));
                }
            }
        }
        total += if p.is_infinite() {
            group.iter().fold(0.0f64, |m, (l, _)| m.max(l.abs()))
        } else {
            group.iter().map(|(l, _)| l.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        };
    }
    Ok(total)
}

/// Kind of a decomposition piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PieceKind {
    /// `(M − P_j) 1_{L_j}`.
    Core,
    /// `η_ν^{(j)} [ψ_ν^{(j+1)} 1_{L_{j+1}}/|L_{j+1}| − ψ_ν^{(j)} 1_{L_j}/|L_j|]`.
    Correction { nu: MultiIndex },
}

/// One `λ·A` term of the decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub level: u32,
    #[serde(flatten)]
    pub kind: PieceKind,
    /// Coefficient from the closed-form recipe.
    pub lambda: f64,
    /// `‖piece‖_q / |Q|^{1/q−1/p−α}`: the smallest admissible coefficient.
    pub lambda_tight: f64,
    pub cube: Region,
    #[serde(skip)]
    pub atom: Option<AtomRecord>,
}

/// Output of [`decompose_molecule`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub atoms: Vec<Piece>,
    /// `C` in `λ_j = (1 + C) 2^{jn(1/ε−1)c}`: the largest discrete projection constant.
    pub projection_constant: f64,
    /// `C̃` in `λ̃_j = C̃ 2^{jn(1/ε−1)c}`.
    pub correction_constant: f64,
    pub l_max: u32,
    /// Relative `L¹` residual of the reconstruction at each level `l ≤ l_max`.
    pub residuals: Vec<f64>,
    /// `‖Σ_ν η_ν^{(l)} ψ_ν^{(l)} 1_{L_l}/|L_l|‖₁` at `l = l_max`.
    pub tail_l1: f64,
    /// `‖Σ_ν η_ν^{(−1)} ψ_ν^{(0)} 1_{L_0}/|L_0|‖₁`: discrete moment defect of `M`.
    pub defect_l1: f64,
    /// `Σ_{j ≤ l_max} |λ_j|^p` over the core pieces.
    pub coef_p_sum: f64,
    /// `(1 + C)^p / (1 − 2^{np(1/ε−1)c})`.
    pub closed_form: f64,
    /// Largest gap between `Σ_j P_j 1_{L_j}` and its summation-by-parts form.
    pub abel_mismatch: f64,
    pub hk_bound_formula: f64,
    pub hk_bound_tight: f64,
}

impl DecompositionReport {
    /// Certified atom records with their tight coefficients.
    pub fn tight_atoms(&self) -> Vec<(f64, &AtomRecord)> {
        self.atoms
            .iter()
            .filter_map(|p| p.atom.as_ref().map(|a| (p.lambda_tight, a)))
            .collect()
    }
}

/// Build `A = piece/λ` on the cube window, failing with the level and condition.
fn piece_atom(
    piece: &GridFunction,
    cube: &Region,
    lambda: f64,
    params: &NormParams,
    level: u32,
    what: &str,
) -> Result<AtomRecord> {
    let cw = cube_window(&piece.window, cube)?;
    let local = piece.transfer(&cw)?;
    let lost = piece.l1() - local.l1();
    let vals = if lambda > 0.0 {
        local.scaled(1.0 / lambda)
    } else {
        local
    };
    let rec = AtomRecord::certify(vals, *cube, *params);
    if !rec.certification.passed() || lost > 1e-12 * piece.l1() {
        return Err(Error::Certification(format!(
            "{what} piece at level {level} fails {:?} (size ratio {:.6}, moments {:?}, mass outside cube {lost:e})",
            rec.certification.failures(),
            rec.certification.norm_ratio,
            rec.certification.moments
        )));
    }
    Ok(rec)
}

/// Decompose a certified molecule into atoms for levels `0..=l_max`
/// (default: the largest level fitting the window).
pub fn decompose_molecule(m: &MoleculeRecord, l_max: Option<u32>) -> Result<DecompositionReport> {
    let params = m.params;
    let eps = m.epsilon;
    let f = &m.values;
    let w = &f.window;
    let n = w.n();
    let s = params.s;
    let (z, r) = (m.center, m.side);
    let fit = max_level(w, z, r).ok_or_else(|| Error::InvalidParams("core cube exceeds the window".into()))?;
    let l_max = l_max.unwrap_or(fit);
    if l_max > fit {
        return Err(Error::InvalidParams(format!(
            "l_max = {l_max} exceeds the largest fitting level {fit}"
        )));
    }
    let c = atom_exponent(&params);
    let decay = |j: u32| 2f64.powf(j as f64 * n as f64 * (1.0 / eps - 1.0) * c);
    let cube_measure = |j: u32| (r * 2f64.powi(j as i32)).powi(n as i32);
    let frame = Frame { anchor: z, scale: r };
    let basis = multi_indices(n, s);
    let hn = w.cell_volume();
    let total_l1 = f.l1();

    let levels: Vec<Region> = (0..=l_max).map(|j| annulus(z, r, j)).collect::<Result<_>>()?;
    let masks: Vec<Vec<bool>> = levels
        .iter()
        .map(|reg| {
            let mut mask = vec![false; w.len()];
            for i in w.select(reg, Policy::Restrict).cells {
                mask[i] = true;
            }
            mask
        })
        .collect();
    let measures: Vec<f64> = masks
        .iter()
        .map(|mk| mk.iter().filter(|&&b| b).count() as f64 * hn)
        .collect();
    let duals: Vec<Vec<Polynomial>> = levels
        .iter()
        .map(|reg| dual_basis_in(w, reg, s, frame))
        .collect::<Result<_>>()?;
    let proj_c = levels
        .iter()
        .map(|reg| projection_constant(w, reg, s))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    // η_ν^{(j)} for j = −1..=l_max, indexed by j + 1.
    let mono: Vec<Vec<f64>> = basis
        .iter()
        .map(|g| {
            (0..w.len())
                .map(|i| g.eval(&w.midpoint(i), &frame.anchor, frame.scale))
                .collect()
        })
        .collect();
    let mut in_cube = vec![false; w.len()];
    let mut eta = vec![vec![0.0; basis.len()]; l_max as usize + 2];
    for (k, mk) in mono.iter().enumerate() {
        eta[0][k] = (0..w.len()).map(|i| f.values[i] * mk[i] * hn).sum();
    }
    for j in 0..=l_max as usize {
        for (i, b) in masks[j].iter().enumerate() {
            in_cube[i] |= *b;
        }
        for (k, mk) in mono.iter().enumerate() {
            eta[j + 1][k] = (0..w.len())
                .filter(|&i| !in_cube[i])
                .map(|i| f.values[i] * mk[i] * hn)
                .sum();
        }
    }
    // ψ_ν^{(j)} 1_{L_j}/|L_j| on the grid.
    let scaled_dual = |j: usize, k: usize| -> Vec<f64> {
        (0..w.len())
            .map(|i| {
                if masks[j][i] {
                    duals[j][k].eval(&w.midpoint(i)) / measures[j]
                } else {
                    0.0
                }
            })
            .collect()
    };

    let mut pieces = Vec::new();
    let mut core_parts: Vec<Vec<f64>> = Vec::new();
    let mut proj_parts: Vec<Vec<f64>> = Vec::new();
    for (j, reg) in levels.iter().enumerate() {
        let p = moment_projection_with(f, reg, s, Policy::Restrict)?;
        let mut alpha = vec![0.0; w.len()];
        let mut pj = vec![0.0; w.len()];
        for i in 0..w.len() {
            if masks[j][i] {
                let pv = p.eval(&w.midpoint(i));
                alpha[i] = f.values[i] - pv;
                pj[i] = pv;
            }
        }
        core_parts.push(alpha);
        proj_parts.push(pj);
    }

    for (j, alpha) in core_parts.iter().enumerate() {
        let j = j as u32;
        let cube = Region::cube(z, r * 2f64.powi(j as i32));
        let lambda = (1.0 + proj_c) * decay(j);
        let g = GridFunction::new(w.clone(), alpha.clone())?;
        let norm = lq_of(alpha, params.q, hn)?;
        let lambda_tight = norm / cube_measure(j).powf(c);
        let atom = piece_atom(&g, &cube, lambda, &params, j, "core")?;
        pieces.push(Piece {
            level: j,
            kind: PieceKind::Core,
            lambda,
            lambda_tight,
            cube,
            atom: Some(atom),
        });
    }

    // Correction pieces α̃_ν^{(j)} for j < l_max.
    let mut corrections = Vec::new();
    for j in 0..l_max as usize {
        for (k, g) in basis.iter().enumerate() {
            let a1 = scaled_dual(j + 1, k);
            let a0 = scaled_dual(j, k);
            let e = eta[j + 1][k];
            let vals: Vec<f64> = a1.iter().zip(&a0).map(|(x, y)| e * (x - y)).collect();
            corrections.push((j as u32, *g, vals));
        }
    }
    let corr_c = corrections
        .iter()
        .map(|(j, _, v)| lq_of(v, params.q, hn).map(|nq| nq / (decay(*j) * cube_measure(j + 1).powf(c))))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    for (j, nu, vals) in corrections {
        let cube = Region::cube(z, r * 2f64.powi(j as i32 + 1));
        let lambda = corr_c * decay(j);
        let norm = lq_of(&vals, params.q, hn)?;
        let lambda_tight = norm / cube_measure(j + 1).powf(c);
        let g = GridFunction::new(w.clone(), vals)?;
        let atom = piece_atom(&g, &cube, lambda, &params, j, "correction")?;
        pieces.push(Piece {
            level: j,
            kind: PieceKind::Correction { nu },
            lambda,
            lambda_tight,
            cube,
            atom: Some(atom),
        });
    }

    // Σ_ν η_ν^{(−1)} ψ_ν^{(0)} 1_{L_0}/|L_0|.
    let mut defect = vec![0.0; w.len()];
    for k in 0..basis.len() {
        let d = scaled_dual(0, k);
        for i in 0..w.len() {
            defect[i] += eta[0][k] * d[i];
        }
    }
    let defect_l1: f64 = defect.iter().map(|v| v.abs() * hn).sum();

    // Summation by parts of Σ_j P_j 1_{L_j} against the direct projections.
    let mut abel_mismatch = 0.0f64;
    for k in 0..basis.len() {
        let a: Vec<Vec<f64>> = (0..=l_max as usize).map(|j| scaled_dual(j, k)).collect();
        let b: Vec<f64> = (0..=l_max as usize).map(|j| eta[j][k] - eta[j + 1][k]).collect();
        let (lhs, rhs) = abel_transform(&a, &b, a.len())?;
        abel_mismatch = abel_mismatch.max(lhs.iter().zip(&rhs).map(|(x, y)| (x - y).abs() * hn).sum::<f64>());
    }
    let direct: Vec<f64> = (0..w.len()).map(|i| proj_parts.iter().map(|p| p[i]).sum()).collect();
    let mut via_moments = vec![0.0; w.len()];
    for k in 0..basis.len() {
        for j in 0..=l_max as usize {
            let d = scaled_dual(j, k);
            let b = eta[j][k] - eta[j + 1][k];
            for i in 0..w.len() {
                via_moments[i] += b * d[i];
            }
        }
    }
    let proj_gap: f64 = direct.iter().zip(&via_moments).map(|(x, y)| (x - y).abs() * hn).sum();
    abel_mismatch = abel_mismatch.max(proj_gap);

    // Reconstruction residual per level.
    let mut residuals = Vec::new();
    let mut tail_l1 = 0.0;
    let mut covered = vec![false; w.len()];
    let mut partial = vec![0.0; w.len()];
    for l in 0..=l_max as usize {
        for (i, b) in masks[l].iter().enumerate() {
            covered[i] |= *b;
        }
        for p in &pieces {
            if p.level as usize == l && p.kind == PieceKind::Core {
                for i in 0..w.len() {
                    partial[i] += core_parts[l][i];
                }
            }
            if l >= 1 && p.level as usize == l - 1 {
                if let PieceKind::Correction { nu } = p.kind {
                    let k = basis.iter().position(|g| *g == nu).expect("basis index");
                    let a1 = scaled_dual(l, k);
                    let a0 = scaled_dual(l - 1, k);
                    for i in 0..w.len() {
                        partial[i] += eta[l][k] * (a1[i] - a0[i]);
                    }
                }
            }
        }
        let mut tail = vec![0.0; w.len()];
        for k in 0..basis.len() {
            let d = scaled_dual(l, k);
            for i in 0..w.len() {
                tail[i] += eta[l + 1][k] * d[i];
            }
        }
        tail_l1 = tail.iter().map(|v| v.abs() * hn).sum();
        let res: f64 = (0..w.len())
            .map(|i| {
                let lhs = if covered[i] { f.values[i] } else { 0.0 };
                (lhs - partial[i] + tail[i] - defect[i]).abs() * hn
            })
            .sum();
        residuals.push(if total_l1 > 0.0 { res / total_l1 } else { res });
    }

    let p = params.p;
    let coef_p_sum: f64 = pieces
        .iter()
        .filter(|pc| pc.kind == PieceKind::Core)
        .map(|pc| pc.lambda.powf(p))
        .sum();
    let ratio = 2f64.powf(n as f64 * p * (1.0 / eps - 1.0) * c);
    let closed_form = (1.0 + proj_c).powf(p) / (1.0 - ratio);
    let hk_bound_formula = pieces.iter().map(|pc| pc.lambda).sum();
    let hk_bound_tight = pieces.iter().map(|pc| pc.lambda_tight).sum();
    Ok(DecompositionReport {
        atoms: pieces,
        projection_constant: proj_c,
        correction_constant: corr_c,
        l_max,
        residuals,
        tail_l1,
        defect_l1,
        coef_p_sum,
        closed_form,
        abel_mismatch,
        hk_bound_formula,
        hk_bound_tight,
    })
}
