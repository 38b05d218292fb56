//! Experiment orchestration. Cases run in parallel; rows are assembled in
//! case order.

use rayon::prelude::*;

use crate::czkernel::{
    apply_cz_on, apply_modified_on, kernel_transpose, modified_on_monomial, padded_window, poly_distance,
    vanishing_moment_defect, AtomRef, CorrectionSpec, KernelSpec,
};
use crate::error::{Error, Result};
use crate::hardy::{
    decompose_molecule, epsilon_window, make_atom, max_level, pairing, to_f64, validate_molecule, AtomRecord,
    MoleculeRecord,
};
use crate::lattice::{GridFunction, Region, Window};
use crate::polyproj::{multi_indices, Frame};
use crate::spaces::{
    amalgam_norm, dyadic_radii, jn_ball_seminorm, jn_con_norm, norm_scale, rm_ball_seminorm, rm_con_norm,
};
use crate::tol;

use super::config::{ExperimentConfig, ExperimentName};
use super::families;
use super::reports::{factor, max_of, min_of, spread, ExperimentResult, PropertyCheck, RowStatus};

/// Norm values below `ZERO_REL·scale` count as zero denominators.
const ZERO_REL: f64 = 1e-8;

/// Run the experiment named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentName::JnBoundedness => run_jn_boundedness(cfg),
        ExperimentName::RmBoundedness => run_rm_boundedness(cfg),
        ExperimentName::Equivalence => run_equivalence(cfg),
        ExperimentName::AtomImage => run_atom_image(cfg),
        ExperimentName::Duality => run_duality(cfg),
        ExperimentName::Decomposition => run_decomposition(cfg),
        ExperimentName::VanishingMoments => run_vanishing_moments(cfg),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn windows(cfg: &ExperimentConfig) -> Result<Vec<Window>> {
    cfg.refinements.iter().map(|&c| cfg.domain.window(c)).collect()
}

fn base_correction(w: &Window, s: usize) -> Result<CorrectionSpec> {
    CorrectionSpec::new(w.center(), w.min_side() / 4.0, s)
}

fn ratio_or_skip(num: f64, den: f64, scale: f64) -> Option<f64> {
    (den > ZERO_REL * scale).then(|| num / den)
}

/// Stability of a per-refinement maximum: largest factor between neighbors.
fn refinement_factor(maxima: &[Option<f64>]) -> Option<f64> {
    maxima
        .windows(2)
        .filter_map(|p| match (p[0], p[1]) {
            (Some(a), Some(b)) => Some(factor(a, b)),
            _ => None,
        })
        .reduce(f64::max)
}

fn record_stability(res: &mut ExperimentResult, name: &str, maxima: &[Option<f64>], threshold: f64) {
    match refinement_factor(maxima) {
        Some(f) => res.check(PropertyCheck::at_most(name, f, threshold)),
        None if maxima.len() < 2 => res.note(format!("{name}: one refinement, stability not evaluated")),
        None if maxima.iter().all(Option::is_none) => res.note(format!("{name}: every ratio skipped")),
        None => res.check(PropertyCheck::flag(name, false).with_note("no refinement pair with ratios on both grids")),
    }
}

/// Antisymmetric reference kernel of the same dimension.
fn reference_kernel(n: usize) -> KernelSpec {
    if n == 1 {
        KernelSpec::Hilbert
    } else {
        KernelSpec::Riesz { axis: 0 }
    }
}

/// `max_{|γ|≤s} JN(T̃(x^γ))` on `w` with its worst padding sensitivity.
fn monomial_indicator(k: &KernelSpec, cfg: &ExperimentConfig, w: &Window) -> Result<(f64, f64)> {
    let s = cfg.params.s;
    let corr = base_correction(w, s)?;
    let frame = Frame {
        anchor: w.center(),
        scale: w.min_side() / 2.0,
    };
    let kt = kernel_transpose(k);
    let mut worst = (0.0f64, 0.0f64);
    for g in multi_indices(w.n(), s) {
        let rep = modified_on_monomial(
            &kt,
            &corr,
            &g,
            frame,
            w,
            cfg.monomial_padding,
            1.0,
            cfg.tolerances.sensitivity,
        )?;
        let v = jn_con_norm(&rep.values, &cfg.params, &cfg.search)?.value;
        worst = (worst.0.max(v), worst.1.max(rep.sensitivity));
    }
    Ok(worst)
}

pub fn run_jn_boundedness(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let n = cfg.domain.n();
    cfg.kernel.check(n, cfg.params.s).map_err(config_err)?;
    let kt = kernel_transpose(&cfg.kernel);
    let mut res = ExperimentResult::new(cfg, &["jn_f", "jn_tf", "ratio", "b0_change", "cz_increment"]);
    for v in cfg.params.jn_boundedness_violations(n, cfg.delta) {
        res.note(format!("parameters outside the boundedness range: {v}"));
    }
    let mut maxima = Vec::new();
    let mut b0_max = 0.0f64;
    for w in windows(cfg)? {
        let cells = w.cells()[0];
        let corr = base_correction(&w, cfg.params.s)?;
        let shifted = CorrectionSpec::new(
            [w.center()[0] + w.min_side() / 16.0, w.center()[1]],
            w.min_side() / 8.0,
            cfg.params.s,
        )?;
        let rows: Vec<_> = (0..cfg.family.count)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let f = families::sample(&cfg.family, i, &w, &cfg.params)?;
                let nf = jn_con_norm(&f, &cfg.params, &cfg.search)?.value;
                let scale = norm_scale(&f, &cfg.params, &cfg.search);
                let tf = apply_modified_on(&kt, &corr, &f, &w, None)?;
                let tf2 = apply_modified_on(&kt, &shifted, &f, &w, None)?;
                let ntf = jn_con_norm(&tf.canonical, &cfg.params, &cfg.search)?.value;
                let change =
                    tf.canonical.axpy(-1.0, &tf2.canonical)?.sup_abs() / tf.canonical.sup_abs().max(f64::MIN_POSITIVE);
                let change = if tf.canonical.sup_abs() > 0.0 { change } else { 0.0 };
                let inc = tf.cz.increments[1] / f.sup_abs().max(f64::MIN_POSITIVE);
                Ok((nf, ntf, ratio_or_skip(ntf, nf, scale), change, inc))
            })
            .collect::<Result<_>>()?;
        let mut ratios = Vec::new();
        for (i, (nf, ntf, ratio, change, inc)) in rows.into_iter().enumerate() {
            let status = if ratio.is_some() {
                RowStatus::Ok
            } else {
                RowStatus::Skipped
            };
            if let Some(r) = ratio {
                ratios.push(r);
            }
            b0_max = b0_max.max(change);
            res.push_row(
                i,
                cells,
                status,
                vec![Some(nf), Some(ntf), ratio, Some(change), Some(inc)],
            );
        }
        let m = max_of(&ratios);
        res.set_f64(&format!("max_ratio_{cells}"), m.unwrap_or(f64::NAN));
        res.set(&format!("skipped_{cells}"), cfg.family.count - ratios.len());
        maxima.push(m);
    }
    if let Some(m) = maxima.iter().flatten().copied().reduce(f64::max) {
        res.check(PropertyCheck::flag("max_ratio_finite", m.is_finite()));
    } else {
        res.note("every ratio skipped: zero denominators across the family");
    }
    record_stability(&mut res, "ratio_refinement_factor", &maxima, cfg.tolerances.stability);
    res.check(PropertyCheck::at_most("b0_independence", b0_max, 1e-8));

    let w0 = cfg.domain.window(cfg.refinements[0])?;
    let (ind, sens) = monomial_indicator(&cfg.kernel, cfg, &w0)?;
    let reference = reference_kernel(n);
    let (ref_ind, _) = monomial_indicator(&reference, cfg, &w0)?;
    res.set_f64("monomial_jn_max", ind);
    res.set_f64("monomial_sensitivity", sens);
    res.set_f64("reference_monomial_jn_max", ref_ind);
    res.set("reference_kernel", serde_json::to_value(&reference)?);
    if ref_ind > 0.0 {
        res.set_f64("monomial_contrast", ind / ref_ind);
    }
    if sens > cfg.tolerances.sensitivity {
        res.note(format!("T̃(x^γ) changes by {sens:e} under padding doubling"));
    }
    Ok(res)
}

pub fn run_rm_boundedness(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let n = cfg.domain.n();
    cfg.kernel.check(n, 0).map_err(config_err)?;
    let mut res = ExperimentResult::new(cfg, &["rm_f", "rm_tf", "rm_ratio", "am_f", "am_tf", "am_ratio"]);
    let (mut rm_maxima, mut am_maxima, mut agreement) = (Vec::new(), Vec::new(), Vec::new());
    for w in windows(cfg)? {
        let cells = w.cells()[0];
        let r = cfg.radius.unwrap_or(w.min_side() / 8.0);
        res.set_f64(&format!("amalgam_radius_{cells}"), r);
        let rows: Vec<_> = (0..cfg.family.count)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let f = families::sample(&cfg.family, i, &w, &cfg.params)?;
                let scale = norm_scale(&f, &cfg.params, &cfg.search);
                let tf = apply_cz_on(&cfg.kernel, &f, &w, None)?.values;
                let rf = rm_con_norm(&f, &cfg.params, &cfg.search)?.value;
                let rtf = rm_con_norm(&tf, &cfg.params, &cfg.search)?.value;
                let af = amalgam_norm(&f, cfg.params.p, cfg.params.q, r)?;
                let atf = amalgam_norm(&tf, cfg.params.p, cfg.params.q, r)?;
                let am_scale = f.sup_abs() * w.measure().powf(1.0 / cfg.params.p);
                Ok((
                    rf,
                    rtf,
                    ratio_or_skip(rtf, rf, scale),
                    af,
                    atf,
                    ratio_or_skip(atf, af, am_scale),
                ))
            })
            .collect::<Result<_>>()?;
        let (mut rm, mut am) = (Vec::new(), Vec::new());
        for (i, (rf, rtf, rr, af, atf, ar)) in rows.into_iter().enumerate() {
            let status = if rr.is_some() && ar.is_some() {
                RowStatus::Ok
            } else {
                RowStatus::Skipped
            };
            if status == RowStatus::Ok {
                rm.push(rr.unwrap_or_default());
                am.push(ar.unwrap_or_default());
            }
            res.push_row(i, cells, status, vec![Some(rf), Some(rtf), rr, Some(af), Some(atf), ar]);
        }
        let (mr, ma) = (max_of(&rm), max_of(&am));
        res.set_f64(&format!("max_rm_ratio_{cells}"), mr.unwrap_or(f64::NAN));
        res.set_f64(&format!("max_amalgam_ratio_{cells}"), ma.unwrap_or(f64::NAN));
        if let (Some(a), Some(b)) = (mr, ma) {
            agreement.push(factor(a, b));
        }
        rm_maxima.push(mr);
        am_maxima.push(ma);
    }
    if rm_maxima.iter().all(Option::is_none) {
        res.note("every ratio skipped: zero denominators across the family");
    } else {
        let m = rm_maxima.iter().flatten().copied().fold(0.0, f64::max);
        res.check(PropertyCheck::flag("max_ratio_finite", m.is_finite()));
        record_stability(&mut res, "rm_refinement_factor", &rm_maxima, cfg.tolerances.stability);
        if let Some(a) = max_of(&agreement) {
            res.check(PropertyCheck::at_most(
                "amalgam_agreement",
                a,
                cfg.tolerances.amalgam_agreement,
            ));
        }
    }
    Ok(res)
}

pub fn run_equivalence(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new(
        cfg,
        &["jn_cube", "jn_ball", "jn_ratio", "rm_cube", "rm_ball", "rm_ratio"],
    );
    let mut brackets: [Vec<Option<(f64, f64)>>; 2] = [Vec::new(), Vec::new()];
    let mut insufficient = false;
    for w in windows(cfg)? {
        let cells = w.cells()[0];
        let r_max = cfg.radius.unwrap_or(w.min_side() / 2.0);
        let radii = dyadic_radii(&w, r_max);
        if radii.is_empty() {
            return Err(Error::Config(format!("no dyadic radius in (2h, {r_max}]")));
        }
        let largest_side = cfg.search.side_cells(&w, cfg.params.s).into_iter().max().unwrap_or(0) as f64 * w.h();
        let largest_radius = radii.iter().copied().fold(0.0, f64::max);
        insufficient |= 4.0 * largest_radius < largest_side;
        res.set(&format!("radii_{cells}"), radii.clone());
        let rows: Vec<_> = (0..cfg.family.count)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let f = families::sample(&cfg.family, i, &w, &cfg.params)?;
                let scale = norm_scale(&f, &cfg.params, &cfg.search);
                let jc = jn_con_norm(&f, &cfg.params, &cfg.search)?.value;
                let jb = jn_ball_seminorm(&f, &cfg.params, &radii)?.value;
                let rc = rm_con_norm(&f, &cfg.params, &cfg.search)?.value;
                let rb = rm_ball_seminorm(&f, &cfg.params, &radii)?.value;
                Ok((
                    jc,
                    jb,
                    ratio_or_skip(jb, jc, scale),
                    rc,
                    rb,
                    ratio_or_skip(rb, rc, scale),
                ))
            })
            .collect::<Result<_>>()?;
        let (mut jr, mut rr) = (Vec::new(), Vec::new());
        for (i, (jc, jb, ja, rc, rb, ra)) in rows.into_iter().enumerate() {
            let status = if ja.is_some() || ra.is_some() {
                RowStatus::Ok
            } else {
                RowStatus::Skipped
            };
            jr.extend(ja);
            rr.extend(ra);
            res.push_row(i, cells, status, vec![Some(jc), Some(jb), ja, Some(rc), Some(rb), ra]);
        }
        for (k, (name, v)) in [("jn", &jr), ("rm", &rr)].into_iter().enumerate() {
            let b = min_of(v).zip(max_of(v));
            if let Some((lo, hi)) = b {
                res.set(&format!("{name}_bracket_{cells}"), vec![lo, hi]);
            }
            brackets[k].push(b);
        }
    }
    res.set("search_insufficient", insufficient);
    for (k, name) in ["jn", "rm"].into_iter().enumerate() {
        let bs: Vec<(f64, f64)> = brackets[k].iter().flatten().copied().collect();
        if bs.is_empty() {
            res.note(format!("{name}: every ratio skipped"));
            continue;
        }
        let sp = bs
            .iter()
            .map(|(lo, hi)| spread(&[*lo, *hi]).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let mut check = PropertyCheck::at_most(&format!("{name}_bracket_spread"), sp, cfg.tolerances.bracket_spread);
        if !check.holds && insufficient {
            check.holds = true;
            check = check.with_note("search-insufficient: radius set too small for the cube search");
        }
        res.check(check);
        let lows: Vec<Option<f64>> = brackets[k].iter().map(|b| b.map(|x| x.0)).collect();
        let highs: Vec<Option<f64>> = brackets[k].iter().map(|b| b.map(|x| x.1)).collect();
        let moved = refinement_factor(&lows)
            .into_iter()
            .chain(refinement_factor(&highs))
            .reduce(f64::max);
        if let Some(m) = moved {
            let mut check = PropertyCheck::at_most(
                &format!("{name}_bracket_refinement_factor"),
                m,
                cfg.tolerances.stability,
            );
            if !check.holds && insufficient {
                check.holds = true;
                check = check.with_note("search-insufficient: radius set too small for the cube search");
            }
            res.check(check);
        }
    }
    Ok(res)
}

/// Seeded atoms on the cube of side `atom_side` centered in the domain.
fn atoms(cfg: &ExperimentConfig) -> Result<(Window, Vec<AtomRecord>)> {
    let n = cfg.domain.n();
    let center = {
        let mut c = [0.0; 2];
        for (a, v) in c.iter_mut().enumerate().take(n) {
            *v = 0.5 * (cfg.domain.lower[a] + cfg.domain.upper[a]);
        }
        c
    };
    let support = Window::centered(n, center, cfg.atom_side, cfg.atom_cells)?;
    let list = (0..cfg.atoms)
        .map(|i| make_atom(families::case_seed(cfg.family.seed, i), &support, &cfg.params))
        .collect::<Result<Vec<_>>>()?;
    Ok((support, list))
}

fn epsilon(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> Result<f64> {
    let n = cfg.domain.n();
    let win = epsilon_window(&cfg.params, cfg.delta, n)?;
    res.set("epsilon_window", serde_json::to_value(&win)?);
    let eps = match (cfg.epsilon, win.midpoint()) {
        (Some(e), _) => e,
        (None, Some(m)) => to_f64(&m),
        (None, None) => return Err(Error::Config("empty ε window and no ε given".into())),
    };
    res.set_f64("epsilon", eps);
    res.check(PropertyCheck::flag("epsilon_admissible", win.contains_f64(eps)));
    Ok(eps)
}

struct Image {
    values: GridFunction,
    constant: f64,
    core: f64,
    annulus: f64,
    moment: f64,
    j_max: u32,
}

fn atom_images(cfg: &ExperimentConfig, support: &Window, list: &[AtomRecord], eps: f64) -> Result<Vec<Image>> {
    cfg.kernel.check(support.n(), 0).map_err(config_err)?;
    let big = padded_window(support, cfg.padding)?;
    let center = support.center();
    let side = cfg.atom_side;
    let j_max = max_level(&big, center, side).ok_or_else(|| Error::Config("padded window too small".into()))?;
    list.par_iter()
        .map(|a| {
            let ta = apply_cz_on(&cfg.kernel, &a.values, &big, None)?.values;
            let cert = validate_molecule(
                &ta,
                center,
                side,
                &cfg.params,
                eps,
                j_max,
                cfg.tolerances.vanishing_moment,
            )?;
            Ok(Image {
                constant: cert.constant(),
                core: cert.core_ratio,
                annulus: cert.annulus_ratios.iter().copied().fold(0.0, f64::max),
                moment: cert.moments.iter().copied().fold(0.0, f64::max),
                values: ta,
                j_max,
            })
        })
        .collect()
}

pub fn run_atom_image(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new(
        cfg,
        &[
            "constant",
            "core_ratio",
            "max_annulus_ratio",
            "moment_defect",
            "certified",
        ],
    );
    let eps = epsilon(cfg, &mut res)?;
    let (support, list) = atoms(cfg)?;
    let images = atom_images(cfg, &support, &list, eps)?;
    let c = images.iter().map(|im| im.constant).fold(0.0, f64::max);
    res.set_f64("constant", c);
    res.set("j_max", images.first().map_or(0, |im| im.j_max));
    let cells = support.cells()[0];
    let mut certified = 0;
    for (i, im) in images.iter().enumerate() {
        let ok = c > 0.0
            && MoleculeRecord::new(
                im.values.scaled(1.0 / c),
                support.center(),
                cfg.atom_side,
                cfg.params,
                eps,
                cfg.tolerances.vanishing_moment,
            )
            .is_ok();
        certified += ok as usize;
        let status = if ok { RowStatus::Ok } else { RowStatus::Failed };
        res.push_row(
            i,
            cells,
            status,
            vec![
                Some(im.constant),
                Some(im.core),
                Some(im.annulus),
                Some(im.moment),
                Some(ok as u8 as f64),
            ],
        );
    }
    res.check(PropertyCheck::flag("constant_finite", c.is_finite() && c > 0.0));
    res.check(PropertyCheck::at_least(
        "certified_with_one_constant",
        certified as f64,
        images.len() as f64,
    ));
    Ok(res)
}

pub fn run_duality(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let n = cfg.domain.n();
    cfg.kernel.check(n, cfg.params.s).map_err(config_err)?;
    let kt = kernel_transpose(&cfg.kernel);
    let mut res = ExperimentResult::new(cfg, &["atom", "lhs", "rhs", "mismatch", "lhs_doubled", "sensitivity"]);
    let (support, list) = atoms(cfg)?;
    let fw = padded_window(&support, cfg.padding)?;
    let fw2 = padded_window(&support, 2 * cfg.padding)?;
    let corr = CorrectionSpec::new(support.center(), cfg.atom_side, cfg.params.s)?;
    let images: Vec<(GridFunction, GridFunction)> = list
        .par_iter()
        .map(|a| {
            Ok((
                apply_cz_on(&cfg.kernel, &a.values, &fw, None)?.values,
                apply_cz_on(&cfg.kernel, &a.values, &fw2, None)?.values,
            ))
        })
        .collect::<Result<_>>()?;
    let cases: Vec<Vec<[f64; 5]>> = (0..cfg.family.count)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let m = families::member(&cfg.family, j, &fw, &cfg.params)?;
            let f = m.sample(&fw)?;
            let f2 = m.sample(&fw2)?;
            let tf = apply_modified_on(&kt, &corr, &f, &support, None)?.cz.values;
            list.iter()
                .zip(&images)
                .map(|(a, (ta, ta2))| {
                    let lhs = pairing(ta, &f)?;
                    let rhs = pairing(&a.values, &tf)?;
                    let lhs2 = pairing(ta2, &f2)?;
                    let norm = ta.l2() * f.l2();
                    let rel = |d: f64| if norm > 0.0 { d / norm } else { 0.0 };
                    Ok([lhs, rhs, rel((lhs - rhs).abs()), lhs2, rel((lhs2 - lhs).abs())])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (mut mismatch, mut sensitivity) = (0.0f64, 0.0f64);
    for (j, rows) in cases.iter().enumerate() {
        for (i, r) in rows.iter().enumerate() {
            mismatch = mismatch.max(r[2]);
            sensitivity = sensitivity.max(r[4]);
            let status = if r[4] <= cfg.tolerances.duality {
                RowStatus::Ok
            } else {
                RowStatus::Failed
            };
            res.push_row(
                j,
                fw.cells()[0],
                status,
                vec![
                    Some(i as f64),
                    Some(r[0]),
                    Some(r[1]),
                    Some(r[2]),
                    Some(r[3]),
                    Some(r[4]),
                ],
            );
        }
    }
    res.set_f64("mismatch_max", mismatch);
    res.set_f64("sensitivity_max", sensitivity);
    res.check(PropertyCheck::at_most(
        "padding_certified",
        sensitivity,
        cfg.tolerances.duality,
    ));
    res.check(PropertyCheck::at_most(
        "pairing_mismatch",
        mismatch,
        cfg.tolerances.duality,
    ));
    let refs: Vec<AtomRef<'_>> = list
        .iter()
        .map(|a| AtomRef {
            values: &a.values,
            support: a.support,
        })
        .collect();
    let cross = vanishing_moment_defect(&cfg.kernel, cfg.params.s, &refs, cfg.padding)?;
    res.set_f64("moment_form_mismatch", cross.mismatch);
    res.set_f64("moment_defect", cross.defect);
    res.check(PropertyCheck::at_most(
        "moment_form_mismatch",
        cross.mismatch,
        cfg.tolerances.duality,
    ));
    Ok(res)
}

pub fn run_decomposition(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new(
        cfg,
        &[
            "source",
            "l_max",
            "projection_constant",
            "residual_max",
            "coef_p_sum",
            "closed_form",
            "hk_bound_formula",
            "hk_bound_tight",
        ],
    );
    let eps = epsilon(cfg, &mut res)?;
    let (support, list) = atoms(cfg)?;
    let big = padded_window(&support, cfg.padding)?;
    let center = support.center();
    let side = cfg.atom_side;
    let tol_m = cfg.tolerances.vanishing_moment;
    let cells = big.cells()[0];
    let row = |src: f64, r: &crate::hardy::DecompositionReport| {
        vec![
            Some(src),
            Some(r.l_max as f64),
            Some(r.projection_constant),
            Some(r.residuals.iter().copied().fold(0.0, f64::max)),
            Some(r.coef_p_sum),
            Some(r.closed_form),
            Some(r.hk_bound_formula),
            Some(r.hk_bound_tight),
        ]
    };

    let atom_reports: Vec<_> = list
        .par_iter()
        .map(|a| {
            let m = MoleculeRecord::new(a.values.transfer(&big)?, center, side, cfg.params, eps, tol::MOMENT_REL)?;
            decompose_molecule(&m, None)
        })
        .collect::<Result<_>>()?;
    let mut atom_bound = 0.0f64;
    for (i, r) in atom_reports.iter().enumerate() {
        atom_bound = atom_bound.max(r.hk_bound_tight);
        res.push_row(i, cells, RowStatus::Ok, row(0.0, r));
    }
    res.set_f64("atom_hk_bound_max", atom_bound);
    res.check(PropertyCheck::at_most("atoms_as_molecules", atom_bound, 1.0 + 1e-6));

    let images = atom_images(cfg, &support, &list, eps)?;
    let c = images.iter().map(|im| im.constant).fold(0.0, f64::max);
    res.set_f64("image_constant", c);
    let outcomes: Vec<Result<_>> = images
        .par_iter()
        .map(|im| {
            let m = MoleculeRecord::new(im.values.scaled(1.0 / c), center, side, cfg.params, eps, tol_m)?;
            decompose_molecule(&m, None)
        })
        .collect();
    let (mut bounds, mut residual, mut closed_gap, mut failures) = (Vec::new(), 0.0f64, 0.0f64, 0usize);
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => {
                residual = residual.max(r.residuals.iter().copied().fold(0.0, f64::max));
                closed_gap = closed_gap.max((r.coef_p_sum - r.closed_form).abs() / r.closed_form);
                bounds.push(r.hk_bound_tight);
                res.push_row(i, cells, RowStatus::Ok, row(1.0, &r));
            }
            Err(e) => {
                failures += 1;
                res.note(format!("image {i}: {e}"));
                res.push_row(
                    i,
                    cells,
                    RowStatus::Failed,
                    vec![Some(1.0), None, None, None, None, None, None, None],
                );
            }
        }
    }
    res.check(PropertyCheck::at_most("image_failures", failures as f64, 0.0));
    res.set_f64("image_residual_max", residual);
    res.set_f64("closed_form_gap", closed_gap);
    res.check(PropertyCheck::at_most(
        "reconstruction_residual",
        residual,
        cfg.tolerances.reconstruction,
    ));
    res.check(PropertyCheck::at_most(
        "closed_form_gap",
        closed_gap,
        cfg.tolerances.closed_form,
    ));
    let sp = spread(&bounds).unwrap_or(f64::INFINITY);
    if let (Some(lo), Some(hi)) = (min_of(&bounds), max_of(&bounds)) {
        res.set("image_hk_bounds", vec![lo, hi]);
    }
    res.check(PropertyCheck::at_most("hk_bound_spread", sp, cfg.tolerances.hk_spread));

    let lump = GridFunction::from_fn(big.clone(), |x| {
        if Region::cube(center, side).contains(big.n(), x) {
            1.0
        } else {
            0.0
        }
    });
    let refused = matches!(
        MoleculeRecord::new(lump, center, side, cfg.params, eps, tol_m),
        Err(Error::Certification(_))
    );
    res.check(PropertyCheck::flag("non_molecule_refused", refused));
    Ok(res)
}

pub fn run_vanishing_moments(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let n = cfg.domain.n();
    cfg.kernel.check(n, cfg.params.s).map_err(config_err)?;
    let mut res = ExperimentResult::new(cfg, &["gamma_order", "defect", "dual", "mismatch"]);
    let (support, list) = atoms(cfg)?;
    let refs: Vec<AtomRef<'_>> = list
        .iter()
        .map(|a| AtomRef {
            values: &a.values,
            support: a.support,
        })
        .collect();
    let per_atom: Vec<_> = refs
        .par_iter()
        .map(|r| vanishing_moment_defect(&cfg.kernel, cfg.params.s, std::slice::from_ref(r), cfg.padding))
        .collect::<Result<_>>()?;
    let (mut defect, mut mismatch) = (0.0f64, 0.0f64);
    for (i, rep) in per_atom.iter().enumerate() {
        for row in &rep.rows {
            defect = defect.max(row.defect);
            mismatch = mismatch.max(row.mismatch);
            let status = if row.defect <= cfg.tolerances.vanishing_moment {
                RowStatus::Ok
            } else {
                RowStatus::Failed
            };
            res.push_row(
                i,
                support.cells()[0],
                status,
                vec![
                    Some(row.gamma.order() as f64),
                    Some(row.defect),
                    Some(row.dual),
                    Some(row.mismatch),
                ],
            );
        }
    }
    res.set_f64("defect_max", defect);
    res.set_f64("dual_mismatch_max", mismatch);
    res.check(PropertyCheck::at_most(
        "moment_defect",
        defect,
        cfg.tolerances.vanishing_moment,
    ));
    res.check(PropertyCheck::at_most(
        "dual_mismatch",
        mismatch,
        cfg.tolerances.duality,
    ));

    let kt = kernel_transpose(&cfg.kernel);
    let corr = CorrectionSpec::new(support.center(), cfg.atom_side, cfg.params.s)?;
    let frame = Frame {
        anchor: support.center(),
        scale: cfg.atom_side,
    };
    let eval = padded_window(&support, 4)?;
    let whole = Region::cube(eval.center(), eval.min_side());
    let (mut raw, mut extrapolated, mut sens) = (0.0f64, 0.0f64, 0.0f64);
    for g in multi_indices(n, cfg.params.s) {
        let rep = modified_on_monomial(
            &kt,
            &corr,
            &g,
            frame,
            &eval,
            cfg.monomial_padding,
            1.0,
            cfg.tolerances.sensitivity,
        )?;
        raw = raw.max(poly_distance(&rep.values, &whole, cfg.params.s, 1.0)?);
        extrapolated = extrapolated.max(poly_distance(&rep.extrapolated, &whole, cfg.params.s, 1.0)?);
        sens = sens.max(rep.sensitivity);
    }
    res.set_f64("monomial_poly_distance", raw);
    res.set_f64("monomial_poly_distance_extrapolated", extrapolated);
    res.set_f64("monomial_sensitivity", sens);
    res.check(PropertyCheck::at_most(
        "monomial_poly_distance",
        extrapolated,
        cfg.tolerances.vanishing_moment,
    ));
    Ok(res)
}
