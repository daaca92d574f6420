//! Multistart bounded Levenberg-Marquardt fits and model selection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{quadrant, Family, Hybrid, Lobe, ScatterModel, Shape, PATTERN_POINTS};
use crate::ntff::{AngularPattern, PatternKind};
use crate::{Error, Result};

/// Widest power beam (deg) counted as a specular lobe by default.
pub const SPECULAR_MAX_FWHM_DEG: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Lobe-width seeds for `a_A` (and `a_B`).
    pub a_seeds: Vec<f64>,
    pub a_min: f64,
    pub a_max: f64,
    /// Half-width (deg) of the window the HD specular lobe is fitted on.
    pub specular_window_deg: f64,
    pub max_iter: usize,
    /// Upper bound on specular/diffuse alternations for HD fits.
    pub hybrid_passes: usize,
    /// Relative cost decrease below which an iteration counts as converged.
    pub tol: f64,
    /// Two fits whose MSEs differ by less than this fraction of the smaller
    /// one are tied; ties go to the family with fewer parameters.
    pub parsimony: f64,
    /// Widest power beam (deg, full width at half maximum) still counted as a
    /// specular lobe.
    pub specular_max_fwhm_deg: f64,
    /// Diffuse-to-specular peak amplitude ratio from which the diffuse lobe
    /// is kept next to the specular one.
    pub diffuse_ratio: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            a_seeds: vec![5.0, 50.0, 500.0, 1500.0],
            a_min: 0.5,
            a_max: 5000.0,
            specular_window_deg: 3.0,
            max_iter: 200,
            hybrid_passes: 12,
            tol: 1e-10,
            parsimony: 0.1,
            specular_max_fwhm_deg: SPECULAR_MAX_FWHM_DEG,
            diffuse_ratio: 0.5,
        }
    }
}

/// A fitted model plus diagnostics from the multistart search.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: ScatterModel,
    /// Lowest MSE among the starting points, before any iteration (for HD,
    /// the joint MSE after the first specular/diffuse pass).
    pub initial_mse: f64,
    pub starts: usize,
    pub converged_starts: usize,
}

/// Samples to fit against and the bounds of the side they live on.
struct Target<'a> {
    angles: &'a [f64],
    y: &'a [f64],
    normal: f64,
    theta_lo: f64,
    theta_hi: f64,
}

/// Parameter vectors: L `[A₀]`, D `[A₀, ln a_A, θ_A]`,
/// BSc `[A₀, ln a_A, ln a_B, Λ, θ_A]`.
fn decode(family: Family, x: &[f64]) -> Lobe {
    match family {
        Family::Lambertian => Lobe::lambertian(x[0]),
        Family::Directive => Lobe::directive(x[0], x[1].exp(), x[2]),
        Family::Backscattering => Lobe::backscattering(x[0], x[1].exp(), x[2].exp(), x[3], x[4]),
        Family::HybridDirective => unreachable!(),
    }
}

fn bounds(family: Family, t: &Target, o: &FitOptions) -> (Vec<f64>, Vec<f64>) {
    let (la, ha) = (o.a_min.ln(), o.a_max.ln());
    let a0_max = 1e3;
    match family {
        Family::Lambertian => (vec![0.0], vec![a0_max]),
        Family::Directive => (vec![0.0, la, t.theta_lo], vec![a0_max, ha, t.theta_hi]),
        Family::Backscattering => (
            vec![0.0, la, la, 0.0, t.theta_lo],
            vec![a0_max, ha, ha, 1.0, t.theta_hi],
        ),
        Family::HybridDirective => unreachable!(),
    }
}

/// Lobe value and its gradient with respect to the encoded parameters.
fn eval_grad(family: Family, x: &[f64], theta: f64, normal: f64, g: &mut [f64]) -> f64 {
    const RAD: f64 = std::f64::consts::PI / 180.0;
    let half = |psi: f64| 0.5 * (1.0 + (psi * RAD).cos());
    match family {
        Family::Lambertian => {
            let c = ((theta - normal) * RAD).cos().max(0.0).sqrt();
            g[0] = c;
            x[0] * c
        }
        Family::Directive => {
            let (a0, a, psi) = (x[0], x[1].exp(), theta - x[2]);
            let b = half(psi);
            if b <= 0.0 {
                g.fill(0.0);
                return 0.0;
            }
            let shape = (0.5 * a * b.ln()).exp();
            let v = a0 * shape;
            g[0] = shape;
            g[1] = v * 0.5 * a * b.ln();
            g[2] = v * 0.5 * a * (0.5 * psi * RAD).tan() * RAD;
            v
        }
        Family::Backscattering => {
            let (a0, a, b, lam, th) = (x[0], x[1].exp(), x[2].exp(), x[3], x[4]);
            let (pa, pb) = (theta - th, theta + th);
            let (ba, bb) = (half(pa), half(pb));
            let p = if ba > 0.0 { (a * ba.ln()).exp() } else { 0.0 };
            let q = if bb > 0.0 { (b * bb.ln()).exp() } else { 0.0 };
            let s = (lam * p + (1.0 - lam) * q).max(0.0);
            let root = s.sqrt();
            let v = a0 * root;
            g[0] = root;
            let ds = if root > 0.0 { a0 / (2.0 * root) } else { 0.0 };
            let ln_or_zero = |v: f64| if v > 0.0 { v.ln() } else { 0.0 };
            g[1] = ds * lam * p * a * ln_or_zero(ba);
            g[2] = ds * (1.0 - lam) * q * b * ln_or_zero(bb);
            g[3] = ds * (p - q);
            g[4] = ds
                * (lam * a * p * (0.5 * pa * RAD).tan() - (1.0 - lam) * b * q * (0.5 * pb * RAD).tan())
                * RAD;
            v
        }
        Family::HybridDirective => unreachable!(),
    }
}

/// Residuals `A(θ) − y` and, when asked, their Jacobian.
fn residuals(family: Family, t: &Target, x: &[f64], r: &mut [f64], jac: Option<&mut DMatrix<f64>>) {
    let mut g = [0.0; 5];
    match jac {
        Some(j) => {
            for (i, (&a, &y)) in t.angles.iter().zip(t.y).enumerate() {
                r[i] = eval_grad(family, x, a, t.normal, &mut g) - y;
                for k in 0..x.len() {
                    j[(i, k)] = if g[k].is_finite() { g[k] } else { 0.0 };
                }
            }
        }
        None => {
            let lobe = decode(family, x);
            for ((r, &a), &y) in r.iter_mut().zip(t.angles).zip(t.y) {
                *r = lobe.eval(a, t.normal) - y;
            }
        }
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>()
}

struct LmResult {
    x: Vec<f64>,
    cost: f64,
    converged: bool,
}

/// Bounded Levenberg-Marquardt: steps are projected onto the box and only
/// accepted when they lower the cost, so the result never ends worse than
/// its starting point.
fn levenberg_marquardt(
    f: &dyn Fn(&[f64], &mut [f64], Option<&mut DMatrix<f64>>),
    m: usize,
    x0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    o: &FitOptions,
) -> LmResult {
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for (v, (&l, &h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
            *v = v.clamp(l, h);
        }
    };
    let mut x = x0;
    clamp(&mut x);
    let mut r = vec![0.0; m];
    f(&x, &mut r, None);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut trial_r = vec![0.0; m];
    for _ in 0..o.max_iter {
        if c == 0.0 {
            return LmResult { x, cost: c, converged: true };
        }
        f(&x, &mut r, Some(&mut jac));
        // Bound-active coordinates whose gradient points outward are frozen.
        for j in 0..n {
            let gj: f64 = (0..m).map(|i| jac[(i, j)] * r[i]).sum();
            if (x[j] <= lo[j] && gj > 0.0) || (x[j] >= hi[j] && gj < 0.0) {
                jac.column_mut(j).fill(0.0);
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            for k in 0..n {
                trial[k] = x[k] + delta[k];
            }
            clamp(&mut trial);
            f(&trial, &mut trial_r, None);
            let ct = cost(&trial_r);
            if ct < c {
                let step = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-3))
                    .fold(0.0, f64::max);
                let gain = (c - ct) / c;
                x.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut trial_r);
                c = ct;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if gain < o.tol || step < 1e-12 {
                    return LmResult { x, cost: c, converged: true };
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            // No descent direction left inside the box: a stationary point.
            return LmResult { x, cost: c, converged: true };
        }
    }
    LmResult { x, cost: c, converged: false }
}

/// Top `k` local maxima of `y` (by value), as angles.
fn local_maxima(angles: &[f64], y: &[f64], k: usize) -> Vec<f64> {
    let mut peaks: Vec<(f64, f64)> = (0..y.len())
        .filter(|&i| {
            let left = i == 0 || y[i] >= y[i - 1];
            let right = i + 1 == y.len() || y[i] > y[i + 1];
            left && right && y[i] > 0.0
        })
        .map(|i| (y[i], angles[i]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    peaks.into_iter().take(k).map(|p| p.1).collect()
}

/// Least-squares `A₀` for a fixed lobe shape.
fn best_amplitude(family: Family, t: &Target, mut x: Vec<f64>) -> Vec<f64> {
    x[0] = 1.0;
    let shape = decode(family, &x);
    let (mut sy, mut ss) = (0.0, 0.0);
    for (&a, &y) in t.angles.iter().zip(t.y) {
        let s = shape.eval(a, t.normal);
        sy += s * y;
        ss += s * s;
    }
    x[0] = if ss > 0.0 { (sy / ss).max(0.0) } else { 0.0 };
    x
}

fn starts(family: Family, t: &Target, theta_seeds: &[f64], o: &FitOptions) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    match family {
        Family::Lambertian => out.push(vec![0.0]),
        Family::Directive => {
            for &th in theta_seeds {
                for &a in &o.a_seeds {
                    out.push(vec![0.0, a.ln(), th]);
                }
            }
        }
        Family::Backscattering => {
            for &th in theta_seeds {
                for &a in &o.a_seeds {
                    for &b in &o.a_seeds {
                        out.push(vec![0.0, a.ln(), b.ln(), 0.5, th]);
                    }
                }
            }
        }
        Family::HybridDirective => unreachable!(),
    }
    out.into_iter().map(|x| best_amplitude(family, t, x)).collect()
}

struct LobeFit {
    lobe: Lobe,
    mse: f64,
    initial_mse: f64,
    starts: usize,
    converged: usize,
}

fn fit_lobe(family: Family, t: &Target, theta_seeds: &[f64], o: &FitOptions) -> Result<LobeFit> {
    let (lo, hi) = bounds(family, t, o);
    let m = t.angles.len();
    let x0s = starts(family, t, theta_seeds, o);
    let f = |x: &[f64], r: &mut [f64], j: Option<&mut DMatrix<f64>>| residuals(family, t, x, r, j);
    let mut scratch = vec![0.0; m];
    let initial = x0s
        .iter()
        .map(|x| {
            f(x, &mut scratch, None);
            cost(&scratch)
        })
        .fold(f64::INFINITY, f64::min);
    let results: Vec<LmResult> = x0s
        .par_iter()
        .map(|x0| levenberg_marquardt(&f, m, x0.clone(), &lo, &hi, o))
        .collect();
    let converged = results.iter().filter(|r| r.converged).count();
    // Deterministic reduction: lowest cost, earliest start on ties.
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("at least one start");
    if converged == 0 {
        return Err(Error::FitFailed { best_mse: best.cost / m as f64 });
    }
    Ok(LobeFit {
        lobe: decode(family, &best.x),
        mse: best.cost / m as f64,
        initial_mse: initial / m as f64,
        starts: x0s.len(),
        converged,
    })
}

fn check_pattern(p: &AngularPattern) -> Result<(f64, f64, f64)> {
    if p.values.len() != PATTERN_POINTS || p.angles_deg.len() != PATTERN_POINTS {
        return Err(Error::invalid(
            "pattern",
            format!("expected {PATTERN_POINTS} samples, got {}", p.values.len()),
        ));
    }
    let q = quadrant(p.kind)?;
    if p.values.iter().any(|v| !v.norm().is_finite()) {
        return Err(Error::invalid("pattern", "non-finite sample"));
    }
    Ok(q)
}

fn theta_seeds(p: &AngularPattern, y: &[f64]) -> Vec<f64> {
    let mut seeds = vec![p.kind.specular_deg(p.meta.theta_i_deg)];
    for th in local_maxima(&p.angles_deg, y, 3) {
        if seeds.iter().all(|s| (s - th).abs() > 0.5) {
            seeds.push(th);
        }
    }
    seeds
}

fn fit_hybrid(p: &AngularPattern, y: &[f64], o: &FitOptions) -> Result<FitReport> {
    let (normal, lo, hi) = check_pattern(p)?;
    let spec = p.kind.specular_deg(p.meta.theta_i_deg);
    let w = o.specular_window_deg;
    let (win_a, win_y): (Vec<f64>, Vec<f64>) = p
        .angles_deg
        .iter()
        .zip(y)
        .filter(|(a, _)| (**a - spec).abs() <= w + 1e-9)
        .map(|(a, v)| (*a, *v))
        .unzip();
    if win_a.len() < 3 {
        return Err(Error::invalid("pattern", "specular window holds fewer than 3 samples"));
    }
    let without = |v: f64, other: f64| (v * v - other * other).max(0.0).sqrt();
    let mut best: Option<FitReport> = None;
    for fam in [Family::Lambertian, Family::Directive, Family::Backscattering] {
        // Alternate: specular lobe on the window against the data minus the
        // diffuse power, diffuse lobe everywhere against the data minus the
        // specular power. The first pass has no diffuse estimate yet.
        let mut diffuse: Option<Lobe> = None;
        let mut fam_best: Option<FitReport> = None;
        for _ in 0..o.hybrid_passes {
            let win_target: Vec<f64> = win_a
                .iter()
                .zip(&win_y)
                .map(|(&a, &v)| without(v, diffuse.map_or(0.0, |d| d.eval(a, normal))))
                .collect();
            let win = Target {
                angles: &win_a,
                y: &win_target,
                normal,
                theta_lo: (spec - w).max(lo),
                theta_hi: (spec + w).min(hi),
            };
            let s = fit_lobe(Family::Directive, &win, &[spec], o)?;
            let residual: Vec<f64> = p
                .angles_deg
                .iter()
                .zip(y)
                .map(|(&a, &v)| without(v, s.lobe.eval(a, normal)))
                .collect();
            let full = Target { angles: &p.angles_deg, y: &residual, normal, theta_lo: lo, theta_hi: hi };
            let d = fit_lobe(fam, &full, &theta_seeds(p, &residual), o)?;
            let mut model = ScatterModel {
                kind: p.kind,
                shape: Shape::Hybrid(Hybrid {
                    specular: s.lobe,
                    diffuse: d.lobe,
                    specular_mse: s.mse,
                    diffuse_mse: d.mse,
                }),
                mse: 0.0,
            };
            model.mse = model.mse_against(&p.angles_deg, y);
            diffuse = Some(d.lobe);
            match &mut fam_best {
                None => {
                    fam_best = Some(FitReport {
                        model,
                        initial_mse: model.mse,
                        starts: s.starts + d.starts,
                        converged_starts: s.converged + d.converged,
                    })
                }
                Some(r) if model.mse < r.model.mse * (1.0 - 1e-9) => r.model = model,
                Some(_) => break,
            }
        }
        let r = fam_best.expect("at least one pass");
        if best.as_ref().is_none_or(|b| r.model.mse < b.model.mse) {
            best = Some(r);
        }
    }
    Ok(best.expect("three diffuse families tried"))
}

/// Fit one family to a reflection or transmission pattern and report the
/// multistart diagnostics.
pub fn fit_model_report(p: &AngularPattern, family: Family, o: &FitOptions) -> Result<FitReport> {
    let (normal, lo, hi) = check_pattern(p)?;
    let y = p.magnitudes();
    if family == Family::HybridDirective {
        return fit_hybrid(p, &y, o);
    }
    let t = Target { angles: &p.angles_deg, y: &y, normal, theta_lo: lo, theta_hi: hi };
    let seeds = theta_seeds(p, &y);
    let fit = fit_lobe(family, &t, &seeds, o)?;
    let mut model = ScatterModel::single(p.kind, fit.lobe);
    model.mse = model.mse_against(&p.angles_deg, &y);
    Ok(FitReport {
        model,
        initial_mse: fit.initial_mse,
        starts: fit.starts,
        converged_starts: fit.converged,
    })
}

pub fn fit_model(p: &AngularPattern, family: Family) -> Result<ScatterModel> {
    fit_model_report(p, family, &FitOptions::default()).map(|r| r.model)
}

/// How the pattern splits into specular and diffuse scattering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// A narrow specular lobe with at most a weak diffuse floor.
    Specular,
    /// Specular lobe plus a diffuse lobe of comparable strength.
    Hybrid,
    /// No specular lobe survives.
    Diffuse,
}

/// Every family's fit and the one chosen.
#[derive(Debug, Clone)]
pub struct Selection {
    pub chosen: ScatterModel,
    pub regime: Regime,
    pub candidates: Vec<ScatterModel>,
}

/// Smallest `a` of a directive lobe whose power beam is at most `fwhm_deg`
/// wide: `cos(ψ/2)^(2a) = 1/2` at `ψ = fwhm/2`.
pub fn specular_min_a(fwhm_deg: f64) -> f64 {
    let half = (fwhm_deg / 4.0).to_radians();
    std::f64::consts::LN_2 / (-2.0 * half.cos().ln())
}

/// Classifies the pattern from its HD decomposition, then picks the model.
///
/// The specular lobe counts when it is narrow and dominates the diffuse lobe
/// at its own peak. A counted specular lobe with a diffuse lobe within
/// `diffuse_ratio` of it gives HD; with a weaker diffuse lobe the pattern is
/// roughness-attenuated specular and the specular D lobe alone is returned.
/// Without a specular lobe the lowest-MSE diffuse family wins, treating MSEs
/// within `parsimony` of the minimum as ties won by the smaller model.
pub fn select_model_with(p: &AngularPattern, o: &FitOptions) -> Result<Selection> {
    let candidates: Vec<ScatterModel> = Family::ALL
        .iter()
        .map(|&f| fit_model_report(p, f, o).map(|r| r.model))
        .collect::<Result<_>>()?;
    let hd = candidates
        .iter()
        .find_map(|m| match m.shape {
            Shape::Hybrid(h) => Some(h),
            Shape::Single(_) => None,
        })
        .expect("HD is always fitted");
    let (normal, lo, hi) = quadrant(p.kind)?;
    let spec = hd.specular;
    let diffuse_peak = (0..PATTERN_POINTS)
        .map(|i| hd.diffuse.eval(lo + (hi - lo) * i as f64 / (PATTERN_POINTS - 1) as f64, normal))
        .fold(0.0, f64::max);
    let specular_present = spec.a0 > 0.0
        && spec.a_a >= specular_min_a(o.specular_max_fwhm_deg)
        && spec.a0 >= hd.diffuse.eval(spec.theta_a, normal);
    let (regime, chosen) = if specular_present && diffuse_peak >= o.diffuse_ratio * spec.a0 {
        let m = candidates.iter().find(|m| m.family() == Family::HybridDirective).copied();
        (Regime::Hybrid, m.expect("HD is always fitted"))
    } else if specular_present {
        let mut m = ScatterModel::single(p.kind, spec);
        m.mse = m.mse_against(&p.angles_deg, &p.magnitudes());
        (Regime::Specular, m)
    } else {
        let diffuse: Vec<&ScatterModel> =
            candidates.iter().filter(|m| m.family() != Family::HybridDirective).collect();
        let best = diffuse.iter().map(|m| m.mse).fold(f64::INFINITY, f64::min);
        let m = **diffuse
            .iter()
            .filter(|m| m.mse <= best * (1.0 + o.parsimony))
            .min_by(|a, b| {
                a.n_params()
                    .cmp(&b.n_params())
                    .then(a.mse.total_cmp(&b.mse))
                    .then(a.family().cmp(&b.family()))
            })
            .expect("the minimum is always a candidate");
        (Regime::Diffuse, m)
    };
    Ok(Selection { chosen, regime, candidates })
}

pub fn select_model(p: &AngularPattern) -> Result<ScatterModel> {
    select_model_with(p, &FitOptions::default()).map(|s| s.chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Directive to hybrid: a diffuse lobe appears next to the specular.
    DiffuseOnset,
    /// The specular lobe is gone and a purely diffuse model takes over.
    SpecularVanished,
}

#[derive(Debug, Clone)]
pub struct TrackRow {
    pub sigma_h: f64,
    pub specular: f64,
    pub model: ScatterModel,
    pub regime: Regime,
    pub transition: Option<Transition>,
}

/// Specular magnitude and selected family along a roughness sweep. Input
/// patterns must share a side and are reported in ascending `σ_h`.
pub fn specular_track(patterns: &[(f64, AngularPattern)], o: &FitOptions) -> Result<Vec<TrackRow>> {
    let mut sorted: Vec<&(f64, AngularPattern)> = patterns.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rows: Vec<TrackRow> = Vec::with_capacity(sorted.len());
    for (sigma, p) in sorted {
        if p.kind == PatternKind::Rcs {
            return Err(Error::invalid("pattern", "RCS patterns are not fitted"));
        }
        let Selection { chosen: model, regime, .. } = select_model_with(p, o)?;
        let transition = rows.last().and_then(|prev| match (prev.regime, regime) {
            (Regime::Specular, Regime::Hybrid) => Some(Transition::DiffuseOnset),
            (Regime::Specular | Regime::Hybrid, Regime::Diffuse) => Some(Transition::SpecularVanished),
            _ => None,
        });
        rows.push(TrackRow { sigma_h: *sigma, specular: p.specular(), model, regime, transition });
    }
    Ok(rows)
}
