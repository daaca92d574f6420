//! Monte Carlo ensembles of rough-slab realizations.
//!
//! Every realization draws its two interface profiles from one row of a
//! design matrix (Latin hypercube by default), runs the FDTD solver against a
//! vacuum reference shared by the whole ensemble, and contributes the
//! magnitudes of its far-field coefficients. Means are arithmetic averages
//! of magnitudes; phases are discarded so the diffuse part survives.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fdtd::{incident_reference, simulate_with_reference, IncidentReference, SimOptions, SlabScene};
use crate::ntff::{
    extract_coefficients, power_balance, reflection_angles, transmission_angles, AngularPattern,
    PatternKind, PatternMeta,
};
use crate::surface::{
    draws_per_profile, generate_from_draws, iid_normal_draws, latin_hypercube_seeds, stream_rng,
    DrawMatrix, HeightProfile, SpectrumKind, SurfaceSpec,
};
use crate::{Error, Result};

/// How the unit-normal draws behind each profile are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    #[serde(alias = "latin-hypercube", alias = "latinhypercube")]
    Lhs,
    Iid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    /// Flat scene; its cell size and aperture define the profile sampling.
    pub base: SlabScene,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub sigma_h_upper: f64,
    pub sigma_h_lower: f64,
    pub corr_length: f64,
    pub spectrum: SpectrumKind,
    pub sampling: Sampling,
    /// Label written into pattern headers.
    pub material: String,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::invalid("n_realizations", "must be at least 1"));
        }
        for (name, v) in [
            ("sigma_h_upper", self.sigma_h_upper),
            ("sigma_h_lower", self.sigma_h_lower),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} is not a finite non-negative height")));
            }
        }
        if !(self.corr_length.is_finite() && self.corr_length > 0.0) {
            return Err(Error::invalid("corr_length", "must be positive"));
        }
        self.base.validate()
    }

    fn surface_spec(&self, rms_height: f64, seed: u64) -> SurfaceSpec {
        SurfaceSpec {
            n_points: self.base.aperture_cells,
            spacing: self.base.dx,
            rms_height,
            corr_length: self.corr_length,
            kind: self.spectrum,
            seed,
        }
    }

    /// Design matrix with one row per realization: the upper profile's
    /// draws followed by the lower profile's, drawn independently.
    pub fn draws(&self) -> DrawMatrix {
        let dims = 2 * draws_per_profile(self.base.aperture_cells);
        match self.sampling {
            Sampling::Lhs => latin_hypercube_seeds(self.n_realizations, dims, self.master_seed),
            Sampling::Iid => iid_normal_draws(self.n_realizations, dims, self.master_seed),
        }
    }

    /// Scene of realization `index` built from its design row.
    pub fn realization_scene(&self, index: usize, draws: &DrawMatrix) -> Result<SlabScene> {
        let row = draws.row(index);
        let half = row.len() / 2;
        let seed = realization_seed(self.master_seed, index);
        let profile = |sigma: f64, d: &[f64]| -> Result<Option<HeightProfile>> {
            if sigma == 0.0 {
                return Ok(None);
            }
            generate_from_draws(&self.surface_spec(sigma, seed), d).map(Some)
        };
        let up = profile(self.sigma_h_upper, &row[..half])?;
        let lo = profile(self.sigma_h_lower, &row[half..])?;
        let mut scene = self.base.clone().with_profiles(up, lo);
        // Same clearance for every member (and the reference), whatever the
        // individual draws.
        scene.roughness_allowance = self.base.roughness_allowance.max(6.0 * self.sigma_h_upper.max(self.sigma_h_lower));
        Ok(scene)
    }

    fn meta(&self, n: usize) -> PatternMeta {
        PatternMeta {
            theta_i_deg: self.base.theta_i.to_degrees(),
            frequency: self.base.frequency,
            material: self.material.clone(),
            sigma_h_upper: self.sigma_h_upper,
            sigma_h_lower: self.sigma_h_lower,
            n_realizations: n,
            stderr_db_max: None,
        }
    }
}

/// Identifier of realization `index`, listed in the manifest. Distinct
/// indices map to distinct ChaCha streams of the master key.
pub fn realization_seed(master: u64, index: usize) -> u64 {
    use rand::RngCore;
    stream_rng(master, "realization", index as u64).next_u64()
}

/// Outcome of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub index: usize,
    pub seed: u64,
    /// `|R(θ)|` on the reflection grid and `|T(θ)|` on the transmission grid.
    pub reflection: Vec<f64>,
    pub transmission: Vec<f64>,
    /// Outgoing far-field power over the reference incident power.
    pub power_ratio: f64,
    pub steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Mean magnitudes (stored as real values).
    pub reflection: AngularPattern,
    pub transmission: AngularPattern,
    /// Standard error of the mean magnitude per angle (linear).
    pub stderr_reflection: Vec<f64>,
    pub stderr_transmission: Vec<f64>,
    pub members: Vec<Member>,
}

/// Order-independent sum: fixed binary tree over the input order.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Mean and standard error of the mean per angle.
fn angle_stats(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let width = rows[0].len();
    let mut mean = Vec::with_capacity(width);
    let mut se = Vec::with_capacity(width);
    let mut col = vec![0.0; n];
    for a in 0..width {
        for (c, r) in col.iter_mut().zip(rows) {
            *c = r[a];
        }
        let m = pairwise_sum(&col) / n as f64;
        let dev: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
        let s = if n > 1 {
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        se.push(s);
    }
    (mean, se)
}

/// Standard error of a mean magnitude expressed in dB: `20·log10(1 + se/mean)`.
pub fn stderr_db(mean: f64, se: f64) -> f64 {
    if mean > 0.0 {
        20.0 * (1.0 + se / mean).log10()
    } else {
        0.0
    }
}

impl EnsembleResult {
    /// Statistics over `members` (sorted by index first, so the result does
    /// not depend on completion order).
    pub fn from_members(spec: &EnsembleSpec, mut members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("members", "empty ensemble"));
        }
        members.sort_by_key(|m| m.index);
        let r_rows: Vec<&[f64]> = members.iter().map(|m| m.reflection.as_slice()).collect();
        let t_rows: Vec<&[f64]> = members.iter().map(|m| m.transmission.as_slice()).collect();
        let (r_mean, r_se) = angle_stats(&r_rows);
        let (t_mean, t_se) = angle_stats(&t_rows);
        let mut meta = spec.meta(members.len());
        let worst = r_mean
            .iter()
            .zip(&r_se)
            .chain(t_mean.iter().zip(&t_se))
            .map(|(&m, &s)| stderr_db(m, s))
            .fold(0.0, f64::max);
        if members.len() > 1 {
            meta.stderr_db_max = Some(worst);
        }
        let pattern = |kind, angles: Vec<f64>, mean: Vec<f64>| AngularPattern {
            kind,
            angles_deg: angles,
            values: mean.into_iter().map(|m| Complex64::new(m, 0.0)).collect(),
            meta: meta.clone(),
        };
        Ok(Self {
            reflection: pattern(PatternKind::Reflection, reflection_angles(), r_mean),
            transmission: pattern(PatternKind::Transmission, transmission_angles(), t_mean),
            stderr_reflection: r_se,
            stderr_transmission: t_se,
            members,
        })
    }

    pub fn n_realizations(&self) -> usize {
        self.members.len()
    }

    /// Statistics of the first `n` members alone.
    pub fn subset(&self, spec: &EnsembleSpec, n: usize) -> Result<Self> {
        Self::from_members(spec, self.members.iter().take(n).cloned().collect())
    }

    /// Per-angle standard error in dB for reflection then transmission.
    pub fn stderr_db(&self) -> (Vec<f64>, Vec<f64>) {
        let conv = |p: &AngularPattern, se: &[f64]| -> Vec<f64> {
            p.values.iter().zip(se).map(|(m, &s)| stderr_db(m.re, s)).collect()
        };
        (
            conv(&self.reflection, &self.stderr_reflection),
            conv(&self.transmission, &self.stderr_transmission),
        )
    }

    /// One line per realization: `index seed steps converged power_ratio`.
    pub fn manifest(&self, spec: &EnsembleSpec) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# master_seed {} sampling {:?} n {} sigma_h_upper {:e} sigma_h_lower {:e} corr_length {:e}",
            spec.master_seed,
            spec.sampling,
            self.members.len(),
            spec.sigma_h_upper,
            spec.sigma_h_lower,
            spec.corr_length
        );
        let _ = writeln!(out, "# index seed steps converged power_ratio");
        for m in &self.members {
            let _ = writeln!(
                out,
                "{} {} {} {} {:.6}",
                m.index, m.seed, m.steps, m.converged, m.power_ratio
            );
        }
        out
    }
}

/// Largest per-angle standard error of the mean, in dB, over both patterns.
pub fn rms_error_infnorm(result: &EnsembleResult) -> Result<f64> {
    if result.n_realizations() < 2 {
        return Err(Error::invalid("n_realizations", "standard error needs at least 2 realizations"));
    }
    let (r, t) = result.stderr_db();
    Ok(r.into_iter().chain(t).fold(0.0, f64::max))
}

/// Angular step used for the power balance of each member.
const POWER_STEP_DEG: f64 = 0.25;

fn run_member(
    spec: &EnsembleSpec,
    opts: &SimOptions,
    reference: &IncidentReference,
    draws: &DrawMatrix,
    index: usize,
) -> Result<Member> {
    let seed = realization_seed(spec.master_seed, index);
    let wrap = |e: Error| Error::Realization {
        index,
        seed,
        source: Box::new(e),
    };
    let scene = spec.realization_scene(index, draws).map_err(wrap)?;
    let rec = simulate_with_reference(&scene, opts, reference).map_err(wrap)?;
    let (r, t) = extract_coefficients(&rec, &spec.meta(1)).map_err(wrap)?;
    let power_ratio = power_balance(&rec, &reference.record, POWER_STEP_DEG).map_err(wrap)?;
    Ok(Member {
        index,
        seed,
        reflection: r.magnitudes(),
        transmission: t.magnitudes(),
        power_ratio,
        steps: rec.steps,
        converged: rec.converged,
    })
}

/// Runs every realization on the current rayon pool.
pub fn run_ensemble(spec: &EnsembleSpec, opts: &SimOptions) -> Result<EnsembleResult> {
    run_ensemble_with(spec, opts, &|_, _| {})
}

/// As [`run_ensemble`], calling `progress(done, total)` after each member.
pub fn run_ensemble_with(
    spec: &EnsembleSpec,
    opts: &SimOptions,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<EnsembleResult> {
    spec.validate()?;
    let draws = spec.draws();
    let first = spec.realization_scene(0, &draws)?;
    let reference = incident_reference(&first, opts)?;
    let member_opts = SimOptions {
        column_parallel: opts.column_parallel && spec.n_realizations < rayon::current_num_threads(),
        ..opts.clone()
    };
    let done = std::sync::atomic::AtomicUsize::new(0);
    let n = spec.n_realizations;
    let members = (0..n)
        .into_par_iter()
        .map(|i| {
            let m = run_member(spec, &member_opts, &reference, &draws, i);
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, n);
            m
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleResult::from_members(spec, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{medium_at, MaterialParams};

    fn spec(n: usize, sigma: f64) -> EnsembleSpec {
        let slab = medium_at(&MaterialParams::plasterboard(), 28.0);
        let base = SlabScene::flat(slab, 0.1, 30f64.to_radians());
        EnsembleSpec {
            corr_length: 0.5 * base.wavelength(),
            base,
            n_realizations: n,
            master_seed: 11,
            sigma_h_upper: sigma,
            sigma_h_lower: sigma,
            spectrum: SpectrumKind::Gaussian,
            sampling: Sampling::Lhs,
            material: "plasterboard".into(),
        }
    }

    fn member(index: usize, r: Vec<f64>, t: Vec<f64>) -> Member {
        Member {
            index,
            seed: index as u64,
            reflection: r,
            transmission: t,
            power_ratio: 1.0,
            steps: 0,
            converged: true,
        }
    }

    #[test]
    fn identical_members_have_zero_error() {
        let s = spec(3, 1e-3);
        let ms = (0..3).map(|i| member(i, vec![0.3; 181], vec![0.2; 181])).collect();
        let res = EnsembleResult::from_members(&s, ms).unwrap();
        assert_eq!(rms_error_infnorm(&res).unwrap(), 0.0);
        assert_eq!(res.reflection.values[10].re, 0.3);
    }

    #[test]
    fn statistics_are_order_independent() {
        let s = spec(5, 1e-3);
        let ms: Vec<Member> = (0..5)
            .map(|i| {
                let v = 0.1 + 0.037 * (i as f64).powi(2);
                member(i, vec![v; 181], vec![1.0 / (1.0 + v); 181])
            })
            .collect();
        let a = EnsembleResult::from_members(&s, ms.clone()).unwrap();
        let mut rev = ms;
        rev.reverse();
        let b = EnsembleResult::from_members(&s, rev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standard_error_matches_textbook_formula() {
        let s = spec(4, 1e-3);
        let vals = [1.0, 2.0, 4.0, 5.0];
        let ms = vals.iter().enumerate().map(|(i, &v)| member(i, vec![v; 181], vec![v; 181])).collect();
        let res = EnsembleResult::from_members(&s, ms).unwrap();
        // mean 3, sample variance 10/3, se = sqrt(10/3/4)
        let se = (10.0f64 / 3.0 / 4.0).sqrt();
        assert!((res.stderr_reflection[0] - se).abs() < 1e-15);
        let expect = 20.0 * (1.0 + se / 3.0).log10();
        assert!((rms_error_infnorm(&res).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn single_member_has_no_error_estimate() {
        let s = spec(1, 0.0);
        let res = EnsembleResult::from_members(&s, vec![member(0, vec![0.5; 181], vec![0.5; 181])]).unwrap();
        assert!(rms_error_infnorm(&res).is_err());
        assert_eq!(res.reflection.meta.stderr_db_max, None);
    }

    #[test]
    fn realization_scenes_share_one_grid() {
        let s = spec(4, 2e-3);
        let d = s.draws();
        let a = s.realization_scene(0, &d).unwrap();
        let b = s.realization_scene(3, &d).unwrap();
        assert_eq!(a.roughness_allowance, b.roughness_allowance);
        assert_ne!(a.upper_profile, b.upper_profile);
        assert_ne!(a.upper_profile.as_ref().unwrap().heights, a.lower_profile.as_ref().unwrap().heights);
        let opts = SimOptions::default();
        assert_eq!(
            crate::fdtd::plan(&a, &opts).unwrap(),
            crate::fdtd::plan(&b.vacuum_reference(), &opts).unwrap()
        );
    }

    #[test]
    fn zero_roughness_yields_flat_scene() {
        let s = spec(1, 0.0);
        let sc = s.realization_scene(0, &s.draws()).unwrap();
        assert!(sc.upper_profile.is_none() && sc.lower_profile.is_none());
        assert_eq!(sc, s.base);
    }

    #[test]
    fn realization_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..500).map(|i| realization_seed(7, i)).collect();
        assert_eq!(seeds.len(), 500);
    }

    #[test]
    fn pairwise_sum_is_exact_on_small_integers() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }
}
