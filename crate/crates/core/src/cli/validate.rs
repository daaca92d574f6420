//! Built-in oracle suite: each check runs a small problem with a known
//! answer and reports the measured deviation against its limit.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Deserialize;

use crate::fdtd::{incident_reference, simulate_slab, simulate_with_reference, ProbeLine, SimOptions, SlabScene};
use crate::media::{medium_at, wavelength, MaterialParams, Medium, C0, EPS0, ETA0};
use crate::ntff::{gaussian_taper, bistatic_rcs, extract_coefficients, far_field, power_balance, AngularPattern, PatternMeta, Side};
use crate::sbr::{antenna_gain, dipole_gain, rss_map, GridSpec, Limits, RayScene, RssMode, Transmitter, V3};
use crate::surface::{generate_surface, SpectrumKind, SurfaceSpec};
use crate::Result;

/// Limits of the suite. Every field has a default, so an empty table is a
/// valid configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub frequency_ghz: f64,
    pub theta_i_deg: f64,
    /// Largest |FDTD − transfer matrix| of the specular |R| and |T| (dB).
    pub tmm_tolerance_db: f64,
    /// Largest far-field error of a uniform line current, relative to the
    /// beam peak.
    pub ntff_tolerance: f64,
    pub friis_tolerance_db: f64,
    /// Largest outgoing/incident power ratio for a lossless rough slab.
    pub passivity_limit: f64,
    /// Smallest specular-peak to sidelobe ratio of a single rough interface (dB).
    pub sidelobe_min_db: f64,
    /// Gaussian taper width, as a fraction of the probe-line length, applied
    /// to the equivalent currents of the rough-interface run.
    pub taper: f64,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            frequency_ghz: 28.0,
            theta_i_deg: 30.0,
            tmm_tolerance_db: 0.5,
            ntff_tolerance: 0.01,
            friis_tolerance_db: 0.1,
            passivity_limit: 1.02,
            sidelobe_min_db: 35.0,
            taper: 0.25,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub limit: f64,
    /// `true` when `measured` must stay at or below `limit`, `false` when it
    /// must reach it.
    pub upper_bound: bool,
    pub unit: &'static str,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.upper_bound {
            self.measured <= self.limit
        } else {
            self.measured >= self.limit
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let op = if c.upper_bound { "<=" } else { ">=" };
            let _ = writeln!(
                s,
                "{:<24} {:>12.6} {op} {:<10} {:<6} {}",
                c.name,
                c.measured,
                c.limit,
                c.unit,
                if c.passed() { "pass" } else { "FAIL" }
            );
        }
        s
    }
}

/// TE reflection and transmission of a layer stack by characteristic
/// matrices. `layers` are `(ε_r, thickness)` between vacuum above and the
/// half-space `substrate` below.
pub fn characteristic_matrix_te(
    layers: &[(Complex64, f64)],
    substrate: Complex64,
    theta: f64,
    frequency: f64,
) -> (Complex64, Complex64) {
    let k0 = 2.0 * PI * frequency / C0;
    let s2 = theta.sin().powi(2);
    let q = |eps: Complex64| {
        let v = (eps - s2).sqrt();
        if v.re < 0.0 { -v } else { v }
    };
    let j = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let mut m = [[one, 0.0 * one], [0.0 * one, one]];
    for &(eps, d) in layers {
        let ql = q(eps);
        let delta = k0 * ql * d;
        let (c, s) = (delta.cos(), delta.sin());
        let l = [[c, j * s / ql], [j * ql * s, c]];
        m = [
            [m[0][0] * l[0][0] + m[0][1] * l[1][0], m[0][0] * l[0][1] + m[0][1] * l[1][1]],
            [m[1][0] * l[0][0] + m[1][1] * l[1][0], m[1][0] * l[0][1] + m[1][1] * l[1][1]],
        ];
    }
    let q0 = Complex64::new(theta.cos(), 0.0);
    let qs = q(substrate);
    let a = q0 * m[0][0] + q0 * qs * m[0][1];
    let b = m[1][0] + qs * m[1][1];
    ((a - b) / (a + b), 2.0 * q0 / (a + b))
}

fn db(v: f64) -> f64 {
    20.0 * v.log10()
}

/// Flat 10 cm plasterboard: FDTD specular |R| and |T| against the
/// characteristic-matrix solution. Returns the larger deviation in dB.
pub fn flat_slab_deviation_db(material: &MaterialParams, f_ghz: f64, theta_i_deg: f64, opts: &SimOptions) -> Result<f64> {
    let slab = medium_at(material, f_ghz);
    let scene = SlabScene::flat(slab, 0.1, theta_i_deg.to_radians());
    let rec = simulate_slab(&scene, opts)?;
    let (r, t) = extract_coefficients(&rec, &PatternMeta::single(theta_i_deg, slab.frequency, &material.name))?;
    let (r0, t0) = characteristic_matrix_te(&[(slab.eps_r(), 0.1)], Complex64::new(1.0, 0.0), scene.theta_i, slab.frequency);
    Ok((db(r.specular()) - db(r0.norm())).abs().max((db(t.specular()) - db(t0.norm())).abs()))
}

/// Uniform 10λ electric line current: largest far-field error against
/// `√(jk/8π)·η₀·L·sinc(kL sinθ/2)`, relative to the peak.
pub fn line_source_error(frequency: f64) -> Result<f64> {
    let lambda = wavelength(frequency);
    let k = 2.0 * PI / lambda;
    let n = 2001;
    let len = 10.0 * lambda;
    let x: Vec<f64> = (0..n).map(|i| i as f64 * len / (n - 1) as f64 - len / 2.0).collect();
    let line = ProbeLine {
        z: 0.0,
        ey: vec![Complex64::new(0.0, 0.0); n],
        hx: vec![Complex64::new(1.0, 0.0); n],
        x,
    };
    let angles: Vec<f64> = (0..=180).map(|i| -90.0 + i as f64).collect();
    let got = far_field(&line, Side::Lower, &angles, frequency)?;
    let peak = (k / (8.0 * PI)).sqrt() * ETA0 * len;
    Ok(angles
        .iter()
        .zip(&got)
        .map(|(a, g)| {
            let u = k * a.to_radians().sin() * len / 2.0;
            let sinc = if u.abs() < 1e-12 { 1.0 } else { u.sin() / u };
            (g.norm() - peak * sinc.abs()).abs() / peak
        })
        .fold(0.0, f64::max))
}

/// Empty scene traced at tessellation level 4 against the Friis equation
/// on a 9 × 9 grid; largest deviation in dB.
pub fn friis_deviation_db(f_ghz: f64) -> Result<f64> {
    let tx = Transmitter {
        position: V3::new(0.0, 0.0, 1.5),
        boresight: V3::new(1.0, 0.0, 0.0),
        power_dbm: 20.0,
        exponent: 4.0,
    };
    let scene = RayScene {
        frequency_ghz: f_ghz,
        transmitter: tx,
        walls: vec![],
        limits: Limits { tessellation: 4, ..Limits::default() },
    };
    let grid = GridSpec::covering([1.0, 9.0], [-4.0, 4.0], 1.0, 1.2)?;
    let map = rss_map(&scene, &grid, RssMode::Flat)?;
    let lambda = scene.wavelength();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        let v = grid.point(i) - tx.position;
        let d = v.norm();
        let g_t = antenna_gain((v.dot(&tx.boresight) / d).acos(), tx.exponent);
        let want = tx.power_dbm + 10.0 * (g_t * dipole_gain(&(v / d))).log10() + db(lambda / (4.0 * PI * d));
        worst = worst.max((map.rss_dbm[i] - want).abs());
    }
    Ok(worst)
}

/// Lossless slab (ε′ = 2.9) with 2 mm Gaussian roughness on both faces:
/// outgoing over incident far-field power.
pub fn passivity_ratio(f_ghz: f64, theta_i_deg: f64, seed: u64, opts: &SimOptions) -> Result<f64> {
    let f = f_ghz * 1e9;
    let base = SlabScene::flat(Medium::lossy(2.9, 0.0, f), 0.1, theta_i_deg.to_radians());
    let spec = |seed| SurfaceSpec {
        n_points: base.aperture_cells,
        spacing: base.dx,
        rms_height: 2e-3,
        corr_length: base.wavelength() / 2.0,
        kind: SpectrumKind::Gaussian,
        seed,
    };
    let scene = base
        .clone()
        .with_profiles(Some(generate_surface(&spec(seed))?), Some(generate_surface(&spec(seed + 1))?));
    let reference = incident_reference(&scene, opts)?;
    let rec = simulate_with_reference(&scene, opts, &reference)?;
    power_balance(&rec, &reference.record, 0.25)
}

/// Single rough interface over the half-space `ε_r = 4 − j`: exponential
/// correlation with `l_c = λ`, 20λ aperture. `taper` is the Gaussian
/// width of the current window as a fraction of the probe-line length.
pub fn single_interface_rcs(
    f_ghz: f64,
    theta_i_deg: f64,
    k_sigma: f64,
    seed: u64,
    taper: Option<f64>,
    opts: &SimOptions,
) -> Result<AngularPattern> {
    let f = f_ghz * 1e9;
    let lambda = wavelength(f);
    let ground = Medium::lossy(4.0, 2.0 * PI * f * EPS0, f);
    let mut base = SlabScene::flat(ground, lambda, theta_i_deg.to_radians());
    base.lower = ground;
    let profile = if k_sigma > 0.0 {
        Some(generate_surface(&SurfaceSpec {
            n_points: base.aperture_cells,
            spacing: base.dx,
            rms_height: k_sigma / (2.0 * PI / lambda),
            corr_length: lambda,
            kind: SpectrumKind::Exponential,
            seed,
        })?)
    } else {
        None
    };
    let scene = base.with_profiles(profile, None);
    let mut rec = simulate_slab(&scene, opts)?;
    if let Some(g) = taper {
        rec.reflection = gaussian_taper(&rec.reflection, g * rec.reflection.x.len() as f64 * scene.dx);
    }
    let mut meta = PatternMeta::single(theta_i_deg, f, "eps4-j1");
    meta.sigma_h_upper = scene.upper_profile.as_ref().map_or(0.0, |p| p.spec.rms_height);
    bistatic_rcs(&rec, &meta)
}

/// Peak-to-sidelobe ratio (dB) of a power pattern: the main lobe runs from
/// the maximum out to the first local minimum on each side.
pub fn sidelobe_ratio_db(power: &[f64]) -> f64 {
    let Some(peak) = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])) else {
        return f64::NAN;
    };
    let mut lo = peak;
    while lo > 0 && power[lo - 1] < power[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < power.len() && power[hi + 1] < power[hi] {
        hi += 1;
    }
    let side = power[..lo].iter().chain(&power[hi + 1..]).copied().fold(0.0, f64::max);
    10.0 * (power[peak] / side).log10()
}

/// Peak-to-largest ratio (dB) over angles at least `exclusion_deg` away
/// from `center_deg`.
pub fn far_sidelobe_ratio_db(angles_deg: &[f64], power: &[f64], center_deg: f64, exclusion_deg: f64) -> f64 {
    let peak = power.iter().copied().fold(0.0, f64::max);
    let side = angles_deg
        .iter()
        .zip(power)
        .filter(|(a, _)| (*a - center_deg).abs() >= exclusion_deg)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max);
    10.0 * (peak / side).log10()
}

/// Runs every check.
pub fn run_suite(cfg: &ValidateConfig, opts: &SimOptions) -> Result<Report> {
    let f = cfg.frequency_ghz * 1e9;
    let rcs = single_interface_rcs(cfg.frequency_ghz, cfg.theta_i_deg, 0.1, cfg.seed, Some(cfg.taper), opts)?;
    let power: Vec<f64> = rcs.values.iter().map(|v| v.re).collect();
    let checks = vec![
        Check {
            name: "flat-slab-transfer",
            measured: flat_slab_deviation_db(&MaterialParams::plasterboard(), cfg.frequency_ghz, cfg.theta_i_deg, opts)?,
            limit: cfg.tmm_tolerance_db,
            upper_bound: true,
            unit: "dB",
        },
        Check {
            name: "line-source-ntff",
            measured: line_source_error(f)?,
            limit: cfg.ntff_tolerance,
            upper_bound: true,
            unit: "of-peak",
        },
        Check {
            name: "friis",
            measured: friis_deviation_db(cfg.frequency_ghz)?,
            limit: cfg.friis_tolerance_db,
            upper_bound: true,
            unit: "dB",
        },
        Check {
            name: "passivity",
            measured: passivity_ratio(cfg.frequency_ghz, cfg.theta_i_deg, cfg.seed, opts)?,
            limit: cfg.passivity_limit,
            upper_bound: true,
            unit: "ratio",
        },
        Check {
            name: "single-interface-sidelobe",
            measured: sidelobe_ratio_db(&power),
            limit: cfg.sidelobe_min_db,
            upper_bound: false,
            unit: "dB",
        },
    ];
    Ok(Report { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_matrix_conserves_energy_for_lossless_layers() {
        let eps = Complex64::new(2.9, 0.0);
        for th in [0.0, 0.4, 1.0] {
            let (r, t) = characteristic_matrix_te(&[(eps, 0.1), (Complex64::new(6.0, 0.0), 0.013)], Complex64::new(1.0, 0.0), th, 28e9);
            assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_the_interface_recursion() {
        use crate::media::{slab_coefficients, Polarization};
        let slab = medium_at(&MaterialParams::wood(), 28.0);
        let vac = Medium::vacuum(slab.frequency);
        for deg in [0.0, 30.0, 45.0, 60.0f64] {
            let th = deg.to_radians();
            let c = slab_coefficients(&vac, &slab, &vac, 0.1, th, Polarization::Te);
            let (r, t) = characteristic_matrix_te(&[(slab.eps_r(), 0.1)], Complex64::new(1.0, 0.0), th, slab.frequency);
            assert!((c.reflection.norm() - r.norm()).abs() < 1e-9, "{deg}");
            assert!((c.transmission.norm() - t.norm()).abs() < 1e-9, "{deg}");
        }
    }

    #[test]
    fn lossy_slab_absorbs() {
        let eps = Complex64::new(2.94, -0.5);
        let mut last = 1.0;
        for d in [0.01, 0.05, 0.1, 0.2] {
            let (r, t) = characteristic_matrix_te(&[(eps, d)], Complex64::new(1.0, 0.0), 0.5, 28e9);
            assert!(r.norm_sqr() + t.norm_sqr() < 1.0);
            assert!(t.norm() < last);
            last = t.norm();
        }
    }

    #[test]
    fn empty_stack_is_a_single_interface() {
        let eps = Complex64::new(4.0, -1.0);
        let th: f64 = 0.5;
        let (r, _) = characteristic_matrix_te(&[], eps, th, 28e9);
        let q = (eps - th.sin().powi(2)).sqrt();
        let want = (th.cos() - q) / (th.cos() + q);
        assert!((r - want).norm() < 1e-12);
    }

    #[test]
    fn sidelobe_ratio_of_a_sinc_beam() {
        let p: Vec<f64> = (-90..=90)
            .map(|d| {
                let u = (d as f64).to_radians() * 20.0;
                if u == 0.0 { 1.0 } else { (u.sin() / u).powi(2) }
            })
            .collect();
        // First sidelobe of sinc² sits 13.26 dB down.
        assert!((sidelobe_ratio_db(&p) - 13.26).abs() < 0.1, "{}", sidelobe_ratio_db(&p));
    }

    #[test]
    fn line_source_far_field_is_exact() {
        assert!(line_source_error(28e9).unwrap() < 0.01);
    }

    #[test]
    fn free_space_trace_is_friis() {
        assert!(friis_deviation_db(28.0).unwrap() < 0.1);
    }
}
