use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;
use crate::media::{medium_at, MaterialParams, Medium, C0, EPS0};

/// Plane-wave TE stack solved with 2x2 characteristic matrices (Abelès
/// form), written independently of the library's multiple-reflection sum.
fn tmm_te(layers: &[(Complex64, f64)], theta: f64, f: f64) -> (Complex64, Complex64) {
    let k0 = 2.0 * PI * f / C0;
    let s2 = Complex64::new(theta.sin().powi(2), 0.0);
    // Normal admittance of each medium (relative to vacuum), TE.
    let q = |eps: Complex64| {
        let v = (eps - s2).sqrt();
        if v.im > 0.0 {
            -v
        } else {
            v
        }
    };
    let q_in = q(Complex64::new(1.0, 0.0));
    let q_out = q_in;
    let one = Complex64::new(1.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    let mut m = [[one, Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), one]];
    for &(eps, d) in layers {
        let ql = q(eps);
        let delta = k0 * ql * d;
        let l = [[delta.cos(), j * delta.sin() / ql], [j * ql * delta.sin(), delta.cos()]];
        m = [
            [m[0][0] * l[0][0] + m[0][1] * l[1][0], m[0][0] * l[0][1] + m[0][1] * l[1][1]],
            [m[1][0] * l[0][0] + m[1][1] * l[1][0], m[1][0] * l[0][1] + m[1][1] * l[1][1]],
        ];
    }
    let a = q_in * (m[0][0] + m[0][1] * q_out);
    let b = m[1][0] + m[1][1] * q_out;
    let r = (a - b) / (a + b);
    let t = 2.0 * q_in / (a + b);
    (r, t)
}

/// Carrier phasor of the last full period of `samples` (sample `n` at
/// `(n + offset)Δt`).
fn last_period_phasor(samples: &[f64], period: usize, offset: f64) -> Complex64 {
    let n0 = samples.len() - period;
    samples[n0..]
        .iter()
        .enumerate()
        .map(|(r, &v)| {
            let phase = -2.0 * PI * ((n0 + r) as f64 + offset) / period as f64;
            Complex64::from_polar(2.0 * v / period as f64, phase)
        })
        .sum()
}

fn column(rec: &AuxGridRecord, k: usize, pick: fn(&AuxGridRecord, usize, usize) -> f64, n: usize) -> Vec<f64> {
    (0..n).map(|m| pick(rec, k, m)).collect()
}

fn vacuum_scene(theta: f64) -> SlabScene {
    SlabScene::flat(Medium::vacuum(28e9), 0.1, theta).vacuum_reference()
}

#[test]
fn aux_vacuum_normal_incidence_has_no_hz_and_no_reflection() {
    let scene = vacuum_scene(0.0);
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let n = 40 * p.grid.steps_per_period;
    let rec = run_aux_grid(&scene, &opts, n).unwrap();
    assert!(rec.hz.iter().all(|&v| v == 0.0));
    let refl = column(&rec, p.layout.k_refl, AuxGridRecord::ey, n + 1);
    let peak = refl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak < 1e-3, "reflection above source in vacuum: {peak}");
    let trans = column(&rec, p.layout.k_trans, AuxGridRecord::ey, n + 1);
    let amp = last_period_phasor(&trans, p.grid.steps_per_period, 0.0).norm();
    assert!((amp - 1.0).abs() < 1e-3, "transmitted amplitude {amp}");
}

#[test]
fn aux_slab_matches_transfer_matrix() {
    let slab = medium_at(&MaterialParams::plasterboard(), 28.0);
    let theta = 30f64.to_radians();
    let mut scene = SlabScene::flat(slab, 0.1, theta);
    // At λ/35 grid dispersion over the ~110 rad round-trip phase moves |R|
    // by 1.5%; λ/70 isolates the update equations from that effect.
    scene.dx = scene.wavelength() / 70.0;
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let period = p.grid.steps_per_period;
    let n = 80 * period;
    let rec = run_aux_grid(&scene, &opts, n).unwrap();
    let r = last_period_phasor(&column(&rec, p.layout.k_refl, AuxGridRecord::ey, n + 1), period, 0.0);
    let t = last_period_phasor(&column(&rec, p.layout.k_trans, AuxGridRecord::ey, n + 1), period, 0.0);

    let eps = Complex64::new(slab.eps_real, -slab.sigma / (2.0 * PI * 28e9 * EPS0));
    let (r0, t0) = tmm_te(&[(eps, 0.1)], theta, 28e9);
    assert!((r.norm() / r0.norm() - 1.0).abs() < 0.01, "|R| {} vs {}", r.norm(), r0.norm());
    assert!((t.norm() / t0.norm() - 1.0).abs() < 0.01, "|T| {} vs {}", t.norm(), t0.norm());
}

#[test]
fn aux_phase_velocity_in_dense_layer() {
    // Matched ε′ = 4 half-space below the interface: only a forward wave.
    let dense = Medium::lossy(4.0, 0.0, 28e9);
    let mut scene = SlabScene::flat(dense, 0.05, 0.0);
    scene.lower = dense;
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let period = p.grid.steps_per_period;
    let n = 40 * period;
    let rec = run_aux_grid(&scene, &opts, n).unwrap();
    let (k1, k2) = (p.layout.k_trans - 10, p.layout.k_trans);
    let a = last_period_phasor(&column(&rec, k1, AuxGridRecord::ey, n + 1), period, 0.0);
    let b = last_period_phasor(&column(&rec, k2, AuxGridRecord::ey, n + 1), period, 0.0);
    let dphi = (a / b).arg().rem_euclid(2.0 * PI);
    let omega = 2.0 * PI * scene.frequency;
    let v = omega * (k2 - k1) as f64 * p.grid.dz / dphi;
    assert!((v / (C0 / 2.0) - 1.0).abs() < 0.01, "phase velocity ratio {}", v / C0);
}

#[test]
fn aux_hz_follows_phase_matching() {
    let theta = 45f64.to_radians();
    let scene = vacuum_scene(theta);
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let rec = run_aux_grid(&scene, &opts, 10 * p.grid.steps_per_period).unwrap();
    let k = p.layout.k_trans;
    for m in 0..rec.n_steps {
        let expect = theta.sin() / crate::media::ETA0 * 0.5 * (rec.ey(k, m) + rec.ey(k, m + 1));
        assert!((rec.hz(k, m) - expect).abs() < 1e-15);
    }
}

#[test]
fn aux_rejects_evanescent_layer() {
    let thin = Medium::lossy(1.0, 0.0, 28e9);
    let mut scene = SlabScene::flat(thin, 0.05, 60f64.to_radians());
    scene.slab.eps_real = 0.5;
    assert!(run_aux_grid(&scene, &SimOptions::default(), 10).is_err());
}

fn steady_vacuum_record(theta: f64) -> (AuxGridRecord, Plan) {
    let scene = vacuum_scene(theta);
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let rec = run_aux_grid(&scene, &opts, 30 * p.grid.steps_per_period).unwrap();
    (rec, p)
}

#[test]
fn tfsf_zero_offset_returns_stored_sample() {
    let (rec, p) = steady_vacuum_record(30f64.to_radians());
    let k = p.layout.ka;
    for step in [0, 7, 500, rec.n_steps] {
        let v = tfsf_correction(&rec, AuxField::Ey, 0.0, k, step, rec.theta_i);
        assert_eq!(v, rec.ey(k, step));
    }
}

#[test]
fn tfsf_one_step_offset() {
    let (rec, p) = steady_vacuum_record(30f64.to_radians());
    let k = p.layout.ka;
    let x = C0 * rec.dt / rec.theta_i.sin();
    for step in [1, 40, 900] {
        let v = tfsf_correction(&rec, AuxField::Ey, x, k, step, rec.theta_i);
        assert!((v - rec.ey(k, step - 1)).abs() < 1e-12);
        let h = tfsf_correction(&rec, AuxField::Hx, x, k, step, rec.theta_i);
        assert!((h - rec.hx(k, step - 1)).abs() < 1e-12);
    }
}

#[test]
fn tfsf_before_arrival_is_zero() {
    let (rec, p) = steady_vacuum_record(30f64.to_radians());
    let x = 40.0 * p.grid.dx;
    assert_eq!(tfsf_correction(&rec, AuxField::Ey, x, p.layout.ka, 3, rec.theta_i), 0.0);
}

#[test]
fn tfsf_matches_delayed_sinusoid() {
    let theta = 30f64.to_radians();
    let (rec, p) = steady_vacuum_record(theta);
    let k = p.layout.ka;
    let period = p.grid.steps_per_period;
    let samples = column(&rec, k, AuxGridRecord::ey, rec.n_steps + 1);
    let ph = last_period_phasor(&samples, period, 0.0);
    let x = 10.0 * p.grid.dx;
    let tau = x * 0.5 / C0;
    let omega = 2.0 * PI * (1.0 / (period as f64 * rec.dt));
    let amp = ph.norm();
    for step in rec.n_steps - 2 * period..rec.n_steps {
        let t = step as f64 * rec.dt - tau;
        let expect = (ph * Complex64::from_polar(1.0, omega * t)).re;
        let got = tfsf_correction(&rec, AuxField::Ey, x, k, step, theta);
        assert!((got - expect).abs() < 5e-3 * amp, "step {step}: {got} vs {expect}");
    }
}

#[test]
fn effective_permittivity_examples() {
    assert_eq!(effective_permittivity(0.0, 0.0, 1.0, 1.0, 1.0, 3.0), 1.0);
    assert_eq!(effective_permittivity(1.0, 1.0, 1.0, 1.0, 1.0, 3.0), 3.0);
    assert!((effective_permittivity(0.5, 1.0, 1.0, 1.0, 1.0, 3.0) - 2.0).abs() < 1e-15);
}

#[test]
fn plan_respects_clearances() {
    let slab = medium_at(&MaterialParams::wood(), 28.0);
    let mut scene = SlabScene::flat(slab, 0.1, 45f64.to_radians());
    scene.roughness_allowance = 0.012;
    let opts = SimOptions::default();
    let p = plan(&scene, &opts).unwrap();
    let g = &p.grid;
    let l = &p.layout;
    assert!(g.dt <= 0.99 / (C0 * (1.0 / (g.dx * g.dx) + 1.0 / (g.dz * g.dz)).sqrt()));
    assert!(l.k_refl >= g.pml_cells + 4);
    assert!(l.k_trans + g.pml_cells + 4 <= g.nz);
    assert!(l.z1 - 0.012 > l.ka as f64 * g.dz);
    assert!(l.z2 + 0.012 < l.kb as f64 * g.dz);
    assert!(l.probe_first > l.ia && l.probe_last < l.ib);
}

#[test]
fn steps_per_period_is_integral() {
    let scene = vacuum_scene(60f64.to_radians());
    let p = plan(&scene, &SimOptions::default()).unwrap();
    let t = 1.0 / scene.frequency;
    assert!((p.grid.dt * p.grid.steps_per_period as f64 - t).abs() < 1e-9 * t);
}
