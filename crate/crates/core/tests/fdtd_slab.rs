mod common;

use common::{db, eps_complex, tmm_te};
use slabscat::fdtd::{
    incident_reference, simulate_with_reference, SimOptions, SlabScene,
};
use slabscat::media::{medium_at, MaterialParams, Medium};
use slabscat::ntff::{extract_coefficients, power_balance, PatternMeta};
use slabscat::surface::{generate_surface, SpectrumKind, SurfaceSpec};

const F: f64 = 28e9;

fn meta(theta_deg: f64) -> PatternMeta {
    PatternMeta::single(theta_deg, F, "test")
}

#[test]
fn vacuum_scene_leaks_below_minus_50_db() {
    for theta in [30.0f64, 60.0] {
        let scene = SlabScene::flat(Medium::vacuum(F), 0.1, theta.to_radians());
        let reference = incident_reference(&scene, &SimOptions::default()).unwrap();
        let leak = reference
            .record
            .scattered_ey
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
            / reference.amplitude;
        assert!(db(leak) < -50.0, "{theta} deg: leakage {:.1} dB", db(leak));
    }
}

#[test]
fn flat_plasterboard_matches_transfer_matrix() {
    let slab = medium_at(&MaterialParams::plasterboard(), 28.0);
    let theta = 30f64.to_radians();
    let scene = SlabScene::flat(slab, 0.1, theta);
    let opts = SimOptions::default();
    let reference = incident_reference(&scene, &opts).unwrap();
    let rec = simulate_with_reference(&scene, &opts, &reference).unwrap();
    assert!(rec.converged);
    let (r, t) = extract_coefficients(&rec, &meta(30.0)).unwrap();
    let (r0, t0) = tmm_te(&[(eps_complex(slab.eps_real, slab.sigma, F), 0.1)], theta, F);
    assert!((db(r.specular()) - db(r0.norm())).abs() < 0.5);
    assert!((db(t.specular()) - db(t0.norm())).abs() < 0.5);
}

fn rough_scene(slab: Medium, sigma_h: f64, seed: u64) -> SlabScene {
    let lambda = slabscat::media::wavelength(F);
    let spec = |seed| SurfaceSpec {
        n_points: 700,
        spacing: lambda / 35.0,
        rms_height: sigma_h,
        corr_length: 0.5 * lambda,
        kind: SpectrumKind::Gaussian,
        seed,
    };
    let up = generate_surface(&spec(seed)).unwrap();
    let lo = generate_surface(&spec(seed + 1)).unwrap();
    SlabScene::flat(slab, 0.1, 30f64.to_radians()).with_profiles(Some(up), Some(lo))
}

#[test]
fn rough_slab_suppresses_specular_and_stays_passive() {
    // Lossless plasterboard-like layer: outgoing power must not exceed the
    // incident flux.
    let slab = Medium::lossy(2.94, 0.0, F);
    let opts = SimOptions::default();
    let flat = rough_scene(slab, 0.0, 3);
    let rough = rough_scene(slab, 6e-3, 3);
    assert_eq!(flat.roughness_allowance, 0.0);
    // Both runs must share the grid, so give the flat scene the same clearance.
    let flat = SlabScene { roughness_allowance: rough.roughness_allowance, ..flat };
    let reference = incident_reference(&rough, &opts).unwrap();
    let rec_flat = simulate_with_reference(&flat, &opts, &reference).unwrap();
    let rec_rough = simulate_with_reference(&rough, &opts, &reference).unwrap();
    let (rf, _) = extract_coefficients(&rec_flat, &meta(30.0)).unwrap();
    let (rr, _) = extract_coefficients(&rec_rough, &meta(30.0)).unwrap();
    assert!(
        db(rr.specular()) < db(rf.specular()) - 6.0,
        "specular {:.2} dB rough vs {:.2} dB flat",
        db(rr.specular()),
        db(rf.specular())
    );
    let p_flat = power_balance(&rec_flat, &reference.record, 0.25).unwrap();
    assert!((0.98..=1.02).contains(&p_flat), "flat power ratio {p_flat}");
    // Wide-angle diffuse power partly misses the finite probe lines, so only
    // the upper bound applies to the rough slab.
    let p_rough = power_balance(&rec_rough, &reference.record, 0.25).unwrap();
    assert!(p_rough <= 1.02, "rough power ratio {p_rough}");
}
