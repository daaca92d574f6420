//! Flat 10 cm slab at 28 GHz: FDTD specular coefficients against the
//! closed-form plane-wave result.

use std::time::Instant;

use slabscat::fdtd::{incident_reference, simulate_with_reference, SimOptions, SlabScene};
use slabscat::media::{medium_at, slab_coefficients, MaterialParams, Polarization};
use slabscat::ntff::{extract_coefficients, PatternMeta};

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let material = args.get(1).map(String::as_str).unwrap_or("plasterboard");
    let theta_deg: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30.0);
    let params = match material {
        "wood" => MaterialParams::wood(),
        _ => MaterialParams::plasterboard(),
    };
    let slab = medium_at(&params, 28.0);
    let scene = SlabScene::flat(slab, 0.1, theta_deg.to_radians());
    let opts = SimOptions::default();

    let t0 = Instant::now();
    let reference = incident_reference(&scene, &opts)?;
    let t_ref = t0.elapsed();
    let t1 = Instant::now();
    let rec = simulate_with_reference(&scene, &opts, &reference)?;
    let t_run = t1.elapsed();

    let meta = PatternMeta::single(theta_deg, 28e9, material);
    let (r, t) = extract_coefficients(&rec, &meta)?;
    let exact = slab_coefficients(
        &scene.upper,
        &slab,
        &scene.lower,
        0.1,
        scene.theta_i,
        Polarization::Te,
    );
    let db = |v: f64| 20.0 * v.log10();
    println!(
        "grid {}x{}, {} steps/period",
        rec.plan.grid.nx, rec.plan.grid.nz, rec.plan.grid.steps_per_period
    );
    println!(
        "reference: {} steps in {:.2?}; slab: {} steps in {:.2?} (converged: {})",
        reference.record.steps, t_ref, rec.steps, t_run, rec.converged
    );
    println!(
        "|R| fdtd {:.4} ({:.2} dB)  exact {:.4} ({:.2} dB)",
        r.specular(),
        db(r.specular()),
        exact.reflection.norm(),
        db(exact.reflection.norm())
    );
    println!(
        "|T| fdtd {:.4} ({:.2} dB)  exact {:.4} ({:.2} dB)",
        t.specular(),
        db(t.specular()),
        exact.transmission.norm(),
        db(exact.transmission.norm())
    );
    let leak = reference
        .record
        .scattered_ey
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        / reference.amplitude;
    println!("vacuum scattered-field leakage: {:.1} dB", db(leak));
    Ok(())
}
