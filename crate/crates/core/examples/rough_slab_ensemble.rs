//! Monte Carlo ensemble for a rough plasterboard slab.
//!
//! `cargo run --release --example rough_slab_ensemble -- [n] [sigma_h_mm] [theta_deg] [material]`

use std::time::Instant;

use slabscat::ensemble::{rms_error_infnorm, run_ensemble_with, EnsembleSpec, Sampling};
use slabscat::fdtd::{SimOptions, SlabScene};
use slabscat::media::{medium_at, MaterialParams};
use slabscat::surface::SpectrumKind;

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let n = arg(0, 8.0) as usize;
    let sigma_h = arg(1, 2.0) * 1e-3;
    let theta = arg(2, 30.0);
    let material = args.get(3).map(String::as_str).unwrap_or("plasterboard");
    let params = match material {
        "wood" => MaterialParams::wood(),
        _ => MaterialParams::plasterboard(),
    };
    let base = SlabScene::flat(medium_at(&params, 28.0), 0.1, theta.to_radians());
    let spec = EnsembleSpec {
        corr_length: 0.5 * base.wavelength(),
        base,
        n_realizations: n,
        master_seed: 2024,
        sigma_h_upper: sigma_h,
        sigma_h_lower: sigma_h,
        spectrum: SpectrumKind::Gaussian,
        sampling: Sampling::Lhs,
        material: material.into(),
    };
    let t0 = Instant::now();
    let res = run_ensemble_with(&spec, &SimOptions::default(), &|done, total| {
        eprintln!("  realization {done}/{total} ({:.1?})", t0.elapsed());
    })?;
    let spec_r = res.reflection.specular();
    let spec_t = res.transmission.specular();
    let flat = slabscat::media::slab_coefficients(
        &spec.base.upper,
        &spec.base.slab,
        &spec.base.lower,
        0.1,
        spec.base.theta_i,
        slabscat::media::Polarization::Te,
    );
    let db = |v: f64| 20.0 * v.log10();
    println!("{n} realizations of {material}, sigma_h = {:.1} mm, theta_i = {theta} deg", sigma_h * 1e3);
    println!("mean specular |R| {spec_r:.4} ({:+.2} dB vs flat)", db(spec_r) - db(flat.reflection.norm()));
    println!("mean specular |T| {spec_t:.4} ({:+.2} dB vs flat)", db(spec_t) - db(flat.transmission.norm()));
    if n > 1 {
        println!("max standard error {:.3} dB", rms_error_infnorm(&res)?);
    }
    let worst = res.members.iter().map(|m| m.power_ratio).fold(0.0, f64::max);
    println!("largest outgoing/incident power ratio {worst:.4}");
    println!("{:.1?} total", t0.elapsed());
    print!("{}", res.manifest(&spec));
    Ok(())
}
