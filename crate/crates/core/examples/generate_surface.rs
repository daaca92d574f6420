//! Random interface profiles and their sample statistics.
//!
//! `cargo run --release --example generate_surface -- [sigma_h_mm] [kind] [out]`
//!
//! `kind` is `gaussian` (default) or `exponential`.

use std::fs;

use slabscat::media::wavelength;
use slabscat::surface::{generate_surface, surface_statistics, SpectrumKind, SurfaceSpec};

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let sigma_h = args.first().and_then(|s| s.parse::<f64>().ok()).unwrap_or(2.0) * 1e-3;
    let kind: SpectrumKind = args.get(1).map(String::as_str).unwrap_or("gaussian").parse()?;
    let lambda = wavelength(28e9);
    let spec = |seed| SurfaceSpec {
        n_points: 700,
        spacing: lambda / 35.0,
        rms_height: sigma_h,
        corr_length: lambda / 2.0,
        kind,
        seed,
    };
    println!("target: rms {:.3} mm, correlation length {:.3} mm", sigma_h * 1e3, lambda / 2.0 * 1e3);
    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "seed", "mean_mm", "rms_mm", "lc_mm", "peak_mm");
    for seed in 1..=8 {
        let p = generate_surface(&spec(seed))?;
        let s = surface_statistics(&p);
        println!(
            "{seed:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            s.mean * 1e3,
            s.rms * 1e3,
            s.est_corr_length * 1e3,
            p.max_abs() * 1e3
        );
        if seed == 1 {
            if let Some(out) = args.get(2) {
                fs::write(out, p.to_text())?;
            }
        }
    }
    Ok(())
}
