//! Bistatic echo width of a single rough interface over `ε_r = 4 − j`
//! (exponential correlation, `kσ_h = 0.1`, `l_c = λ`, 20λ aperture).
//!
//! `cargo run --release --example rcs_validation -- [theta_deg] [seeds] [out] [taper] [k_sigma]`
//!
//! `taper` is the Gaussian window width over the probe-line length
//! (omit for uniform weighting); `k_sigma = 0` gives the flat interface.

use std::fs;

use slabscat::cli::validate::{far_sidelobe_ratio_db, sidelobe_ratio_db, single_interface_rcs};
use slabscat::fdtd::SimOptions;

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let theta: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let taper: Option<f64> = args.get(3).and_then(|s| s.parse().ok());
    let k_sigma: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let opts = SimOptions::default();
    for seed in 1..=seeds {
        let rcs = single_interface_rcs(28.0, theta, k_sigma, seed, taper, &opts)?;
        let power: Vec<f64> = rcs.values.iter().map(|v| v.re).collect();
        let peak = power.iter().copied().fold(0.0, f64::max);
        println!(
            "seed {seed}: peak {:.2} dB(m), sidelobes {:.2} dB below, {:.2} dB below beyond 20 deg",
            10.0 * peak.log10(),
            sidelobe_ratio_db(&power),
            far_sidelobe_ratio_db(&rcs.angles_deg, &power, 180.0 - theta, 20.0)
        );
        if seed == 1 {
            if let Some(out) = args.get(2) {
                fs::write(out, rcs.to_text(None))?;
            }
        }
    }
    Ok(())
}
