//! Material table at 28 GHz, smooth-slab coefficients and the roughness
//! scale at which each interface stops looking smooth.
//!
//! `cargo run --example materials_and_critical_heights -- [extra_materials.toml]`

use std::path::Path;

use slabscat::media::{
    critical_heights, medium_at, slab_coefficients, wavelength, MaterialLibrary, Medium, Polarization,
};

fn main() -> slabscat::Result<()> {
    let mut lib = MaterialLibrary::builtin();
    if let Some(extra) = std::env::args().nth(1) {
        lib.merge_file(Path::new(&extra))?;
    }
    let f_ghz = 28.0;
    let lambda = wavelength(f_ghz * 1e9);
    let vacuum = Medium::vacuum(f_ghz * 1e9);
    println!("{:<14} {:>7} {:>9} {:>8}", "material", "eps'", "sigma", "eps''");
    for name in lib.names() {
        let m = medium_at(lib.get(name)?, f_ghz);
        println!("{name:<14} {:>7.3} {:>9.4} {:>8.4}", m.eps_real, m.sigma, -m.eps_r().im);
    }

    for name in ["wood", "plasterboard"] {
        let slab = medium_at(lib.get(name)?, f_ghz);
        println!("\n10 cm {name}");
        println!("{:>6} {:>8} {:>8} {:>11} {:>11}", "theta", "|R|", "|T|", "hc_R_mm", "hc_T_mm");
        for deg in [0.0, 15.0, 30.0, 45.0, 60.0, 75.0f64] {
            let th = deg.to_radians();
            let c = slab_coefficients(&vacuum, &slab, &vacuum, 0.1, th, Polarization::Te);
            let h = critical_heights(th, lambda, 1.0, slab.refractive_index())?;
            println!(
                "{deg:>6} {:>8.4} {:>8.4} {:>11.3} {:>11.3}",
                c.reflection.norm(),
                c.transmission.norm(),
                h.reflection * 1e3,
                h.transmission * 1e3
            );
        }
    }
    Ok(())
}
