//! Ensemble patterns over a roughness sweep, compact-model selection for
//! each, and the specular track along the sweep.
//!
//! `cargo run --release --example fit_scattering_models -- [n] [out_dir] [material] [theta_deg] [sigma_mm...]`
//!
//! Pattern files already present in `out_dir` are reused, so the sweep can
//! be extended or refitted without rerunning the FDTD.

use std::fs;
use std::path::PathBuf;

use slabscat::ensemble::{run_ensemble_with, EnsembleSpec, Sampling};
use slabscat::fdtd::{SimOptions, SlabScene};
use slabscat::media::{medium_at, MaterialLibrary};
use slabscat::ntff::AngularPattern;
use slabscat::scatmodel::{select_model_with, specular_track, FitOptions, ModelSet, Shape};
use slabscat::surface::SpectrumKind;

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(8);
    let out = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("target/fit_models"));
    let material = args.get(2).map(String::as_str).unwrap_or("plasterboard");
    let theta: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let mut sigmas: Vec<f64> = args.iter().skip(4).filter_map(|s| s.parse().ok()).collect();
    if sigmas.is_empty() {
        sigmas = vec![0.5, 1.0, 2.0, 6.0];
    }
    fs::create_dir_all(&out)?;
    let params = MaterialLibrary::builtin().get(material)?.clone();
    let base = SlabScene::flat(medium_at(&params, 28.0), 0.1, theta.to_radians());
    let opts = FitOptions::default();

    let mut reflections = Vec::new();
    for &s_mm in &sigmas {
        let stem = format!("{material}_{theta}_{s_mm}mm_n{n}");
        let (r_path, t_path) = (out.join(format!("{stem}_R.txt")), out.join(format!("{stem}_T.txt")));
        let (r, t) = if r_path.exists() && t_path.exists() {
            (
                AngularPattern::from_text(&fs::read_to_string(&r_path)?)?,
                AngularPattern::from_text(&fs::read_to_string(&t_path)?)?,
            )
        } else {
            let spec = EnsembleSpec {
                corr_length: 0.5 * base.wavelength(),
                base: base.clone(),
                n_realizations: n,
                master_seed: 7,
                sigma_h_upper: s_mm * 1e-3,
                sigma_h_lower: s_mm * 1e-3,
                spectrum: SpectrumKind::Gaussian,
                sampling: Sampling::Lhs,
                material: material.into(),
            };
            eprintln!("sigma_h = {s_mm} mm: running {n} realizations");
            let res = run_ensemble_with(&spec, &SimOptions::default(), &|d, t| eprint!("\r  {d}/{t}"))?;
            eprintln!();
            fs::write(&r_path, res.reflection.to_text(None))?;
            fs::write(&t_path, res.transmission.to_text(None))?;
            (res.reflection, res.transmission)
        };
        let mut set = ModelSet::default();
        for p in [&r, &t] {
            let sel = select_model_with(p, &opts)?;
            println!("sigma_h {s_mm} mm {}:", p.kind.as_str());
            for c in &sel.candidates {
                println!("    {:<3} mse {:.3e}  {}", c.family().code(), c.mse, describe(&c.shape));
            }
            let c = &sel.chosen;
            println!("  {:?}: {} mse {:.3e}  {}", sel.regime, c.family().code(), c.mse, describe(&c.shape));
            set.push(theta, s_mm * 1e-3, sel.chosen);
        }
        fs::write(out.join(format!("{stem}.models")), set.to_text(None))?;
        reflections.push((s_mm, r));
    }

    println!("\nspecular reflection track");
    let track: Vec<_> = reflections.iter().map(|(s, p)| (*s, p.clone())).collect();
    for row in specular_track(&track, &opts)? {
        let flag = row.transition.map(|t| format!("  <- {t:?}")).unwrap_or_default();
        println!("  {:>4} mm  |R| {:.4}  {}{flag}", row.sigma_h, row.specular, row.model.family());
    }
    Ok(())
}

fn describe(shape: &Shape) -> String {
    let lobe = |l: &slabscat::scatmodel::Lobe| {
        format!(
            "{} A0={:.4} aA={:.1} aB={:.1} L={:.2} thA={:.1}",
            l.family.code(),
            l.a0,
            l.a_a,
            l.a_b,
            l.lambda,
            l.theta_a
        )
    };
    match shape {
        Shape::Single(l) => lobe(l),
        Shape::Hybrid(h) => format!("[{}] + [{}]", lobe(&h.specular), lobe(&h.diffuse)),
    }
}
