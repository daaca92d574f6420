use std::f64::consts::PI;

use slabscat::media::wavelength;
use slabscat::surface::{
    generate_from_draws, generate_surface, latin_hypercube_seeds, surface_statistics, SpectrumKind,
    SurfaceSpec,
};

fn paper_spec(seed: u64) -> SurfaceSpec {
    let lambda = wavelength(28e9);
    SurfaceSpec {
        n_points: 700,
        spacing: lambda / 35.0,
        rms_height: 2e-3,
        corr_length: 0.5 * lambda,
        kind: SpectrumKind::Gaussian,
        seed,
    }
}

#[test]
fn ensemble_rms_and_correlation_length() {
    let stats: Vec<_> = (0..200)
        .map(|s| surface_statistics(&generate_surface(&paper_spec(s)).unwrap()))
        .collect();
    let mean_rms = stats.iter().map(|s| s.rms).sum::<f64>() / 200.0;
    let mean_lc = stats.iter().map(|s| s.est_corr_length).sum::<f64>() / 200.0;
    let spec = paper_spec(0);
    assert!((mean_rms / spec.rms_height - 1.0).abs() < 0.05, "rms {mean_rms}");
    assert!((mean_lc / spec.corr_length - 1.0).abs() < 0.10, "l_c {mean_lc}");
}

/// Gaussian spectrum written out directly: W(K) = σ²·l/(2√π)·exp(−K²l²/4).
fn gaussian_w(k: f64, sigma: f64, l: f64) -> f64 {
    sigma * sigma * l / (2.0 * PI.sqrt()) * (-(k * l).powi(2) / 4.0).exp()
}

#[test]
fn averaged_periodogram_matches_spectrum() {
    // Stratified draws keep the per-bin sampling noise well below the 10%
    // tolerance; the periodogram itself is a direct DFT.
    let n_real = 500;
    let base = paper_spec(0);
    let n = base.n_points;
    let l = n as f64 * base.spacing;
    let draws = latin_hypercube_seeds(n_real, n, 99);
    let m_max = (4.0 / base.corr_length * l / (2.0 * PI)).floor() as usize;
    let mut acc = vec![0.0; m_max + 1];
    for r in 0..n_real {
        let p = generate_from_draws(&base, draws.row(r)).unwrap();
        for (m, a) in acc.iter_mut().enumerate().skip(1) {
            let k = 2.0 * PI * m as f64 / l;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, h) in p.heights.iter().enumerate() {
                let ph = k * i as f64 * base.spacing;
                re += h * ph.cos();
                im += h * ph.sin();
            }
            let f = l / n as f64;
            *a += (re * re + im * im) * f * f;
        }
    }
    for (m, a) in acc.iter().enumerate().skip(1) {
        let k = 2.0 * PI * m as f64 / l;
        let w_est = a / n_real as f64 / (2.0 * PI * l);
        let w = gaussian_w(k, base.rms_height, base.corr_length);
        assert!((w_est / w - 1.0).abs() < 0.10, "m={m}: {w_est:e} vs {w:e}");
    }
}

#[test]
fn large_lhs_design_moments() {
    let d = latin_hypercube_seeds(200, 700, 5);
    for c in 0..d.cols {
        let v: Vec<f64> = d.column(c).collect();
        let mean = v.iter().sum::<f64>() / 200.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 199.0;
        assert!(mean.abs() < 0.05, "column {c}: mean {mean}");
        assert!((0.9..=1.1).contains(&var), "column {c}: var {var}");
    }
}

#[test]
fn exponential_spectrum_has_requested_rms() {
    let lambda = wavelength(28e9);
    let stats: Vec<_> = (0..200)
        .map(|seed| {
            let s = SurfaceSpec {
                n_points: 1400,
                spacing: lambda / 70.0,
                rms_height: 0.1 / (2.0 * PI / lambda),
                corr_length: lambda,
                kind: SpectrumKind::Exponential,
                seed,
            };
            surface_statistics(&generate_surface(&s).unwrap()).rms / s.rms_height
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    // The exponential spectrum decays slowly, so a finite band misses a
    // little variance and the sample rms about the mean sits slightly low.
    assert!((mean - 1.0).abs() < 0.08, "ratio {mean}");
}
