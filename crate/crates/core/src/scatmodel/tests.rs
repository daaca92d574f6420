use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::ntff::{reflection_angles, transmission_angles, AngularPattern, PatternMeta};

fn pattern(kind: PatternKind, f: impl Fn(f64) -> f64) -> AngularPattern {
    let angles = match kind {
        PatternKind::Transmission => transmission_angles(),
        _ => reflection_angles(),
    };
    AngularPattern {
        kind,
        values: angles.iter().map(|&a| Complex64::new(f(a), 0.0)).collect(),
        angles_deg: angles,
        meta: PatternMeta::single(30.0, 28e9, "synthetic"),
    }
}

/// The model formulas written out again, independent of `Lobe::eval`.
fn reference_eval(m: &ScatterModel, theta: f64) -> f64 {
    let lobe = |l: &Lobe| -> f64 {
        let cos_half = |psi: f64| (1.0 + psi.to_radians().cos()) / 2.0;
        match l.family {
            Family::Lambertian => l.a0 * (theta - m.kind.normal_deg()).to_radians().cos().max(0.0).sqrt(),
            Family::Directive => l.a0 * cos_half(theta - l.theta_a).powf(l.a_a).sqrt(),
            Family::Backscattering => {
                l.a0 * (l.lambda * cos_half(theta - l.theta_a).powf(l.a_a)
                    + (1.0 - l.lambda) * cos_half(theta + l.theta_a).powf(l.a_b))
                .sqrt()
            }
            Family::HybridDirective => unreachable!(),
        }
    };
    match &m.shape {
        Shape::Single(l) => lobe(l),
        Shape::Hybrid(h) => (lobe(&h.specular).powi(2) + lobe(&h.diffuse).powi(2)).sqrt(),
    }
}

#[test]
fn trivial_evaluations() {
    let l = ScatterModel::single(PatternKind::Reflection, Lobe::lambertian(0.3));
    assert_eq!(l.eval(180.0), 0.3);
    assert_eq!(l.eval(90.0 - 1e-9).max(0.0), l.eval(90.0 - 1e-9));
    let t = ScatterModel::single(PatternKind::Transmission, Lobe::lambertian(0.3));
    assert_eq!(t.eval(0.0), 0.3);
    assert_eq!(t.eval(-90.0).min(1e-7), t.eval(-90.0));
    let d = ScatterModel::single(PatternKind::Reflection, Lobe::directive(0.21, 1000.0, 150.0));
    assert_eq!(d.eval(150.0), 0.21);
}

#[test]
fn backscattering_limits() {
    for th in (90..=270).map(f64::from) {
        let bsc1 = Lobe::backscattering(0.4, 12.0, 7.0, 1.0, 150.0).eval(th, 180.0);
        let d = Lobe::directive(0.4, 12.0, 150.0).eval(th, 180.0);
        assert!((bsc1 - d).abs() < 1e-15);
        let bsc0 = Lobe::backscattering(0.4, 12.0, 7.0, 0.0, 150.0).eval(th, 180.0);
        let d_b = Lobe::directive(0.4, 7.0, -150.0).eval(th, 180.0);
        assert!((bsc0 - d_b).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn directive_peaks_at_theta_a(a0 in 0.01f64..1.0, a in 0.5f64..5000.0, th in -90f64..90.0, x in -90f64..90.0) {
        let l = Lobe::directive(a0, a, th);
        prop_assert!(l.eval(x, 0.0) <= l.eval(th, 0.0) + 1e-15);
    }

    #[test]
    fn bsc_with_zero_lambda_is_mirrored_directive(
        a0 in 0.01f64..1.0, a in 0.5f64..5000.0, b in 0.5f64..5000.0, th in 90f64..270.0, x in 90f64..270.0,
    ) {
        let bsc = Lobe::backscattering(a0, a, b, 0.0, th).eval(x, 180.0);
        let d = Lobe::directive(a0, b, -th).eval(x, 180.0);
        prop_assert!((bsc - d).abs() <= 1e-12 * a0);
    }

    #[test]
    fn evaluation_is_finite_and_nonnegative(
        a0 in 0.0f64..2.0, a in 0.5f64..5000.0, b in 0.5f64..5000.0, lam in 0.0f64..=1.0,
        th in -90f64..90.0, x in -90f64..90.0,
    ) {
        for lobe in [Lobe::lambertian(a0), Lobe::directive(a0, a, th), Lobe::backscattering(a0, a, b, lam, th)] {
            let v = lobe.eval(x, 0.0);
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }
}

#[test]
fn directive_round_trip() {
    let truth = Lobe::directive(0.21, 1500.0, 30.0);
    let p = pattern(PatternKind::Transmission, |a| truth.eval(a, 0.0));
    let m = fit_model(&p, Family::Directive).unwrap();
    let Shape::Single(l) = m.shape else { panic!() };
    assert!((l.a0 / 0.21 - 1.0).abs() < 0.01, "A0 {}", l.a0);
    assert!((l.theta_a - 30.0).abs() < 1.0, "theta_A {}", l.theta_a);
    assert!((l.a_a / 1500.0 - 1.0).abs() < 0.01, "aA {}", l.a_a);
}

#[test]
fn off_specular_lobe_is_found_from_local_maxima() {
    // Peak away from the specular direction: only a max-seeded start sees it.
    let truth = Lobe::directive(0.05, 40.0, 200.0);
    let p = pattern(PatternKind::Reflection, |a| truth.eval(a, 180.0));
    let m = fit_model(&p, Family::Directive).unwrap();
    let Shape::Single(l) = m.shape else { panic!() };
    assert!((l.theta_a - 200.0).abs() < 0.1);
    assert!(m.mse < 1e-16);
}

#[test]
fn fit_never_worse_than_best_start() {
    let p = pattern(PatternKind::Reflection, |a| {
        0.1 * Lobe::directive(1.0, 300.0, 150.0).eval(a, 180.0) + 0.02 * ((a / 7.0).sin()).abs()
    });
    for f in Family::ALL {
        let r = fit_model_report(&p, f, &FitOptions::default()).unwrap();
        assert!(r.model.mse <= r.initial_mse, "{f}: {} > {}", r.model.mse, r.initial_mse);
        assert!(r.converged_starts > 0);
    }
}

#[test]
fn reported_mse_is_recomputable() {
    let p = pattern(PatternKind::Reflection, |a| {
        let spec = Lobe::directive(0.09, 1000.0, 150.0).eval(a, 180.0);
        let diff = Lobe::backscattering(0.06, 9.0, 14.0, 0.6, 150.0).eval(a, 180.0);
        spec.hypot(diff) * (1.0 + 0.05 * (a * 0.37).sin())
    });
    let sel = select_model_with(&p, &FitOptions::default()).unwrap();
    let y = p.magnitudes();
    for m in sel.candidates.iter().chain([&sel.chosen]) {
        let mse: f64 = p
            .angles_deg
            .iter()
            .zip(&y)
            .map(|(&a, &v)| (reference_eval(m, a) - v).powi(2))
            .sum::<f64>()
            / 181.0;
        assert!((m.mse - mse).abs() <= 1e-12 * mse.max(1e-300), "{}: {} vs {mse}", m.family(), m.mse);
    }
}

#[test]
fn lambertian_data_selects_lambertian() {
    let p = pattern(PatternKind::Transmission, |a| 0.08 * a.to_radians().cos().max(0.0).sqrt());
    assert_eq!(select_model(&p).unwrap().family(), Family::Lambertian);
}

#[test]
fn hybrid_data_selects_hybrid() {
    let p = pattern(PatternKind::Reflection, |a| {
        Lobe::directive(0.0963, 1000.0, 150.0)
            .eval(a, 180.0)
            .hypot(Lobe::directive(0.0749, 15.0, 150.0).eval(a, 180.0))
    });
    let m = select_model(&p).unwrap();
    assert_eq!(m.family(), Family::HybridDirective);
    let Shape::Hybrid(h) = m.shape else { panic!() };
    assert!((h.diffuse.a0 / 0.0749 - 1.0).abs() < 0.05, "{h:?}");
    assert!((h.specular.theta_a - 150.0).abs() < 0.5);
}

#[test]
fn backscattering_data_selects_backscattering() {
    let truth = Lobe::backscattering(0.0556, 8.0, 12.0, 0.6, 150.0);
    let p = pattern(PatternKind::Reflection, |a| truth.eval(a, 180.0));
    let m = select_model(&p).unwrap();
    assert_eq!(m.family(), Family::Backscattering);
    let Shape::Single(l) = m.shape else { panic!() };
    assert!((l.a0 / 0.0556 - 1.0).abs() < 0.01);
    assert!((l.lambda - 0.6).abs() < 0.01);
}

#[test]
fn refit_of_evaluated_model_is_stable() {
    let truth = Lobe::backscattering(0.05, 20.0, 6.0, 0.7, 140.0);
    let p = pattern(PatternKind::Reflection, |a| truth.eval(a, 180.0));
    let first = select_model(&p).unwrap();
    let q = pattern(PatternKind::Reflection, |a| first.eval(a));
    let second = select_model(&q).unwrap();
    assert_eq!(first.family(), second.family());
    let (Shape::Single(a), Shape::Single(b)) = (first.shape, second.shape) else { panic!() };
    for (x, y) in [(a.a0, b.a0), (a.a_a, b.a_a), (a.a_b, b.a_b), (a.lambda, b.lambda), (a.theta_a, b.theta_a)] {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn rejects_wrong_length_and_rcs() {
    let mut p = pattern(PatternKind::Reflection, |_| 0.1);
    p.values.pop();
    assert!(fit_model(&p, Family::Directive).is_err());
    let r = pattern(PatternKind::Rcs, |_| 0.1);
    assert!(fit_model(&r, Family::Lambertian).is_err());
}

#[test]
fn model_file_round_trip() {
    let mut set = ModelSet::default();
    set.push(30.0, 2e-3, ScatterModel {
        kind: PatternKind::Reflection,
        shape: Shape::Hybrid(Hybrid {
            specular: Lobe::directive(0.0963, 1000.0, 150.0),
            diffuse: Lobe::backscattering(0.0749, 15.0, 3.0, 0.25, 150.0),
            specular_mse: 1.5e-6,
            diffuse_mse: 2.5e-5,
        }),
        mse: 3.0e-5,
    });
    set.push(30.0, 2e-3, ScatterModel {
        kind: PatternKind::Transmission,
        shape: Shape::Single(Lobe::lambertian(0.04)),
        mse: 1e-6,
    });
    set.push(45.0, 2e-3, ScatterModel {
        kind: PatternKind::Transmission,
        shape: Shape::Single(Lobe::directive(0.12, 1500.0, 45.0)),
        mse: 2e-6,
    });
    let text = set.to_text(Some("slabscat test"));
    let back = ModelSet::from_text(&text).unwrap();
    assert_eq!(back.entries.len(), 3);
    for (a, b) in set.entries.iter().zip(&back.entries) {
        assert_eq!(a.model.family(), b.model.family());
        for th in (-90..=270).step_by(7).map(f64::from) {
            assert!((a.model.eval(th) - b.model.eval(th)).abs() < 1e-6 * a.model.eval(th).max(1e-12));
        }
    }
    assert_eq!(back.nearest(PatternKind::Transmission, 41.0).unwrap().theta_i_deg, 45.0);
    assert_eq!(back.nearest(PatternKind::Transmission, 10.0).unwrap().theta_i_deg, 30.0);
    assert!(ModelSet::from_text("@ reflection 30 0\nHD - - - - - 1\nspecular D 1 1 - - 150 0\n").is_err());
    assert!(ModelSet::from_text("@ reflection 30 0\nD 1 1 - 2 150 0\n").is_err());
}

#[test]
fn track_flags_transitions() {
    let mk = |f: &dyn Fn(f64) -> f64| pattern(PatternKind::Reflection, f);
    let d = mk(&|a| Lobe::directive(0.3, 1000.0, 150.0).eval(a, 180.0));
    let hd = mk(&|a| {
        Lobe::directive(0.1, 1000.0, 150.0)
            .eval(a, 180.0)
            .hypot(Lobe::directive(0.07, 15.0, 150.0).eval(a, 180.0))
    });
    let bsc = mk(&|a| Lobe::backscattering(0.05, 8.0, 12.0, 0.6, 150.0).eval(a, 180.0));
    let rows = specular_track(&[(6e-3, bsc), (0.0, d), (2e-3, hd)], &FitOptions::default()).unwrap();
    let fams: Vec<Family> = rows.iter().map(|r| r.model.family()).collect();
    assert_eq!(fams, [Family::Directive, Family::HybridDirective, Family::Backscattering]);
    assert_eq!(rows[0].transition, None);
    assert_eq!(rows[1].transition, Some(Transition::DiffuseOnset));
    assert_eq!(rows[2].transition, Some(Transition::SpecularVanished));
    assert!((rows[0].specular - 0.3).abs() < 1e-12);
}


#[test]
fn specular_width_threshold_is_half_power_at_quarter_width() {
    let a = specular_min_a(10.0);
    // Power of a directive lobe 5° off its peak.
    let amp = Lobe::directive(1.0, a, 0.0).eval(5.0, 0.0);
    assert!((amp * amp - 0.5).abs() < 1e-12, "{a}");
    assert!((a - 364.0).abs() < 1.0);
}

#[test]
fn weak_diffuse_floor_leaves_the_specular_lobe() {
    let p = pattern(PatternKind::Reflection, |a| {
        Lobe::directive(0.21, 1000.0, 150.0)
            .eval(a, 180.0)
            .hypot(Lobe::directive(0.04, 12.0, 152.0).eval(a, 180.0))
    });
    let sel = select_model_with(&p, &FitOptions::default()).unwrap();
    assert_eq!(sel.regime, Regime::Specular);
    let Shape::Single(l) = sel.chosen.shape else { panic!() };
    assert_eq!(l.family, Family::Directive);
    assert!((l.a0 / 0.21 - 1.0).abs() < 0.05, "{l:?}");
    assert!((l.theta_a - 150.0).abs() < 0.5);
}
