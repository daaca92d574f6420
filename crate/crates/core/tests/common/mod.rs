//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

pub const C0: f64 = 299_792_458.0;
pub const EPS0: f64 = 8.854_187_8128e-12;

/// Complex relative permittivity `ε′ − jσ/(ωε₀)`.
pub fn eps_complex(eps_real: f64, sigma: f64, f: f64) -> Complex64 {
    Complex64::new(eps_real, -sigma / (2.0 * PI * f * EPS0))
}

/// TE plane wave through a stack of layers between two vacuum half-spaces,
/// via 2x2 characteristic matrices. Returns `(r, t)` for the tangential
/// electric field.
pub fn tmm_te(layers: &[(Complex64, f64)], theta: f64, f: f64) -> (Complex64, Complex64) {
    let k0 = 2.0 * PI * f / C0;
    let s2 = Complex64::new(theta.sin().powi(2), 0.0);
    let q = |eps: Complex64| {
        let v = (eps - s2).sqrt();
        if v.im > 0.0 {
            -v
        } else {
            v
        }
    };
    let q0 = q(Complex64::new(1.0, 0.0));
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    let mut m = [[one, zero], [zero, one]];
    for &(eps, d) in layers {
        let ql = q(eps);
        let delta = k0 * ql * d;
        let l = [
            [delta.cos(), j * delta.sin() / ql],
            [j * ql * delta.sin(), delta.cos()],
        ];
        m = [
            [
                m[0][0] * l[0][0] + m[0][1] * l[1][0],
                m[0][0] * l[0][1] + m[0][1] * l[1][1],
            ],
            [
                m[1][0] * l[0][0] + m[1][1] * l[1][0],
                m[1][0] * l[0][1] + m[1][1] * l[1][1],
            ],
        ];
    }
    let a = q0 * (m[0][0] + m[0][1] * q0);
    let b = m[1][0] + m[1][1] * q0;
    ((a - b) / (a + b), 2.0 * q0 / (a + b))
}

pub fn db(v: f64) -> f64 {
    20.0 * v.log10()
}
