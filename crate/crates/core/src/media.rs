//! Material models and roughness phase statistics.
//!
//! Conductivity follows the ITU-R P.2040 power law `σ = c·f^d` with `f` in
//! GHz. Complex permittivities use the `e^{+jωt}` convention throughout the
//! crate, so lossy media have `Im(ε_r) < 0`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const C0: f64 = 299_792_458.0;
pub const MU0: f64 = 1.256_637_062_12e-6;
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);
pub const ETA0: f64 = MU0 * C0;

/// ITU-R style material description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    #[serde(default)]
    pub name: String,
    pub eps_real: f64,
    pub cond_coeff: f64,
    #[serde(default)]
    pub cond_exp: f64,
}

impl MaterialParams {
    pub fn new(name: &str, eps_real: f64, cond_coeff: f64, cond_exp: f64) -> Self {
        Self {
            name: name.to_string(),
            eps_real,
            cond_coeff,
            cond_exp,
        }
    }

    pub fn vacuum() -> Self {
        Self::new("vacuum", 1.0, 0.0, 0.0)
    }

    pub fn wood() -> Self {
        Self::new("wood", 1.99, 0.0047, 1.0718)
    }

    pub fn plasterboard() -> Self {
        Self::new("plasterboard", 2.94, 0.0116, 0.7076)
    }

    pub fn concrete() -> Self {
        Self::new("concrete", 5.24, 0.0462, 0.7822)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eps_real.is_finite() || self.eps_real < 1.0 {
            return Err(Error::invalid(
                "eps_real",
                format!("must be >= 1, got {}", self.eps_real),
            ));
        }
        if !self.cond_coeff.is_finite() || self.cond_coeff < 0.0 {
            return Err(Error::invalid(
                "cond_coeff",
                format!("must be >= 0, got {}", self.cond_coeff),
            ));
        }
        if !self.cond_exp.is_finite() {
            return Err(Error::invalid("cond_exp", "must be finite"));
        }
        Ok(())
    }
}

/// A material evaluated at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    pub eps_real: f64,
    pub sigma: f64,
    pub frequency: f64,
}

impl Medium {
    pub fn vacuum(frequency: f64) -> Self {
        Self {
            eps_real: 1.0,
            sigma: 0.0,
            frequency,
        }
    }

    /// Lossy dielectric given directly by `ε′` and `σ` (S/m).
    pub fn lossy(eps_real: f64, sigma: f64, frequency: f64) -> Self {
        Self {
            eps_real,
            sigma,
            frequency,
        }
    }

    /// `ε_r = ε′ − jσ/(ε₀ω)`.
    pub fn eps_r(&self) -> Complex64 {
        let omega = 2.0 * PI * self.frequency;
        Complex64::new(self.eps_real, -self.sigma / (EPS0 * omega))
    }

    /// Real part of the principal square root of `ε_r`.
    pub fn refractive_index(&self) -> f64 {
        self.eps_r().sqrt().re
    }

    pub fn is_vacuum(&self) -> bool {
        self.eps_real == 1.0 && self.sigma == 0.0
    }
}

/// Evaluates `m` at `f_ghz` gigahertz.
pub fn medium_at(m: &MaterialParams, f_ghz: f64) -> Medium {
    let sigma = if m.cond_coeff == 0.0 {
        0.0
    } else {
        m.cond_coeff * f_ghz.powf(m.cond_exp)
    };
    Medium {
        eps_real: m.eps_real,
        sigma,
        frequency: f_ghz * 1e9,
    }
}

pub fn wavelength(frequency: f64) -> f64 {
    C0 / frequency
}

/// Refraction angle from Snell's law with real indices.
fn refraction_cos(theta_i: f64, n1: f64, n2: f64) -> Result<f64> {
    let s2 = n1 * theta_i.sin() / n2;
    if s2 > 1.0 {
        return Err(Error::TotalInternalReflection {
            n1,
            n2,
            theta_deg: theta_i.to_degrees(),
        });
    }
    Ok((1.0 - s2 * s2).sqrt())
}

fn check_incidence(theta_i: f64) -> Result<()> {
    if !(0.0..PI / 2.0).contains(&theta_i) {
        return Err(Error::invalid(
            "theta_i",
            format!("must lie in [0, 90) deg, got {}", theta_i.to_degrees()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDeviation {
    pub reflection: f64,
    pub transmission: f64,
}

/// Phase offsets of the reflected and transmitted components produced by a
/// height step `dh` (angles in radians).
pub fn phase_deviation(
    dh: f64,
    theta_i: f64,
    lambda: f64,
    n1: f64,
    n2: f64,
) -> Result<PhaseDeviation> {
    check_incidence(theta_i)?;
    let k = 2.0 * PI / lambda;
    let cos2 = refraction_cos(theta_i, n1, n2)?;
    Ok(PhaseDeviation {
        reflection: 2.0 * k * dh * theta_i.cos(),
        transmission: k * dh * (n1 * theta_i.cos() - n2 * cos2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalHeights {
    pub reflection: f64,
    /// `f64::INFINITY` when the transmitted phase is insensitive to height.
    pub transmission: f64,
}

/// Rayleigh-criterion rms heights above which a surface counts as rough.
pub fn critical_heights(theta_i: f64, lambda: f64, n1: f64, n2: f64) -> Result<CriticalHeights> {
    check_incidence(theta_i)?;
    let cos2 = refraction_cos(theta_i, n1, n2)?;
    let denom = (n1 * theta_i.cos() - n2 * cos2).abs();
    let scale = n1.abs().max(n2.abs());
    let transmission = if denom <= 4.0 * f64::EPSILON * scale {
        f64::INFINITY
    } else {
        lambda / (4.0 * denom)
    };
    Ok(CriticalHeights {
        reflection: lambda / (8.0 * theta_i.cos()),
        transmission,
    })
}

/// Wave polarization relative to the plane of incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    Te,
    /// Magnetic field perpendicular to the plane of incidence.
    Tm,
}

/// Normal wavenumber component `√(ε − sin²θ)` (units of k₀) on the decaying
/// branch.
fn normal_index(eps: Complex64, sin_t: f64) -> Complex64 {
    let mut q = (eps - sin_t * sin_t).sqrt();
    if q.im > 0.0 {
        q = -q;
    }
    if q.re < 0.0 {
        q = -q;
    }
    q
}

/// Plane-wave coefficients of an interface or a slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabCoefficients {
    pub reflection: Complex64,
    pub transmission: Complex64,
}

/// Reflection/transmission of a planar three-medium stack (outer media
/// `above`, `below`, middle layer of `thickness`) via the summed Airy series.
pub fn slab_coefficients(
    above: &Medium,
    slab: &Medium,
    below: &Medium,
    thickness: f64,
    theta_i: f64,
    pol: Polarization,
) -> SlabCoefficients {
    let k0 = 2.0 * PI * slab.frequency / C0;
    let sin_t = above.refractive_index() * theta_i.sin();
    let (e1, e2, e3) = (above.eps_r(), slab.eps_r(), below.eps_r());
    let (q1, q2, q3) = (
        normal_index(e1, sin_t),
        normal_index(e2, sin_t),
        normal_index(e3, sin_t),
    );
    let (y1, y2, y3) = match pol {
        Polarization::Te => (q1, q2, q3),
        Polarization::Tm => (q1 / e1, q2 / e2, q3 / e3),
    };
    let r12 = (y1 - y2) / (y1 + y2);
    let r23 = (y2 - y3) / (y2 + y3);
    let t12 = 2.0 * y1 / (y1 + y2);
    let t23 = 2.0 * y2 / (y2 + y3);
    let j = Complex64::i();
    let prop = (-j * k0 * q2 * thickness).exp();
    let prop2 = prop * prop;
    let den = 1.0 + r12 * r23 * prop2;
    SlabCoefficients {
        reflection: (r12 + r23 * prop2) / den,
        transmission: t12 * t23 * prop / den,
    }
}

/// Fresnel reflection coefficient of a half-space.
pub fn halfspace_reflection(
    above: &Medium,
    below: &Medium,
    theta_i: f64,
    pol: Polarization,
) -> Complex64 {
    let sin_t = above.refractive_index() * theta_i.sin();
    let (e1, e2) = (above.eps_r(), below.eps_r());
    let (q1, q2) = (normal_index(e1, sin_t), normal_index(e2, sin_t));
    let (y1, y2) = match pol {
        Polarization::Te => (q1, q2),
        Polarization::Tm => (q1 / e1, q2 / e2),
    };
    (y1 - y2) / (y1 + y2)
}

const BUILTIN_LIBRARY: &str = include_str!("../data/materials.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    #[serde(default)]
    materials: BTreeMap<String, MaterialParams>,
    #[serde(default)]
    user: BTreeMap<String, MaterialParams>,
}

/// Named material table. The shipped table can be extended from a TOML file
/// with the same layout; later entries override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    entries: BTreeMap<String, MaterialParams>,
}

impl MaterialLibrary {
    pub fn builtin() -> Self {
        let mut lib = Self::default();
        lib.merge_str(BUILTIN_LIBRARY)
            .expect("shipped material table parses");
        lib
    }

    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        let file: LibraryFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, mut m) in file.materials.into_iter().chain(file.user) {
            m.name = name.clone();
            m.validate()?;
            self.entries.insert(name, m);
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.merge_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&MaterialParams> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
