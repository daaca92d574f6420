//! Near-to-far-field transformation of probe-line phasors.
//!
//! Angles are measured from the `+z` axis (pointing into the slab): the
//! transmission half-space spans −90°..90°, the reflection half-space
//! 90°..270°, and a flat slab reflects specularly at `180° − θ_i`.
//! All far fields are reported with the `e^{−jkr}/√r` factor removed.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;

use crate::fdtd::{ProbeLine, ProbeRecord};
use crate::media::{C0, ETA0};
use crate::{Error, Result};

/// Which side of the slab a probe line watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Radiates upward (reflection half-space).
    Upper,
    /// Radiates downward (transmission half-space).
    Lower,
}

pub const PATTERN_POINTS: usize = 181;

/// `90°, 91°, …, 270°`.
pub fn reflection_angles() -> Vec<f64> {
    (0..PATTERN_POINTS).map(|i| 90.0 + i as f64).collect()
}

/// `−90°, −89°, …, 90°`.
pub fn transmission_angles() -> Vec<f64> {
    (0..PATTERN_POINTS).map(|i| -90.0 + i as f64).collect()
}

/// Far-field `E_y(θ)` radiated by the equivalent currents on `line`.
///
/// Currents are `J_y = ∓H_x`, `M_x = ∓E_y` (upper/lower), and the far field
/// is `√(jk/8π)·(cosθ·L − η₀·N)` with `N`, `L` the trapezoidal integrals of
/// `J_y`, `M_x` against `exp(jk(x sinθ + z cosθ))`.
pub fn far_field(
    line: &ProbeLine,
    side: Side,
    angles_deg: &[f64],
    frequency: f64,
) -> Result<Vec<Complex64>> {
    if line.x.is_empty() || line.ey.len() != line.x.len() || line.hx.len() != line.x.len() {
        return Err(Error::EmptyProbe);
    }
    let k = 2.0 * PI * frequency / C0;
    let sign = match side {
        Side::Upper => -1.0,
        Side::Lower => 1.0,
    };
    let n = line.x.len();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                return 1.0;
            }
            let left = if i > 0 {
                line.x[i] - line.x[i - 1]
            } else {
                0.0
            };
            let right = if i + 1 < n {
                line.x[i + 1] - line.x[i]
            } else {
                0.0
            };
            0.5 * (left + right)
        })
        .collect();
    let pre = (Complex64::i() * k / (8.0 * PI)).sqrt();
    Ok(angles_deg
        .iter()
        .map(|&deg| {
            let (s, c) = deg.to_radians().sin_cos();
            let mut nn = Complex64::new(0.0, 0.0);
            let mut ll = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let ph = Complex64::from_polar(weights[i], k * (line.x[i] * s + line.z * c));
                nn += sign * line.hx[i] * ph;
                ll += sign * line.ey[i] * ph;
            }
            pre * (c * ll - ETA0 * nn)
        })
        .collect())
}

/// Copy of `line` with both fields weighted by `exp(−((x − x_c)/g)²)`
/// about the line centre, suppressing the edge diffraction of a finite
/// aperture.
pub fn gaussian_taper(line: &ProbeLine, g: f64) -> ProbeLine {
    let xc = match (line.x.first(), line.x.last()) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => return line.clone(),
    };
    let w: Vec<f64> = line.x.iter().map(|x| (-((x - xc) / g).powi(2)).exp()).collect();
    ProbeLine {
        z: line.z,
        x: line.x.clone(),
        ey: line.ey.iter().zip(&w).map(|(v, w)| v * w).collect(),
        hx: line.hx.iter().zip(&w).map(|(v, w)| v * w).collect(),
    }
}

/// Far-field power per unit length radiated into `side`'s half-space,
/// `(1/2η₀)∫|E(θ)|²dθ`, integrated at `step_deg` resolution.
pub fn radiated_power(line: &ProbeLine, side: Side, frequency: f64, step_deg: f64) -> Result<f64> {
    let (a0, a1) = match side {
        Side::Upper => (90.0, 270.0),
        Side::Lower => (-90.0, 90.0),
    };
    let n = ((a1 - a0) / step_deg).round() as usize;
    let angles: Vec<f64> = (0..=n)
        .map(|i| a0 + (a1 - a0) * i as f64 / n as f64)
        .collect();
    let e = far_field(line, side, &angles, frequency)?;
    let h = ((a1 - a0) / n as f64).to_radians();
    let mut sum = 0.0;
    for (i, v) in e.iter().enumerate() {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += w * v.norm_sqr();
    }
    Ok(sum * h / (2.0 * ETA0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Reflection,
    Transmission,
    Rcs,
}

impl PatternKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::Reflection => "reflection",
            PatternKind::Transmission => "transmission",
            PatternKind::Rcs => "rcs",
        }
    }

    /// Angle (deg) of the surface normal on this pattern's side.
    pub fn normal_deg(self) -> f64 {
        match self {
            PatternKind::Transmission => 0.0,
            PatternKind::Reflection | PatternKind::Rcs => 180.0,
        }
    }

    /// Specular direction for incidence `theta_i_deg`.
    pub fn specular_deg(self, theta_i_deg: f64) -> f64 {
        match self {
            PatternKind::Transmission => theta_i_deg,
            PatternKind::Reflection | PatternKind::Rcs => 180.0 - theta_i_deg,
        }
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflection" => Ok(PatternKind::Reflection),
            "transmission" => Ok(PatternKind::Transmission),
            "rcs" => Ok(PatternKind::Rcs),
            other => Err(Error::parse("pattern kind", format!("unknown `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternMeta {
    pub theta_i_deg: f64,
    pub frequency: f64,
    pub material: String,
    pub sigma_h_upper: f64,
    pub sigma_h_lower: f64,
    pub n_realizations: usize,
    /// Largest per-angle standard error (dB) for ensemble means.
    pub stderr_db_max: Option<f64>,
}

impl PatternMeta {
    pub fn single(theta_i_deg: f64, frequency: f64, material: &str) -> Self {
        Self {
            theta_i_deg,
            frequency,
            material: material.to_string(),
            sigma_h_upper: 0.0,
            sigma_h_lower: 0.0,
            n_realizations: 1,
            stderr_db_max: None,
        }
    }
}

/// Complex (or, for RCS and ensemble means, real) values on a 1° grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularPattern {
    pub kind: PatternKind,
    pub angles_deg: Vec<f64>,
    pub values: Vec<Complex64>,
    pub meta: PatternMeta,
}

impl AngularPattern {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Value at the sample closest to `deg`.
    pub fn at(&self, deg: f64) -> Complex64 {
        let i = self
            .angles_deg
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - deg).abs().total_cmp(&(b.1 - deg).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.values[i]
    }

    pub fn specular(&self) -> f64 {
        self.at(self.kind.specular_deg(self.meta.theta_i_deg))
            .norm()
    }

    /// Text form: optional provenance line, header line with the metadata
    /// values, optional `# stderr_db_max` line, then
    /// `theta_deg re im abs abs_db` rows.
    pub fn to_text(&self, provenance: Option<&str>) -> String {
        let m = &self.meta;
        let mut out = String::new();
        if let Some(p) = provenance {
            let _ = writeln!(out, "#! {p}");
        }
        let _ = writeln!(
            out,
            "# {} {} {:e} {} {:e} {:e} {}",
            self.kind.as_str(),
            m.theta_i_deg,
            m.frequency,
            m.material,
            m.sigma_h_upper,
            m.sigma_h_lower,
            m.n_realizations
        );
        if let Some(s) = m.stderr_db_max {
            let _ = writeln!(out, "# stderr_db_max {s:.6}");
        }
        let power_db = self.kind == PatternKind::Rcs;
        for (a, v) in self.angles_deg.iter().zip(&self.values) {
            let mag = v.norm();
            let db = if power_db {
                10.0 * mag.log10()
            } else {
                20.0 * mag.log10()
            };
            let _ = writeln!(
                out,
                "{a} {:.10e} {:.10e} {:.10e} {:.4}",
                v.re, v.im, mag, db
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |r: String| Error::parse("pattern", r);
        let mut header: Option<(PatternKind, PatternMeta)> = None;
        let mut stderr = None;
        let mut angles = Vec::new();
        let mut values = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.starts_with("#!") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.first() == Some(&"stderr_db_max") {
                    let v = f
                        .get(1)
                        .ok_or_else(|| bad("stderr_db_max without value".into()))?;
                    stderr = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?);
                    continue;
                }
                if f.len() != 7 {
                    return Err(bad(format!("header needs 7 fields, got {}", f.len())));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
                header = Some((
                    f[0].parse()?,
                    PatternMeta {
                        theta_i_deg: num(f[1])?,
                        frequency: num(f[2])?,
                        material: f[3].to_string(),
                        sigma_h_upper: num(f[4])?,
                        sigma_h_lower: num(f[5])?,
                        n_realizations: f[6].parse().map_err(|_| bad("n_realizations".into()))?,
                        stderr_db_max: None,
                    },
                ));
                continue;
            }
            let f: Vec<f64> = line
                .split_whitespace()
                .take(3)
                .map(|s| s.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if f.len() < 3 {
                return Err(bad(format!("row `{line}` has fewer than 3 columns")));
            }
            angles.push(f[0]);
            values.push(Complex64::new(f[1], f[2]));
        }
        let (kind, mut meta) = header.ok_or_else(|| bad("missing header".into()))?;
        meta.stderr_db_max = stderr;
        if angles.is_empty() {
            return Err(bad("no rows".into()));
        }
        Ok(Self {
            kind,
            angles_deg: angles,
            values,
            meta,
        })
    }
}

fn check_reference(rec: &ProbeRecord) -> Result<()> {
    let m = rec.e_i.norm();
    if !(m.is_finite() && m > 1e-12) {
        return Err(Error::NoIncidentField(m));
    }
    Ok(())
}

/// `R(θ) = E_R(θ)/E_i` on 90°..270° and `T(θ) = E_T(θ)/E_i` on −90°..90°.
pub fn extract_coefficients(
    rec: &ProbeRecord,
    meta: &PatternMeta,
) -> Result<(AngularPattern, AngularPattern)> {
    check_reference(rec)?;
    let ra = reflection_angles();
    let ta = transmission_angles();
    let r = far_field(&rec.reflection, Side::Upper, &ra, rec.frequency)?;
    let t = far_field(&rec.transmission, Side::Lower, &ta, rec.frequency)?;
    let inv = 1.0 / rec.e_i;
    Ok((
        AngularPattern {
            kind: PatternKind::Reflection,
            angles_deg: ra,
            values: r.into_iter().map(|v| v * inv).collect(),
            meta: meta.clone(),
        },
        AngularPattern {
            kind: PatternKind::Transmission,
            angles_deg: ta,
            values: t.into_iter().map(|v| v * inv).collect(),
            meta: meta.clone(),
        },
    ))
}

/// Bistatic echo width `σ(θ) = 2π|E(θ)|²/|E₀|²` (metres, `r` cancelled) on
/// the reflection side, `E₀` being the incident plane-wave amplitude.
pub fn bistatic_rcs(rec: &ProbeRecord, meta: &PatternMeta) -> Result<AngularPattern> {
    let e0 = rec.incident_amplitude;
    if !(e0.is_finite() && e0 > 1e-12) {
        return Err(Error::NoIncidentField(e0));
    }
    let ra = reflection_angles();
    let e = far_field(&rec.reflection, Side::Upper, &ra, rec.frequency)?;
    Ok(AngularPattern {
        kind: PatternKind::Rcs,
        angles_deg: ra,
        values: e
            .iter()
            .map(|v| Complex64::new(2.0 * PI * v.norm_sqr() / (e0 * e0), 0.0))
            .collect(),
        meta: meta.clone(),
    })
}

/// Ratio of far-field power leaving both probe lines to the power the
/// reference (vacuum) run carries through its transmission line.
pub fn power_balance(rec: &ProbeRecord, reference: &ProbeRecord, step_deg: f64) -> Result<f64> {
    let f = rec.frequency;
    let out = radiated_power(&rec.reflection, Side::Upper, f, step_deg)?
        + radiated_power(&rec.transmission, Side::Lower, f, step_deg)?;
    let inc = radiated_power(&reference.transmission, Side::Lower, f, step_deg)?;
    Ok(out / inc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(
        n: usize,
        dx: f64,
        z: f64,
        ey: impl Fn(f64) -> Complex64,
        hx: impl Fn(f64) -> Complex64,
    ) -> ProbeLine {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        ProbeLine {
            z,
            ey: x.iter().map(|&v| ey(v)).collect(),
            hx: x.iter().map(|&v| hx(v)).collect(),
            x,
        }
    }

    const F: f64 = 28e9;

    #[test]
    fn zero_currents_radiate_nothing() {
        let l = line(
            50,
            1e-4,
            0.0,
            |_| Complex64::new(0.0, 0.0),
            |_| Complex64::new(0.0, 0.0),
        );
        for v in far_field(&l, Side::Upper, &reflection_angles(), F).unwrap() {
            assert_eq!(v.norm(), 0.0);
        }
    }

    #[test]
    fn empty_line_is_rejected() {
        let l = ProbeLine {
            z: 0.0,
            x: vec![],
            ey: vec![],
            hx: vec![],
        };
        assert!(matches!(
            far_field(&l, Side::Lower, &[0.0], F),
            Err(Error::EmptyProbe)
        ));
    }

    #[test]
    fn uniform_electric_current_matches_closed_form() {
        // J_y = 1 on a 10λ line centred at the origin; lower side so J = H_x.
        let lambda = C0 / F;
        let k = 2.0 * PI / lambda;
        let n = 2001;
        let len = 10.0 * lambda;
        let dx = len / (n - 1) as f64;
        let mut l = line(
            n,
            dx,
            0.0,
            |_| Complex64::new(0.0, 0.0),
            |_| Complex64::new(1.0, 0.0),
        );
        for x in &mut l.x {
            *x -= len / 2.0;
        }
        let angles: Vec<f64> = (0..=180).map(|i| -90.0 + i as f64).collect();
        let got = far_field(&l, Side::Lower, &angles, F).unwrap();
        let pre = (Complex64::i() * k / (8.0 * PI)).sqrt();
        let peak = (pre * ETA0 * len).norm();
        for (a, g) in angles.iter().zip(&got) {
            let u = k * a.to_radians().sin() * len / 2.0;
            let sinc = if u.abs() < 1e-12 { 1.0 } else { u.sin() / u };
            let want = (pre * ETA0 * len * sinc).norm();
            assert!(
                (g.norm() - want).abs() <= 0.01 * peak,
                "{a}: {} vs {want}",
                g.norm()
            );
        }
    }

    #[test]
    fn downgoing_plane_wave_radiates_down_not_up() {
        let k = 2.0 * PI * F / C0;
        let th = 30f64.to_radians();
        let e = move |x: f64| Complex64::from_polar(1.0, -k * x * th.sin());
        let h = move |x: f64| -th.cos() / ETA0 * Complex64::from_polar(1.0, -k * x * th.sin());
        let l = line(700, (C0 / F) / 35.0, 0.0, e, h);
        let up = far_field(&l, Side::Upper, &[150.0], F).unwrap()[0].norm();
        let down = far_field(&l, Side::Lower, &[30.0], F).unwrap()[0].norm();
        assert!(up < 1e-10 * down, "{up} {down}");
    }

    #[test]
    fn linearity() {
        let k = 2.0 * PI * F / C0;
        let e = move |x: f64| Complex64::from_polar(1.0 + x, -k * x * 0.3);
        let h = move |x: f64| Complex64::new(0.002, -0.001) * (1.0 + 3.0 * x);
        let l = line(100, 3e-4, 0.01, e, h);
        let a = Complex64::new(-0.7, 2.1);
        let base = far_field(&l, Side::Upper, &reflection_angles(), F).unwrap();
        let scaled = far_field(&l.scaled(a), Side::Upper, &reflection_angles(), F).unwrap();
        for (b, s) in base.iter().zip(&scaled) {
            assert!((b * a - s).norm() <= 1e-12 * (1.0 + s.norm()));
        }
    }

    #[test]
    fn pattern_text_round_trip() {
        let p = AngularPattern {
            kind: PatternKind::Reflection,
            angles_deg: reflection_angles(),
            values: (0..181)
                .map(|i| Complex64::new(0.01 * i as f64, -0.002 * i as f64))
                .collect(),
            meta: PatternMeta {
                stderr_db_max: Some(0.31),
                n_realizations: 50,
                sigma_h_upper: 2e-3,
                sigma_h_lower: 2e-3,
                ..PatternMeta::single(30.0, 28e9, "plasterboard")
            },
        };
        let text = p.to_text(Some("slabscat test"));
        let q = AngularPattern::from_text(&text).unwrap();
        assert_eq!(q.kind, p.kind);
        assert_eq!(q.meta, p.meta);
        assert_eq!(q.angles_deg, p.angles_deg);
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }
}
