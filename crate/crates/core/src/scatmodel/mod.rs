//! Compact angular scattering models and their least-squares fits.
//!
//! A model maps a pattern angle (same convention as [`crate::ntff`]) to a
//! real amplitude `A(θ)` approximating `|E(θ)|/|E_i|`:
//!
//! * Lambertian: `A₀√cos θ`, with `θ` measured from the surface normal on
//!   the pattern's side and clamped to zero beyond ±90°.
//! * Directive: `A₀ ((1 + cos ψ_A)/2)^{a_A/2}`, `ψ_A = θ − θ_A`.
//! * Backscattering: `A₀ √(Λ((1+cos ψ_A)/2)^{a_A} + (1−Λ)((1+cos ψ_B)/2)^{a_B})`
//!   with `θ_B = −θ_A`.
//! * Hybrid directive: a narrow directive lobe for the specular direction
//!   combined root-sum-square with one diffuse lobe of any other family.

mod fit;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::ntff::PatternKind;
use crate::{Error, Result};

pub use fit::{
    fit_model, fit_model_report, select_model, select_model_with, specular_min_a, specular_track,
    FitOptions, SPECULAR_MAX_FWHM_DEG, FitReport, Regime, Selection, TrackRow, Transition,
};

/// Every pattern is sampled on 181 one-degree points.
pub const PATTERN_POINTS: usize = 181;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Lambertian,
    Directive,
    Backscattering,
    HybridDirective,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Lambertian,
        Family::Directive,
        Family::Backscattering,
        Family::HybridDirective,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Family::Lambertian => "L",
            Family::Directive => "D",
            Family::Backscattering => "BSc",
            Family::HybridDirective => "HD",
        }
    }

    /// Free parameters of a single lobe of this family.
    fn lobe_params(self) -> usize {
        match self {
            Family::Lambertian => 1,
            Family::Directive => 3,
            Family::Backscattering => 5,
            Family::HybridDirective => unreachable!("HD is not a single lobe"),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(Family::Lambertian),
            "D" => Ok(Family::Directive),
            "BSc" => Ok(Family::Backscattering),
            "HD" => Ok(Family::HybridDirective),
            other => Err(Error::parse("model family", format!("unknown `{other}`"))),
        }
    }
}

/// Normal direction and admissible `θ_A` range of a pattern side.
pub fn quadrant(kind: PatternKind) -> Result<(f64, f64, f64)> {
    match kind {
        PatternKind::Reflection => Ok((180.0, 90.0, 270.0)),
        PatternKind::Transmission => Ok((0.0, -90.0, 90.0)),
        PatternKind::Rcs => Err(Error::invalid("pattern", "RCS patterns are not fitted")),
    }
}

/// `((1 + cos ψ)/2)^p` for `ψ` in degrees, zero where the base vanishes.
fn lobe_power(psi_deg: f64, p: f64) -> f64 {
    let base = 0.5 * (1.0 + psi_deg.to_radians().cos());
    if base <= 0.0 {
        0.0
    } else {
        (p * base.ln()).exp()
    }
}

/// One L, D or BSc lobe. Unused parameters are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lobe {
    pub family: Family,
    pub a0: f64,
    pub a_a: f64,
    pub a_b: f64,
    pub lambda: f64,
    /// Degrees, pattern convention; `θ_B = −θ_A`.
    pub theta_a: f64,
}

impl Lobe {
    pub fn lambertian(a0: f64) -> Self {
        Self { family: Family::Lambertian, a0, a_a: 0.0, a_b: 0.0, lambda: 0.0, theta_a: 0.0 }
    }

    pub fn directive(a0: f64, a_a: f64, theta_a: f64) -> Self {
        Self { family: Family::Directive, a0, a_a, a_b: 0.0, lambda: 0.0, theta_a }
    }

    pub fn backscattering(a0: f64, a_a: f64, a_b: f64, lambda: f64, theta_a: f64) -> Self {
        Self { family: Family::Backscattering, a0, a_a, a_b, lambda, theta_a }
    }

    /// Amplitude at pattern angle `theta` (deg) on a side whose normal
    /// points at `normal_deg`.
    pub fn eval(&self, theta: f64, normal_deg: f64) -> f64 {
        match self.family {
            Family::Lambertian => {
                let c = (theta - normal_deg).to_radians().cos();
                if c > 0.0 {
                    self.a0 * c.sqrt()
                } else {
                    0.0
                }
            }
            Family::Directive => self.a0 * lobe_power(theta - self.theta_a, 0.5 * self.a_a),
            Family::Backscattering => {
                let a = lobe_power(theta - self.theta_a, self.a_a);
                let b = lobe_power(theta + self.theta_a, self.a_b);
                self.a0 * (self.lambda * a + (1.0 - self.lambda) * b).max(0.0).sqrt()
            }
            Family::HybridDirective => unreachable!("HD is not a single lobe"),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.a0, self.a_a, self.a_b, self.lambda, self.theta_a]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("model", "non-finite parameter"));
        }
        if self.a0 < 0.0 || self.a_a < 0.0 || self.a_b < 0.0 {
            return Err(Error::invalid("model", "A0, aA and aB must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("model", "Lambda must lie in [0, 1]"));
        }
        if self.family == Family::HybridDirective {
            return Err(Error::invalid("model", "a lobe cannot itself be HD"));
        }
        Ok(())
    }

    fn write_fields(&self, out: &mut String, mse: f64) {
        let opt = |used: bool, v: f64| if used { format!("{v:.6e}") } else { "-".into() };
        let fam = self.family;
        let _ = writeln!(
            out,
            "{} {:.6e} {} {} {} {} {:.6e}",
            fam.code(),
            self.a0,
            opt(fam != Family::Lambertian, self.a_a),
            opt(fam == Family::Backscattering, self.a_b),
            opt(fam == Family::Backscattering, self.lambda),
            if fam == Family::Lambertian { "-".to_string() } else { format!("{}", self.theta_a) },
            mse
        );
    }

    fn parse_fields(f: &[&str]) -> Result<(Self, f64)> {
        if f.len() != 7 {
            return Err(Error::parse("model", format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            if s == "-" {
                Ok(0.0)
            } else {
                s.parse().map_err(|_| Error::parse("model", format!("bad number `{s}`")))
            }
        };
        let lobe = Lobe {
            family: f[0].parse()?,
            a0: num(f[1])?,
            a_a: num(f[2])?,
            a_b: num(f[3])?,
            lambda: num(f[4])?,
            theta_a: num(f[5])?,
        };
        lobe.validate()?;
        Ok((lobe, num(f[6])?))
    }
}

/// Two-component hybrid directive model and its per-component residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hybrid {
    pub specular: Lobe,
    pub diffuse: Lobe,
    /// MSE of the specular lobe over its fitting window.
    pub specular_mse: f64,
    /// MSE of the diffuse lobe against the specular-removed residual.
    pub diffuse_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Single(Lobe),
    Hybrid(Hybrid),
}

/// A fitted model for one pattern side together with its MSE over all 181
/// pattern angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterModel {
    pub kind: PatternKind,
    pub shape: Shape,
    pub mse: f64,
}

impl ScatterModel {
    pub fn single(kind: PatternKind, lobe: Lobe) -> Self {
        Self { kind, shape: Shape::Single(lobe), mse: f64::NAN }
    }

    pub fn family(&self) -> Family {
        match self.shape {
            Shape::Single(l) => l.family,
            Shape::Hybrid(_) => Family::HybridDirective,
        }
    }

    /// Count of free parameters, used for the parsimony tie-break.
    pub fn n_params(&self) -> usize {
        match self.shape {
            Shape::Single(l) => l.family.lobe_params(),
            Shape::Hybrid(h) => 3 + h.diffuse.family.lobe_params(),
        }
    }

    pub fn normal_deg(&self) -> f64 {
        self.kind.normal_deg()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.normal_deg();
        match &self.shape {
            Shape::Single(l) => l.eval(theta, n),
            Shape::Hybrid(h) => h.specular.eval(theta, n).hypot(h.diffuse.eval(theta, n)),
        }
    }

    /// `(1/N)Σ(A(θₙ) − yₙ)²` over the given samples.
    pub fn mse_against(&self, angles: &[f64], magnitudes: &[f64]) -> f64 {
        let s: f64 = angles
            .iter()
            .zip(magnitudes)
            .map(|(&t, &y)| (self.eval(t) - y).powi(2))
            .sum();
        s / angles.len() as f64
    }

    /// The specular lobe of an HD model, or the whole model otherwise.
    /// A lone directive lobe narrow enough to be a specular beam: roughness
    /// only attenuates it.
    pub fn is_specular(&self) -> bool {
        matches!(self.shape, Shape::Single(l) if l.family == Family::Directive
            && l.a_a >= specular_min_a(SPECULAR_MAX_FWHM_DEG))
    }

    pub fn specular_part(&self) -> Lobe {
        match self.shape {
            Shape::Single(l) => l,
            Shape::Hybrid(h) => h.specular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        quadrant(self.kind)?;
        match &self.shape {
            Shape::Single(l) => l.validate(),
            Shape::Hybrid(h) => {
                h.specular.validate()?;
                h.diffuse.validate()?;
                if h.specular.family != Family::Directive {
                    return Err(Error::invalid("model", "HD specular component must be D"));
                }
                Ok(())
            }
        }
    }
}

/// A fitted model tagged with the incidence angle and roughness it was
/// fitted for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub theta_i_deg: f64,
    pub sigma_h: f64,
    pub model: ScatterModel,
}

/// The contents of a model file: any number of reflection and
/// transmission models at one or more incidence angles.
///
/// ```text
/// @ reflection 30 2e-3
/// HD - - - - - 4.1e-5
/// specular D 9.63e-2 1.0e3 - - 150 2.0e-6
/// diffuse D 7.49e-2 1.5e1 - - 150 3.3e-5
/// @ transmission 30 2e-3
/// D 1.219e-1 1.5e3 - - 30 1.1e-5
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    pub entries: Vec<ModelEntry>,
}

impl ModelSet {
    pub fn push(&mut self, theta_i_deg: f64, sigma_h: f64, model: ScatterModel) {
        self.entries.push(ModelEntry { theta_i_deg, sigma_h, model });
    }

    /// Entry of `kind` whose incidence angle is closest to `theta_i_deg`.
    pub fn nearest(&self, kind: PatternKind, theta_i_deg: f64) -> Option<&ModelEntry> {
        self.entries
            .iter()
            .filter(|e| e.model.kind == kind)
            .min_by(|a, b| {
                (a.theta_i_deg - theta_i_deg)
                    .abs()
                    .total_cmp(&(b.theta_i_deg - theta_i_deg).abs())
            })
    }

    pub fn to_text(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(p) = provenance {
            let _ = writeln!(out, "#! {p}");
        }
        let _ = writeln!(out, "# family A0 aA aB Lambda thetaA mse");
        for e in &self.entries {
            let m = &e.model;
            let _ = writeln!(out, "@ {} {} {:e}", m.kind.as_str(), e.theta_i_deg, e.sigma_h);
            match &m.shape {
                Shape::Single(l) => l.write_fields(&mut out, m.mse),
                Shape::Hybrid(h) => {
                    let _ = writeln!(out, "HD - - - - - {:.6e}", m.mse);
                    out.push_str("specular ");
                    h.specular.write_fields(&mut out, h.specular_mse);
                    out.push_str("diffuse ");
                    h.diffuse.write_fields(&mut out, h.diffuse_mse);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |r: String| Error::parse("model file", r);
        let mut set = ModelSet::default();
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        while let Some(line) = lines.next() {
            let head: Vec<&str> = line.split_whitespace().collect();
            if head.first() != Some(&"@") || head.len() != 4 {
                return Err(bad(format!("expected `@ kind theta_i sigma_h`, got `{line}`")));
            }
            let kind: PatternKind = head[1].parse()?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            let theta_i = num(head[2])?;
            let sigma_h = num(head[3])?;
            let body = lines.next().ok_or_else(|| bad("section without a model".into()))?;
            let f: Vec<&str> = body.split_whitespace().collect();
            let model = if f.first() == Some(&"HD") {
                let mse = num(f.last().copied().unwrap_or("-"))?;
                let mut part = |tag: &str| -> Result<(Lobe, f64)> {
                    let l = lines.next().ok_or_else(|| bad(format!("HD model missing `{tag}`")))?;
                    let g: Vec<&str> = l.split_whitespace().collect();
                    if g.first() != Some(&tag) {
                        return Err(bad(format!("expected `{tag}` line, got `{l}`")));
                    }
                    Lobe::parse_fields(&g[1..])
                };
                let (specular, specular_mse) = part("specular")?;
                let (diffuse, diffuse_mse) = part("diffuse")?;
                ScatterModel {
                    kind,
                    shape: Shape::Hybrid(Hybrid { specular, diffuse, specular_mse, diffuse_mse }),
                    mse,
                }
            } else {
                let (lobe, mse) = Lobe::parse_fields(&f)?;
                ScatterModel { kind, shape: Shape::Single(lobe), mse }
            };
            model.validate()?;
            set.push(theta_i, sigma_h, model);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests;
