//! Indoor scenes: axis-aligned walls, their optics and the transmitter.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use super::geometry::{Rect, V3};
use crate::media::{
    halfspace_reflection, medium_at, slab_coefficients, MaterialLibrary, MaterialParams, Medium,
    Polarization,
};
use crate::ntff::PatternKind;
use crate::scatmodel::{ModelEntry, ModelSet, ScatterModel, Shape};
use crate::{Error, Result};

/// How a wall interacts with a ray.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Thick wall: Fresnel reflection, nothing transmitted.
    SmoothHalfspace,
    SmoothSlab { thickness: f64 },
    /// Slab whose roughness is described by fitted R/T models per incidence bin.
    RoughSlab { thickness: f64, models: ModelSet },
}

/// Which coefficients rough walls use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RssMode {
    /// Rough walls treated as their smooth slab.
    Flat,
    /// Smooth-slab coefficients scaled down to the fitted specular level.
    AttenuationOnly,
    /// As `AttenuationOnly` for the specular part, plus fans of diffuse tubes.
    WithDiffuse,
}

impl RssMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RssMode::Flat => "flat",
            RssMode::AttenuationOnly => "attenuation-only",
            RssMode::WithDiffuse => "with-diffuse",
        }
    }
}

impl std::str::FromStr for RssMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(RssMode::Flat),
            "attenuation-only" | "attenuation_only" => Ok(RssMode::AttenuationOnly),
            "with-diffuse" | "with_diffuse" => Ok(RssMode::WithDiffuse),
            _ => Err(Error::invalid("mode", format!("unknown ray-tracing mode `{s}`"))),
        }
    }
}

/// Reflected or transmitted side of a wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    R,
    T,
}

impl Side {
    pub fn kind(self) -> PatternKind {
        match self {
            Side::R => PatternKind::Reflection,
            Side::T => PatternKind::Transmission,
        }
    }

    /// Pattern angle of the specular direction for incidence `theta_deg`.
    pub fn specular_deg(self, theta_deg: f64) -> f64 {
        match self {
            Side::R => 180.0 - theta_deg,
            Side::T => theta_deg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Wall {
    pub name: String,
    pub rect: Rect,
    pub material: MaterialParams,
    pub medium: Medium,
    pub surface: Surface,
}

impl Wall {
    pub fn new(name: &str, rect: Rect, material: MaterialParams, f_ghz: f64, surface: Surface) -> Result<Self> {
        let wall = Wall {
            name: name.to_string(),
            rect,
            medium: medium_at(&material, f_ghz),
            material,
            surface,
        };
        wall.validate()?;
        Ok(wall)
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Wall {
            wall: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rect;
        if !(r.hi[0] > r.lo[0] && r.hi[1] > r.lo[1]) || !r.offset.is_finite() {
            return Err(self.fail("degenerate rectangle"));
        }
        self.material.validate().map_err(|e| self.fail(e.to_string()))?;
        match &self.surface {
            Surface::SmoothHalfspace => {}
            Surface::SmoothSlab { thickness } | Surface::RoughSlab { thickness, .. } => {
                if !(*thickness > 0.0 && thickness.is_finite()) {
                    return Err(self.fail("slab thickness must be positive"));
                }
            }
        }
        if let Surface::RoughSlab { models, .. } = &self.surface {
            for side in [Side::R, Side::T] {
                if models.nearest(side.kind(), 30.0).is_none() {
                    return Err(self.fail(format!("no {} model", side.kind().as_str())));
                }
            }
            for e in &models.entries {
                e.model.validate().map_err(|err| self.fail(err.to_string()))?;
            }
        }
        Ok(())
    }

    /// Vertical walls see the vertically polarized field as TE, floors and
    /// ceilings as TM.
    pub fn polarization(&self) -> Polarization {
        if self.rect.axis == 2 {
            Polarization::Tm
        } else {
            Polarization::Te
        }
    }

    pub fn transmits(&self) -> bool {
        !matches!(self.surface, Surface::SmoothHalfspace)
    }

    pub fn models(&self) -> Option<&ModelSet> {
        match &self.surface {
            Surface::RoughSlab { models, .. } => Some(models),
            _ => None,
        }
    }

    /// Smooth-wall coefficient on `side` at incidence `theta` (rad).
    pub fn flat_coefficient(&self, side: Side, theta: f64, pol: Polarization) -> Complex64 {
        let vac = Medium::vacuum(self.medium.frequency);
        match (&self.surface, side) {
            (Surface::SmoothHalfspace, Side::R) => halfspace_reflection(&vac, &self.medium, theta, pol),
            (Surface::SmoothHalfspace, Side::T) => Complex64::new(0.0, 0.0),
            (Surface::SmoothSlab { thickness } | Surface::RoughSlab { thickness, .. }, _) => {
                let c = slab_coefficients(&vac, &self.medium, &vac, *thickness, theta, pol);
                match side {
                    Side::R => c.reflection,
                    Side::T => c.transmission,
                }
            }
        }
    }

    /// Fitted model for `side` in the incidence bin nearest `theta` (rad).
    pub fn model_entry(&self, side: Side, theta: f64) -> Result<&ModelEntry> {
        let models = self.models().ok_or_else(|| self.fail("wall is not rough"))?;
        models
            .nearest(side.kind(), theta.to_degrees())
            .ok_or_else(|| self.fail(format!("no {} model", side.kind().as_str())))
    }

    /// Ratio (≤ 1) of the fitted specular amplitude to the smooth slab in the
    /// model's bin. `specular_only` keeps just the specular lobe of hybrid
    /// models. Models fitted at `σ_h = 0` give exactly 1.
    pub fn roughness_factor(&self, side: Side, theta: f64, specular_only: bool) -> Result<f64> {
        let entry = self.model_entry(side, theta)?;
        if entry.sigma_h == 0.0 {
            return Ok(1.0);
        }
        // Models come from TE simulations, so they are referenced to TE.
        let flat = self
            .flat_coefficient(side, entry.theta_i_deg.to_radians(), Polarization::Te)
            .norm();
        if flat < 1e-12 {
            return Ok(1.0);
        }
        let m = &entry.model;
        let at = side.specular_deg(entry.theta_i_deg);
        let a = if specular_only { m.specular_part().eval(at, m.normal_deg()) } else { m.eval(at) };
        Ok((a / flat).min(1.0))
    }

    /// Whether a rough wall spawns a diffuse fan on `side`: always, except
    /// for models that are a lone specular beam.
    pub fn fans(&self, side: Side, theta: f64) -> Result<bool> {
        if self.models().is_none() {
            return Ok(false);
        }
        Ok(!self.model_entry(side, theta)?.model.is_specular())
    }

    /// Coefficient carried by the specular (coherent) child, or `None` when a
    /// diffuse fan replaces it. `fan_budget` says whether the tube may still
    /// spawn fans.
    pub fn specular_coefficient(&self, side: Side, theta: f64, mode: RssMode, fan_budget: bool) -> Result<Option<Complex64>> {
        let c = self.flat_coefficient(side, theta, self.polarization());
        if self.models().is_none() || mode == RssMode::Flat {
            return Ok(Some(c));
        }
        if mode == RssMode::WithDiffuse && fan_budget && self.fans(side, theta)? {
            let entry = self.model_entry(side, theta)?;
            return match entry.model.shape {
                Shape::Hybrid(_) => Ok(Some(c * self.roughness_factor(side, theta, true)?)),
                Shape::Single(_) => Ok(None),
            };
        }
        Ok(Some(c * self.roughness_factor(side, theta, false)?))
    }
}

/// Diffuse part of a model: the whole model, or the diffuse lobe of HD.
pub fn diffuse_amplitude(m: &ScatterModel, theta_deg: f64) -> f64 {
    match &m.shape {
        Shape::Single(l) => l.eval(theta_deg, m.normal_deg()),
        Shape::Hybrid(h) => h.diffuse.eval(theta_deg, m.normal_deg()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmitter {
    pub position: V3,
    /// Unit boresight direction.
    pub boresight: V3,
    pub power_dbm: f64,
    /// Exponent of the cosine beam.
    pub exponent: f64,
}

impl Transmitter {
    pub fn power_mw(&self) -> f64 {
        10f64.powf(self.power_dbm / 10.0)
    }

    /// Linear gain towards unit direction `dir`.
    pub fn gain(&self, dir: &V3) -> f64 {
        super::antenna_gain(dir.dot(&self.boresight).clamp(-1.0, 1.0).acos(), self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub reflections: usize,
    pub transmissions: usize,
    pub diffuse: usize,
    /// Icosahedron subdivision level of the launched tubes.
    pub tessellation: u32,
    /// Angular step (deg) of diffuse fans.
    pub fan_step_deg: f64,
    /// Tubes whose power falls this far below the transmitter (dB) are dropped.
    pub cull_db: f64,
    /// Fan children this far below the incident tube (amplitude dB) are dropped.
    pub fan_cull_db: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            reflections: 4,
            transmissions: 2,
            diffuse: 1,
            tessellation: 6,
            fan_step_deg: 5.0,
            cull_db: -130.0,
            fan_cull_db: -60.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RayScene {
    pub frequency_ghz: f64,
    pub transmitter: Transmitter,
    pub walls: Vec<Wall>,
    pub limits: Limits,
}

impl RayScene {
    pub fn wavelength(&self) -> f64 {
        crate::media::wavelength(self.frequency_ghz * 1e9)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_ghz > 0.0) {
            return Err(Error::invalid("frequency_ghz", "must be positive"));
        }
        let tx = &self.transmitter;
        if (tx.boresight.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("boresight", "must be a unit vector"));
        }
        if !(tx.exponent >= 0.0) || !tx.power_dbm.is_finite() {
            return Err(Error::invalid("transmitter", "exponent must be >= 0 and power finite"));
        }
        let l = &self.limits;
        if !(l.fan_step_deg > 0.0 && l.fan_step_deg <= 90.0) {
            return Err(Error::invalid("fan_step_deg", "must lie in (0, 90]"));
        }
        if l.tessellation > 9 {
            return Err(Error::invalid("tessellation", "levels above 9 are not supported"));
        }
        for w in &self.walls {
            w.validate()?;
            if w.rect.signed_distance(&tx.position).abs() < 1e-9 && w.rect.contains(&tx.position, 1e-9) {
                return Err(Error::Wall {
                    wall: w.name.clone(),
                    reason: "transmitter lies on the wall".into(),
                });
            }
        }
        Ok(())
    }

    /// Loads a TOML scene. Model paths are relative to the scene file.
    pub fn from_file(path: &Path, library: &MaterialLibrary) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")), library)
    }

    pub fn from_toml(text: &str, base: &Path, library: &MaterialLibrary) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::parse("scene", e.to_string()))?;
        let tx = file.transmitter;
        let boresight = V3::from(tx.boresight);
        if boresight.norm() == 0.0 {
            return Err(Error::invalid("boresight", "must be non-zero"));
        }
        let mut walls = Vec::with_capacity(file.wall.len());
        for spec in &file.wall {
            walls.push(spec.build(file.frequency_ghz, base, library)?);
        }
        let scene = RayScene {
            frequency_ghz: file.frequency_ghz,
            transmitter: Transmitter {
                position: V3::from(tx.position),
                boresight: boresight.normalize(),
                power_dbm: tx.power_dbm,
                exponent: tx.exponent,
            },
            walls,
            limits: file.limits,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Two 7 m x 7 m rooms side by side, split by a plasterboard partition and
    /// fronted by an L-shaped corridor 3 m wide along `y` and on the far `x`
    /// side. Outer walls, floor and ceiling are concrete; the transmitter sits
    /// in the corridor aiming into the rooms.
    pub fn reference(partition: Surface) -> Result<Self> {
        let f = 28.0;
        let concrete = MaterialParams::concrete();
        let plaster = MaterialParams::plasterboard();
        let (h, lx, ly) = (3.0, 17.0, 10.0);
        let vertical = |name: &str, axis: usize, offset: f64, from: f64, to: f64, m: &MaterialParams, s: Surface| {
            let mut ranges = [[0.0, 0.0]; 3];
            ranges[1 - axis] = [from, to];
            ranges[2] = [0.0, h];
            Wall::new(name, Rect::new(axis, offset, ranges), m.clone(), f, s)
        };
        let mut walls = vec![
            vertical("west", 0, 0.0, 0.0, ly, &concrete, Surface::SmoothHalfspace)?,
            vertical("east", 0, lx, 0.0, ly, &concrete, Surface::SmoothHalfspace)?,
            vertical("south", 1, 0.0, 0.0, lx, &concrete, Surface::SmoothHalfspace)?,
            vertical("north", 1, ly, 0.0, lx, &concrete, Surface::SmoothHalfspace)?,
        ];
        for (name, axis, offset, from, to) in [
            ("partition", 0, 7.0, 0.0, 7.0),
            ("room-corridor", 1, 7.0, 0.0, 14.0),
            ("room-east", 0, 14.0, 0.0, 7.0),
        ] {
            walls.push(vertical(name, axis, offset, from, to, &plaster, partition.clone())?);
        }
        for (name, z) in [("floor", 0.0), ("ceiling", h)] {
            let rect = Rect::new(2, z, [[0.0, lx], [0.0, ly], [0.0, 0.0]]);
            walls.push(Wall::new(name, rect, concrete.clone(), f, Surface::SmoothHalfspace)?);
        }
        let a = 30f64.to_radians();
        let scene = RayScene {
            frequency_ghz: f,
            transmitter: Transmitter {
                position: V3::new(4.0, 9.9, 1.5),
                boresight: V3::new(a.sin(), -a.cos(), 0.0),
                power_dbm: 20.0,
                exponent: 100.0,
            },
            walls,
            limits: Limits::default(),
        };
        scene.validate()?;
        Ok(scene)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    frequency_ghz: f64,
    transmitter: TransmitterSpec,
    #[serde(default)]
    limits: Limits,
    #[serde(default)]
    wall: Vec<WallSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransmitterSpec {
    position: [f64; 3],
    boresight: [f64; 3],
    power_dbm: f64,
    exponent: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallSpec {
    name: String,
    material: String,
    surface: String,
    thickness: Option<f64>,
    models: Option<String>,
    /// Vertical walls: plan-view end points and vertical extent.
    from: Option<[f64; 2]>,
    to: Option<[f64; 2]>,
    z: Option<[f64; 2]>,
    /// Horizontal walls: extents and height.
    x: Option<[f64; 2]>,
    y: Option<[f64; 2]>,
    elevation: Option<f64>,
}

impl WallSpec {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Wall {
            wall: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn rect(&self) -> Result<Rect> {
        match (self.from, self.to, self.z, self.x, self.y, self.elevation) {
            (Some(a), Some(b), Some(z), None, None, None) => {
                let axis = if a[0] == b[0] {
                    0
                } else if a[1] == b[1] {
                    1
                } else {
                    return Err(self.fail("vertical walls must run along x or y"));
                };
                let mut ranges = [[a[0], b[0]], [a[1], b[1]], z];
                ranges[axis] = [0.0, 0.0];
                Ok(Rect::new(axis, a[axis], ranges))
            }
            (None, None, None, Some(x), Some(y), Some(e)) => Ok(Rect::new(2, e, [x, y, [0.0, 0.0]])),
            _ => Err(self.fail("give either from/to/z (vertical) or x/y/elevation (horizontal)")),
        }
    }

    fn build(&self, f_ghz: f64, base: &Path, library: &MaterialLibrary) -> Result<Wall> {
        let material = library.get(&self.material).map_err(|e| self.fail(e.to_string()))?.clone();
        let thickness = || self.thickness.ok_or_else(|| self.fail("slab surfaces need `thickness`"));
        let surface = match self.surface.as_str() {
            "smooth-halfspace" => Surface::SmoothHalfspace,
            "smooth-slab" => Surface::SmoothSlab { thickness: thickness()? },
            "rough-slab" => {
                let rel = self.models.as_ref().ok_or_else(|| self.fail("rough slabs need `models`"))?;
                let path = base.join(rel);
                let text = fs::read_to_string(&path)
                    .map_err(|e| self.fail(format!("cannot read models {}: {e}", path.display())))?;
                let models = ModelSet::from_text(&text).map_err(|e| self.fail(e.to_string()))?;
                Surface::RoughSlab { thickness: thickness()?, models }
            }
            other => return Err(self.fail(format!("unknown surface `{other}`"))),
        };
        if self.models.is_some() && !matches!(surface, Surface::RoughSlab { .. }) {
            return Err(self.fail("`models` only applies to rough slabs"));
        }
        Wall::new(&self.name, self.rect()?, material, f_ghz, surface)
    }
}
