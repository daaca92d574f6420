//! 2-D TE (`E_y`, `H_x`, `H_z`) FDTD for a rough three-layer slab under
//! oblique plane-wave incidence.
//!
//! Coordinates: `x` runs along the slab, `z` points down into it. The
//! incident wave travels toward `+x, +z` at `theta_i` from the `z` axis.
//! Inside a total-field box the grid carries the full field; outside it only
//! the field scattered by the departure from the flat stack. The flat-stack
//! field itself comes from a 1-D auxiliary grid, delayed along `x` for phase
//! matching.

mod aux;
mod contour;
mod sim;
mod upml;

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::media::{wavelength, Medium, C0};
use crate::surface::HeightProfile;
use crate::{Error, Result};

pub use aux::{AuxGridRecord, Interpolation, Source};
pub use contour::effective_permittivity;
pub use sim::{
    incident_reference, run_probes, simulate_slab, simulate_with_reference, IncidentReference,
};

/// Three-layer stack: `upper` (must be vacuum), `slab` of nominal
/// `thickness`, `lower`. Optional height profiles perturb the two
/// interfaces over the central aperture; positive heights move an
/// interface up (against `z`).
#[derive(Debug, Clone, PartialEq)]
pub struct SlabScene {
    pub frequency: f64,
    pub theta_i: f64,
    pub upper: Medium,
    pub slab: Medium,
    pub lower: Medium,
    pub thickness: f64,
    /// Cell size in both directions (m).
    pub dx: f64,
    /// Number of columns carrying roughness.
    pub aperture_cells: usize,
    pub upper_profile: Option<HeightProfile>,
    pub lower_profile: Option<HeightProfile>,
    /// Extra clearance (m) kept between each nominal interface and the
    /// nearest probe line / box edge to make room for roughness.
    pub roughness_allowance: f64,
    /// Length (m) trimmed from each end of both probe lines.
    pub probe_inset: f64,
}

impl SlabScene {
    /// Flat slab in vacuum with the default 20-wavelength aperture sampled
    /// at λ/35 and probe lines trimmed by one wavelength per side.
    pub fn flat(slab: Medium, thickness: f64, theta_i: f64) -> Self {
        let f = slab.frequency;
        let lambda = wavelength(f);
        Self {
            frequency: f,
            theta_i,
            upper: Medium::vacuum(f),
            slab,
            lower: Medium::vacuum(f),
            thickness,
            dx: lambda / 35.0,
            aperture_cells: 700,
            upper_profile: None,
            lower_profile: None,
            roughness_allowance: 0.0,
            probe_inset: lambda,
        }
    }

    /// Attaches interface profiles; aperture and cell size follow the
    /// profiles and the allowance covers six rms heights.
    pub fn with_profiles(
        mut self,
        upper: Option<HeightProfile>,
        lower: Option<HeightProfile>,
    ) -> Self {
        let mut sigma: f64 = 0.0;
        for p in upper.iter().chain(lower.iter()) {
            self.aperture_cells = p.spec.n_points;
            self.dx = p.spec.spacing;
            sigma = sigma.max(p.spec.rms_height);
        }
        self.roughness_allowance = self.roughness_allowance.max(6.0 * sigma);
        self.upper_profile = upper;
        self.lower_profile = lower;
        self
    }

    /// Same grid and source with every layer replaced by vacuum.
    pub fn vacuum_reference(&self) -> Self {
        let v = Medium::vacuum(self.frequency);
        Self {
            upper: v,
            slab: v,
            lower: v,
            upper_profile: None,
            lower_profile: None,
            ..self.clone()
        }
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.frequency)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(Error::invalid("frequency", "must be finite and > 0"));
        }
        if !(0.0..PI / 2.0).contains(&self.theta_i) {
            return Err(Error::invalid("theta_i", "must lie in [0, 90) deg"));
        }
        if !self.upper.is_vacuum() {
            return Err(Error::invalid(
                "upper",
                "the incidence layer must be vacuum",
            ));
        }
        for (name, m) in [
            ("upper", &self.upper),
            ("slab", &self.slab),
            ("lower", &self.lower),
        ] {
            if !(m.eps_real >= 1.0 && m.sigma >= 0.0 && m.sigma.is_finite()) {
                return Err(Error::invalid(
                    name,
                    "needs eps' >= 1 and finite sigma >= 0",
                ));
            }
        }
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return Err(Error::invalid("thickness", "must be finite and > 0"));
        }
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(Error::invalid("dx", "must be finite and > 0"));
        }
        if self.aperture_cells < 8 {
            return Err(Error::invalid("aperture_cells", "must be at least 8"));
        }
        if !(self.roughness_allowance >= 0.0 && self.probe_inset >= 0.0) {
            return Err(Error::invalid(
                "roughness_allowance",
                "allowance and probe inset must be >= 0",
            ));
        }
        for (name, p) in [
            ("upper_profile", &self.upper_profile),
            ("lower_profile", &self.lower_profile),
        ] {
            if let Some(p) = p {
                if p.len() != self.aperture_cells {
                    return Err(Error::invalid(name, "length must equal aperture_cells"));
                }
                if ((p.spec.spacing - self.dx) / self.dx).abs() > 1e-9 {
                    return Err(Error::invalid(
                        name,
                        "sample spacing must equal the cell size",
                    ));
                }
                if p.max_abs() > self.roughness_allowance {
                    return Err(Error::Geometry(format!(
                        "{name} excursion {:.3e} m exceeds the roughness allowance {:.3e} m",
                        p.max_abs(),
                        self.roughness_allowance
                    )));
                }
            }
        }
        let inset = (self.probe_inset / self.dx).round() as usize;
        if 2 * inset + 2 > self.aperture_cells {
            return Err(Error::invalid("probe_inset", "leaves no probe line"));
        }
        Ok(())
    }
}

/// How the boundary delay maps `x` to time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayModel {
    /// `Δτ = x·sinθ_i / c₀`.
    #[default]
    Exact,
    /// Uses the tangential wavenumber of the 2-D grid's numerical dispersion
    /// relation at the carrier, which makes the injected wave an exact
    /// discrete solution.
    DispersionMatched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotSpec {
    pub dir: PathBuf,
    pub every: usize,
}

/// Numerical controls of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub pml_cells: usize,
    /// Fraction of the stability limit used for the time step.
    pub courant_factor: f64,
    pub ramp_periods: f64,
    pub max_periods: usize,
    /// Relative change of the probe phasors between consecutive periods
    /// that counts as steady state.
    pub tolerance: f64,
    pub interpolation: Interpolation,
    pub delay: DelayModel,
    /// Sub-samples per cell width when integrating fill fractions.
    pub subsamples: usize,
    /// Split each step's column sweeps across the rayon pool. Ensembles
    /// turn this off and parallelize over realizations instead.
    pub column_parallel: bool,
    pub snapshot: Option<SnapshotSpec>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            pml_cells: 12,
            courant_factor: 0.99,
            ramp_periods: 5.0,
            max_periods: 400,
            tolerance: 1e-3,
            interpolation: Interpolation::Linear,
            delay: DelayModel::Exact,
            subsamples: 8,
            column_parallel: true,
            snapshot: None,
        }
    }
}

/// Discretization of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dx: f64,
    pub dz: f64,
    pub nx: usize,
    pub nz: usize,
    pub dt: f64,
    /// Step cap.
    pub n_steps: usize,
    pub pml_cells: usize,
    /// `c₀Δt·√(1/Δx² + 1/Δz²)`.
    pub courant: f64,
    pub steps_per_period: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.courant > 0.0 && self.courant < 1.0) {
            return Err(Error::invalid(
                "courant",
                format!("{} violates the stability limit", self.courant),
            ));
        }
        if self.pml_cells < 8 {
            return Err(Error::invalid("pml_cells", "must be at least 8"));
        }
        Ok(())
    }
}

/// Node indices of the total-field box, probe lines and aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    /// First rough column and number of rough columns.
    pub aperture_start: usize,
    pub aperture_cells: usize,
    /// Total-field box: `ia..=ib` by `ka..=kb` E nodes.
    pub ia: usize,
    pub ib: usize,
    pub ka: usize,
    pub kb: usize,
    /// Source node of the auxiliary grid (between the reflection probe and
    /// the box top, so the auxiliary field at the probe is purely reflected).
    pub k_src: usize,
    pub k_refl: usize,
    pub k_trans: usize,
    /// Inclusive column range of both probe lines.
    pub probe_first: usize,
    pub probe_last: usize,
    /// Nominal interface depths (m).
    pub z1: f64,
    pub z2: f64,
    /// `x` at which the boundary delay is zero.
    pub x_origin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub grid: GridSpec,
    pub layout: Layout,
}

const MARGIN: usize = 4;

/// Lays out the grid for `scene`.
pub fn plan(scene: &SlabScene, opts: &SimOptions) -> Result<Plan> {
    scene.validate()?;
    let sin2 = scene.theta_i.sin().powi(2);
    for (layer, m) in [(1, &scene.upper), (2, &scene.slab), (3, &scene.lower)] {
        let v = m.eps_real - sin2;
        if v <= 0.0 {
            return Err(Error::EvanescentLayer { layer, value: v });
        }
    }
    if !(opts.courant_factor > 0.0 && opts.courant_factor < 1.0) {
        return Err(Error::invalid("courant_factor", "must lie in (0, 1)"));
    }
    let dx = scene.dx;
    let dz = scene.dx;
    let npml = opts.pml_cells;
    let clear = (scene.roughness_allowance / dz).ceil() as usize + 4;

    let k_refl = npml + MARGIN;
    let k_src = k_refl + 2;
    let ka = k_refl + 3;
    let z1 = (ka + clear) as f64 * dz + 0.5 * dz;
    let z2 = z1 + scene.thickness;
    let k_trans = (z2 / dz).ceil() as usize + clear;
    let kb = k_trans + 3;
    let nz = kb + MARGIN + npml + 2;

    let aperture_start = npml + MARGIN + 3;
    let ia = aperture_start - 2;
    let ib = aperture_start + scene.aperture_cells + 1;
    let nx = ib + MARGIN + npml + 3;
    let inset = (scene.probe_inset / dx).round() as usize;
    let probe_first = aperture_start + inset;
    let probe_last = aperture_start + scene.aperture_cells - 1 - inset;

    let period = 1.0 / scene.frequency;
    let min_aux = [scene.upper, scene.slab, scene.lower]
        .iter()
        .map(|m| m.eps_real - sin2)
        .fold(f64::INFINITY, f64::min);
    let dt_2d = 1.0 / (C0 * (1.0 / (dx * dx) + 1.0 / (dz * dz)).sqrt());
    let dt_1d = dz * min_aux.sqrt() / C0;
    let dt_max = opts.courant_factor * dt_2d.min(dt_1d);
    let steps_per_period = (period / dt_max).ceil() as usize;
    let dt = period / steps_per_period as f64;
    let grid = GridSpec {
        dx,
        dz,
        nx,
        nz,
        dt,
        n_steps: opts.max_periods * steps_per_period,
        pml_cells: npml,
        courant: C0 * dt * (1.0 / (dx * dx) + 1.0 / (dz * dz)).sqrt(),
        steps_per_period,
    };
    grid.validate()?;
    let layout = Layout {
        aperture_start,
        aperture_cells: scene.aperture_cells,
        ia,
        ib,
        ka,
        kb,
        k_src,
        k_refl,
        k_trans,
        probe_first,
        probe_last,
        z1,
        z2,
        x_origin: (ia - 1) as f64 * dx,
    };
    Ok(Plan { grid, layout })
}

/// Carrier-frequency phasors on one probe line. `E_y` is sampled on the E
/// nodes, `H_x` is averaged from the two neighbouring half-cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLine {
    pub z: f64,
    pub x: Vec<f64>,
    pub ey: Vec<Complex64>,
    pub hx: Vec<Complex64>,
}

impl ProbeLine {
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self {
            z: self.z,
            x: self.x.clone(),
            ey: self.ey.iter().map(|v| v * a).collect(),
            hx: self.hx.iter().map(|v| v * a).collect(),
        }
    }
}

/// Result of one FDTD run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    /// Total reflected field above the slab (scattered part measured in the
    /// grid plus the flat-stack reflection from the auxiliary grid).
    pub reflection: ProbeLine,
    /// Total field below the slab.
    pub transmission: ProbeLine,
    /// Scattered-field `E_y` on the reflection line, before the flat-stack
    /// reflection is added.
    pub scattered_ey: Vec<Complex64>,
    /// Far-field incident reference `E_i` (vacuum run, transmission side at
    /// `theta_i`); NaN until a reference is attached.
    pub e_i: Complex64,
    /// Plane-wave amplitude of the incident field on the probe lines.
    pub incident_amplitude: f64,
    pub frequency: f64,
    pub theta_i: f64,
    pub steps: usize,
    pub converged: bool,
    pub plan: Plan,
}

/// Field names of the auxiliary record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxField {
    Ey,
    Hx,
    Hz,
}

/// Runs the auxiliary grid of `scene` alone for `n_steps` and returns the
/// full history of every node.
pub fn run_aux_grid(scene: &SlabScene, opts: &SimOptions, n_steps: usize) -> Result<AuxGridRecord> {
    let p = plan(scene, opts)?;
    let setup = sim::aux_setup(scene, opts, &p)?;
    Ok(aux::record(setup, n_steps))
}

/// Auxiliary-grid value at node `node_z_index` seen by a boundary node at
/// `node_x`: the stored sample delayed by `node_x·sinθ_i/c₀` with linear
/// interpolation in time. `step` is the E time index; magnetic fields are
/// taken at `step + ½`. Times before the record starts yield 0.
pub fn tfsf_correction(
    rec: &AuxGridRecord,
    field: AuxField,
    node_x: f64,
    node_z_index: usize,
    step: usize,
    theta_i: f64,
) -> f64 {
    let delay = node_x * theta_i.sin() / C0 / rec.dt;
    let (u, last) = match field {
        AuxField::Ey => (step as f64 - delay, rec.n_steps),
        AuxField::Hx | AuxField::Hz => (step as f64 - delay, rec.n_steps.saturating_sub(1)),
    };
    if u < 0.0 {
        return 0.0;
    }
    let sample = |m: i64| -> f64 {
        if m < 0 {
            return 0.0;
        }
        let m = (m as usize).min(last);
        match field {
            AuxField::Ey => rec.ey(node_z_index, m),
            AuxField::Hx => rec.hx(node_z_index, m),
            AuxField::Hz => rec.hz(node_z_index, m),
        }
    };
    aux::interpolate(sample, u, Interpolation::Linear)
}

#[cfg(test)]
mod tests;
