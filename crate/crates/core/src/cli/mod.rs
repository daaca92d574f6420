//! Command layer behind the `slabscat` binary: TOML run configurations,
//! provenance headers, atomic output and one function per subcommand.
//!
//! Relative paths inside a configuration resolve against the directory of
//! the configuration file. Every output starts with a `#!` provenance line
//! carrying the tool version, the SHA-256 digest of the configuration text
//! and the seed in use.

pub mod validate;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::ensemble::{run_ensemble, EnsembleSpec, Sampling};
use crate::fdtd::{simulate_slab, SimOptions, SlabScene};
use crate::media::{medium_at, MaterialLibrary};
use crate::ntff::{extract_coefficients, AngularPattern, PatternKind, PatternMeta};
use crate::sbr::{rss_map, GridSpec, RayScene, RssMode};
use crate::scatmodel::{select_model_with, FitOptions, ModelSet};
use crate::surface::{generate_surface, SpectrumKind, SurfaceSpec};
use crate::{Error, Result};

pub use validate::{run_suite, Report, ValidateConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for schema and validation errors.
pub const EXIT_INVALID: u8 = 2;
/// Exit status for a diverging FDTD run.
pub const EXIT_UNSTABLE: u8 = 3;

/// Process exit status for `e`: 3 for instability (also inside a failed
/// realization), 2 for anything wrong with the inputs, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Unstable { .. } => EXIT_UNSTABLE,
        Error::Realization { source, .. } => exit_code(source),
        Error::Invalid { .. }
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::UnknownMaterial(_)
        | Error::Geometry(_)
        | Error::Wall { .. }
        | Error::TotalInternalReflection { .. }
        | Error::EvanescentLayer { .. } => EXIT_INVALID,
        _ => 1,
    }
}

/// Who produced a file and from what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub digest: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_text: &str, seed: Option<u64>) -> Self {
        Self {
            digest: hex::encode(Sha256::digest(config_text.as_bytes())),
            seed,
        }
    }

    /// `slabscat <version> config-sha256 <hex> seed <n|->`.
    pub fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        format!("slabscat {VERSION} config-sha256 {} seed {seed}", self.digest)
    }
}

/// Writes `contents` next to `path` under a temporary name, syncs it and
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("output", format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Parses a configuration, rejecting unknown keys.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// A parsed configuration plus what is needed to resolve and stamp it.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub text: String,
    pub base: PathBuf,
}

impl<T: DeserializeOwned> Loaded<T> {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(text, base)
    }

    pub fn from_text(text: String, base: PathBuf) -> Result<Self> {
        Ok(Self {
            config: parse_config(&text)?,
            text,
            base,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn library(extra: Option<&Path>) -> Result<MaterialLibrary> {
    let mut lib = MaterialLibrary::builtin();
    if let Some(p) = extra {
        lib.merge_file(p)?;
    }
    Ok(lib)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSurfaceConfig {
    pub output: PathBuf,
    pub surface: SurfaceSpec,
}

/// Generates one profile and writes it; returns the path written.
pub fn cmd_gen_surface(run: &Loaded<GenSurfaceConfig>) -> Result<PathBuf> {
    let spec = &run.config.surface;
    spec.validate()?;
    let profile = generate_surface(spec)?;
    let prov = Provenance::new(&run.text, Some(spec.seed));
    let out = run.resolve(&run.config.output);
    write_atomic(&out, &format!("#! {}\n{}", prov.line(), profile.to_text()))?;
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughnessConfig {
    pub sigma_h_upper: f64,
    pub sigma_h_lower: f64,
    /// Correlation length (m); half a wavelength when omitted.
    pub corr_length: Option<f64>,
    #[serde(default = "default_spectrum")]
    pub spectrum: SpectrumKind,
    pub seed: u64,
    /// Ensemble size used with `--ensemble`.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub sampling: Sampling,
}

fn default_spectrum() -> SpectrumKind {
    SpectrumKind::Gaussian
}

fn default_realizations() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub cells_per_wavelength: f64,
    pub aperture_wavelengths: f64,
    pub pml_cells: usize,
    pub courant_factor: f64,
    pub max_periods: usize,
    /// Steady-state criterion on the probe phasors.
    pub tolerance: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            cells_per_wavelength: 35.0,
            aperture_wavelengths: 20.0,
            pml_cells: o.pml_cells,
            courant_factor: o.courant_factor,
            max_periods: o.max_periods,
            tolerance: o.tolerance,
        }
    }
}

impl NumericsConfig {
    pub fn options(&self) -> Result<SimOptions> {
        if !(self.courant_factor > 0.0 && self.courant_factor <= 1.0) {
            return Err(Error::invalid("numerics.courant_factor", "must lie in (0, 1]"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("numerics.tolerance", "must be > 0"));
        }
        Ok(SimOptions {
            pml_cells: self.pml_cells,
            courant_factor: self.courant_factor,
            max_periods: self.max_periods,
            tolerance: self.tolerance,
            ..SimOptions::default()
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdtdOutputs {
    pub reflection: PathBuf,
    pub transmission: PathBuf,
    /// Per-realization manifest of an ensemble run.
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdtdConfig {
    #[serde(default = "default_frequency")]
    pub frequency_ghz: f64,
    pub theta_i_deg: f64,
    /// Slab material from the library.
    pub material: String,
    /// Half-space below the slab.
    #[serde(default = "default_lower")]
    pub lower: String,
    pub thickness: f64,
    /// Extra material table merged over the shipped one.
    pub materials: Option<PathBuf>,
    pub roughness: Option<RoughnessConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    pub output: FdtdOutputs,
}

fn default_frequency() -> f64 {
    28.0
}

fn default_lower() -> String {
    "vacuum".into()
}

impl FdtdConfig {
    /// Flat scene described by the configuration, validated.
    pub fn scene(&self, lib: &MaterialLibrary) -> Result<SlabScene> {
        if !(self.frequency_ghz.is_finite() && self.frequency_ghz > 0.0) {
            return Err(Error::invalid("frequency_ghz", "must be finite and > 0"));
        }
        if !(0.0..90.0).contains(&self.theta_i_deg) {
            return Err(Error::invalid("theta_i_deg", "must lie in [0, 90)"));
        }
        let n = &self.numerics;
        if !(n.cells_per_wavelength >= 10.0) {
            return Err(Error::invalid("numerics.cells_per_wavelength", "must be at least 10"));
        }
        if !(n.aperture_wavelengths > 0.0) {
            return Err(Error::invalid("numerics.aperture_wavelengths", "must be > 0"));
        }
        let slab = medium_at(lib.get(&self.material)?, self.frequency_ghz);
        let mut scene = SlabScene::flat(slab, self.thickness, self.theta_i_deg.to_radians());
        scene.lower = medium_at(lib.get(&self.lower)?, self.frequency_ghz);
        let lambda = scene.wavelength();
        scene.dx = lambda / n.cells_per_wavelength;
        let cells = (n.aperture_wavelengths * n.cells_per_wavelength).round() as usize;
        scene.aperture_cells = cells + cells % 2;
        scene.validate()?;
        Ok(scene)
    }

    pub fn ensemble(&self, scene: SlabScene, n: Option<usize>) -> Result<Option<EnsembleSpec>> {
        let Some(r) = &self.roughness else {
            return Ok(None);
        };
        let spec = EnsembleSpec {
            corr_length: r.corr_length.unwrap_or(scene.wavelength() / 2.0),
            base: scene,
            n_realizations: n.unwrap_or(r.realizations),
            master_seed: r.seed,
            sigma_h_upper: r.sigma_h_upper,
            sigma_h_lower: r.sigma_h_lower,
            spectrum: r.spectrum,
            sampling: r.sampling,
            material: self.material.clone(),
        };
        spec.validate()?;
        Ok(Some(spec))
    }
}

/// What `cmd_fdtd` produced.
#[derive(Debug, Clone)]
pub struct FdtdOutcome {
    pub reflection: AngularPattern,
    pub transmission: AngularPattern,
    pub written: Vec<PathBuf>,
}

/// One flat or rough run, or with `ensemble` the mean over the configured
/// number of realizations.
pub fn cmd_fdtd(run: &Loaded<FdtdConfig>, ensemble: bool) -> Result<FdtdOutcome> {
    let cfg = &run.config;
    let lib = library(cfg.materials.as_deref().map(|p| run.resolve(p)).as_deref())?;
    let scene = cfg.scene(&lib)?;
    let opts = cfg.numerics.options()?;
    let seed = cfg.roughness.as_ref().map(|r| r.seed);
    let prov = Provenance::new(&run.text, seed);
    let mut written = Vec::new();
    let (r, t) = match cfg.ensemble(scene.clone(), (!ensemble).then_some(1))? {
        None => {
            let rec = simulate_slab(&scene, &opts)?;
            extract_coefficients(&rec, &PatternMeta::single(cfg.theta_i_deg, scene.frequency, &cfg.material))?
        }
        Some(spec) if !ensemble => {
            let rough = spec.realization_scene(0, &spec.draws())?;
            let rec = simulate_slab(&rough, &opts)?;
            let mut meta = PatternMeta::single(cfg.theta_i_deg, scene.frequency, &cfg.material);
            meta.sigma_h_upper = spec.sigma_h_upper;
            meta.sigma_h_lower = spec.sigma_h_lower;
            extract_coefficients(&rec, &meta)?
        }
        Some(spec) => {
            let res = run_ensemble(&spec, &opts)?;
            if let Some(m) = &cfg.output.manifest {
                let path = run.resolve(m);
                write_atomic(&path, &format!("#! {}\n{}", prov.line(), res.manifest(&spec)))?;
                written.push(path);
            }
            (res.reflection, res.transmission)
        }
    };
    for (p, out) in [(&r, &cfg.output.reflection), (&t, &cfg.output.transmission)] {
        let path = run.resolve(out);
        write_atomic(&path, &p.to_text(Some(&prov.line())))?;
        written.push(path);
    }
    Ok(FdtdOutcome {
        reflection: r,
        transmission: t,
        written,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitTuning {
    pub parsimony: f64,
    pub specular_max_fwhm_deg: f64,
    pub diffuse_ratio: f64,
    pub max_iter: usize,
}

impl Default for FitTuning {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            parsimony: o.parsimony,
            specular_max_fwhm_deg: o.specular_max_fwhm_deg,
            diffuse_ratio: o.diffuse_ratio,
            max_iter: o.max_iter,
        }
    }
}

impl FitTuning {
    pub fn options(&self) -> Result<FitOptions> {
        if !(self.parsimony >= 0.0) {
            return Err(Error::invalid("fit.parsimony", "must be >= 0"));
        }
        if !(self.specular_max_fwhm_deg > 0.0) {
            return Err(Error::invalid("fit.specular_max_fwhm_deg", "must be > 0"));
        }
        if !(self.diffuse_ratio >= 0.0) {
            return Err(Error::invalid("fit.diffuse_ratio", "must be >= 0"));
        }
        Ok(FitOptions {
            parsimony: self.parsimony,
            specular_max_fwhm_deg: self.specular_max_fwhm_deg,
            diffuse_ratio: self.diffuse_ratio,
            max_iter: self.max_iter,
            ..FitOptions::default()
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Reflection and/or transmission pattern files.
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    /// Roughness label of the models; taken from each pattern header when
    /// omitted.
    pub sigma_h: Option<f64>,
    #[serde(default)]
    pub fit: FitTuning,
}

/// Selects a model for every input pattern and writes them as one model
/// file.
pub fn cmd_fit(run: &Loaded<FitConfig>) -> Result<ModelSet> {
    let cfg = &run.config;
    if cfg.inputs.is_empty() {
        return Err(Error::invalid("inputs", "at least one pattern file is needed"));
    }
    let opts = cfg.fit.options()?;
    let patterns = cfg
        .inputs
        .iter()
        .map(|p| {
            let path = run.resolve(p);
            let text = fs::read_to_string(&path).map_err(|e| Error::invalid("inputs", format!("{}: {e}", path.display())))?;
            AngularPattern::from_text(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = ModelSet::default();
    for p in &patterns {
        if p.kind == PatternKind::Rcs {
            return Err(Error::invalid("inputs", "RCS patterns cannot be fitted"));
        }
        let sel = select_model_with(p, &opts)?;
        let sigma = cfg.sigma_h.unwrap_or(p.meta.sigma_h_upper.max(p.meta.sigma_h_lower));
        set.push(p.meta.theta_i_deg, sigma, sel.chosen);
    }
    let prov = Provenance::new(&run.text, None);
    write_atomic(&run.resolve(&cfg.output), &set.to_text(Some(&prov.line())))?;
    Ok(set)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub spacing: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaytraceConfig {
    pub scene: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub materials: Option<PathBuf>,
    /// Overrides the scene's tessellation level.
    pub tessellation: Option<u32>,
    pub grid: GridConfig,
}

fn default_mode() -> String {
    "flat".into()
}

/// Traces the scene onto the receiver grid. `mode` overrides the
/// configuration's mode.
pub fn cmd_raytrace(run: &Loaded<RaytraceConfig>, mode: Option<RssMode>) -> Result<crate::sbr::RssGrid> {
    let cfg = &run.config;
    let mode = match mode {
        Some(m) => m,
        None => cfg.mode.parse()?,
    };
    let g = &cfg.grid;
    let grid = GridSpec::covering(g.x, g.y, g.spacing, g.height)?;
    let lib = library(cfg.materials.as_deref().map(|p| run.resolve(p)).as_deref())?;
    let mut scene = RayScene::from_file(&run.resolve(&cfg.scene), &lib)?;
    if let Some(t) = cfg.tessellation {
        scene.limits.tessellation = t;
        scene.validate()?;
    }
    let map = rss_map(&scene, &grid, mode)?;
    let prov = Provenance::new(&run.text, None);
    write_atomic(&run.resolve(&cfg.output), &map.to_text(Some(&prov.line())))?;
    Ok(map)
}

/// Runs the oracle suite, writing the report when `output` is given.
pub fn cmd_validate(run: &Loaded<ValidateConfig>, output: Option<&Path>) -> Result<Report> {
    let report = run_suite(&run.config, &SimOptions::default())?;
    if let Some(out) = output {
        let prov = Provenance::new(&run.text, Some(run.config.seed));
        write_atomic(&run.resolve(out), &format!("#! {}\n{}", prov.line(), report.to_text()))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_line_is_stable() {
        let p = Provenance::new("a = 1\n", Some(7));
        assert_eq!(p.digest.len(), 64);
        assert_eq!(p, Provenance::new("a = 1\n", Some(7)));
        assert!(p.line().ends_with(" seed 7"));
        assert!(Provenance::new("a = 2\n", None).line().ends_with(" seed -"));
    }

    #[test]
    fn instability_inside_a_realization_maps_to_three() {
        let e = Error::Realization {
            index: 4,
            seed: 9,
            source: Box::new(Error::Unstable { step: 12, magnitude: 1e30 }),
        };
        assert_eq!(exit_code(&e), EXIT_UNSTABLE);
        assert_eq!(exit_code(&Error::invalid("x", "y")), EXIT_INVALID);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
