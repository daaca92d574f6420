use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("total internal reflection: n1={n1}, n2={n2}, theta={theta_deg} deg has no real refraction angle")]
    TotalInternalReflection { n1: f64, n2: f64, theta_deg: f64 },

    #[error("evanescent auxiliary medium in layer {layer}: eps' - sin^2(theta) = {value}")]
    EvanescentLayer { layer: usize, value: f64 },

    #[error("FDTD diverged at step {step} (|field| = {magnitude:e})")]
    Unstable { step: usize, magnitude: f64 },

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("empty probe line")]
    EmptyProbe,

    #[error("incident reference amplitude {0:e} is below the numerical floor")]
    NoIncidentField(f64),

    #[error("fit did not converge (best residual {best_mse:e})")]
    FitFailed { best_mse: f64 },

    #[error("wall `{wall}`: {reason}")]
    Wall { wall: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn parse(what: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            what: what.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
