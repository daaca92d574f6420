//! Shooting-and-bouncing-ray propagation in indoor scenes with axis-aligned
//! walls. Triangular tubes are launched from an icosphere, followed through
//! specular reflections and transmissions, and every receiver found inside a
//! tube gets its exact path from the image method. Rough walls either scale
//! the smooth-slab coefficients down to their fitted specular level or spawn
//! fans of incoherent tubes shaped by the fitted scattering model.

mod geometry;
mod scene;
mod trace;

pub use geometry::{icosphere, solid_angle, Rect, V3, ON_WALL_TOL};
pub use scene::{diffuse_amplitude, Limits, RayScene, RssMode, Side, Surface, Transmitter, Wall};
pub use trace::{
    accumulate, image_path, launch_tubes, rss_map, spawn_diffuse_tubes, trace_all, Contribution,
    DiffuseSource, Event, EventKind, GridSpec, Hit, ImagePath, PathValue, RayTube, RssGrid,
    TraceStats, Tracer, FAN_REFERENCE_STEP_DEG,
};

/// Peak gain of a half-wave dipole.
pub const DIPOLE_GAIN: f64 = 1.64;

/// Cosine-beam gain `2(n+1)cosⁿθ` at `theta` (rad) off boresight; zero in the
/// back hemisphere.
pub fn antenna_gain(theta: f64, n: f64) -> f64 {
    let c = theta.cos();
    if c <= 0.0 {
        0.0
    } else {
        2.0 * (n + 1.0) * c.powf(n)
    }
}

/// Gain of a vertical half-wave dipole towards unit direction `dir`, with
/// the `sin²` polarization match to a vertical field.
pub fn dipole_gain(dir: &V3) -> f64 {
    DIPOLE_GAIN * (1.0 - dir.z * dir.z).max(0.0)
}
