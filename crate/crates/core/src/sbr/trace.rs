//! Tube launching, tracing, exact image paths and received-power maps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use super::geometry::{icosphere, solid_angle, Rect, V3, ON_WALL_TOL};
use super::scene::{diffuse_amplitude, RayScene, RssMode, Side};
use super::dipole_gain;
use crate::scatmodel::{quadrant, ScatterModel};
use crate::{Error, Result};

/// Fan children are weighted by `step / FAN_REFERENCE_STEP_DEG`, so a fan at
/// this step carries the model amplitude per child unchanged.
pub const FAN_REFERENCE_STEP_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Reflect,
    Transmit,
    /// Diffuse re-radiation into fan child `bin` (multiples of the step away
    /// from the specular direction).
    Diffuse { side: Side, bin: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub wall: u32,
    pub kind: EventKind,
}

/// Where an incoherent tube left its specular chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseSource {
    pub point: V3,
    /// Unfolded length from the transmitter to `point`.
    pub path_before: f64,
    /// Power factor from the transmitter to just after the diffuse event:
    /// wall coefficients along the way times the weighted fan amplitude.
    pub factor: f64,
    /// Number of events up to and including the diffuse one.
    pub events_before: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayTube {
    /// Virtual source the corner rays emanate from.
    pub apex: V3,
    /// Unit corner directions.
    pub dirs: [V3; 3],
    /// Unit direction of the central ray.
    pub central: V3,
    /// Start of the current leg of the central ray.
    pub origin: V3,
    pub last_wall: Option<usize>,
    pub events: Vec<Event>,
    /// Power carried (mW) after the launch share and wall coefficients.
    pub power: f64,
    /// Product of `|coefficient|²` along the central ray.
    pub coeff_power: f64,
    /// Transmitter gain along the launched central ray.
    pub gain_tx: f64,
    pub coherent: bool,
    pub diffuse: Option<DiffuseSource>,
    /// Index of the launched tube this one descends from.
    pub id: u32,
}

impl RayTube {
    fn count(&self, f: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| f(&e.kind)).count()
    }

    pub fn reflections(&self) -> usize {
        self.count(|k| matches!(k, EventKind::Reflect))
    }

    pub fn transmissions(&self) -> usize {
        self.count(|k| matches!(k, EventKind::Transmit))
    }

    pub fn diffuse_events(&self) -> usize {
        self.count(|k| matches!(k, EventKind::Diffuse { .. }))
    }

    /// Whether `x` lies inside the infinite triangular cone.
    pub fn cone_contains(&self, x: &V3) -> bool {
        let v = x - self.apex;
        if v.dot(&self.central) <= 0.0 {
            return false;
        }
        let d = &self.dirs;
        let orient = d[0].cross(&d[1]).dot(&d[2]).signum();
        let tol = 1e-12 * v.norm();
        (0..3).all(|i| orient * d[i].cross(&d[(i + 1) % 3]).dot(&v) >= -tol)
    }

    /// Largest angle between two corner rays.
    pub fn spread(&self) -> f64 {
        let d = &self.dirs;
        (0..3)
            .map(|i| d[i].dot(&d[(i + 1) % 3]).clamp(-1.0, 1.0).acos())
            .fold(0.0, f64::max)
    }

    fn mirrored(&self, r: &Rect) -> ([V3; 3], V3, V3) {
        (self.dirs.map(|d| r.mirror_dir(&d)), r.mirror_dir(&self.central), r.mirror_point(&self.apex))
    }
}

/// One tube per icosphere face, carrying `P·G(centroid)·Ω/4π`.
pub fn launch_tubes(scene: &RayScene, level: u32) -> Vec<RayTube> {
    let tx = &scene.transmitter;
    let p = tx.power_mw();
    icosphere(level)
        .into_iter()
        .enumerate()
        .map(|(i, [a, b, c])| {
            let central = (a + b + c).normalize();
            let gain = tx.gain(&central);
            RayTube {
                apex: tx.position,
                dirs: [a, b, c],
                central,
                origin: tx.position,
                last_wall: None,
                events: Vec::new(),
                power: p * gain * solid_angle(&a, &b, &c) / (4.0 * PI),
                coeff_power: 1.0,
                gain_tx: gain,
                coherent: true,
                diffuse: None,
                id: i as u32,
            }
        })
        .collect()
}

/// Horizontal receiver lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub height: f64,
}

impl GridSpec {
    /// Lattice covering `[x_lo, x_hi] × [y_lo, y_hi]` with points half a
    /// spacing in from the edges.
    pub fn covering(x: [f64; 2], y: [f64; 2], spacing: f64, height: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(x[1] > x[0]) || !(y[1] > y[0]) {
            return Err(Error::invalid("grid", "spacing and extents must be positive"));
        }
        Ok(GridSpec {
            x0: x[0] + spacing / 2.0,
            y0: y[0] + spacing / 2.0,
            spacing,
            nx: ((x[1] - x[0]) / spacing).floor() as usize,
            ny: ((y[1] - y[0]) / spacing).floor() as usize,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> V3 {
        let (i, j) = (index % self.nx, index / self.nx);
        V3::new(
            self.x0 + i as f64 * self.spacing,
            self.y0 + j as f64 * self.spacing,
            self.height,
        )
    }

    /// Index range along one axis for coordinates within `[lo, hi]`.
    fn span(&self, start: f64, n: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = ((lo - start) / self.spacing).ceil().max(0.0);
        let b = ((hi - start) / self.spacing).floor() + 1.0;
        let b = b.min(n as f64);
        if b <= a {
            0..0
        } else {
            a as usize..b as usize
        }
    }
}

/// A path's contribution at one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub receiver: u32,
    pub key: Vec<Event>,
    pub tube: u32,
    pub value: PathValue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathValue {
    /// Phasor `√mW` of a specular chain.
    Coherent(Complex64),
    /// Power (mW) arriving after a diffuse event.
    Incoherent(f64),
}

/// Exact polyline from the image method.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePath {
    /// Source, one point per event, receiver.
    pub points: Vec<V3>,
    pub length: f64,
}

/// Reconstructs the path from `source` through `events` to `rx` with images,
/// or `None` if a bounce point falls off its wall or the path is blocked.
pub fn image_path(scene: &RayScene, source: &V3, events: &[Event], rx: &V3) -> Option<ImagePath> {
    let m = events.len();
    let mut images = Vec::with_capacity(m + 1);
    images.push(*source);
    for e in events {
        let last = images[images.len() - 1];
        let w = &scene.walls[e.wall as usize].rect;
        images.push(match e.kind {
            EventKind::Reflect => w.mirror_point(&last),
            _ => last,
        });
    }
    let mut points = vec![V3::zeros(); m + 2];
    points[0] = *source;
    points[m + 1] = *rx;
    let mut q = *rx;
    for k in (0..m).rev() {
        let w = &scene.walls[events[k].wall as usize].rect;
        let from = images[k + 1];
        let d = q - from;
        let s = w.plane_hit(&from, &d)?;
        let eps = 1e-12;
        if !(s > eps && s < 1.0 - eps) {
            return None;
        }
        let mut p = from + d * s;
        p[w.axis] = w.offset;
        if !w.contains(&p, ON_WALL_TOL) {
            return None;
        }
        points[k + 1] = p;
        q = p;
    }
    for seg in points.windows(2) {
        if blocked(scene, &seg[0], &seg[1]) {
            return None;
        }
    }
    Some(ImagePath {
        length: (rx - images[m]).norm(),
        points,
    })
}

/// Whether any wall crosses the open segment `a..b`.
fn blocked(scene: &RayScene, a: &V3, b: &V3) -> bool {
    let d = b - a;
    let len = d.norm();
    if len == 0.0 {
        return false;
    }
    let margin = 1e-9 / len;
    scene.walls.iter().any(|w| {
        w.rect.plane_hit(a, &d).is_some_and(|t| {
            if t <= margin || t >= 1.0 - margin {
                return false;
            }
            let mut p = a + d * t;
            p[w.rect.axis] = w.rect.offset;
            w.rect.contains(&p, 0.0)
        })
    })
}

/// Tracing state shared by all tubes of one run.
pub struct Tracer<'a> {
    pub scene: &'a RayScene,
    pub grid: &'a GridSpec,
    pub mode: RssMode,
    k0: f64,
    lambda: f64,
    cull_power: f64,
}

/// Per-run counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub tubes: u64,
    pub culled: u64,
    pub degenerate: u64,
}

impl TraceStats {
    fn add(mut self, o: Self) -> Self {
        self.tubes += o.tubes;
        self.culled += o.culled;
        self.degenerate += o.degenerate;
        self
    }
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a RayScene, grid: &'a GridSpec, mode: RssMode) -> Self {
        let lambda = scene.wavelength();
        Tracer {
            scene,
            grid,
            mode,
            k0: 2.0 * PI / lambda,
            lambda,
            cull_power: scene.transmitter.power_mw() * 10f64.powf(scene.limits.cull_db / 10.0),
        }
    }

    fn next_hit(&self, t: &RayTube) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in self.scene.walls.iter().enumerate() {
            if Some(i) == t.last_wall {
                continue;
            }
            if let Some(s) = w.rect.hit(&t.origin, &t.central) {
                if s > 1e-9 && best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
        }
        best
    }

    /// Traces a tube and all of its descendants.
    pub fn trace(&self, tube: RayTube, out: &mut Vec<Contribution>) -> Result<TraceStats> {
        let mut stats = TraceStats::default();
        let mut stack = vec![tube];
        while let Some(t) = stack.pop() {
            stats.tubes += 1;
            if t.spread() > PI / 2.0 {
                stats.degenerate += 1;
                continue;
            }
            let hit = self.next_hit(&t);
            self.collect(&t, hit, out);
            if let Some((w, s)) = hit {
                for child in self.children(&t, w, s)? {
                    if child.power < self.cull_power {
                        stats.culled += 1;
                    } else {
                        stack.push(child);
                    }
                }
            }
        }
        Ok(stats)
    }

    /// Receivers between the start of the current leg and the next wall.
    fn collect(&self, t: &RayTube, hit: Option<(usize, f64)>, out: &mut Vec<Contribution>) {
        let g = self.grid;
        let h = g.height;
        let mut lo = V3::repeat(f64::NEG_INFINITY);
        let mut hi = V3::repeat(f64::INFINITY);
        let mut clip = |pts: &[V3]| {
            let (mut a, mut b) = (V3::repeat(f64::INFINITY), V3::repeat(f64::NEG_INFINITY));
            for p in pts {
                a = a.inf(p);
                b = b.sup(p);
            }
            lo = lo.sup(&a);
            hi = hi.inf(&b);
        };
        let start_plane = t.last_wall.map(|w| &self.scene.walls[w].rect);
        let end_plane = hit.map(|(w, _)| &self.scene.walls[w].rect);
        let cut = |r: Option<&Rect>| -> Option<Vec<V3>> {
            t.dirs
                .iter()
                .map(|d| {
                    let s = r?.plane_hit(&t.apex, d)?;
                    (s > 0.0).then(|| t.apex + d * s)
                })
                .collect()
        };
        let start = match start_plane {
            Some(_) => cut(start_plane),
            None => Some(vec![t.apex]),
        };
        if let (Some(mut a), Some(b)) = (start, cut(end_plane)) {
            a.extend(b);
            clip(&a);
        }
        // The cone cut by the receiver plane, when bounded.
        let level: Option<Vec<V3>> = t
            .dirs
            .iter()
            .map(|d| {
                let s = (h - t.apex.z) / d.z;
                (d.z != 0.0 && s > 0.0).then(|| t.apex + d * s)
            })
            .collect();
        if let Some(pts) = level {
            clip(&pts);
        }
        let tol = 1e-9;
        if h < lo.z - tol || h > hi.z + tol {
            return;
        }
        let xs = g.span(g.x0, g.nx, lo.x - tol, hi.x + tol);
        let ys = g.span(g.y0, g.ny, lo.y - tol, hi.y + tol);
        for j in ys {
            for i in xs.clone() {
                let idx = j * g.nx + i;
                let x = g.point(idx);
                if !t.cone_contains(&x) {
                    continue;
                }
                if let Some(r) = start_plane {
                    if r.signed_distance(&x) * t.central[r.axis] <= 0.0 {
                        continue;
                    }
                }
                if let Some(r) = end_plane {
                    if r.signed_distance(&x) * t.central[r.axis] >= 0.0 {
                        continue;
                    }
                }
                if let Some(c) = self.contribution(t, idx as u32, &x) {
                    out.push(c);
                }
            }
        }
    }

    /// Product of the coefficients met along an exact path. `fan` says
    /// whether rough walls on the path spawned fans (so only the specular
    /// lobe of hybrid models continues coherently).
    fn path_coefficient(&self, events: &[Event], points: &[V3], fan: bool) -> Option<Complex64> {
        let mut c = Complex64::new(1.0, 0.0);
        for (k, e) in events.iter().enumerate() {
            let wall = &self.scene.walls[e.wall as usize];
            let d = (points[k + 1] - points[k]).normalize();
            let theta = d[wall.rect.axis].abs().clamp(0.0, 1.0).acos();
            let side = match e.kind {
                EventKind::Reflect => Side::R,
                EventKind::Transmit => Side::T,
                EventKind::Diffuse { .. } => return None,
            };
            // Model files were checked when the scene was built.
            c *= wall.specular_coefficient(side, theta, self.mode, fan).ok()??;
        }
        Some(c)
    }

    fn contribution(&self, t: &RayTube, receiver: u32, x: &V3) -> Option<Contribution> {
        let tx = &self.scene.transmitter;
        let value = match &t.diffuse {
            None => {
                let path = image_path(self.scene, &tx.position, &t.events, x)?;
                let n = path.points.len();
                let first = (path.points[1] - path.points[0]).normalize();
                let last = (path.points[n - 1] - path.points[n - 2]).normalize();
                let fan = self.mode == RssMode::WithDiffuse && self.scene.limits.diffuse > 0;
                let coeff = self.path_coefficient(&t.events, &path.points, fan)?;
                let amp = (tx.power_mw() * tx.gain(&first) * dipole_gain(&last)).sqrt() * self.lambda
                    / (4.0 * PI * path.length);
                PathValue::Coherent(coeff * amp * Complex64::from_polar(1.0, -self.k0 * path.length))
            }
            Some(src) => {
                let after = &t.events[src.events_before..];
                let path = image_path(self.scene, &src.point, after, x)?;
                let n = path.points.len();
                let last = (path.points[n - 1] - path.points[n - 2]).normalize();
                let coeff = self.path_coefficient(after, &path.points, false)?;
                let total = src.path_before + path.length;
                let spread = (self.lambda / (4.0 * PI * total)).powi(2);
                PathValue::Incoherent(
                    tx.power_mw() * t.gain_tx * dipole_gain(&last) * spread * src.factor * coeff.norm_sqr(),
                )
            }
        };
        Some(Contribution {
            receiver,
            key: t.events.clone(),
            tube: t.id,
            value,
        })
    }

    fn children(&self, t: &RayTube, w: usize, s: f64) -> Result<Vec<RayTube>> {
        let wall = &self.scene.walls[w];
        let limits = &self.scene.limits;
        let p = t.origin + t.central * s;
        let theta = t.central[wall.rect.axis].abs().clamp(0.0, 1.0).acos();
        let fan = self.mode == RssMode::WithDiffuse
            && wall.models().is_some()
            && t.diffuse_events() < limits.diffuse;
        let mut kids = Vec::new();
        let base = |events_kind: EventKind| {
            let mut events = t.events.clone();
            events.push(Event { wall: w as u32, kind: events_kind });
            events
        };
        if t.reflections() < limits.reflections {
            if let Some(c) = wall.specular_coefficient(Side::R, theta, self.mode, fan)? {
                let (dirs, central, apex) = t.mirrored(&wall.rect);
                let g = c.norm_sqr();
                kids.push(RayTube {
                    apex,
                    dirs,
                    central,
                    origin: p,
                    last_wall: Some(w),
                    events: base(EventKind::Reflect),
                    power: t.power * g,
                    coeff_power: t.coeff_power * g,
                    diffuse: t.diffuse,
                    ..t.clone()
                });
            }
        }
        if wall.transmits() && t.transmissions() < limits.transmissions {
            if let Some(c) = wall.specular_coefficient(Side::T, theta, self.mode, fan)? {
                let g = c.norm_sqr();
                kids.push(RayTube {
                    origin: p,
                    last_wall: Some(w),
                    events: base(EventKind::Transmit),
                    power: t.power * g,
                    coeff_power: t.coeff_power * g,
                    ..t.clone()
                });
            }
        }
        if fan {
            let sides: &[Side] = if wall.transmits() { &[Side::R, Side::T] } else { &[Side::R] };
            for &side in sides {
                if !wall.fans(side, theta)? {
                    continue;
                }
                let entry = wall.model_entry(side, theta)?;
                let hit = Hit { wall: w, point: p, theta };
                kids.extend(spawn_diffuse_tubes(
                    self.scene,
                    t,
                    &hit,
                    side,
                    &entry.model,
                    entry.theta_i_deg,
                    limits.fan_step_deg,
                )?);
            }
        }
        Ok(kids)
    }
}

/// Where and how a tube's central ray met a wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub wall: usize,
    pub point: V3,
    /// Incidence angle (rad) from the wall normal.
    pub theta: f64,
}

/// Rotation by `angle` about unit `axis` (Rodrigues).
fn rotate(v: &V3, axis: &V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c)
}

/// Replaces the specular child on `side` of a rough wall by a fan of
/// incoherent tubes `step_deg` apart in the plane of incidence. The child
/// `bin` steps from the specular direction carries the model's diffuse
/// amplitude at the same offset from the specular angle of the model's
/// incidence bin, weighted by `step_deg / 5°`.
pub fn spawn_diffuse_tubes(
    scene: &RayScene,
    tube: &RayTube,
    hit: &Hit,
    side: Side,
    model: &ScatterModel,
    bin_deg: f64,
    step_deg: f64,
) -> Result<Vec<RayTube>> {
    let wall = &scene.walls[hit.wall];
    if model.kind != side.kind() {
        return Err(Error::Wall {
            wall: wall.name.clone(),
            reason: format!("expected a {} model", side.kind().as_str()),
        });
    }
    if !(step_deg > 0.0) {
        return Err(Error::invalid("fan_step_deg", "must be positive"));
    }
    let (_, lo, hi) = quadrant(model.kind)?;
    let r = &wall.rect;
    let (dirs, central, apex) = match side {
        Side::R => tube.mirrored(r),
        Side::T => (tube.dirs, tube.central, tube.apex),
    };
    let mut n_out = r.normal();
    if n_out.dot(&central) < 0.0 {
        n_out = -n_out;
    }
    let mut axis = n_out.cross(&central);
    if axis.norm() < 1e-9 {
        // Normal incidence: any in-wall axis spans a plane of incidence.
        let mut e = V3::zeros();
        e[(r.axis + 1) % 3] = 1.0;
        axis = n_out.cross(&e);
    }
    let axis = axis.normalize();
    let theta_deg = hit.theta.to_degrees();
    let weight = step_deg / FAN_REFERENCE_STEP_DEG;
    let floor = 10f64.powf(scene.limits.fan_cull_db / 20.0);
    let path_before = (hit.point - tube.apex).norm();
    let reach = (180.0 / step_deg).ceil() as i32;
    let mut out = Vec::new();
    for bin in -reach..=reach {
        let delta = bin as f64 * step_deg;
        let out_angle = theta_deg + delta;
        if out_angle <= -90.0 || out_angle >= 90.0 {
            continue;
        }
        let at = side.specular_deg(bin_deg + delta);
        let a = if at < lo || at > hi { 0.0 } else { diffuse_amplitude(model, at) };
        let amp = a * weight.sqrt();
        if amp < floor {
            continue;
        }
        let rad = delta.to_radians();
        let rot = |v: &V3| rotate(v, &axis, rad);
        let g = amp * amp;
        let mut events = tube.events.clone();
        events.push(Event {
            wall: hit.wall as u32,
            kind: EventKind::Diffuse { side, bin },
        });
        out.push(RayTube {
            apex: hit.point + rot(&(apex - hit.point)),
            dirs: dirs.map(|d| rot(&d)),
            central: rot(&central),
            origin: hit.point,
            last_wall: Some(hit.wall),
            power: tube.power * g,
            coeff_power: tube.coeff_power * g,
            gain_tx: tube.gain_tx,
            coherent: false,
            diffuse: Some(DiffuseSource {
                point: hit.point,
                path_before,
                factor: tube.coeff_power * g,
                events_before: events.len(),
            }),
            events,
            id: tube.id,
        });
    }
    Ok(out)
}

/// Received power on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RssGrid {
    pub spec: GridSpec,
    pub mode: RssMode,
    /// dBm per point; `-inf` where no path arrived.
    pub rss_dbm: Vec<f64>,
    pub path_count: Vec<u32>,
    /// Free-form metadata lines (incidence bins of the models in use, ...).
    pub notes: Vec<String>,
    pub stats: TraceStats,
}

impl RssGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rss_dbm[j * self.spec.nx + i]
    }

    /// Mean received power (dBm) of the points inside a rectangle, averaged
    /// in milliwatts. `None` if no point falls inside.
    pub fn mean_dbm(&self, x: [f64; 2], y: [f64; 2]) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for (idx, v) in self.rss_dbm.iter().enumerate() {
            let p = self.spec.point(idx);
            if p.x >= x[0] && p.x <= x[1] && p.y >= y[0] && p.y <= y[1] {
                sum += 10f64.powf(v / 10.0);
                n += 1;
            }
        }
        (n > 0).then(|| 10.0 * (sum / n as f64).log10())
    }

    pub fn to_text(&self, provenance: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(p) = provenance {
            let _ = writeln!(s, "#! {p}");
        }
        let _ = writeln!(s, "# mode {}", self.mode.as_str());
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        let _ = writeln!(s, "# x_m y_m rss_dbm path_count");
        for (idx, (v, c)) in self.rss_dbm.iter().zip(&self.path_count).enumerate() {
            let p = self.spec.point(idx);
            let _ = writeln!(s, "{:.4} {:.4} {:.3} {c}", p.x, p.y, v);
        }
        s
    }
}

/// Deduplicates contributions (one per receiver and event sequence, from the
/// lowest tube index) and sums them: phasors coherently, powers on top.
pub fn accumulate(mut contributions: Vec<Contribution>, n: usize) -> (Vec<f64>, Vec<u32>) {
    contributions.par_sort_unstable_by(|a, b| {
        a.receiver
            .cmp(&b.receiver)
            .then_with(|| a.key.cmp(&b.key))
            .then(a.tube.cmp(&b.tube))
    });
    contributions.dedup_by(|b, a| a.receiver == b.receiver && a.key == b.key);
    let mut field = vec![Complex64::new(0.0, 0.0); n];
    let mut power = vec![0.0; n];
    let mut count = vec![0u32; n];
    for c in &contributions {
        let r = c.receiver as usize;
        count[r] += 1;
        match c.value {
            PathValue::Coherent(a) => field[r] += a,
            PathValue::Incoherent(p) => power[r] += p,
        }
    }
    let dbm = field
        .iter()
        .zip(&power)
        .map(|(f, p)| 10.0 * (f.norm_sqr() + p).log10())
        .collect();
    (dbm, count)
}

/// Traces every launched tube and returns the deduplicated contributions.
pub fn trace_all(scene: &RayScene, grid: &GridSpec, mode: RssMode) -> Result<(Vec<Contribution>, TraceStats)> {
    scene.validate()?;
    let tracer = Tracer::new(scene, grid, mode);
    let results: Vec<Result<(Vec<Contribution>, TraceStats)>> = launch_tubes(scene, scene.limits.tessellation)
        .into_par_iter()
        .map(|t| {
            let mut out = Vec::new();
            let stats = tracer.trace(t, &mut out)?;
            Ok((out, stats))
        })
        .collect();
    let mut all = Vec::new();
    let mut stats = TraceStats::default();
    for r in results {
        let (c, s) = r?;
        all.extend(c);
        stats = stats.add(s);
    }
    Ok((all, stats))
}

/// Received signal strength on `grid` for a vertical half-wave dipole.
pub fn rss_map(scene: &RayScene, grid: &GridSpec, mode: RssMode) -> Result<RssGrid> {
    let (contributions, stats) = trace_all(scene, grid, mode)?;
    let (rss_dbm, path_count) = accumulate(contributions, grid.len());
    let mut notes = vec![format!(
        "tessellation {} fan_step_deg {}",
        scene.limits.tessellation, scene.limits.fan_step_deg
    )];
    for w in &scene.walls {
        if let Some(m) = w.models() {
            let mut bins: Vec<String> = m
                .entries
                .iter()
                .map(|e| format!("{}:{}@{}mm", e.model.kind.as_str(), e.theta_i_deg, e.sigma_h * 1e3))
                .collect();
            bins.dedup();
            notes.push(format!("wall {} model bins {}", w.name, bins.join(" ")));
        }
    }
    Ok(RssGrid {
        spec: *grid,
        mode,
        rss_dbm,
        path_count,
        notes,
        stats,
    })
}
