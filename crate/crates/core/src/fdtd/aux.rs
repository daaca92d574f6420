//! One-dimensional auxiliary grid that carries the layered-medium plane wave
//! along `z` at the phase-matched oblique angle.

use std::f64::consts::PI;

use crate::media::{C0, EPS0, ETA0, MU0};

use super::upml::AxisPml;

/// Raised-cosine ramped continuous sinusoid of unit amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub omega: f64,
    pub ramp_time: f64,
}

impl Source {
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let w = if t < self.ramp_time {
            0.5 * (1.0 - (PI * t / self.ramp_time).cos())
        } else {
            1.0
        };
        w * (self.omega * t).sin()
    }
}

/// Inputs of the auxiliary grid: per-node relative permittivity and
/// conductivity of the flat stack (already sub-cell averaged).
#[derive(Debug, Clone)]
pub(crate) struct AuxSetup {
    pub dz: f64,
    pub dt: f64,
    pub theta_i: f64,
    pub eps_r: Vec<f64>,
    pub sigma: Vec<f64>,
    pub k_src: usize,
    pub pml_cells: usize,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub(crate) struct AuxGrid {
    setup: AuxSetup,
    n: usize,
    e: Vec<f64>,
    h: Vec<f64>,
    d: Vec<f64>,
    ca: Vec<f64>,
    cb: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
    pml: AxisPml,
    slowness: f64,
    h_over_e: f64,
}

impl AuxGrid {
    pub fn new(setup: AuxSetup) -> Self {
        let nz = setup.eps_r.len();
        let sin2 = setup.theta_i.sin().powi(2);
        let dt = setup.dt;
        let mut ca = Vec::with_capacity(nz);
        let mut cb = Vec::with_capacity(nz);
        let mut num = Vec::with_capacity(nz);
        let mut den = Vec::with_capacity(nz);
        for k in 0..nz {
            let eps = EPS0 * (setup.eps_r[k] - sin2);
            let half_loss = setup.sigma[k] * dt / 2.0;
            ca.push((eps - half_loss) / (eps + half_loss));
            cb.push(dt / (eps + half_loss));
            num.push(eps - half_loss);
            den.push(1.0 / (eps + half_loss));
        }
        // Numerical slowness of the 1-D grid at the source node, so the
        // injected wave is an exact discrete solution at the carrier.
        let eps_src = setup.eps_r[setup.k_src] - sin2;
        let v = C0 / eps_src.sqrt();
        let w = setup.source.omega;
        let arg = setup.dz / (v * dt) * (w * dt / 2.0).sin();
        let k_num = 2.0 / setup.dz * arg.asin();
        let pml = AxisPml::new(nz, setup.pml_cells, setup.dz, dt);
        Self {
            n: 0,
            e: vec![0.0; nz],
            h: vec![0.0; nz],
            d: vec![0.0; nz],
            ca,
            cb,
            num,
            den,
            pml,
            slowness: k_num / w,
            h_over_e: -eps_src.sqrt() / ETA0,
            setup,
        }
    }

    /// Time index of the stored electric field.
    pub fn time_index(&self) -> usize {
        self.n
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    fn incident(&self, offset_cells: f64, t: f64) -> f64 {
        self.setup
            .source
            .value(t - offset_cells * self.setup.dz * self.slowness)
    }

    /// Advances `E^n → E^{n+1}` via `H^{n+½}`.
    pub fn step(&mut self) {
        let nz = self.e.len();
        let dt = self.setup.dt;
        let dz = self.setup.dz;
        let ks = self.setup.k_src;
        let t_e = self.n as f64 * dt;
        let t_h = t_e + 0.5 * dt;
        let ch = dt / (MU0 * dz);
        for k in 0..nz - 1 {
            let s = self.pml.half[k];
            let de = self.e[k + 1] - self.e[k];
            if s == 0.0 {
                self.h[k] += ch * de;
            } else {
                self.h[k] = (1.0 - s) / (1.0 + s) * self.h[k] + ch / (1.0 + s) * de;
            }
        }
        self.h[ks - 1] -= ch * self.incident(0.0, t_e);
        for k in 1..nz - 1 {
            let curl = (self.h[k] - self.h[k - 1]) / dz;
            let s = self.pml.int[k];
            if s == 0.0 {
                self.e[k] = self.ca[k] * self.e[k] + self.cb[k] * curl;
            } else {
                let d_new = (1.0 - s) / (1.0 + s) * self.d[k] + dt / (1.0 + s) * curl;
                self.e[k] = (d_new - self.d[k] + self.num[k] * self.e[k]) * self.den[k];
                self.d[k] = d_new;
            }
        }
        let h_inc = self.h_over_e * self.incident(-0.5, t_h);
        self.e[ks] -= self.cb[ks] / dz * h_inc;
        self.n += 1;
    }
}

/// Interpolation used when delaying stored auxiliary samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    Cubic,
}

pub(crate) fn interpolate(sample: impl Fn(i64) -> f64, pos: f64, order: Interpolation) -> f64 {
    let i = pos.floor();
    let t = pos - i;
    let i = i as i64;
    match order {
        Interpolation::Linear => sample(i) * (1.0 - t) + sample(i + 1) * t,
        Interpolation::Cubic => {
            let wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
            let w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
            let w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
            let w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
            wm * sample(i - 1) + w0 * sample(i) + w1 * sample(i + 1) + w2 * sample(i + 2)
        }
    }
}

/// Ring buffer of recent auxiliary samples for nodes `k_lo..k_lo+nk`.
/// `E` sample `m` is at time `mΔt`; `H` sample `m` at `(m+½)Δt`.
#[derive(Debug, Clone)]
pub(crate) struct AuxHistory {
    k_lo: usize,
    nk: usize,
    cap: usize,
    e: Vec<f64>,
    h: Vec<f64>,
    /// Number of E samples pushed so far (E^0 .. E^{count-1}).
    count: usize,
    pub order: Interpolation,
}

impl AuxHistory {
    pub fn new(k_lo: usize, nk: usize, cap: usize, order: Interpolation) -> Self {
        Self {
            k_lo,
            nk,
            cap,
            e: vec![0.0; cap * nk],
            h: vec![0.0; cap * nk],
            count: 0,
            order,
        }
    }

    /// Records the grid's current `E^n` and, for `n > 0`, `H^{n-½}`.
    pub fn push(&mut self, aux: &AuxGrid) {
        let n = aux.time_index();
        debug_assert_eq!(n, self.count);
        let slot = n % self.cap;
        let r = self.k_lo..self.k_lo + self.nk;
        self.e[slot * self.nk..(slot + 1) * self.nk].copy_from_slice(&aux.e()[r.clone()]);
        if n > 0 {
            let hs = (n - 1) % self.cap;
            self.h[hs * self.nk..(hs + 1) * self.nk].copy_from_slice(&aux.h()[r]);
        }
        self.count += 1;
    }

    pub fn len(&self) -> usize {
        self.count
    }

    fn raw(&self, buf: &[f64], available: usize, k: usize, m: i64) -> f64 {
        if m < 0 {
            return 0.0;
        }
        let m = m as usize;
        assert!(
            m < available && m + self.cap >= available,
            "auxiliary sample {m} outside retained window"
        );
        buf[(m % self.cap) * self.nk + (k - self.k_lo)]
    }

    /// `E_y` at node `k` and time `uΔt`.
    pub fn e_at(&self, k: usize, u: f64) -> f64 {
        interpolate(|m| self.raw(&self.e, self.count, k, m), u, self.order)
    }

    /// `H_x` at node `k+½` and time `uΔt`.
    pub fn h_at(&self, k: usize, u: f64) -> f64 {
        interpolate(
            |m| self.raw(&self.h, self.count.saturating_sub(1), k, m),
            u - 0.5,
            self.order,
        )
    }
}

/// Full time history of the auxiliary grid.
#[derive(Debug, Clone)]
pub struct AuxGridRecord {
    pub nz: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub dz: f64,
    pub theta_i: f64,
    /// `E_y(k, n)` at `[n * nz + k]`, `n = 0..=n_steps`.
    pub ey: Vec<f64>,
    /// `H_x(k+½, n+½)` at `[n * nz + k]`, `n = 0..n_steps`.
    pub hx: Vec<f64>,
    /// `H_z(k, n+½)` at `[n * nz + k]`, `n = 0..n_steps`.
    pub hz: Vec<f64>,
}

impl AuxGridRecord {
    pub fn ey(&self, k: usize, n: usize) -> f64 {
        self.ey[n * self.nz + k]
    }

    pub fn hx(&self, k: usize, n: usize) -> f64 {
        self.hx[n * self.nz + k]
    }

    pub fn hz(&self, k: usize, n: usize) -> f64 {
        self.hz[n * self.nz + k]
    }
}

pub(crate) fn record(setup: AuxSetup, n_steps: usize) -> AuxGridRecord {
    let nz = setup.eps_r.len();
    let (dt, dz, theta_i) = (setup.dt, setup.dz, setup.theta_i);
    let hz_coeff = theta_i.sin() / ETA0;
    let mut grid = AuxGrid::new(setup);
    let mut ey = Vec::with_capacity((n_steps + 1) * nz);
    let mut hx = Vec::with_capacity(n_steps * nz);
    let mut hz = Vec::with_capacity(n_steps * nz);
    ey.extend_from_slice(grid.e());
    for _ in 0..n_steps {
        let prev: Vec<f64> = grid.e().to_vec();
        grid.step();
        hx.extend_from_slice(grid.h());
        hz.extend(
            prev.iter()
                .zip(grid.e())
                .map(|(a, b)| hz_coeff * 0.5 * (a + b)),
        );
        ey.extend_from_slice(grid.e());
    }
    AuxGridRecord {
        nz,
        n_steps,
        dt,
        dz,
        theta_i,
        ey,
        hx,
        hz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_polynomials() {
        let f = |m: i64| 2.0 + 0.5 * m as f64;
        assert!((interpolate(f, 3.25, Interpolation::Linear) - (2.0 + 0.5 * 3.25)).abs() < 1e-14);
        let g = |m: i64| (m as f64).powi(3) - m as f64;
        let x: f64 = 5.4;
        assert!((interpolate(g, x, Interpolation::Cubic) - (x.powi(3) - x)).abs() < 1e-10);
    }

    #[test]
    fn source_is_zero_before_start_and_ramps() {
        let s = Source {
            omega: 2.0 * PI,
            ramp_time: 5.0,
        };
        assert_eq!(s.value(-1.0), 0.0);
        assert_eq!(s.value(0.0), 0.0);
        assert!((s.value(6.25) - 1.0).abs() < 1e-12);
    }
}
