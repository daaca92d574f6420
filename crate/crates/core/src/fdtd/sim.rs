use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::media::{Medium, C0, EPS0, ETA0, MU0};
use crate::ntff::{far_field, Side};
use crate::surface::HeightProfile;
use crate::{Error, Result};

use super::aux::{AuxGrid, AuxHistory, AuxSetup, Source};
use super::contour::{layer_fractions, CellMaterial, MaterialTable};
use super::upml::AxisPml;
use super::{plan, DelayModel, Plan, ProbeLine, ProbeRecord, SimOptions, SlabScene};

const DIVERGENCE_LIMIT: f64 = 1e6;

fn layer_materials(scene: &SlabScene) -> [CellMaterial; 3] {
    let c = |m: &Medium| CellMaterial {
        eps_r: m.eps_real,
        sigma: m.sigma,
    };
    [c(&scene.upper), c(&scene.slab), c(&scene.lower)]
}

/// Height of `profile` at absolute `x`, zero outside the aperture and linear
/// between samples (including the step down to zero at either end).
fn profile_height(profile: Option<&HeightProfile>, x: f64, x0: f64, dx: f64) -> f64 {
    let Some(p) = profile else { return 0.0 };
    let u = (x - x0) / dx;
    let n = p.heights.len() as i64;
    let i = u.floor() as i64;
    let t = u - i as f64;
    let at = |j: i64| {
        if (0..n).contains(&j) {
            p.heights[j as usize]
        } else {
            0.0
        }
    };
    at(i) * (1.0 - t) + at(i + 1) * t
}

pub(crate) fn aux_setup(scene: &SlabScene, opts: &SimOptions, plan: &Plan) -> Result<AuxSetup> {
    let g = &plan.grid;
    let l = &plan.layout;
    let layers = layer_materials(scene);
    let mut table = MaterialTable::default();
    let mut eps_r = Vec::with_capacity(g.nz);
    let mut sigma = Vec::with_capacity(g.nz);
    for k in 0..g.nz {
        let key = layer_fractions(|_| l.z1, |_| l.z2, 0.0, k as f64 * g.dz, g.dx, g.dz, 1);
        let id = table.intern(key, &layers);
        let m = table.cells[id as usize];
        eps_r.push(m.eps_r);
        sigma.push(m.sigma);
    }
    let omega = 2.0 * PI * scene.frequency;
    Ok(AuxSetup {
        dz: g.dz,
        dt: g.dt,
        theta_i: scene.theta_i,
        eps_r,
        sigma,
        k_src: l.k_src,
        pml_cells: g.pml_cells,
        source: Source {
            omega,
            ramp_time: opts.ramp_periods / scene.frequency,
        },
    })
}

/// Storage precision of the main grid. Fields are kept normalized
/// (`E`, `η₀H`, `D/ε₀`, `c₀B`) so every stored value is of order one.
type Real = f32;

/// Magnitudes below this are flushed to zero. Fields are of order one, so
/// this only removes the subnormal tail of the leading-edge precursor, which
/// would otherwise stall the FPU.
const FLUSH: Real = 1e-30;

#[inline(always)]
fn flush(v: Real) -> Real {
    if v.abs() < FLUSH {
        0.0
    } else {
        v
    }
}

/// UPML factors along one axis: `a = (1−s)/(1+s)`, `b = 1/(1+s)`, `1±s`.
struct Grade {
    a: Vec<Real>,
    b: Vec<Real>,
    plus: Vec<Real>,
    minus: Vec<Real>,
    lossy: Vec<bool>,
}

impl Grade {
    fn new(s: &[f64]) -> Self {
        Self {
            a: s.iter().map(|s| ((1.0 - s) / (1.0 + s)) as Real).collect(),
            b: s.iter().map(|s| (1.0 / (1.0 + s)) as Real).collect(),
            plus: s.iter().map(|s| (1.0 + s) as Real).collect(),
            minus: s.iter().map(|s| (1.0 - s) as Real).collect(),
            lossy: s.iter().map(|&s| s > 0.0).collect(),
        }
    }
}

/// Per-material factors for the normalized fields; the curl already
/// carries `c₀Δt/Δ`.
#[derive(Debug, Clone, Copy)]
struct NormCoef {
    ca: Real,
    num: Real,
    den: Real,
}

/// Main-grid state.
struct Engine {
    nx: usize,
    nz: usize,
    dx: f64,
    dz: f64,
    ey: Vec<Real>,
    hx: Vec<Real>,
    hz: Vec<Real>,
    d: Vec<Real>,
    p: Vec<Real>,
    bx: Vec<Real>,
    bz: Vec<Real>,
    mat: Vec<u16>,
    /// Physical `Δt/(ε + σΔt/2)` per material, for source injection.
    cb_phys: Vec<f64>,
    norm: Vec<NormCoef>,
    /// `norm` expanded per cell so the interior loop vectorizes.
    ca: Vec<Real>,
    den: Vec<Real>,
    x_int: Grade,
    x_half: Grade,
    z_int: Grade,
    z_half: Grade,
    /// `c₀Δt/Δz`, `c₀Δt/Δx`.
    sz: Real,
    sx: Real,
    /// Interior row ranges (no z loss) for H_x and for H_z / E_y.
    hx_rows: (usize, usize),
    e_rows: (usize, usize),
    /// Split column sweeps across the rayon pool.
    parallel: bool,
}

impl Engine {
    fn new(scene: &SlabScene, opts: &SimOptions, plan: &Plan) -> Self {
        let g = &plan.grid;
        let l = &plan.layout;
        let (nx, nz) = (g.nx, g.nz);
        let layers = layer_materials(scene);
        let mut table = MaterialTable::default();
        let mut mat = vec![0u16; nx * nz];
        let x_ap = l.aperture_start as f64 * g.dx;
        let up = scene.upper_profile.as_ref();
        let lo = scene.lower_profile.as_ref();
        // Rows within reach of either interface get sub-cell fill fractions.
        let reach = scene.roughness_allowance + 2.0 * g.dz;
        for i in 0..nx {
            let xc = i as f64 * g.dx;
            let rough_col =
                xc + g.dx >= x_ap - g.dx && xc - g.dx <= x_ap + (l.aperture_cells as f64) * g.dx;
            let top = |x: f64| l.z1 - profile_height(up, x, x_ap, g.dx);
            let bottom = |x: f64| l.z2 - profile_height(lo, x, x_ap, g.dx);
            for k in 0..nz {
                let zc = k as f64 * g.dz;
                let near = (zc - l.z1).abs() <= reach || (zc - l.z2).abs() <= reach;
                let sub = if near && rough_col {
                    opts.subsamples
                } else {
                    1
                };
                let key = if near {
                    layer_fractions(top, bottom, xc, zc, g.dx, g.dz, sub)
                } else {
                    layer_fractions(|_| l.z1, |_| l.z2, xc, zc, g.dx, g.dz, 1)
                };
                mat[i * nz + k] = table.intern(key, &layers);
            }
        }
        let dt = g.dt;
        let cb_phys = table
            .cells
            .iter()
            .map(|c| dt / (EPS0 * c.eps_r + c.sigma * dt / 2.0))
            .collect();
        let norm = table
            .cells
            .iter()
            .map(|c| {
                let half_loss = c.sigma * dt / (2.0 * EPS0);
                NormCoef {
                    ca: ((c.eps_r - half_loss) / (c.eps_r + half_loss)) as Real,
                    num: (c.eps_r - half_loss) as Real,
                    den: (1.0 / (c.eps_r + half_loss)) as Real,
                }
            })
            .collect::<Vec<NormCoef>>();
        let ca = mat.iter().map(|&m| norm[m as usize].ca).collect();
        let den = mat.iter().map(|&m| norm[m as usize].den).collect();
        let px = AxisPml::new(nx, g.pml_cells, g.dx, dt);
        let pz = AxisPml::new(nz, g.pml_cells, g.dz, dt);
        let hx_rows = AxisPml::interior(&pz.half[..nz - 1]);
        let rows = AxisPml::interior(&pz.int);
        let n = nx * nz;
        Self {
            nx,
            nz,
            dx: g.dx,
            dz: g.dz,
            ey: vec![0.0; n],
            hx: vec![0.0; n],
            hz: vec![0.0; n],
            d: vec![0.0; n],
            p: vec![0.0; n],
            bx: vec![0.0; n],
            bz: vec![0.0; n],
            mat,
            cb_phys,
            norm,
            ca,
            den,
            x_int: Grade::new(&px.int),
            x_half: Grade::new(&px.half),
            z_int: Grade::new(&pz.int),
            z_half: Grade::new(&pz.half),
            sz: (C0 * dt / g.dz) as Real,
            sx: (C0 * dt / g.dx) as Real,
            hx_rows,
            e_rows: (rows.0.max(1), rows.1.min(nz - 1)),
            parallel: opts.column_parallel && rayon::current_num_threads() > 1,
        }
    }

    fn update_h(&mut self) {
        let (nx, nz) = (self.nx, self.nz);
        let (sz, sx) = (self.sz, self.sx);
        let ey = &self.ey;
        let (gx, gz) = (&self.x_int, &self.z_half);
        let (a, b) = self.hx_rows;
        columns2(
            self.parallel,
            nz,
            &mut self.hx,
            &mut self.bx,
            |i, hx, bx| {
                let e = &ey[i * nz..(i + 1) * nz];
                let (xp, xm) = (gx.plus[i], gx.minus[i]);
                let pml = |k: usize, hx: &mut [Real], bx: &mut [Real]| {
                    let b_new = flush(gz.a[k] * bx[k] + gz.b[k] * sz * (e[k + 1] - e[k]));
                    hx[k] = flush(hx[k] + xp * b_new - xm * bx[k]);
                    bx[k] = b_new;
                };
                if gx.lossy[i] {
                    (0..nz - 1).for_each(|k| pml(k, hx, bx));
                } else {
                    (0..a).for_each(|k| pml(k, hx, bx));
                    for ((h, u), v) in hx[a..b].iter_mut().zip(&e[a..b]).zip(&e[a + 1..b + 1]) {
                        *h = flush(*h + sz * (v - u));
                    }
                    (b..nz - 1).for_each(|k| pml(k, hx, bx));
                }
            },
        );

        let (gx, gz) = (&self.x_half, &self.z_int);
        let (a, b) = self.e_rows;
        let (a, b) = (a - 1, b + 1);
        columns2(
            self.parallel,
            nz,
            &mut self.hz,
            &mut self.bz,
            |i, hz, bz| {
                if i + 1 >= nx {
                    return;
                }
                let e0 = &ey[i * nz..(i + 1) * nz];
                let e1 = &ey[(i + 1) * nz..(i + 2) * nz];
                let (xa, xb) = (gx.a[i], gx.b[i]);
                let pml = |k: usize, hz: &mut [Real], bz: &mut [Real]| {
                    let b_new = flush(xa * bz[k] - xb * sx * (e1[k] - e0[k]));
                    hz[k] = flush(hz[k] + gz.plus[k] * b_new - gz.minus[k] * bz[k]);
                    bz[k] = b_new;
                };
                if gx.lossy[i] {
                    (0..nz).for_each(|k| pml(k, hz, bz));
                } else {
                    (0..a).for_each(|k| pml(k, hz, bz));
                    for ((h, u), v) in hz[a..b].iter_mut().zip(&e0[a..b]).zip(&e1[a..b]) {
                        *h = flush(*h - sx * (v - u));
                    }
                    (b..nz).for_each(|k| pml(k, hz, bz));
                }
            },
        );
    }

    fn update_e(&mut self) {
        let (nx, nz) = (self.nx, self.nz);
        let (hx, hz) = (&self.hx, &self.hz);
        let (mat, norm) = (&self.mat, &self.norm);
        let (ca, den) = (&self.ca, &self.den);
        let (gx, gz) = (&self.x_int, &self.z_int);
        let (sz, sx) = (self.sz, self.sx);
        let (r0, r1) = self.e_rows;

        columns3(
            self.parallel,
            nz,
            &mut self.ey,
            &mut self.d,
            &mut self.p,
            |i, ey, d, p| {
                if i == 0 || i + 1 >= nx {
                    return;
                }
                let hxc = &hx[i * nz..(i + 1) * nz];
                let hzc = &hz[i * nz..(i + 1) * nz];
                let hzm = &hz[(i - 1) * nz..i * nz];
                let m = &mat[i * nz..(i + 1) * nz];
                let (xb, xm) = (gx.b[i], gx.minus[i]);
                let pml = |k: usize, ey: &mut [Real], d: &mut [Real], p: &mut [Real]| {
                    let curl = sz * (hxc[k] - hxc[k - 1]) - sx * (hzc[k] - hzm[k]);
                    let c = norm[m[k] as usize];
                    let d_new = flush(gz.a[k] * d[k] + gz.b[k] * curl);
                    let p_new = flush((d_new - d[k] + xm * p[k]) * xb);
                    ey[k] = flush((p_new - p[k] + c.num * ey[k]) * c.den);
                    d[k] = d_new;
                    p[k] = p_new;
                };
                if gx.lossy[i] {
                    (1..nz - 1).for_each(|k| pml(k, ey, d, p));
                } else {
                    (1..r0).for_each(|k| pml(k, ey, d, p));
                    let base = i * nz;
                    let cells = ey[r0..r1]
                        .iter_mut()
                        .zip(&ca[base + r0..base + r1])
                        .zip(&den[base + r0..base + r1])
                        .zip(hxc[r0..r1].iter().zip(&hxc[r0 - 1..r1 - 1]))
                        .zip(hzc[r0..r1].iter().zip(&hzm[r0..r1]));
                    for ((((e, a), b), (xc, xm)), (zc, zm)) in cells {
                        *e = flush(a * *e + b * (sz * (xc - xm) - sx * (zc - zm)));
                    }
                    (r1..nz - 1).for_each(|k| pml(k, ey, d, p));
                }
            },
        );
    }

    /// Physical `Δt/(ε + σΔt/2)` of the cell holding `E_y(i, k)`.
    fn cb(&self, i: usize, k: usize) -> f64 {
        self.cb_phys[self.mat[i * self.nz + k] as usize]
    }

    fn ey(&self, idx: usize) -> f64 {
        self.ey[idx] as f64
    }

    /// Physical `H_x`.
    fn hx(&self, idx: usize) -> f64 {
        self.hx[idx] as f64 / ETA0
    }

    fn add_ey(&mut self, idx: usize, v: f64) {
        self.ey[idx] += v as Real;
    }

    /// Adds a physical increment to `H_x` / `H_z`.
    fn add_hx(&mut self, idx: usize, v: f64) {
        self.hx[idx] += (v * ETA0) as Real;
    }

    fn add_hz(&mut self, idx: usize, v: f64) {
        self.hz[idx] += (v * ETA0) as Real;
    }

    fn max_abs_e(&self) -> f64 {
        self.ey.iter().fold(0.0f64, |m, &v| {
            if v.is_nan() {
                f64::INFINITY
            } else {
                m.max((v as f64).abs())
            }
        })
    }
}

/// Runs `f(column, a, b)` over matching `nz`-long columns of two arrays.
fn columns2<F>(parallel: bool, nz: usize, a: &mut [Real], b: &mut [Real], f: F)
where
    F: Fn(usize, &mut [Real], &mut [Real]) + Sync,
{
    if parallel {
        a.par_chunks_mut(nz)
            .zip(b.par_chunks_mut(nz))
            .enumerate()
            .with_min_len(16)
            .for_each(|(i, (a, b))| f(i, a, b));
    } else {
        a.chunks_mut(nz)
            .zip(b.chunks_mut(nz))
            .enumerate()
            .for_each(|(i, (a, b))| f(i, a, b));
    }
}

fn columns3<F>(parallel: bool, nz: usize, a: &mut [Real], b: &mut [Real], c: &mut [Real], f: F)
where
    F: Fn(usize, &mut [Real], &mut [Real], &mut [Real]) + Sync,
{
    if parallel {
        a.par_chunks_mut(nz)
            .zip(b.par_chunks_mut(nz))
            .zip(c.par_chunks_mut(nz))
            .enumerate()
            .with_min_len(16)
            .for_each(|(i, ((a, b), c))| f(i, a, b, c));
    } else {
        a.chunks_mut(nz)
            .zip(b.chunks_mut(nz))
            .zip(c.chunks_mut(nz))
            .enumerate()
            .for_each(|(i, ((a, b), c))| f(i, a, b, c));
    }
}

/// Boundary delays (in steps) for E columns and for H_z half-columns.
struct Delays {
    e: Vec<f64>,
    h: Vec<f64>,
    /// Phase slope `ωτ/x` used for the reflected-field phasor.
    kx: f64,
}

fn delays(scene: &SlabScene, opts: &SimOptions, plan: &Plan) -> Delays {
    let g = &plan.grid;
    let omega = 2.0 * PI * scene.frequency;
    let sin_t = scene.theta_i.sin();
    let kx = match opts.delay {
        DelayModel::Exact => omega * sin_t / C0,
        DelayModel::DispersionMatched => {
            let arg = g.dx * sin_t * (omega * g.dt / 2.0).sin() / (C0 * g.dt);
            2.0 / g.dx * arg.asin()
        }
    };
    let steps = |x: f64| (x - plan.layout.x_origin) * kx / omega / g.dt;
    Delays {
        e: (0..g.nx).map(|i| steps(i as f64 * g.dx)).collect(),
        h: (0..g.nx).map(|i| steps((i as f64 + 0.5) * g.dx)).collect(),
        kx,
    }
}

struct PhasorAcc {
    refl_e: Vec<Complex64>,
    refl_h: Vec<Complex64>,
    trans_e: Vec<Complex64>,
    trans_h: Vec<Complex64>,
    aux_e: Complex64,
    aux_h: Complex64,
}

impl PhasorAcc {
    fn new(n: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            refl_e: vec![z; n],
            refl_h: vec![z; n],
            trans_e: vec![z; n],
            trans_h: vec![z; n],
            aux_e: z,
            aux_h: z,
        }
    }

    fn mean(a: &Self, b: &Self) -> Self {
        let avg = |x: &[Complex64], y: &[Complex64]| {
            x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect()
        };
        Self {
            refl_e: avg(&a.refl_e, &b.refl_e),
            refl_h: avg(&a.refl_h, &b.refl_h),
            trans_e: avg(&a.trans_e, &b.trans_e),
            trans_h: avg(&a.trans_h, &b.trans_h),
            aux_e: 0.5 * (a.aux_e + b.aux_e),
            aux_h: 0.5 * (a.aux_h + b.aux_h),
        }
    }
}

fn write_snapshot(spec: &super::SnapshotSpec, eng: &Engine, step: usize) -> Result<()> {
    fs::create_dir_all(&spec.dir)?;
    let base = spec.dir.join(format!("ey_{step:07}"));
    let mut header = fs::File::create(base.with_extension("txt"))?;
    writeln!(
        header,
        "nx {}\nnz {}\ndx {:e}\ndz {:e}\nstep {}\nlayout x-major f64 little-endian",
        eng.nx, eng.nz, eng.dx, eng.dz, step
    )?;
    let bytes: Vec<u8> = eng
        .ey
        .iter()
        .flat_map(|&v| (v as f64).to_le_bytes())
        .collect();
    fs::write(base.with_extension("bin"), bytes)?;
    Ok(())
}

/// Runs the FDTD model of `scene` to steady state and returns probe phasors
/// without an incident reference (`e_i` is NaN).
pub fn run_probes(scene: &SlabScene, opts: &SimOptions) -> Result<ProbeRecord> {
    let plan = plan(scene, opts)?;
    let g = plan.grid;
    let l = plan.layout;
    let mut eng = Engine::new(scene, opts, &plan);
    let mut aux = AuxGrid::new(aux_setup(scene, opts, &plan)?);
    let del = delays(scene, opts, &plan);
    let max_delay = del.h.iter().chain(&del.e).fold(0.0f64, |m, &v| m.max(v));
    let k_lo = l.k_refl - 1;
    let nk = l.kb + 2 - k_lo;
    let mut hist = AuxHistory::new(k_lo, nk, max_delay.ceil() as usize + 12, opts.interpolation);
    hist.push(&aux);

    let nz = g.nz;
    let chz = g.dt / (MU0 * g.dz);
    let chx = g.dt / (MU0 * g.dx);
    let inv_dz = 1.0 / g.dz;
    let inv_dx = 1.0 / g.dx;
    let hz_scale = scene.theta_i.sin() / ETA0;
    let period_steps = g.steps_per_period;
    let probe: Vec<usize> = (l.probe_first..=l.probe_last).collect();
    let np = probe.len();

    let w_e: Vec<Complex64> = (0..period_steps)
        .map(|r| {
            Complex64::from_polar(
                2.0 / period_steps as f64,
                -2.0 * PI * (r + 1) as f64 / period_steps as f64,
            )
        })
        .collect();
    let w_h: Vec<Complex64> = (0..period_steps)
        .map(|r| {
            Complex64::from_polar(
                2.0 / period_steps as f64,
                -2.0 * PI * (r as f64 + 0.5) / period_steps as f64,
            )
        })
        .collect();
    let ref_phase: Vec<Complex64> = probe
        .iter()
        .map(|&i| Complex64::from_polar(1.0, -del.kx * (i as f64 * g.dx - l.x_origin)))
        .collect();

    // Earliest period at which steady state may be declared: ramp plus a
    // one-way transit from the source to the transmission probe.
    let sin2 = scene.theta_i.sin().powi(2);
    let slowness = [scene.upper, scene.slab, scene.lower]
        .iter()
        .map(|m| m.eps_real / (C0 * (m.eps_real - sin2).sqrt()))
        .fold(0.0f64, f64::max);
    let transit = (l.k_trans - l.k_src) as f64 * g.dz * slowness * scene.frequency;
    let min_periods = (opts.ramp_periods.ceil() + transit.ceil()) as usize + 2;

    let mut acc = PhasorAcc::new(np);
    let mut prev: Option<PhasorAcc> = None;
    let mut last_rel = f64::INFINITY;
    let mut result: Option<(PhasorAcc, usize, bool)> = None;

    for n in 0..g.n_steps {
        while hist.len() < n + 4 {
            aux.step();
            hist.push(&aux);
        }
        let tn = n as f64;

        eng.update_h();
        for i in l.ia..=l.ib {
            let u = tn - del.e[i];
            eng.add_hx(i * nz + l.ka - 1, -chz * hist.e_at(l.ka, u));
            eng.add_hx(i * nz + l.kb, chz * hist.e_at(l.kb, u));
        }
        for k in l.ka..=l.kb {
            eng.add_hz((l.ia - 1) * nz + k, chx * hist.e_at(k, tn - del.e[l.ia]));
            eng.add_hz(l.ib * nz + k, -chx * hist.e_at(k, tn - del.e[l.ib]));
        }

        eng.update_e();
        let th = tn + 0.5;
        for i in l.ia..=l.ib {
            let u = th - del.e[i];
            let top = eng.cb(i, l.ka) * inv_dz * hist.h_at(l.ka - 1, u);
            let bot = eng.cb(i, l.kb) * inv_dz * hist.h_at(l.kb, u);
            eng.add_ey(i * nz + l.ka, -top);
            eng.add_ey(i * nz + l.kb, bot);
        }
        for k in l.ka..=l.kb {
            let left = eng.cb(l.ia, k) * inv_dx * hz_scale * hist.e_at(k, th - del.h[l.ia - 1]);
            let right = eng.cb(l.ib, k) * inv_dx * hz_scale * hist.e_at(k, th - del.h[l.ib]);
            eng.add_ey(l.ia * nz + k, left);
            eng.add_ey(l.ib * nz + k, -right);
        }

        let r = n % period_steps;
        let (we, wh) = (w_e[r], w_h[r]);
        for (j, &i) in probe.iter().enumerate() {
            let c = i * nz;
            acc.refl_e[j] += we * eng.ey(c + l.k_refl);
            acc.refl_h[j] += wh * 0.5 * (eng.hx(c + l.k_refl - 1) + eng.hx(c + l.k_refl));
            acc.trans_e[j] += we * eng.ey(c + l.k_trans);
            acc.trans_h[j] += wh * 0.5 * (eng.hx(c + l.k_trans - 1) + eng.hx(c + l.k_trans));
        }
        acc.aux_e += we * hist.e_at(l.k_refl, tn + 1.0);
        acc.aux_h += wh * 0.5 * (hist.h_at(l.k_refl - 1, th) + hist.h_at(l.k_refl, th));

        if let Some(spec) = &opts.snapshot {
            if spec.every > 0 && (n + 1) % spec.every == 0 {
                write_snapshot(spec, &eng, n + 1)?;
            }
        }

        if (n + 1) % period_steps == 0 {
            let period = (n + 1) / period_steps;
            let peak = eng.max_abs_e();
            if peak > DIVERGENCE_LIMIT {
                return Err(Error::Unstable {
                    step: n + 1,
                    magnitude: peak,
                });
            }
            let done = std::mem::replace(&mut acc, PhasorAcc::new(np));
            if let Some(p) = prev.take() {
                let rel = relative_change(&p, &done, &ref_phase);
                let steady =
                    period >= min_periods && rel < opts.tolerance && last_rel < opts.tolerance;
                last_rel = rel;
                if steady || n + period_steps >= g.n_steps {
                    result = Some((PhasorAcc::mean(&p, &done), n + 1, steady));
                    break;
                }
            }
            prev = Some(done);
        }
    }
    let (ph, steps, converged) = result
        .ok_or_else(|| Error::invalid("max_periods", "too small to reach a full comparison"))?;

    let x: Vec<f64> = probe.iter().map(|&i| i as f64 * g.dx).collect();
    let scattered_ey = ph.refl_e.clone();
    let reflection = ProbeLine {
        z: l.k_refl as f64 * g.dz,
        x: x.clone(),
        ey: ph
            .refl_e
            .iter()
            .zip(&ref_phase)
            .map(|(s, p)| s + ph.aux_e * p)
            .collect(),
        hx: ph
            .refl_h
            .iter()
            .zip(&ref_phase)
            .map(|(s, p)| s + ph.aux_h * p)
            .collect(),
    };
    let transmission = ProbeLine {
        z: l.k_trans as f64 * g.dz,
        x,
        ey: ph.trans_e,
        hx: ph.trans_h,
    };
    Ok(ProbeRecord {
        reflection,
        transmission,
        scattered_ey,
        e_i: Complex64::new(f64::NAN, f64::NAN),
        incident_amplitude: f64::NAN,
        frequency: scene.frequency,
        theta_i: scene.theta_i,
        steps,
        converged,
        plan,
    })
}

fn relative_change(a: &PhasorAcc, b: &PhasorAcc, phase: &[Complex64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for j in 0..a.refl_e.len() {
        let ra = a.refl_e[j] + a.aux_e * phase[j];
        let rb = b.refl_e[j] + b.aux_e * phase[j];
        diff += (rb - ra).norm_sqr() + (b.trans_e[j] - a.trans_e[j]).norm_sqr();
        norm += rb.norm_sqr() + b.trans_e[j].norm_sqr();
    }
    if norm == 0.0 {
        f64::INFINITY
    } else {
        (diff / norm).sqrt()
    }
}

/// Incident reference obtained from the vacuum counterpart of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentReference {
    pub e_i: Complex64,
    pub amplitude: f64,
    pub record: ProbeRecord,
}

pub fn incident_reference(scene: &SlabScene, opts: &SimOptions) -> Result<IncidentReference> {
    let record = run_probes(&scene.vacuum_reference(), opts)?;
    let e_i = far_field(
        &record.transmission,
        Side::Lower,
        &[scene.theta_i.to_degrees()],
        scene.frequency,
    )?[0];
    let amplitude = record.transmission.ey.iter().map(|v| v.norm()).sum::<f64>()
        / record.transmission.ey.len() as f64;
    if !(e_i.norm() > 1e-12) {
        return Err(Error::NoIncidentField(e_i.norm()));
    }
    Ok(IncidentReference {
        e_i,
        amplitude,
        record,
    })
}

pub fn simulate_with_reference(
    scene: &SlabScene,
    opts: &SimOptions,
    reference: &IncidentReference,
) -> Result<ProbeRecord> {
    let mut rec = run_probes(scene, opts)?;
    if rec.plan != reference.record.plan {
        return Err(Error::Geometry(
            "reference run used a different grid".into(),
        ));
    }
    rec.e_i = reference.e_i;
    rec.incident_amplitude = reference.amplitude;
    Ok(rec)
}

/// Runs `scene` and its vacuum reference.
pub fn simulate_slab(scene: &SlabScene, opts: &SimOptions) -> Result<ProbeRecord> {
    let reference = incident_reference(scene, opts)?;
    simulate_with_reference(scene, opts, &reference)
}
