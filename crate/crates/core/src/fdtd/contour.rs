//! Sub-cell material assignment for E nodes straddling an interface.

use std::collections::HashMap;

/// Area-weighted permittivity of a cell of size `cell_dx × cell_dz` whose
/// `dx_in × dz_in` corner lies in medium 2.
pub fn effective_permittivity(
    dx_in: f64,
    dz_in: f64,
    cell_dx: f64,
    cell_dz: f64,
    eps1: f64,
    eps2: f64,
) -> f64 {
    let frac = (dx_in * dz_in) / (cell_dx * cell_dz);
    eps1 * (1.0 - frac) + eps2 * frac
}

/// Fill fractions are stored on a fixed lattice so that identical geometry in
/// the main and auxiliary grids maps to bit-identical coefficients.
pub(crate) const FILL_LEVELS: f64 = 4096.0;

pub(crate) fn quantize(f: f64) -> u16 {
    (f.clamp(0.0, 1.0) * FILL_LEVELS).round() as u16
}

/// Fractions of the dual cell `[xc ± dx/2] × [zc ± dz/2]` lying above the
/// upper interface, between the interfaces, and below the lower one. `z`
/// grows downward; `top(x)`, `bottom(x)` give interface depths.
pub(crate) fn layer_fractions(
    top: impl Fn(f64) -> f64,
    bottom: impl Fn(f64) -> f64,
    xc: f64,
    zc: f64,
    dx: f64,
    dz: f64,
    subsamples: usize,
) -> (u16, u16) {
    let (z0, z1) = (zc - 0.5 * dz, zc + 0.5 * dz);
    let mut above = 0.0;
    let mut slab = 0.0;
    for s in 0..subsamples {
        let x = xc - 0.5 * dx + (s as f64 + 0.5) * dx / subsamples as f64;
        let (t, b) = (top(x), bottom(x).max(top(x)));
        above += (t.min(z1) - z0).clamp(0.0, dz);
        slab += (b.min(z1) - t.max(z0)).clamp(0.0, dz);
    }
    let n = subsamples as f64 * dz;
    (quantize(above / n), quantize(slab / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellMaterial {
    pub eps_r: f64,
    pub sigma: f64,
}

/// Interned per-cell materials keyed by quantized fill fractions.
#[derive(Debug, Clone, Default)]
pub(crate) struct MaterialTable {
    pub cells: Vec<CellMaterial>,
    index: HashMap<(u16, u16), u16>,
}

impl MaterialTable {
    pub fn intern(&mut self, key: (u16, u16), layers: &[CellMaterial; 3]) -> u16 {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let fa = key.0 as f64 / FILL_LEVELS;
        let fs = key.1 as f64 / FILL_LEVELS;
        let fb = (1.0 - fa - fs).max(0.0);
        let eps_r = fa * layers[0].eps_r + fs * layers[1].eps_r + fb * layers[2].eps_r;
        let sigma = fa * layers[0].sigma + fs * layers[1].sigma + fb * layers[2].sigma;
        let id = u16::try_from(self.cells.len()).expect("material table overflow");
        self.cells.push(CellMaterial { eps_r, sigma });
        self.index.insert(key, id);
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eff_perm_limits() {
        assert_eq!(effective_permittivity(0.0, 0.3, 1.0, 1.0, 1.5, 7.0), 1.5);
        assert_eq!(effective_permittivity(1.0, 1.0, 1.0, 1.0, 1.5, 7.0), 7.0);
        assert_eq!(effective_permittivity(0.5, 1.0, 1.0, 1.0, 1.0, 3.0), 2.0);
    }

    #[test]
    fn fractions_of_flat_interface() {
        // Interface through the middle of the cell.
        let (a, s) = layer_fractions(|_| 1.0, |_| 10.0, 0.0, 1.0, 1.0, 1.0, 8);
        assert_eq!(a, quantize(0.5));
        assert_eq!(s, quantize(0.5));
        // Cell wholly inside the slab.
        let (a, s) = layer_fractions(|_| 1.0, |_| 10.0, 0.0, 5.0, 1.0, 1.0, 8);
        assert_eq!((a, s), (0, quantize(1.0)));
        // Cell straddling the lower interface a quarter of the way down.
        let (a, s) = layer_fractions(|_| 1.0, |_| 4.75, 0.0, 5.0, 1.0, 1.0, 8);
        assert_eq!((a, s), (0, quantize(0.25)));
    }

    #[test]
    fn fractions_of_sloped_interface_match_triangle_area() {
        // Diagonal interface through the cell corner-to-corner: half the area
        // lies above it.
        let (a, s) = layer_fractions(|x| 0.5 + x, |_| 10.0, 0.0, 0.5, 1.0, 1.0, 64);
        assert_eq!(a, quantize(0.5));
        assert_eq!(s, quantize(0.5));
    }

    #[test]
    fn two_medium_blend_agrees_with_eff_perm() {
        let layers = [
            CellMaterial {
                eps_r: 1.0,
                sigma: 0.0,
            },
            CellMaterial {
                eps_r: 2.94,
                sigma: 0.12,
            },
            CellMaterial {
                eps_r: 1.0,
                sigma: 0.0,
            },
        ];
        let mut t = MaterialTable::default();
        let id = t.intern((quantize(0.75), quantize(0.25)), &layers);
        let want = effective_permittivity(0.5, 0.5, 1.0, 1.0, 1.0, 2.94);
        assert!((t.cells[id as usize].eps_r - want).abs() < 1e-12);
        assert_eq!(t.intern((quantize(0.75), quantize(0.25)), &layers), id);
    }
}
