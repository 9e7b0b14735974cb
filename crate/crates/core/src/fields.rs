//! LP transverse fields on square grids, four-mode overlap integrals, and
//! intensity images of pure and mixed transverse states.
//!
//! Grid rows run along the slow axis x (drawn vertically), columns along the
//! fast axis y. The e lobes lie along x.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};
use crate::fiber::{FiberModel, ModeSolution};
use crate::fwm::{phasematched_center, FwmProcess, PhaseMatchingSpec};
use crate::modes::{LpLabel, ModeSuperposition, TransverseMode};
use crate::special::{bessel_j, bessel_k};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldGridSpec {
    pub half_width_um: f64,
    pub nodes: usize,
}

impl Default for FieldGridSpec {
    fn default() -> Self {
        Self {
            half_width_um: 5.22,
            nodes: 257,
        }
    }
}

impl FieldGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width_um > 0.0) || self.nodes < 3 {
            return Err(FwmError::InvalidParameter(
                "field grid needs half_width_um > 0 and at least 3 nodes".into(),
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width_um / self.nodes as f64
    }

    /// Cell-center coordinate of node k (midpoint rule).
    pub fn coord(&self, k: usize) -> f64 {
        -self.half_width_um + (k as f64 + 0.5) * self.step()
    }

    pub fn doubled(&self) -> Self {
        Self {
            half_width_um: self.half_width_um,
            nodes: 2 * self.nodes + 1,
        }
    }
}

/// Radial LP profiles at one wavelength, for pointwise evaluation.
#[derive(Debug, Clone)]
pub struct ModeProfiles {
    core_radius_um: f64,
    lp01: Option<Profile>,
    lp11: Option<Profile>,
    wavelength_um: f64,
}

/// Mode solution plus the boundary values that make the profile continuous.
#[derive(Debug, Clone, Copy)]
struct Profile {
    sol: ModeSolution,
    j_edge: f64,
    k_edge: f64,
}

impl Profile {
    fn new(sol: ModeSolution, l: u32) -> Self {
        Self {
            sol,
            j_edge: bessel_j(l, sol.u),
            k_edge: bessel_k(l, sol.w),
        }
    }
}

impl ModeProfiles {
    /// Solves the LP modes that `state` needs at `wavelength_um`.
    pub fn new(fiber: &FiberModel, wavelength_um: f64, modes: &[TransverseMode]) -> Result<Self> {
        let solve = |l: LpLabel| -> Result<Option<Profile>> {
            if modes.iter().any(|m| m.lp_label() == l) {
                Ok(Some(Profile::new(fiber.solve(wavelength_um, l)?, l.order())))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            core_radius_um: fiber.spec().core_radius_um,
            lp01: solve(LpLabel::Lp01)?,
            lp11: solve(LpLabel::Lp11)?,
            wavelength_um,
        })
    }

    pub fn wavelength_um(&self) -> f64 {
        self.wavelength_um
    }

    /// Radial factor at radius `rho` µm, 1 at the core boundary.
    pub fn radial(&self, label: LpLabel, rho: f64) -> f64 {
        let p = match label {
            LpLabel::Lp01 => self.lp01.as_ref(),
            LpLabel::Lp11 => self.lp11.as_ref(),
        }
        .expect("profile solved for requested mode");
        let l = label.order();
        let t = rho / self.core_radius_um;
        if t <= 1.0 {
            bessel_j(l, p.sol.u * t) / p.j_edge
        } else {
            bessel_k(l, p.sol.w * t) / p.k_edge
        }
    }

    /// Unnormalized real field of a basis mode at (x, y) µm, continuous at the
    /// core boundary.
    pub fn value(&self, mode: TransverseMode, x: f64, y: f64) -> f64 {
        let rho = (x * x + y * y).sqrt();
        angular(mode, self.radial(mode.lp_label(), rho), x, y, rho)
    }
}

fn angular(mode: TransverseMode, radial: f64, x: f64, y: f64, rho: f64) -> f64 {
    match mode {
        TransverseMode::G => radial,
        _ if rho == 0.0 => 0.0,
        TransverseMode::E => radial * x / rho,
        TransverseMode::O => radial * y / rho,
    }
}

/// Radial factor on every grid node, evaluated once per orbit of the
/// square's eight symmetries.
fn radial_table(profiles: &ModeProfiles, label: LpLabel, grid: &FieldGridSpec) -> Vec<f64> {
    let n = grid.nodes;
    let fold = |k: usize| k.min(n - 1 - k);
    let m = n.div_ceil(2);
    // canonical values for a <= b < m
    let canon: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let x = grid.coord(a);
            (a..m)
                .map(|b| {
                    let y = grid.coord(b);
                    profiles.radial(label, (x * x + y * y).sqrt())
                })
                .collect()
        })
        .collect();
    let mut table = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let (a, b) = (fold(r), fold(c));
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            table[r * n + c] = canon[a][b - a];
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: FieldGridSpec,
    /// Row-major, rows along x.
    pub values: Vec<Complex64>,
    pub state: ModeSuperposition,
    pub wavelength_um: f64,
}

impl FieldGrid {
    /// Σ |T|² dA.
    pub fn norm_sqr(&self) -> f64 {
        let h = self.spec.step();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * h * h
    }
}

/// Normalized field of a mode superposition; each basis mode is normalized
/// on the grid before superposing.
pub fn mode_field(
    fiber: &FiberModel,
    wavelength_um: f64,
    state: &ModeSuperposition,
    grid: &FieldGridSpec,
) -> Result<FieldGrid> {
    grid.validate()?;
    let support = state.support();
    let profiles = ModeProfiles::new(fiber, wavelength_um, &support)?;
    let n = grid.nodes;
    let h = grid.step();
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    let mut tables: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for mode in support {
        let label = mode.lp_label();
        let radial = tables
            .entry(label.order())
            .or_insert_with(|| radial_table(&profiles, label, grid));
        let mut basis = vec![0.0; n * n];
        for r in 0..n {
            let x = grid.coord(r);
            for c in 0..n {
                let y = grid.coord(c);
                basis[r * n + c] = angular(mode, radial[r * n + c], x, y, (x * x + y * y).sqrt());
            }
        }
        let norm = (basis.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt();
        let amp = state.amplitude(mode) / norm;
        for (v, b) in values.iter_mut().zip(&basis) {
            *v += amp * b;
        }
    }
    Ok(FieldGrid {
        spec: *grid,
        values,
        state: *state,
        wavelength_um,
    })
}

/// O = ∫ T_p1 T_p2 T_s* T_i* d²r by the midpoint rule.
pub fn overlap_integral(p1: &FieldGrid, p2: &FieldGrid, s: &FieldGrid, i: &FieldGrid) -> Result<Complex64> {
    for g in [p2, s, i] {
        if g.spec != p1.spec {
            return Err(FwmError::InvalidParameter("overlap fields on mismatched grids".into()));
        }
    }
    let h = p1.spec.step();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..p1.values.len() {
        acc += p1.values[k] * p2.values[k] * s.values[k].conj() * i.values[k].conj();
    }
    Ok(acc * h * h)
}

/// Wavelengths (nm) at which a process's fields are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapWavelengths {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
}

/// Pump at its center; signal and idler at the process's phase-matched
/// center (search band first, then the wider viability band, else degenerate).
pub fn overlap_wavelengths(
    process: &FwmProcess,
    fiber: &FiberModel,
    pump_nm: f64,
    pm: &PhaseMatchingSpec,
) -> OverlapWavelengths {
    let wide = PhaseMatchingSpec {
        search_band_nm: pm.viability_band_nm,
        ..pm.clone()
    };
    let c = phasematched_center(process, fiber, pump_nm, pm)
        .or_else(|_| phasematched_center(process, fiber, pump_nm, &wide));
    match c {
        Ok(c) => OverlapWavelengths {
            pump_nm,
            signal_nm: c.lambda_s_nm,
            idler_nm: c.lambda_i_nm,
        },
        Err(_) => OverlapWavelengths {
            pump_nm,
            signal_nm: pump_nm,
            idler_nm: pump_nm,
        },
    }
}

/// Raw process overlap, summed over the distinct orderings of the pump pair.
pub fn process_overlap(
    process: &FwmProcess,
    fiber: &FiberModel,
    at: OverlapWavelengths,
    grid: &FieldGridSpec,
) -> Result<Complex64> {
    let f = |m: TransverseMode, nm: f64| mode_field(fiber, nm * 1e-3, &ModeSuperposition::basis(m), grid);
    let p1 = f(process.t_p1, at.pump_nm)?;
    let p2 = f(process.t_p2, at.pump_nm)?;
    let s = f(process.t_s, at.signal_nm)?;
    let i = f(process.t_i, at.idler_nm)?;
    Ok(overlap_integral(&p1, &p2, &s, &i)? * process.pump_orderings() as f64)
}

/// Raw overlaps for a process set, keyed by label.
pub fn process_overlaps(
    processes: &[FwmProcess],
    fiber: &FiberModel,
    pump_nm: f64,
    pm: &PhaseMatchingSpec,
    grid: &FieldGridSpec,
) -> Result<BTreeMap<String, Complex64>> {
    processes
        .iter()
        .map(|p| {
            let at = overlap_wavelengths(p, fiber, pump_nm, pm);
            Ok((p.label.clone(), process_overlap(p, fiber, at, grid)?))
        })
        .collect()
}

/// Scales a set of overlaps so Σ|O_j|² = 1.
pub fn normalize_overlaps(raw: &BTreeMap<String, Complex64>) -> Result<BTreeMap<String, Complex64>> {
    let total: f64 = raw.values().map(|v| v.norm_sqr()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FwmError::Numeric("all overlap integrals vanish".into()));
    }
    let s = 1.0 / total.sqrt();
    Ok(raw.iter().map(|(k, v)| (k.clone(), v * s)).collect())
}

/// A pure state or a weighted incoherent mixture of pure states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageState {
    Pure { state: ModeSuperposition },
    Mixture { components: Vec<(f64, ModeSuperposition)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityImage {
    pub spec: FieldGridSpec,
    /// Row-major, rows along x, peak normalized to 1.
    pub values: Vec<f64>,
}

pub fn intensity_image(
    state: &ImageState,
    fiber: &FiberModel,
    wavelength_um: f64,
    grid: &FieldGridSpec,
) -> Result<IntensityImage> {
    let components: Vec<(f64, ModeSuperposition)> = match state {
        ImageState::Pure { state } => vec![(1.0, *state)],
        ImageState::Mixture { components } => {
            let total: f64 = components.iter().map(|c| c.0).sum();
            if components.iter().any(|c| !(c.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(FwmError::InvalidParameter(
                    "mixture weights must be nonnegative and sum to 1".into(),
                ));
            }
            components.clone()
        }
    };
    let mut values = vec![0.0; grid.nodes * grid.nodes];
    for (w, s) in &components {
        let f = mode_field(fiber, wavelength_um, s, grid)?;
        for (v, a) in values.iter_mut().zip(&f.values) {
            *v += w * a.norm_sqr();
        }
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut values {
            *v /= peak;
        }
    }
    Ok(IntensityImage { spec: *grid, values })
}
