//! Material dispersion, LP mode solving, and effective indices of a step-index
//! few-mode polarization-maintaining fiber.
//!
//! Wavelengths in this module are in µm.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};
use crate::modes::{LpLabel, TransverseMode};
use crate::special::{bessel_j, bessel_k, J0_FIRST_ZERO, J1_FIRST_ZERO};

/// Validity range of the Sellmeier models, µm.
pub const SELLMEIER_RANGE_UM: (f64, f64) = (0.21, 3.7);

/// Three-term Sellmeier model n² = 1 + Σ Bᵢλ²/(λ² − Cᵢ²), with Cᵢ in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sellmeier {
    pub b: [f64; 3],
    pub c: [f64; 3],
}

/// Fused silica (Malitson 1965).
pub const FUSED_SILICA: Sellmeier = Sellmeier {
    b: [0.696_166_3, 0.407_942_6, 0.897_479_4],
    c: [0.068_404_3, 0.116_241_4, 9.896_161],
};

/// Germania glass (Fleming 1984).
pub const GERMANIA: Sellmeier = Sellmeier {
    b: [0.806_866_42, 0.718_158_48, 0.854_168_31],
    c: [0.068_972_606, 0.153_966_05, 11.841_931],
};

impl Sellmeier {
    pub fn index(&self, wavelength_um: f64) -> Result<f64> {
        check_range(wavelength_um)?;
        let l2 = wavelength_um * wavelength_um;
        let mut n2 = 1.0;
        for k in 0..3 {
            n2 += self.b[k] * l2 / (l2 - self.c[k] * self.c[k]);
        }
        Ok(n2.sqrt())
    }

    /// Linear mixing of coefficients: `self` at x = 0, `other` at x = 1.
    pub fn mix(&self, other: &Sellmeier, x: f64) -> Sellmeier {
        let mut out = *self;
        for k in 0..3 {
            out.b[k] += x * (other.b[k] - self.b[k]);
            out.c[k] += x * (other.c[k] - self.c[k]);
        }
        out
    }
}

fn check_range(wavelength_um: f64) -> Result<()> {
    let (lo, hi) = SELLMEIER_RANGE_UM;
    if !(wavelength_um >= lo && wavelength_um <= hi) {
        return Err(FwmError::WavelengthOutOfRange {
            wavelength_um,
            min_um: lo,
            max_um: hi,
        });
    }
    Ok(())
}

/// Cladding (fused silica) refractive index.
pub fn material_index(wavelength_um: f64) -> Result<f64> {
    FUSED_SILICA.index(wavelength_um)
}

/// How the core index is derived from the cladding index and the NA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialModel {
    /// GeO₂-doped silica core; dopant fraction chosen so the NA equals the
    /// configured value at `reference_wavelength_um`.
    DopedSilica { reference_wavelength_um: f64 },
    /// n_core = sqrt(n_clad² + NA²) with a wavelength-independent NA.
    ConstantNa,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel::DopedSilica {
            reference_wavelength_um: 0.62,
        }
    }
}

/// Where the parity-birefringence dispersion δ = Δᵖ_s − Δᵖ_i is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPlacement {
    /// Δᵖ_s = Δᵖ − δ, Δᵖ_i = Δᵖ.
    #[default]
    Signal,
    /// Δᵖ_s = Δᵖ − δ/2, Δᵖ_i = Δᵖ + δ/2.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub length_m: f64,
    #[serde(default)]
    pub axis_swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSpec {
    pub core_radius_um: f64,
    pub numerical_aperture: f64,
    /// Δ, slow-minus-fast polarization birefringence.
    pub delta_pol: f64,
    /// Δᵖ, odd-minus-even parity birefringence.
    pub delta_parity: f64,
    /// δ, signal-minus-idler parity birefringence magnitude.
    pub delta_parity_dispersion: f64,
    #[serde(default)]
    pub delta_placement: DeltaPlacement,
    #[serde(default)]
    pub material: MaterialModel,
    pub segments: Vec<Segment>,
}

impl Default for FiberSpec {
    fn default() -> Self {
        Self {
            core_radius_um: 1.74,
            numerical_aperture: 0.17,
            delta_pol: 2.37e-4,
            delta_parity: 4.41e-4,
            delta_parity_dispersion: 3e-5,
            delta_placement: DeltaPlacement::Signal,
            material: MaterialModel::default(),
            segments: vec![Segment {
                length_m: 0.10,
                axis_swapped: false,
            }],
        }
    }
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FwmError::InvalidParameter(m.to_string()));
        if !(self.core_radius_um > 0.0) || !self.core_radius_um.is_finite() {
            return bad("core_radius_um must be > 0");
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return bad("numerical_aperture must lie in (0, 1)");
        }
        if !(self.delta_parity >= 0.0) {
            return bad("delta_parity must be >= 0");
        }
        if !self.delta_pol.is_finite() || !self.delta_parity_dispersion.is_finite() {
            return bad("birefringence values must be finite");
        }
        if self.segments.is_empty() {
            return bad("fiber needs at least one segment");
        }
        if self
            .segments
            .iter()
            .any(|s| !(s.length_m > 0.0) || !s.length_m.is_finite())
        {
            return bad("segment lengths must be > 0");
        }
        if let MaterialModel::DopedSilica {
            reference_wavelength_um,
        } = self.material
        {
            check_range(reference_wavelength_um)?;
        }
        Ok(())
    }

    pub fn total_length_m(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }

    /// Same fiber cut into `count` equal cross-spliced pieces of `length_m`.
    pub fn with_cross_spliced(mut self, length_m: f64, count: usize) -> Self {
        self.segments = (0..count)
            .map(|k| Segment {
                length_m,
                axis_swapped: k % 2 == 1,
            })
            .collect();
        self
    }

    pub fn with_single_length(mut self, length_m: f64) -> Self {
        self.segments = vec![Segment {
            length_m,
            axis_swapped: false,
        }];
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub n_eff: f64,
    pub u: f64,
    pub w: f64,
    pub v_number: f64,
    pub lp_label: LpLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    XSlow,
    YFast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Photon {
    Pump,
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeRole {
    pub mode: TransverseMode,
    pub axis: Axis,
    pub photon: Photon,
}

impl ModeRole {
    /// Cross-polarized scheme: pump on the slow axis, signal/idler on the fast axis.
    pub fn cross_polarized(photon: Photon, mode: TransverseMode) -> Self {
        let axis = match photon {
            Photon::Pump => Axis::XSlow,
            _ => Axis::YFast,
        };
        Self { mode, axis, photon }
    }

    /// The role as seen in the frame of a segment spliced with its axes
    /// rotated by 90°: slow and fast exchange, and so do e and o.
    pub fn axis_swapped(self) -> Self {
        Self {
            mode: self.mode.swapped(),
            axis: match self.axis {
                Axis::XSlow => Axis::YFast,
                Axis::YFast => Axis::XSlow,
            },
            photon: self.photon,
        }
    }
}

/// Anything that can supply an effective index for a (wavelength, role) pair.
pub trait IndexModel: Sync {
    fn index(&self, wavelength_um: f64, role: ModeRole) -> Result<f64>;
}

/// Lookup table of scalar LP effective indices on a uniform wavelength grid,
/// read back with 4-point Lagrange interpolation.
#[derive(Debug, Clone)]
struct IndexTable {
    start_um: f64,
    step_um: f64,
    values: Vec<f64>,
}

impl IndexTable {
    fn lookup(&self, wavelength_um: f64) -> Option<f64> {
        let n = self.values.len();
        let pos = (wavelength_um - self.start_um) / self.step_um;
        if n < 4 || !(pos >= 0.0) || pos > (n - 1) as f64 {
            return None;
        }
        let i0 = (pos.floor() as usize).saturating_sub(1).min(n - 4);
        let t = pos - i0 as f64;
        let v = &self.values[i0..i0 + 4];
        // nodes at t = 0, 1, 2, 3
        let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
        let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
        let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
        let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
        Some(l0 * v[0] + l1 * v[1] + l2 * v[2] + l3 * v[3])
    }
}

const TABLE_START_UM: f64 = 0.40;
const TABLE_END_UM: f64 = 1.20;
const TABLE_STEP_UM: f64 = 2.5e-4;

/// Solved fiber: material model with the core composition fixed, plus lazily
/// built index tables for fast repeated evaluation.
#[derive(Debug)]
pub struct FiberModel {
    spec: FiberSpec,
    core: Option<Sellmeier>,
    tables: [OnceLock<IndexTable>; 2],
}

impl Clone for FiberModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            core: self.core,
            tables: [OnceLock::new(), OnceLock::new()],
        }
    }
}

impl FiberModel {
    pub fn new(spec: FiberSpec) -> Result<Self> {
        spec.validate()?;
        let core = match spec.material {
            MaterialModel::ConstantNa => None,
            MaterialModel::DopedSilica {
                reference_wavelength_um,
            } => Some(solve_dopant(spec.numerical_aperture, reference_wavelength_um)?),
        };
        Ok(Self {
            spec,
            core,
            tables: [OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn spec(&self) -> &FiberSpec {
        &self.spec
    }

    /// Mole fraction of GeO₂ in the core, when the doped model is active.
    pub fn dopant_fraction(&self) -> Option<f64> {
        self.core.map(|c| (c.b[0] - FUSED_SILICA.b[0]) / (GERMANIA.b[0] - FUSED_SILICA.b[0]))
    }

    pub fn n_clad(&self, wavelength_um: f64) -> Result<f64> {
        material_index(wavelength_um)
    }

    pub fn n_core(&self, wavelength_um: f64) -> Result<f64> {
        match &self.core {
            Some(s) => s.index(wavelength_um),
            None => {
                let nc = material_index(wavelength_um)?;
                let na = self.spec.numerical_aperture;
                Ok((nc * nc + na * na).sqrt())
            }
        }
    }

    pub fn numerical_aperture_at(&self, wavelength_um: f64) -> Result<f64> {
        let nco = self.n_core(wavelength_um)?;
        let ncl = self.n_clad(wavelength_um)?;
        Ok((nco * nco - ncl * ncl).sqrt())
    }

    pub fn v_number(&self, wavelength_um: f64) -> Result<f64> {
        let na = self.numerical_aperture_at(wavelength_um)?;
        Ok(2.0 * std::f64::consts::PI * self.spec.core_radius_um * na / wavelength_um)
    }

    /// Direct solve of the LP characteristic equation.
    pub fn solve(&self, wavelength_um: f64, label: LpLabel) -> Result<ModeSolution> {
        let ncl = self.n_clad(wavelength_um)?;
        let nco = self.n_core(wavelength_um)?;
        let v = self.v_number(wavelength_um)?;
        let (lo, hi) = match label {
            LpLabel::Lp01 => (1e-9, v.min(J0_FIRST_ZERO)),
            LpLabel::Lp11 => {
                if v <= J0_FIRST_ZERO {
                    return Err(FwmError::ModeNotGuided {
                        label: "LP11",
                        v_number: v,
                        cutoff: J0_FIRST_ZERO,
                    });
                }
                (J0_FIRST_ZERO, v.min(J1_FIRST_ZERO))
            }
        };
        let u = bisect_characteristic(label.order(), v, lo, hi)?;
        let w = (v * v - u * u).max(0.0).sqrt();
        let b = w * w / (v * v);
        let n_eff = (ncl * ncl + b * (nco * nco - ncl * ncl)).sqrt();
        Ok(ModeSolution {
            n_eff,
            u,
            w,
            v_number: v,
            lp_label: label,
        })
    }

    fn table(&self, label: LpLabel) -> &IndexTable {
        let slot = match label {
            LpLabel::Lp01 => &self.tables[0],
            LpLabel::Lp11 => &self.tables[1],
        };
        slot.get_or_init(|| {
            let mut values = Vec::new();
            let mut k = 0usize;
            loop {
                let l = TABLE_START_UM + k as f64 * TABLE_STEP_UM;
                if l > TABLE_END_UM {
                    break;
                }
                // stop a few nodes before cutoff; queries beyond fall back to direct solves
                let guided = self
                    .v_number(l + 3.0 * TABLE_STEP_UM)
                    .map(|v| label == LpLabel::Lp01 || v > J0_FIRST_ZERO + 1e-6)
                    .unwrap_or(false);
                if !guided {
                    break;
                }
                match self.solve(l, label) {
                    Ok(s) => values.push(s.n_eff),
                    Err(_) => break,
                }
                k += 1;
            }
            IndexTable {
                start_um: TABLE_START_UM,
                step_um: TABLE_STEP_UM,
                values,
            }
        })
    }

    /// Scalar LP effective index, served from the interpolation table when
    /// the wavelength is covered (agrees with `solve` to ~1e-13).
    pub fn lp_index(&self, wavelength_um: f64, label: LpLabel) -> Result<f64> {
        if let Some(n) = self.table(label).lookup(wavelength_um) {
            return Ok(n);
        }
        self.solve(wavelength_um, label).map(|s| s.n_eff)
    }

    /// Additive birefringence overlay for a role.
    pub fn birefringence(&self, role: ModeRole) -> f64 {
        let s = &self.spec;
        let pol = match role.axis {
            Axis::XSlow => s.delta_pol,
            Axis::YFast => 0.0,
        };
        let parity = if role.mode == TransverseMode::O {
            let d = s.delta_parity_dispersion;
            match (role.photon, s.delta_placement) {
                (Photon::Pump, _) => s.delta_parity,
                (Photon::Signal, DeltaPlacement::Signal) => s.delta_parity - d,
                (Photon::Idler, DeltaPlacement::Signal) => s.delta_parity,
                (Photon::Signal, DeltaPlacement::Symmetric) => s.delta_parity - 0.5 * d,
                (Photon::Idler, DeltaPlacement::Symmetric) => s.delta_parity + 0.5 * d,
            }
        } else {
            0.0
        };
        pol + parity
    }

    pub fn effective_index(&self, wavelength_um: f64, role: ModeRole) -> Result<f64> {
        Ok(self.lp_index(wavelength_um, role.mode.lp_label())? + self.birefringence(role))
    }
}

impl IndexModel for FiberModel {
    fn index(&self, wavelength_um: f64, role: ModeRole) -> Result<f64> {
        self.effective_index(wavelength_um, role)
    }
}

fn solve_dopant(na: f64, reference_um: f64) -> Result<Sellmeier> {
    let ncl = FUSED_SILICA.index(reference_um)?;
    let target = ncl * ncl + na * na;
    let f = |x: f64| -> Result<f64> {
        let n = FUSED_SILICA.mix(&GERMANIA, x).index(reference_um)?;
        Ok(n * n - target)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if f(hi)? < 0.0 {
        return Err(FwmError::InvalidParameter(format!(
            "NA {na} not reachable with a GeO2-doped silica core"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(FUSED_SILICA.mix(&GERMANIA, 0.5 * (lo + hi)))
}

/// Pole-free form of the weak-guidance eigenvalue equation.
fn characteristic(l: u32, v: f64, u: f64) -> f64 {
    let w = (v * v - u * u).max(1e-300).sqrt();
    if l == 0 {
        u * bessel_j(1, u) * bessel_k(0, w) - w * bessel_k(1, w) * bessel_j(0, u)
    } else {
        u * bessel_j(l - 1, u) * bessel_k(l, w) + w * bessel_k(l - 1, w) * bessel_j(l, u)
    }
}

fn bisect_characteristic(l: u32, v: f64, lo: f64, hi: f64) -> Result<f64> {
    let hi = hi.min(v * (1.0 - 1e-12));
    let (mut a, mut b) = (lo, hi);
    let fa = characteristic(l, v, a);
    let fb = characteristic(l, v, b);
    if !(fa * fb < 0.0) {
        return Err(FwmError::Numeric(format!(
            "LP{l}1 root not bracketed at V = {v:.6}"
        )));
    }
    let sign_a = fa.signum();
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        if characteristic(l, v, m).signum() == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Solves one LP mode for a fiber specification.
pub fn solve_lp_mode(fiber: &FiberSpec, wavelength_um: f64, label: LpLabel) -> Result<ModeSolution> {
    FiberModel::new(fiber.clone())?.solve(wavelength_um, label)
}

/// Effective index of a mode in a given role, with birefringence overlays.
pub fn effective_index(fiber: &FiberSpec, wavelength_um: f64, role: ModeRole) -> Result<f64> {
    let model = FiberModel::new(fiber.clone())?;
    Ok(model.solve(wavelength_um, role.mode.lp_label())?.n_eff + model.birefringence(role))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_na() -> FiberSpec {
        FiberSpec {
            material: MaterialModel::ConstantNa,
            ..FiberSpec::default()
        }
    }

    #[test]
    fn silica_index() {
        let n = material_index(0.5876).unwrap();
        assert!((n - 1.4585).abs() < 1e-3, "{n}");
        assert!(material_index(0.62).unwrap() > material_index(0.68).unwrap());
        match material_index(0.1) {
            Err(FwmError::WavelengthOutOfRange { min_um, max_um, .. }) => {
                assert_eq!((min_um, max_um), SELLMEIER_RANGE_UM)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn v_number_examples() {
        let m = FiberModel::new(constant_na()).unwrap();
        let v = m.v_number(0.62).unwrap();
        assert!((v - 2.998).abs() < 1e-3, "{v}");
        let v680 = m.v_number(0.68).unwrap();
        assert!((v680 - 2.733).abs() < 1e-3);
        assert!(m.solve(0.68, LpLabel::Lp11).is_ok());
    }

    #[test]
    fn doped_core_hits_na_at_reference() {
        let m = FiberModel::new(FiberSpec::default()).unwrap();
        assert!((m.numerical_aperture_at(0.62).unwrap() - 0.17).abs() < 1e-12);
        let x = m.dopant_fraction().unwrap();
        assert!(x > 0.05 && x < 0.08, "{x}");
    }

    #[test]
    fn lp11_below_cutoff_reports_v() {
        let m = FiberModel::new(constant_na()).unwrap();
        match m.solve(0.9, LpLabel::Lp11) {
            Err(FwmError::ModeNotGuided { v_number, .. }) => assert!(v_number < 2.405),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solution_bounds_and_ordering() {
        for spec in [FiberSpec::default(), constant_na()] {
            let m = FiberModel::new(spec).unwrap();
            for &l in &[0.56, 0.62, 0.68, 0.70] {
                let s01 = m.solve(l, LpLabel::Lp01).unwrap();
                let s11 = m.solve(l, LpLabel::Lp11).unwrap();
                let (ncl, nco) = (m.n_clad(l).unwrap(), m.n_core(l).unwrap());
                for s in [s01, s11] {
                    assert!(ncl < s.n_eff && s.n_eff < nco);
                    let rel = (s.u * s.u + s.w * s.w - s.v_number * s.v_number).abs()
                        / (s.v_number * s.v_number);
                    assert!(rel < 1e-9);
                }
                assert!(s01.n_eff > s11.n_eff);
            }
        }
    }

    #[test]
    fn table_matches_direct_solve() {
        let m = FiberModel::new(FiberSpec::default()).unwrap();
        for k in 0..37 {
            let l = 0.55 + k as f64 * 0.00517;
            for label in [LpLabel::Lp01, LpLabel::Lp11] {
                let d = m.solve(l, label).unwrap().n_eff;
                let t = m.lp_index(l, label).unwrap();
                assert!((d - t).abs() < 1e-12, "{l} {label}: {d} vs {t}");
            }
        }
    }

    #[test]
    fn birefringence_overlays() {
        let spec = FiberSpec::default();
        let l = 0.62;
        let pe = effective_index(&spec, l, ModeRole::cross_polarized(Photon::Pump, TransverseMode::E)).unwrap();
        let po = effective_index(&spec, l, ModeRole::cross_polarized(Photon::Pump, TransverseMode::O)).unwrap();
        assert!((po - pe - spec.delta_parity).abs() < 1e-15);
        let base = solve_lp_mode(&spec, l, LpLabel::Lp11).unwrap().n_eff;
        assert!((pe - base - spec.delta_pol).abs() < 1e-15);

        let zero = FiberSpec {
            delta_parity_dispersion: 0.0,
            ..spec.clone()
        };
        let m = FiberModel::new(zero).unwrap();
        let split = |p: Photon| {
            m.effective_index(0.57, ModeRole::cross_polarized(p, TransverseMode::O)).unwrap()
                - m.effective_index(0.57, ModeRole::cross_polarized(p, TransverseMode::E)).unwrap()
        };
        assert_eq!(split(Photon::Signal), split(Photon::Idler));

        let m = FiberModel::new(spec.clone()).unwrap();
        let bs = m.birefringence(ModeRole::cross_polarized(Photon::Signal, TransverseMode::O));
        let bi = m.birefringence(ModeRole::cross_polarized(Photon::Idler, TransverseMode::O));
        assert!(((bi - bs) - spec.delta_parity_dispersion).abs() < 1e-18);
    }

    #[test]
    fn swapped_role_exchanges_axis_and_parity() {
        let r = ModeRole::cross_polarized(Photon::Pump, TransverseMode::E).axis_swapped();
        assert_eq!(r.axis, Axis::YFast);
        assert_eq!(r.mode, TransverseMode::O);
    }

    #[test]
    fn validation() {
        let mut s = FiberSpec::default();
        s.segments.clear();
        assert!(s.validate().is_err());
        let s = FiberSpec {
            numerical_aperture: 1.2,
            ..FiberSpec::default()
        };
        assert!(s.validate().is_err());
        let s = FiberSpec {
            delta_parity: -1e-4,
            ..FiberSpec::default()
        };
        assert!(s.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn lp11_guided_and_continuous_in_band(nm in 560.0f64..699.9) {
            let m = FiberModel::new(FiberSpec::default()).unwrap();
            let l = nm * 1e-3;
            prop_assert!(m.v_number(l).unwrap() > J0_FIRST_ZERO);
            let a = m.solve(l, LpLabel::Lp11).unwrap().n_eff;
            let b = m.solve(l + 1e-4, LpLabel::Lp11).unwrap().n_eff;
            prop_assert!(b < a);
            prop_assert!((a - b).abs() < 1e-4);
        }

        #[test]
        fn uw_consistency(nm in 450.0f64..760.0, lp01 in any::<bool>()) {
            let m = FiberModel::new(FiberSpec::default()).unwrap();
            let label = if lp01 { LpLabel::Lp01 } else { LpLabel::Lp11 };
            let s = m.solve(nm * 1e-3, label).unwrap();
            let rel = (s.u * s.u + s.w * s.w - s.v_number * s.v_number).abs() / (s.v_number * s.v_number);
            prop_assert!(rel < 1e-9);
        }
    }
}
