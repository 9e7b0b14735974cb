use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pump::{pump_envelope, PumpSpec};
use super::{linspace, IntensityGrid};
use crate::error::{FwmError, Result};
use crate::fiber::{FiberModel, IndexModel, Segment};
use crate::fwm::{delta_k, FwmProcess};
use crate::modes::{ModeSuperposition, TransverseMode};

/// Phase-matching function of a (possibly cross-spliced) fiber:
/// Σ_m e^{iΦ_m} ∫₀^{L_m} e^{iΔk_m z} dz / L_tot.
pub fn phase_matching_fn(
    process: &FwmProcess,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    fiber: &FiberModel,
    k_nl: f64,
) -> Result<Complex64> {
    phase_matching_segments(process, lambda_s_nm, lambda_i_nm, fiber, &fiber.spec().segments, k_nl)
}

pub(crate) fn phase_matching_segments(
    process: &FwmProcess,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    fiber: &impl IndexModel,
    segments: &[Segment],
    k_nl: f64,
) -> Result<Complex64> {
    let mut dk_cache: [Option<f64>; 2] = [None, None];
    let mut total = Complex64::new(0.0, 0.0);
    let mut phase = 0.0;
    let mut length = 0.0;
    for seg in segments {
        let slot = seg.axis_swapped as usize;
        let dk = match dk_cache[slot] {
            Some(v) => v,
            None => {
                let v = delta_k(process, lambda_s_nm, lambda_i_nm, fiber, seg.axis_swapped, k_nl)?.delta_k;
                dk_cache[slot] = Some(v);
                v
            }
        };
        let x = 0.5 * dk * seg.length_m;
        let integral = Complex64::from_polar(seg.length_m * sinc(x), x);
        total += Complex64::from_polar(1.0, phase) * integral;
        phase += dk * seg.length_m;
        length += seg.length_m;
    }
    Ok(total / length)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Evaluates per-process amplitudes c_j · α · φ_j at arbitrary points.
#[derive(Debug, Clone)]
pub struct JsaModel<'a> {
    pub fiber: &'a FiberModel,
    pub pump: &'a PumpSpec,
    pub processes: Vec<FwmProcess>,
    pub weights: Vec<Complex64>,
    pub k_nl: f64,
}

impl<'a> JsaModel<'a> {
    pub fn new(
        fiber: &'a FiberModel,
        pump: &'a PumpSpec,
        processes: Vec<FwmProcess>,
        weights: Vec<Complex64>,
        k_nl: f64,
    ) -> Result<Self> {
        if processes.is_empty() {
            return Err(FwmError::InvalidParameter("process list is empty".into()));
        }
        if processes.len() != weights.len() {
            return Err(FwmError::InvalidParameter(format!(
                "{} processes but {} weights",
                processes.len(),
                weights.len()
            )));
        }
        pump.validate()?;
        Ok(Self {
            fiber,
            pump,
            processes,
            weights,
            k_nl,
        })
    }

    pub fn amplitudes(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Result<Vec<Complex64>> {
        let alpha = pump_envelope(lambda_s_nm, lambda_i_nm, self.pump);
        self.processes
            .iter()
            .zip(&self.weights)
            .map(|(p, &c)| {
                if c == Complex64::new(0.0, 0.0) {
                    return Ok(c);
                }
                Ok(c * alpha * phase_matching_fn(p, lambda_s_nm, lambda_i_nm, self.fiber, self.k_nl)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_s_nm: [f64; 2],
    pub lambda_i_nm: [f64; 2],
    pub nodes_s: usize,
    pub nodes_i: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambda_s_nm: [670.0, 700.0],
            lambda_i_nm: [567.0, 576.0],
            nodes_s: 301,
            nodes_i: 301,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: [f64; 2]| b[0].is_finite() && b[1].is_finite() && b[0] < b[1];
        if !ok(self.lambda_s_nm) || !ok(self.lambda_i_nm) {
            return Err(FwmError::InvalidParameter("grid bands must be increasing".into()));
        }
        if self.nodes_s < 2 || self.nodes_i < 2 {
            return Err(FwmError::InvalidParameter("grid needs at least 2 nodes per axis".into()));
        }
        Ok(())
    }

    pub fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        (
            linspace(self.lambda_s_nm[0], self.lambda_s_nm[1], self.nodes_s),
            linspace(self.lambda_i_nm[0], self.lambda_i_nm[1], self.nodes_i),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessAmplitude {
    pub process: FwmProcess,
    pub weight: Complex64,
    /// Row-major over (λs, λi), scaled with the grid normalization.
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsiGrid {
    pub lambda_s_axis: Vec<f64>,
    pub lambda_i_axis: Vec<f64>,
    pub per_process: BTreeMap<String, ProcessAmplitude>,
    /// Normalized so Σ I Δλs Δλi = 1.
    pub combined_intensity: Vec<f64>,
    /// Raw intensity integral divided out, nm².
    pub normalization: f64,
}

/// Per-process amplitudes and combined intensity on a uniform grid.
pub fn jsa_grid(
    processes: &[FwmProcess],
    fiber: &FiberModel,
    pump: &PumpSpec,
    weights: &[Complex64],
    grid: &GridSpec,
    k_nl: f64,
) -> Result<JsiGrid> {
    grid.validate()?;
    let model = JsaModel::new(fiber, pump, processes.to_vec(), weights.to_vec(), k_nl)?;
    let (ls_axis, li_axis) = grid.axes();
    let np = processes.len();
    let ni = li_axis.len();
    let rows: Vec<Vec<Complex64>> = ls_axis
        .par_iter()
        .map(|&ls| -> Result<Vec<Complex64>> {
            let mut row = Vec::with_capacity(ni * np);
            for &li in &li_axis {
                row.extend(model.amplitudes(ls, li)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut per: Vec<Vec<Complex64>> = vec![Vec::with_capacity(ls_axis.len() * ni); np];
    for row in &rows {
        for c in 0..ni {
            for (j, v) in per.iter_mut().enumerate() {
                v.push(row[c * np + j]);
            }
        }
    }
    let mut per_process = BTreeMap::new();
    for ((p, &w), values) in processes.iter().zip(weights).zip(per) {
        if per_process.contains_key(&p.label) {
            return Err(FwmError::InvalidParameter(format!("duplicate process {}", p.label)));
        }
        per_process.insert(
            p.label.clone(),
            ProcessAmplitude {
                process: p.clone(),
                weight: w,
                values,
            },
        );
    }
    let mut g = JsiGrid {
        lambda_s_axis: ls_axis,
        lambda_i_axis: li_axis,
        per_process,
        combined_intensity: Vec::new(),
        normalization: 1.0,
    };
    g.combined_intensity = g.combine();
    let raw: f64 = g.combined_intensity.iter().sum::<f64>() * g.step_s() * g.step_i();
    if !(raw > 0.0) || !raw.is_finite() {
        return Err(FwmError::ZeroIntensity("simulation grid".into()));
    }
    let amp_scale = 1.0 / raw.sqrt();
    for pa in g.per_process.values_mut() {
        for v in &mut pa.values {
            *v *= amp_scale;
        }
    }
    g.combined_intensity = g.combine();
    g.normalization = raw;
    Ok(g)
}

impl JsiGrid {
    pub fn step_s(&self) -> f64 {
        (self.lambda_s_axis[self.lambda_s_axis.len() - 1] - self.lambda_s_axis[0])
            / (self.lambda_s_axis.len() - 1) as f64
    }

    pub fn step_i(&self) -> f64 {
        (self.lambda_i_axis[self.lambda_i_axis.len() - 1] - self.lambda_i_axis[0])
            / (self.lambda_i_axis.len() - 1) as f64
    }

    /// Σ over distinct (T_s, T_i) of |Σ matching amplitudes|².
    fn combine(&self) -> Vec<f64> {
        let n = self.lambda_s_axis.len() * self.lambda_i_axis.len();
        let mut groups: BTreeMap<(TransverseMode, TransverseMode), Vec<Complex64>> = BTreeMap::new();
        for pa in self.per_process.values() {
            let acc = groups
                .entry((pa.process.t_s, pa.process.t_i))
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); n]);
            for (a, v) in acc.iter_mut().zip(&pa.values) {
                *a += v;
            }
        }
        let mut out = vec![0.0; n];
        for g in groups.values() {
            for (o, v) in out.iter_mut().zip(g) {
                *o += v.norm_sqr();
            }
        }
        out
    }

    pub fn combined(&self) -> IntensityGrid {
        IntensityGrid {
            lambda_s_axis: self.lambda_s_axis.clone(),
            lambda_i_axis: self.lambda_i_axis.clone(),
            values: self.combined_intensity.clone(),
        }
    }

    /// |amplitude|² of a single process.
    pub fn process_intensity(&self, label: &str) -> Option<IntensityGrid> {
        self.per_process.get(label).map(|pa| IntensityGrid {
            lambda_s_axis: self.lambda_s_axis.clone(),
            lambda_i_axis: self.lambda_i_axis.clone(),
            values: pa.values.iter().map(|v| v.norm_sqr()).collect(),
        })
    }

    pub fn processes(&self) -> Vec<FwmProcess> {
        self.per_process.values().map(|p| p.process.clone()).collect()
    }

    /// Bilinear interpolation of every process amplitude; `None` outside the grid.
    pub fn amplitudes_at(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Option<Vec<Complex64>> {
        let (r0, tr) = locate(&self.lambda_s_axis, lambda_s_nm)?;
        let (c0, tc) = locate(&self.lambda_i_axis, lambda_i_nm)?;
        let ni = self.lambda_i_axis.len();
        Some(
            self.per_process
                .values()
                .map(|pa| {
                    let v = |r: usize, c: usize| pa.values[r * ni + c];
                    v(r0, c0) * ((1.0 - tr) * (1.0 - tc))
                        + v(r0 + 1, c0) * (tr * (1.0 - tc))
                        + v(r0, c0 + 1) * ((1.0 - tr) * tc)
                        + v(r0 + 1, c0 + 1) * (tr * tc)
                })
                .collect(),
        )
    }
}

impl JsiGrid {
    /// Bilinear interpolation of every |amplitude|; `None` outside the grid.
    pub fn modulus_at(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Option<Vec<f64>> {
        let (r0, tr) = locate(&self.lambda_s_axis, lambda_s_nm)?;
        let (c0, tc) = locate(&self.lambda_i_axis, lambda_i_nm)?;
        let ni = self.lambda_i_axis.len();
        Some(
            self.per_process
                .values()
                .map(|pa| {
                    let v = |r: usize, c: usize| pa.values[r * ni + c].norm();
                    v(r0, c0) * (1.0 - tr) * (1.0 - tc)
                        + v(r0 + 1, c0) * tr * (1.0 - tc)
                        + v(r0, c0 + 1) * (1.0 - tr) * tc
                        + v(r0 + 1, c0 + 1) * tr * tc
                })
                .collect(),
        )
    }
}

/// Cell index and fractional offset of `x` on a uniform axis.
pub(crate) fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let pos = (x - axis[0]) / h;
    let tol = 1e-9;
    if !(pos >= -tol && pos <= (n - 1) as f64 + tol) {
        return None;
    }
    let pos = pos.clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    Some((i, pos - i as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulatedSlice {
    pub seed_wavelength_nm: f64,
    pub lambda_s_axis: Vec<f64>,
    pub intensity: Vec<f64>,
    pub contributions: BTreeMap<String, Vec<f64>>,
}

/// Signal spectrum stimulated by a seed at `seed_wavelength_nm` in mode
/// `seed_state`: the idler is projected onto the seed and amplitudes sharing
/// a signal mode add coherently.
pub fn stimulated_slice(
    grid: &JsiGrid,
    seed_wavelength_nm: f64,
    seed_state: &ModeSuperposition,
) -> Result<StimulatedSlice> {
    let (c0, t) = locate(&grid.lambda_i_axis, seed_wavelength_nm).ok_or_else(|| {
        FwmError::InvalidParameter(format!(
            "seed wavelength {seed_wavelength_nm} nm outside grid idler axis [{}, {}] nm",
            grid.lambda_i_axis[0],
            grid.lambda_i_axis[grid.lambda_i_axis.len() - 1]
        ))
    })?;
    let ni = grid.lambda_i_axis.len();
    let ns = grid.lambda_s_axis.len();
    let mut contributions = BTreeMap::new();
    let mut by_signal: BTreeMap<TransverseMode, Vec<Complex64>> = BTreeMap::new();
    for (label, pa) in &grid.per_process {
        let proj = seed_state.overlap_with(pa.process.t_i);
        let acc = by_signal
            .entry(pa.process.t_s)
            .or_insert_with(|| vec![Complex64::new(0.0, 0.0); ns]);
        let mut contrib = vec![0.0; ns];
        for r in 0..ns {
            let a = pa.values[r * ni + c0] * (1.0 - t) + pa.values[r * ni + c0 + 1] * t;
            let v = a * proj;
            acc[r] += v;
            contrib[r] = v.norm_sqr();
        }
        contributions.insert(label.clone(), contrib);
    }
    let mut intensity = vec![0.0; ns];
    for acc in by_signal.values() {
        for (o, v) in intensity.iter_mut().zip(acc) {
            *o += v.norm_sqr();
        }
    }
    Ok(StimulatedSlice {
        seed_wavelength_nm,
        lambda_s_axis: grid.lambda_s_axis.clone(),
        intensity,
        contributions,
    })
}
