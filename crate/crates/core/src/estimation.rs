//! Transverse-mode state estimation: process weights, pointwise pure
//! states and the spectrally traced density matrix.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{basis_index, DensityMatrix4};
use crate::error::{FwmError, Result};
use crate::fwm::FwmProcess;
use crate::spectrum::{JsaModel, JsiGrid, LobeSet, PumpSpec};

/// Default quadrature nodes per window axis.
pub const WINDOW_NODES: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub process: FwmProcess,
    /// a_p1·a_p2, doubled for distinguishable pump modes
    pub pump_factor: Complex64,
    pub overlap: Complex64,
    pub coefficient: Complex64,
    /// |c_j|² normalized over the set
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessWeights {
    pub entries: Vec<WeightEntry>,
}

impl ProcessWeights {
    pub fn get(&self, label: &str) -> Option<&WeightEntry> {
        self.entries.iter().find(|e| e.process.label == label)
    }

    pub fn weight(&self, label: &str) -> f64 {
        self.get(label).map_or(0.0, |e| e.weight)
    }

    pub fn processes(&self) -> Vec<FwmProcess> {
        self.entries.iter().map(|e| e.process.clone()).collect()
    }

    /// Coefficients c_j in entry order, rescaled so Σ|c_j|² = 1.
    pub fn coefficients(&self) -> Vec<Complex64> {
        let total: f64 = self.entries.iter().map(|e| e.coefficient.norm_sqr()).sum();
        let s = 1.0 / total.sqrt();
        self.entries.iter().map(|e| e.coefficient * s).collect()
    }

    pub fn weight_map(&self) -> BTreeMap<String, f64> {
        self.entries.iter().map(|e| (e.process.label.clone(), e.weight)).collect()
    }
}

/// Relative process coefficients c_j = b_j·O_j from the pump state and the
/// overlap integrals. Overlaps are expected to already carry the pump
/// ordering multiplicity, so it is divided out here to avoid counting the
/// indistinguishable-pump factor twice.
pub fn process_weights(
    pump: &PumpSpec,
    overlaps: &BTreeMap<String, Complex64>,
    processes: &[FwmProcess],
) -> Result<ProcessWeights> {
    let state = &pump.transverse_state;
    if (state.norm_sqr() - 1.0).abs() > 1e-9 {
        return Err(FwmError::InvalidParameter(format!(
            "pump transverse state has norm² {}",
            state.norm_sqr()
        )));
    }
    let mut entries = Vec::with_capacity(processes.len());
    for p in processes {
        let overlap = *overlaps.get(&p.label).ok_or_else(|| {
            FwmError::InvalidParameter(format!("no overlap integral for process {}", p.label))
        })?;
        let mut pump_factor = state.amplitude(p.t_p1) * state.amplitude(p.t_p2);
        if p.t_p1 != p.t_p2 {
            pump_factor *= 2.0;
        }
        let coefficient = pump_factor * overlap / p.pump_orderings() as f64;
        entries.push(WeightEntry {
            process: p.clone(),
            pump_factor,
            overlap,
            coefficient,
            weight: 0.0,
        });
    }
    let total: f64 = entries.iter().map(|e| e.coefficient.norm_sqr()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FwmError::InvalidParameter(
            "all process weights vanish for this pump state".into(),
        ));
    }
    for e in &mut entries {
        e.weight = e.coefficient.norm_sqr() / total;
    }
    Ok(ProcessWeights { entries })
}

/// Treatment of the joint spectral phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Every amplitude is replaced by its magnitude.
    #[default]
    Flat,
    /// Complex amplitudes are used as computed.
    Analytic,
}

/// Anything able to report per-process amplitudes at a spectral point.
pub trait AmplitudeSource: Sync {
    fn processes(&self) -> Vec<FwmProcess>;
    /// Amplitudes in `processes()` order; zero outside the support.
    fn amplitudes(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Result<Vec<Complex64>>;
}

impl AmplitudeSource for JsaModel<'_> {
    fn processes(&self) -> Vec<FwmProcess> {
        self.processes.clone()
    }

    fn amplitudes(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Result<Vec<Complex64>> {
        JsaModel::amplitudes(self, lambda_s_nm, lambda_i_nm)
    }
}

impl AmplitudeSource for JsiGrid {
    fn processes(&self) -> Vec<FwmProcess> {
        JsiGrid::processes(self)
    }

    /// Magnitudes and phases are interpolated separately so a rapidly
    /// winding phase does not cancel the modulus between nodes.
    fn amplitudes(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Result<Vec<Complex64>> {
        let n = self.per_process.len();
        let Some(complex) = self.amplitudes_at(lambda_s_nm, lambda_i_nm) else {
            return Ok(vec![Complex64::new(0.0, 0.0); n]);
        };
        let modulus = self.modulus_at(lambda_s_nm, lambda_i_nm).expect("inside grid");
        Ok(complex
            .iter()
            .zip(modulus)
            .map(|(z, m)| if z.norm() > 0.0 { z / z.norm() * m } else { Complex64::new(m, 0.0) })
            .collect())
    }
}

impl AmplitudeSource for LobeSet {
    fn processes(&self) -> Vec<FwmProcess> {
        LobeSet::processes(self)
    }

    fn amplitudes(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> Result<Vec<Complex64>> {
        Ok(self.amplitudes_at(lambda_s_nm, lambda_i_nm))
    }
}

fn phased(a: Complex64, convention: PhaseConvention) -> Complex64 {
    match convention {
        PhaseConvention::Flat => Complex64::new(a.norm(), 0.0),
        PhaseConvention::Analytic => a,
    }
}

/// Unnormalized |ψ⟩ = Σ_j a_j |T_s T_i⟩_j; processes involving LP01 are
/// outside the estimated subspace and dropped.
pub fn state_vector(
    processes: &[FwmProcess],
    amplitudes: &[Complex64],
    convention: PhaseConvention,
) -> Result<Vector4<Complex64>> {
    if processes.len() != amplitudes.len() {
        return Err(FwmError::InvalidParameter(format!(
            "{} processes but {} amplitudes",
            processes.len(),
            amplitudes.len()
        )));
    }
    let mut psi = Vector4::<Complex64>::zeros();
    for (p, &a) in processes.iter().zip(amplitudes) {
        if let Some(k) = basis_index(p.t_s, p.t_i) {
            psi[k] += phased(a, convention);
        }
    }
    Ok(psi)
}

/// Pure state at one spectral point.
pub fn pointwise_rho(
    processes: &[FwmProcess],
    amplitudes: &[Complex64],
    convention: PhaseConvention,
) -> Result<DensityMatrix4> {
    let psi = state_vector(processes, amplitudes, convention)?;
    if psi.norm_squared() == 0.0 {
        return Err(FwmError::ZeroIntensity("no process amplitude at this point".into()));
    }
    DensityMatrix4::pure(&psi)
}

/// Rectangular spectral filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralWindow {
    #[serde(default)]
    pub name: Option<String>,
    pub lambda_s_nm: [f64; 2],
    pub lambda_i_nm: [f64; 2],
}

impl SpectralWindow {
    /// Square window of side `width_nm` centered on a point.
    pub fn centered(lambda_s_nm: f64, lambda_i_nm: f64, width_nm: f64) -> Self {
        let h = width_nm / 2.0;
        Self {
            name: None,
            lambda_s_nm: [lambda_s_nm - h, lambda_s_nm + h],
            lambda_i_nm: [lambda_i_nm - h, lambda_i_nm + h],
        }
    }

    pub fn id(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "s[{}, {}] i[{}, {}]",
                self.lambda_s_nm[0], self.lambda_s_nm[1], self.lambda_i_nm[0], self.lambda_i_nm[1]
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, r) in [("lambda_s_nm", self.lambda_s_nm), ("lambda_i_nm", self.lambda_i_nm)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
                return Err(FwmError::InvalidParameter(format!(
                    "window {}: {axis} interval [{}, {}] is empty",
                    self.id(),
                    r[0],
                    r[1]
                )));
            }
        }
        Ok(())
    }

    /// Checks that the window lies inside the given bands.
    pub fn check_inside(&self, band_s: [f64; 2], band_i: [f64; 2]) -> Result<()> {
        self.validate()?;
        let tol = 1e-9;
        let inside = |w: [f64; 2], b: [f64; 2]| w[0] >= b[0] - tol && w[1] <= b[1] + tol;
        if !inside(self.lambda_s_nm, band_s) || !inside(self.lambda_i_nm, band_i) {
            return Err(FwmError::InvalidParameter(format!(
                "window {} lies outside the grid band s{band_s:?} i{band_i:?}",
                self.id()
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.lambda_s_nm[1] - self.lambda_s_nm[0]) * (self.lambda_i_nm[1] - self.lambda_i_nm[0])
    }
}

/// ∫ |ψ⟩⟨ψ| dλs dλi over a window before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralIntegral {
    pub matrix: Matrix4<Complex64>,
    /// Total in-subspace intensity, tr(matrix).
    pub intensity: f64,
}

impl SpectralIntegral {
    pub fn rho(&self) -> Result<DensityMatrix4> {
        DensityMatrix4::from_unnormalized(self.matrix)
    }
}

/// Midpoint-rule integral of the pointwise projector weighted by intensity.
pub fn integrate_window(
    source: &dyn AmplitudeSource,
    window: &SpectralWindow,
    nodes_s: usize,
    nodes_i: usize,
    convention: PhaseConvention,
) -> Result<SpectralIntegral> {
    window.validate()?;
    if nodes_s == 0 || nodes_i == 0 {
        return Err(FwmError::InvalidParameter("window quadrature needs nodes".into()));
    }
    let processes = source.processes();
    let hs = (window.lambda_s_nm[1] - window.lambda_s_nm[0]) / nodes_s as f64;
    let hi = (window.lambda_i_nm[1] - window.lambda_i_nm[0]) / nodes_i as f64;
    let rows: Vec<Matrix4<Complex64>> = (0..nodes_s)
        .into_par_iter()
        .map(|r| {
            let ls = window.lambda_s_nm[0] + (r as f64 + 0.5) * hs;
            let mut acc = Matrix4::<Complex64>::zeros();
            for col in 0..nodes_i {
                let li = window.lambda_i_nm[0] + (col as f64 + 0.5) * hi;
                let a = source.amplitudes(ls, li)?;
                let psi = state_vector(&processes, &a, convention)?;
                acc += psi * psi.adjoint();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    // fixed-order reduction keeps results independent of thread count
    let matrix = rows.into_iter().fold(Matrix4::zeros(), |a, b| a + b) * Complex64::new(hs * hi, 0.0);
    let intensity = matrix.trace().re;
    Ok(SpectralIntegral { matrix, intensity })
}

/// Traces out the spectral degree of freedom inside a window (ρ_SE).
pub fn trace_spectral(
    source: &dyn AmplitudeSource,
    window: &SpectralWindow,
    convention: PhaseConvention,
) -> Result<DensityMatrix4> {
    let integral = integrate_window(source, window, WINDOW_NODES, WINDOW_NODES, convention)?;
    if !(integral.intensity > 0.0) {
        return Err(FwmError::ZeroIntensity(format!("window {}", window.id())));
    }
    integral.rho()
}

/// Concurrence change between the default quadrature and twice as many nodes.
pub fn quadrature_convergence(
    source: &dyn AmplitudeSource,
    window: &SpectralWindow,
    convention: PhaseConvention,
) -> Result<f64> {
    let a = integrate_window(source, window, WINDOW_NODES, WINDOW_NODES, convention)?.rho()?;
    let b = integrate_window(source, window, 2 * WINDOW_NODES, 2 * WINDOW_NODES, convention)?.rho()?;
    Ok((a.concurrence() - b.concurrence()).abs())
}

/// Grid node maximizing min(I_a, I_b), i.e. where two lobes cross.
pub fn intersection_center(grid: &JsiGrid, a: &str, b: &str) -> Option<(f64, f64)> {
    let pa = grid.per_process.get(a)?;
    let pb = grid.per_process.get(b)?;
    let ni = grid.lambda_i_axis.len();
    let (k, v) = pa
        .values
        .iter()
        .zip(&pb.values)
        .map(|(x, y)| x.norm_sqr().min(y.norm_sqr()))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best });
    (v > 0.0).then(|| (grid.lambda_s_axis[k / ni], grid.lambda_i_axis[k % ni]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{ModeSuperposition, TransverseMode};
    use crate::spectrum::GaussianLobe;
    use proptest::prelude::*;

    fn lettered() -> Vec<FwmProcess> {
        FwmProcess::lettered()
    }

    fn unit_overlaps() -> BTreeMap<String, Complex64> {
        lettered()
            .iter()
            .map(|p| (p.label.clone(), Complex64::new(p.pump_orderings() as f64, 0.0)))
            .collect()
    }

    fn pump(state: &str) -> PumpSpec {
        PumpSpec {
            transverse_state: ModeSuperposition::named(state).unwrap(),
            ..PumpSpec::default()
        }
    }

    fn lobe(center: [f64; 2], amplitude: f64) -> GaussianLobe {
        GaussianLobe {
            center,
            sigma_major: 0.3,
            sigma_minor: 0.2,
            orientation: 0.7,
            amplitude,
            r_squared: 1.0,
            process_label: None,
        }
    }

    fn process(label: &str) -> FwmProcess {
        FwmProcess::parse(label).unwrap()
    }

    #[test]
    fn pump_state_selection() {
        let w = process_weights(&pump("e"), &unit_overlaps(), &lettered()).unwrap();
        // every process but C needs an o pump photon
        for (l, m) in w.weight_map() {
            assert_eq!(m > 0.0, l == "C", "{l}");
        }

        let w = process_weights(&pump("o"), &unit_overlaps(), &lettered()).unwrap();
        for (l, m) in w.weight_map() {
            assert_eq!(m > 0.0, l == "B" || l == "E", "{l}");
        }

        let w = process_weights(&pump("d"), &unit_overlaps(), &lettered()).unwrap();
        let ee = w.get("C").unwrap().pump_factor.norm();
        let eo = w.get("A").unwrap().pump_factor.norm();
        assert!((eo / ee - 2.0).abs() < 1e-12);
        let total: f64 = w.entries.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_rejected() {
        let only_b = vec![process("B")];
        assert!(process_weights(&pump("e"), &unit_overlaps(), &only_b).is_err());
    }

    #[test]
    fn pointwise_states() {
        let ps = vec![process("B"), process("C")];
        let z = Complex64::new(0.0, 0.0);
        let r = pointwise_rho(&ps, &[Complex64::new(0.7, 0.0), z], PhaseConvention::Flat).unwrap();
        assert!((r.get(3, 3).re - 1.0).abs() < 1e-12);
        let a = Complex64::new(0.4, 0.0);
        let r = pointwise_rho(&ps, &[a, a], PhaseConvention::Flat).unwrap();
        assert!((r.concurrence() - 1.0).abs() < 1e-7);
        assert!((r.matrix().trace().re - 1.0).abs() < 1e-12);
        assert!(pointwise_rho(&ps, &[z, z], PhaseConvention::Flat).is_err());
    }

    #[test]
    fn coincident_and_disjoint_lobes() {
        let bc = |cb: [f64; 2], cc: [f64; 2]| LobeSet {
            entries: vec![(process("B"), lobe(cb, 1.0)), (process("C"), lobe(cc, 1.0))],
        };
        let same = bc([685.0, 571.0], [685.0, 571.0]);
        let w = SpectralWindow::centered(685.0, 571.0, 1.0);
        let r = trace_spectral(&same, &w, PhaseConvention::Flat).unwrap();
        assert!(r.concurrence() >= 0.999);

        let apart = bc([680.0, 568.0], [690.0, 574.0]);
        let w = SpectralWindow { name: None, lambda_s_nm: [675.0, 695.0], lambda_i_nm: [565.0, 577.0] };
        let r = trace_spectral(&apart, &w, PhaseConvention::Flat).unwrap();
        assert!(r.concurrence() <= 1e-3);
        assert!((r.get(0, 0).re - 0.5).abs() < 1e-6 && (r.get(3, 3).re - 0.5).abs() < 1e-6);
        assert!(r.get(0, 3).norm() < 1e-12);
    }

    #[test]
    fn window_additivity() {
        let set = LobeSet {
            entries: vec![
                (process("B"), lobe([684.8, 570.9], 1.0)),
                (process("C"), lobe([685.2, 571.2], 0.8)),
                (process("A"), lobe([685.0, 570.6], 0.3)),
            ],
        };
        let whole = SpectralWindow { name: None, lambda_s_nm: [684.0, 686.0], lambda_i_nm: [570.5, 571.5] };
        let left = SpectralWindow { lambda_s_nm: [684.0, 685.0], ..whole.clone() };
        let right = SpectralWindow { lambda_s_nm: [685.0, 686.0], ..whole.clone() };
        let c = PhaseConvention::Flat;
        let i_w = integrate_window(&set, &whole, 80, 40, c).unwrap();
        let i_l = integrate_window(&set, &left, 40, 40, c).unwrap();
        let i_r = integrate_window(&set, &right, 40, 40, c).unwrap();
        let mix = (i_l.rho().unwrap().matrix() * Complex64::new(i_l.intensity, 0.0)
            + i_r.rho().unwrap().matrix() * Complex64::new(i_r.intensity, 0.0))
            / Complex64::new(i_l.intensity + i_r.intensity, 0.0);
        let diff = (i_w.rho().unwrap().matrix() - mix).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn zero_window_is_error() {
        let set = LobeSet { entries: vec![(process("B"), lobe([685.0, 571.0], 1.0))] };
        let w = SpectralWindow::centered(650.0, 560.0, 1.0);
        assert!(matches!(trace_spectral(&set, &w, PhaseConvention::Flat), Err(FwmError::ZeroIntensity(_))));
    }

    #[test]
    fn lp01_processes_ignored() {
        let ps = vec![FwmProcess::new(TransverseMode::G, TransverseMode::G, TransverseMode::G, TransverseMode::G), process("C")];
        let one = Complex64::new(1.0, 0.0);
        let r = pointwise_rho(&ps, &[one, one], PhaseConvention::Flat).unwrap();
        assert!((r.get(0, 0).re - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scale_invariance_and_narrowing(scale in 0.01f64..100.0, offset in 0.0f64..0.4) {
            let mk = |s: f64| LobeSet {
                entries: vec![
                    (process("B"), lobe([685.0 - offset, 571.0 - offset / 3.0], s)),
                    (process("C"), lobe([685.0 + offset, 571.0 + offset / 3.0], s)),
                ],
            };
            let w = SpectralWindow::centered(685.0, 571.0, 1.0);
            let a = integrate_window(&mk(1.0), &w, 31, 31, PhaseConvention::Flat).unwrap().rho().unwrap();
            let b = integrate_window(&mk(scale), &w, 31, 31, PhaseConvention::Flat).unwrap().rho().unwrap();
            let diff = (a.matrix() - b.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12);
            let narrow = SpectralWindow::centered(685.0, 571.0, 0.5);
            let n = integrate_window(&mk(1.0), &narrow, 31, 31, PhaseConvention::Flat).unwrap().rho().unwrap();
            prop_assert!(n.concurrence() >= a.concurrence() - 1e-9);
        }
    }
}
