//! Two-photon transverse-mode density matrices on the ordered basis
//! (ee, eo, oe, oo), signal ⊗ idler, and their entanglement metrics.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FwmError, Result};
use crate::modes::TransverseMode;

pub const BASIS_LABELS: [&str; 4] = ["ee", "eo", "oe", "oo"];

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

/// Basis index of |T_s T_i⟩; `None` for states outside the LP11 subspace.
pub fn basis_index(signal: TransverseMode, idler: TransverseMode) -> Option<usize> {
    let bit = |m: TransverseMode| match m {
        TransverseMode::E => Some(0),
        TransverseMode::O => Some(1),
        TransverseMode::G => None,
    };
    Some(2 * bit(signal)? + bit(idler)?)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hermitian, unit-trace, positive-semidefinite 4×4 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(Matrix4<Complex64>);

impl DensityMatrix4 {
    /// Validates an already-normalized matrix.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(herm <= HERMITIAN_TOL) {
            return Err(FwmError::InvalidDensityMatrix(format!(
                "not Hermitian (max |ρ − ρ†| = {herm:.3e})"
            )));
        }
        let tr = m.trace();
        if !((tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL) {
            return Err(FwmError::InvalidDensityMatrix(format!("trace {tr} ≠ 1")));
        }
        let rho = Self(hermitize(&m));
        let min = rho.eigenvalues()[0];
        if !(min >= -PSD_TOL) {
            return Err(FwmError::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Hermitizes and divides by the trace before validating.
    pub fn from_unnormalized(m: Matrix4<Complex64>) -> Result<Self> {
        let h = hermitize(&m);
        let tr = h.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(FwmError::InvalidDensityMatrix(format!("trace {tr} not positive")));
        }
        Self::new(h.map(|z| z / tr))
    }

    /// Projector onto a (not necessarily normalized) state vector.
    pub fn pure(psi: &Vector4<Complex64>) -> Result<Self> {
        Self::from_unnormalized(psi * psi.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        Self(Matrix4::identity() * c(0.25))
    }

    /// (|ee⟩ + |oo⟩)/√2
    pub fn bell_phi_plus() -> Self {
        Self::pure(&phi_plus()).expect("valid")
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn get(&self, r: usize, col: usize) -> Complex64 {
        self.0[(r, col)]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let e = self.0.symmetric_eigen();
        let mut v = [e.eigenvalues[0], e.eigenvalues[1], e.eigenvalues[2], e.eigenvalues[3]];
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// ⟨Φ⁺|ρ|Φ⁺⟩
    pub fn bell_fidelity(&self) -> f64 {
        let p = phi_plus();
        (p.adjoint() * self.0 * p)[(0, 0)].re
    }

    /// Wootters concurrence, computed from the Hermitian form √ρ ρ̃ √ρ.
    pub fn concurrence(&self) -> f64 {
        let yy = sigma_yy();
        let tilde = yy * self.0.conjugate() * yy;
        let s = psd_sqrt(&self.0);
        let r = hermitize(&(s * tilde * s));
        let e = r.symmetric_eigen();
        let mut l: Vec<f64> = e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        l.sort_by(|a, b| b.total_cmp(a));
        (l[0] - l[1] - l[2] - l[3]).max(0.0)
    }

    /// Uhlmann fidelity, squared convention (tr√(√ρ σ √ρ))².
    pub fn fidelity(&self, other: &DensityMatrix4) -> f64 {
        self.fidelity_sqrt(other).powi(2)
    }

    /// Uhlmann fidelity, square-root convention tr√(√ρ σ √ρ).
    pub fn fidelity_sqrt(&self, other: &DensityMatrix4) -> f64 {
        let s = psd_sqrt(&self.0);
        let m = hermitize(&(s * other.0 * s));
        let e = m.symmetric_eigen();
        let t: f64 = e.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
        t.min(1.0)
    }

    /// Entrywise magnitudes |ρ_ab|, projected back onto the physical set
    /// (negative eigenvalues clipped, trace renormalized).
    pub fn magnitude(&self) -> DensityMatrix4 {
        let m = self.0.map(|v| c(v.norm()));
        project_physical(&m).expect("magnitude of a density matrix has positive trace")
    }

    pub fn metrics(&self) -> StateMetrics {
        StateMetrics {
            concurrence: self.concurrence(),
            bell_fidelity: self.bell_fidelity(),
            purity: self.purity(),
        }
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson {
            basis: BASIS_LABELS.iter().map(|s| s.to_string()).collect(),
            entries: (0..4)
                .map(|r| (0..4).map(|col| [self.0[(r, col)].re, self.0[(r, col)].im]).collect())
                .collect(),
        }
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self> {
        if j.basis.iter().map(String::as_str).ne(BASIS_LABELS.iter().copied()) {
            return Err(FwmError::InvalidDensityMatrix(format!(
                "basis must be {BASIS_LABELS:?}"
            )));
        }
        if j.entries.len() != 4 || j.entries.iter().any(|r| r.len() != 4) {
            return Err(FwmError::InvalidDensityMatrix("expected 4×4 entries".into()));
        }
        let m = Matrix4::from_fn(|r, col| Complex64::new(j.entries[r][col][0], j.entries[r][col][1]));
        Self::new(m)
    }
}

/// Serialized form: basis labels and [re, im] entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub basis: Vec<String>,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl Serialize for DensityMatrix4 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        DensityMatrix4::from_json(&j).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub concurrence: f64,
    pub bell_fidelity: f64,
    pub purity: f64,
}

pub fn concurrence(rho: &DensityMatrix4) -> f64 {
    rho.concurrence()
}

pub fn purity(rho: &DensityMatrix4) -> f64 {
    rho.purity()
}

pub fn bell_fidelity(rho: &DensityMatrix4) -> f64 {
    rho.bell_fidelity()
}

pub fn fidelity(rho: &DensityMatrix4, sigma: &DensityMatrix4) -> f64 {
    rho.fidelity(sigma)
}

/// Clips negative eigenvalues of a Hermitian matrix and renormalizes.
pub fn project_physical(m: &Matrix4<Complex64>) -> Result<DensityMatrix4> {
    let e = hermitize(m).symmetric_eigen();
    let mut out = Matrix4::<Complex64>::zeros();
    for k in 0..4 {
        let l = e.eigenvalues[k].max(0.0);
        let v = e.eigenvectors.column(k);
        out += v * v.adjoint() * c(l);
    }
    DensityMatrix4::from_unnormalized(out)
}

fn phi_plus() -> Vector4<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(c(s), c(0.0), c(0.0), c(s))
}

fn sigma_yy() -> Matrix4<Complex64> {
    // σy ⊗ σy is real: anti-diagonal (−1, 1, 1, −1)
    let mut m = Matrix4::<Complex64>::zeros();
    m[(0, 3)] = c(-1.0);
    m[(1, 2)] = c(1.0);
    m[(2, 1)] = c(1.0);
    m[(3, 0)] = c(-1.0);
    m
}

pub(crate) fn hermitize(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    (m + m.adjoint()) * c(0.5)
}

fn psd_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let e = hermitize(m).symmetric_eigen();
    let mut out = Matrix4::<Complex64>::zeros();
    for k in 0..4 {
        let l = e.eigenvalues[k].max(0.0).sqrt();
        let v = e.eigenvectors.column(k);
        out += v * v.adjoint() * c(l);
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn random_state(vals: &[f64]) -> DensityMatrix4 {
        // Ginibre-style: G G† from 32 reals
        let g = Matrix4::from_fn(|r, col| Complex64::new(vals[4 * r + col], vals[16 + 4 * r + col]));
        DensityMatrix4::from_unnormalized(g * g.adjoint()).unwrap()
    }

    #[test]
    fn reference_states() {
        let bell = DensityMatrix4::bell_phi_plus();
        assert!((bell.concurrence() - 1.0).abs() < 1e-7);
        assert!((bell.bell_fidelity() - 1.0).abs() < 1e-12);
        assert!((bell.purity() - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix4::maximally_mixed();
        assert!(mixed.concurrence() < 1e-12);
        assert!((mixed.purity() - 0.25).abs() < 1e-15);
        assert!((mixed.bell_fidelity() - 0.25).abs() < 1e-15);
        let prod = DensityMatrix4::pure(&Vector4::new(c(0.6), c(0.8), c(0.0), c(0.0))).unwrap();
        assert!(prod.concurrence() < 1e-7);
        assert!((prod.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_trace_normalizes() {
        // complex division would square the trace and underflow
        let rho = DensityMatrix4::from_unnormalized(Matrix4::identity() * c(1e-300)).unwrap();
        assert!((rho.purity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let mut m = Matrix4::<Complex64>::identity() * c(0.25);
        m[(0, 1)] = c(0.1);
        assert!(DensityMatrix4::new(m).is_err());
        let m = Matrix4::<Complex64>::identity() * c(0.3);
        assert!(DensityMatrix4::new(m).is_err());
        let m = Matrix4::from_diagonal(&Vector4::new(c(1.2), c(-0.2), c(0.0), c(0.0)));
        assert!(DensityMatrix4::new(m).is_err());
    }

    #[test]
    fn werner_concurrence() {
        // p Φ⁺ + (1−p) I/4 has C = max(0, (3p − 1)/2)
        for p in [0.2, 0.5, 0.8] {
            let m = DensityMatrix4::bell_phi_plus().matrix() * c(p) + Matrix4::identity() * c((1.0 - p) / 4.0);
            let r = DensityMatrix4::new(m).unwrap();
            let expect = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert!((r.concurrence() - expect).abs() < 1e-7, "{p}");
        }
    }

    #[test]
    fn reference_metric_fixture() {
        // a real two-qubit state reproducing reported QST metrics within their errors
        let mut m = Matrix4::<Complex64>::zeros();
        let d = [0.5886, 0.3489, 0.0011, 0.0614];
        for k in 0..4 {
            m[(k, k)] = c(d[k]);
        }
        m[(0, 3)] = c(0.155);
        m[(3, 0)] = c(0.155);
        let r = DensityMatrix4::new(m).unwrap();
        let mt = r.metrics();
        assert!((mt.concurrence - 0.27).abs() <= 0.03, "{mt:?}");
        assert!((mt.bell_fidelity - 0.48).abs() <= 0.02, "{mt:?}");
        assert!((mt.purity - 0.52).abs() <= 0.01, "{mt:?}");
    }

    #[test]
    fn json_round_trip() {
        let r = random_state(&(0..32).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect::<Vec<_>>());
        let text = serde_json::to_string(&r).unwrap();
        let back: DensityMatrix4 = serde_json::from_str(&text).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn magnitude_is_physical_and_phase_blind() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = Vector4::new(c(s), c(0.0), c(0.0), Complex64::new(0.0, s));
        let r = DensityMatrix4::pure(&psi).unwrap();
        assert!(r.fidelity(&DensityMatrix4::bell_phi_plus()) < 0.51);
        assert!((r.magnitude().fidelity(&DensityMatrix4::bell_phi_plus()) - 1.0).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn metric_ranges(vals in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let r = random_state(&vals);
            let sigma = random_state(&vals.iter().rev().cloned().collect::<Vec<_>>());
            let cc = r.concurrence();
            prop_assert!((0.0..=1.0 + 1e-9).contains(&cc));
            let p = r.purity();
            prop_assert!((0.25 - 1e-12..=1.0 + 1e-12).contains(&p));
            prop_assert!((r.fidelity(&r) - 1.0).abs() < 1e-6);
            let f = r.fidelity(&sigma);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
            prop_assert!((f - sigma.fidelity(&r)).abs() < 1e-6);
            let bf = r.bell_fidelity();
            prop_assert!((0.0..=1.0).contains(&bf));
        }
    }
}
