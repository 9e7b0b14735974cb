//! Four-wave-mixing channels: enumeration, phase mismatch, and phase-matched
//! centers on the degenerate-pump energy surface.
//!
//! Wavelengths in this module are in nm; wavenumbers in 1/m.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};
use crate::fiber::{IndexModel, ModeRole, Photon};
use crate::modes::TransverseMode;

/// One FWM channel (T_p1, T_p2, T_s, T_i) with an unordered pump pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FwmProcess {
    pub t_p1: TransverseMode,
    pub t_p2: TransverseMode,
    pub t_s: TransverseMode,
    pub t_i: TransverseMode,
    pub label: String,
}

impl FwmProcess {
    /// Builds a process, sorting the pump pair into canonical order and
    /// assigning the letter label where one exists.
    pub fn new(p1: TransverseMode, p2: TransverseMode, s: TransverseMode, i: TransverseMode) -> Self {
        let (t_p1, t_p2) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let label = letter_label(t_p1, t_p2, s, i)
            .map(str::to_string)
            .unwrap_or_else(|| format!("{t_p1}{t_p2}{s}{i}"));
        Self {
            t_p1,
            t_p2,
            t_s: s,
            t_i: i,
            label,
        }
    }

    /// Parses four mode symbols ("eooe") or a letter label ("A").
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(p) = Self::lettered().into_iter().find(|p| p.label == t) {
            return Ok(p);
        }
        let m: Vec<char> = t.chars().collect();
        if m.len() != 4 {
            return Err(FwmError::InvalidParameter(format!(
                "process '{text}' must be a letter A-E or four mode symbols"
            )));
        }
        let f = TransverseMode::from_symbol;
        Ok(Self::new(f(m[0])?, f(m[1])?, f(m[2])?, f(m[3])?))
    }

    /// The five lettered {e, o} processes, A through E.
    pub fn lettered() -> Vec<FwmProcess> {
        use TransverseMode::{E, O};
        vec![
            Self::new(E, O, O, E),
            Self::new(O, O, O, O),
            Self::new(E, E, E, E),
            Self::new(E, O, E, O),
            Self::new(O, O, E, E),
        ]
    }

    pub fn pump_mode_degenerate(&self) -> bool {
        self.t_p1 == self.t_p2
    }

    /// Number of distinct orderings of the pump pair (1 or 2).
    pub fn pump_orderings(&self) -> usize {
        if self.pump_mode_degenerate() {
            1
        } else {
            2
        }
    }

    pub fn modes(&self) -> [TransverseMode; 4] {
        [self.t_p1, self.t_p2, self.t_s, self.t_i]
    }

    pub fn conserves_parity(&self) -> bool {
        self.t_p1.parity() * self.t_p2.parity() == self.t_s.parity() * self.t_i.parity()
    }

    /// OAM sum rule: some choice of signs for the LP11 charges (±1) balances
    /// the pump pair against the signal/idler pair.
    pub fn conserves_oam(&self) -> bool {
        let sums = |a: TransverseMode, b: TransverseMode| -> Vec<i32> {
            let la = a.azimuthal_index();
            let lb = b.azimuthal_index();
            let mut v = Vec::new();
            for sa in [-1, 1] {
                for sb in [-1, 1] {
                    v.push(sa * la + sb * lb);
                }
            }
            v
        };
        let p = sums(self.t_p1, self.t_p2);
        let q = sums(self.t_s, self.t_i);
        p.iter().any(|x| q.contains(x))
    }
}

impl fmt::Display for FwmProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({},{},{},{})",
            self.label, self.t_p1, self.t_p2, self.t_s, self.t_i
        )
    }
}

fn letter_label(
    p1: TransverseMode,
    p2: TransverseMode,
    s: TransverseMode,
    i: TransverseMode,
) -> Option<&'static str> {
    use TransverseMode::{E, O};
    match (p1, p2, s, i) {
        (E, O, O, E) => Some("A"),
        (O, O, O, O) => Some("B"),
        (E, E, E, E) => Some("C"),
        (E, O, E, O) => Some("D"),
        (O, O, E, E) => Some("E"),
        _ => None,
    }
}

/// Phase-matching search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseMatchingSpec {
    /// Nonlinear (SPM/XPM) contribution, 1/m.
    #[serde(default)]
    pub k_nl_per_m: f64,
    /// Idler band searched for phase-matched centers, nm.
    pub search_band_nm: [f64; 2],
    /// Idler band scanned to decide whether a process can phase match at all, nm.
    pub viability_band_nm: [f64; 2],
}

impl Default for PhaseMatchingSpec {
    fn default() -> Self {
        Self {
            k_nl_per_m: 0.0,
            search_band_nm: [540.0, 580.0],
            viability_band_nm: [450.0, 620.0],
        }
    }
}

/// Combinations passing parity and OAM conservation, canonical order.
pub fn conserving_candidates(mode_set: &[TransverseMode]) -> Vec<FwmProcess> {
    let mut modes: Vec<TransverseMode> = mode_set.to_vec();
    modes.sort();
    modes.dedup();
    let mut out = Vec::new();
    for (a, &p1) in modes.iter().enumerate() {
        for &p2 in &modes[a..] {
            for &s in &modes {
                for &i in &modes {
                    let p = FwmProcess::new(p1, p2, s, i);
                    if p.conserves_parity() && p.conserves_oam() {
                        out.push(p);
                    }
                }
            }
        }
    }
    out.sort_by_key(|p| p.modes());
    out
}

/// Conservation-allowed processes that also reach Δk = 0 somewhere in the
/// viability band for the given fiber and pump center.
pub fn enumerate_processes(
    mode_set: &[TransverseMode],
    fiber: &impl IndexModel,
    pump_center_nm: f64,
    spec: &PhaseMatchingSpec,
) -> Vec<FwmProcess> {
    conserving_candidates(mode_set)
        .into_iter()
        .filter(|p| is_phase_matchable(p, fiber, pump_center_nm, spec))
        .collect()
}

pub fn is_phase_matchable(
    process: &FwmProcess,
    fiber: &impl IndexModel,
    pump_center_nm: f64,
    spec: &PhaseMatchingSpec,
) -> bool {
    let [lo, hi] = spec.viability_band_nm;
    let hi = hi.min(pump_center_nm - 1e-6);
    let step = 0.25;
    let mut prev: Option<f64> = None;
    let mut li = lo;
    while li < hi {
        let ls = signal_for_idler(pump_center_nm, li);
        match delta_k(process, ls, li, fiber, false, spec.k_nl_per_m) {
            Ok(pm) => {
                if let Some(p) = prev {
                    if p * pm.delta_k <= 0.0 {
                        return true;
                    }
                }
                prev = Some(pm.delta_k);
            }
            Err(_) => prev = None,
        }
        li += step;
    }
    false
}

/// Δk with its four propagation-constant components (1/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMismatch {
    pub delta_k: f64,
    pub k_nl: f64,
    /// k_p1, k_p2, k_s, k_i
    pub components: [f64; 4],
}

/// Degenerate pump wavelength on the energy surface, 2/λp = 1/λs + 1/λi.
pub fn pump_wavelength(lambda_s_nm: f64, lambda_i_nm: f64) -> f64 {
    2.0 / (1.0 / lambda_s_nm + 1.0 / lambda_i_nm)
}

/// Signal wavelength conjugate to an idler for a degenerate pump.
pub fn signal_for_idler(pump_nm: f64, lambda_i_nm: f64) -> f64 {
    1.0 / (2.0 / pump_nm - 1.0 / lambda_i_nm)
}

fn wavenumber(n: f64, lambda_nm: f64) -> f64 {
    2.0 * PI * n / (lambda_nm * 1e-9)
}

/// Δk = k_p1 + k_p2 − k_s − k_i − k_nl with ω_p = (ω_s + ω_i)/2.
///
/// `axis_swapped` evaluates the mismatch inside a segment whose slow and fast
/// axes are exchanged relative to the lab frame.
pub fn delta_k(
    process: &FwmProcess,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    fiber: &impl IndexModel,
    axis_swapped: bool,
    k_nl: f64,
) -> Result<PhaseMismatch> {
    let lp = pump_wavelength(lambda_s_nm, lambda_i_nm);
    let role = |photon: Photon, mode: TransverseMode| {
        let r = ModeRole::cross_polarized(photon, mode);
        if axis_swapped {
            r.axis_swapped()
        } else {
            r
        }
    };
    let n_p1 = fiber.index(lp * 1e-3, role(Photon::Pump, process.t_p1))?;
    let n_p2 = fiber.index(lp * 1e-3, role(Photon::Pump, process.t_p2))?;
    let n_s = fiber.index(lambda_s_nm * 1e-3, role(Photon::Signal, process.t_s))?;
    let n_i = fiber.index(lambda_i_nm * 1e-3, role(Photon::Idler, process.t_i))?;
    let components = [
        wavenumber(n_p1, lp),
        wavenumber(n_p2, lp),
        wavenumber(n_s, lambda_s_nm),
        wavenumber(n_i, lambda_i_nm),
    ];
    let delta_k = components[0] + components[1] - components[2] - components[3] - k_nl;
    Ok(PhaseMismatch {
        delta_k,
        k_nl,
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchedCenter {
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
}

/// Root of Δk on the energy surface of a pump centered at `pump_center_nm`,
/// lowest idler root within the search band.
pub fn phasematched_center(
    process: &FwmProcess,
    fiber: &impl IndexModel,
    pump_center_nm: f64,
    spec: &PhaseMatchingSpec,
) -> Result<PhaseMatchedCenter> {
    let [lo, hi] = spec.search_band_nm;
    if !(lo < hi) {
        return Err(FwmError::InvalidParameter("search band must be increasing".into()));
    }
    let f = |li: f64| -> Result<f64> {
        let ls = signal_for_idler(pump_center_nm, li);
        Ok(delta_k(process, ls, li, fiber, false, spec.k_nl_per_m)?.delta_k)
    };
    let step = 0.01;
    let n = ((hi - lo) / step).round() as usize;
    let mut dk_min = f64::INFINITY;
    let mut dk_max = f64::NEG_INFINITY;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=n {
        let li = lo + k as f64 * step;
        let v = match f(li) {
            Ok(v) => v,
            Err(_) => {
                prev = None;
                continue;
            }
        };
        dk_min = dk_min.min(v);
        dk_max = dk_max.max(v);
        if let Some((pl, pv)) = prev {
            if pv == 0.0 {
                return Ok(center(pump_center_nm, pl));
            }
            if pv * v < 0.0 {
                let (mut a, mut b, mut fa) = (pl, li, pv);
                while b - a > 1e-9 {
                    let m = 0.5 * (a + b);
                    let fm = f(m)?;
                    if fm * fa > 0.0 {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                return Ok(center(pump_center_nm, 0.5 * (a + b)));
            }
        }
        prev = Some((li, v));
    }
    Err(FwmError::NotPhaseMatched {
        process: process.to_string(),
        dk_min,
        dk_max,
    })
}

fn center(pump_nm: f64, lambda_i_nm: f64) -> PhaseMatchedCenter {
    PhaseMatchedCenter {
        lambda_s_nm: signal_for_idler(pump_nm, lambda_i_nm),
        lambda_i_nm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{FiberModel, FiberSpec};
    use crate::modes::TransverseMode::{E, G, O};
    use proptest::prelude::*;

    struct Flat(f64);
    impl IndexModel for Flat {
        fn index(&self, _: f64, _: ModeRole) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn reference_fiber(delta: f64) -> FiberModel {
        FiberModel::new(FiberSpec {
            delta_parity_dispersion: delta,
            ..FiberSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn conservation_counts() {
        assert_eq!(conserving_candidates(&[E, O]).len(), 6);
        assert_eq!(conserving_candidates(&[G, E, O]).len(), 15);
        assert_eq!(conserving_candidates(&[E]), vec![FwmProcess::new(E, E, E, E)]);
        for p in conserving_candidates(&[G, E, O]) {
            assert!(p.conserves_parity() && p.conserves_oam());
            assert!(p.t_p1 <= p.t_p2);
        }
        // g + g cannot feed e + g
        assert!(!FwmProcess::new(G, G, E, G).conserves_oam());
    }

    #[test]
    fn rejected_eo_combinations_fail_parity() {
        for p1 in [E, O] {
            for p2 in [E, O] {
                for s in [E, O] {
                    for i in [E, O] {
                        let p = FwmProcess::new(p1, p2, s, i);
                        let kept = conserving_candidates(&[E, O]).contains(&p);
                        assert_eq!(kept, p.conserves_parity());
                    }
                }
            }
        }
    }

    #[test]
    fn phase_matchable_enumeration() {
        let f = reference_fiber(3e-5);
        let spec = PhaseMatchingSpec::default();
        let eo = enumerate_processes(&[E, O], &f, 620.0, &spec);
        let labels: Vec<&str> = eo.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["C", "D", "A", "E", "B"]);
        assert_eq!(enumerate_processes(&[G, E, O], &f, 620.0, &spec).len(), 10);
        assert_eq!(enumerate_processes(&[E], &f, 620.0, &spec).len(), 1);
    }

    #[test]
    fn parse_labels() {
        assert_eq!(FwmProcess::parse("A").unwrap(), FwmProcess::new(E, O, O, E));
        assert_eq!(FwmProcess::parse("oeeo").unwrap().label, "D");
        assert_eq!(FwmProcess::parse("ggee").unwrap().label, "ggee");
        assert!(FwmProcess::parse("xyz").is_err());
    }

    #[test]
    fn flat_index_gives_zero_mismatch() {
        for p in FwmProcess::lettered() {
            let pm = delta_k(&p, 677.3, 571.9, &Flat(1.46), false, 0.0).unwrap();
            let scale = pm.components[0].abs();
            assert!(pm.delta_k.abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn components_reconstruct() {
        let f = reference_fiber(3e-5);
        let pm = delta_k(&FwmProcess::new(E, O, O, E), 680.0, 568.0, &f, false, 12.5).unwrap();
        let c = pm.components;
        let rebuilt = c[0] + c[1] - c[2] - c[3] - pm.k_nl;
        assert!((rebuilt - pm.delta_k).abs() <= 1e-9 * c[0].abs());
    }

    #[test]
    fn b_and_c_coincide_without_delta() {
        let f = reference_fiber(0.0);
        let b = FwmProcess::parse("B").unwrap();
        let c = FwmProcess::parse("C").unwrap();
        for (ls, li) in [(670.0, 567.0), (680.0, 575.0), (690.0, 570.3)] {
            let db = delta_k(&b, ls, li, &f, false, 0.0).unwrap().delta_k;
            let dc = delta_k(&c, ls, li, &f, false, 0.0).unwrap().delta_k;
            assert!((db - dc).abs() < 1e-6, "{db} {dc}");
        }
        let spec = PhaseMatchingSpec::default();
        let cb = phasematched_center(&b, &f, 620.0, &spec).unwrap();
        let cc = phasematched_center(&c, &f, 620.0, &spec).unwrap();
        assert!((cb.lambda_i_nm - cc.lambda_i_nm).abs() < 1e-6);
    }

    #[test]
    fn delta_k_changes_sign_across_center() {
        let f = reference_fiber(3e-5);
        let c = FwmProcess::parse("C").unwrap();
        let at = |li: f64| delta_k(&c, signal_for_idler(620.0, li), li, &f, false, 0.0).unwrap().delta_k;
        assert!(at(565.0) * at(578.0) < 0.0);
    }

    #[test]
    fn center_on_energy_surface() {
        let f = reference_fiber(3e-5);
        let spec = PhaseMatchingSpec::default();
        for p in FwmProcess::lettered().into_iter().take(4) {
            let c = phasematched_center(&p, &f, 620.0, &spec).unwrap();
            let r = 2.0 / 620.0 - 1.0 / c.lambda_s_nm - 1.0 / c.lambda_i_nm;
            assert!(r.abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_band_reports_extrema() {
        let f = reference_fiber(3e-5);
        let spec = PhaseMatchingSpec {
            search_band_nm: [560.0, 562.0],
            ..PhaseMatchingSpec::default()
        };
        match phasematched_center(&FwmProcess::parse("C").unwrap(), &f, 620.0, &spec) {
            Err(FwmError::NotPhaseMatched { dk_min, dk_max, .. }) => assert!(dk_min <= dk_max),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delta_monotone_separation() {
        let spec = PhaseMatchingSpec::default();
        let b = FwmProcess::parse("B").unwrap();
        let c = FwmProcess::parse("C").unwrap();
        let sep: Vec<f64> = [0.0, 1.5e-5, 3e-5]
            .iter()
            .map(|&d| {
                let f = reference_fiber(d);
                let cb = phasematched_center(&b, &f, 620.0, &spec).unwrap();
                let cc = phasematched_center(&c, &f, 620.0, &spec).unwrap();
                (cc.lambda_i_nm - cb.lambda_i_nm).abs()
            })
            .collect();
        assert!(sep[0] < sep[1] && sep[1] < sep[2], "{sep:?}");
    }

    proptest! {
        #[test]
        fn energy_surface_closure(li in 560.0f64..580.0, lp in 610.0f64..630.0) {
            let ls = signal_for_idler(lp, li);
            prop_assert!((pump_wavelength(ls, li) - lp).abs() < 1e-9);
        }

        #[test]
        fn pump_pair_symmetry(a in 0usize..3, b in 0usize..3, s in 0usize..3, i in 0usize..3) {
            let m = TransverseMode::ALL;
            prop_assert_eq!(FwmProcess::new(m[a], m[b], m[s], m[i]), FwmProcess::new(m[b], m[a], m[s], m[i]));
        }
    }
}
