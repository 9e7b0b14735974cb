//! Transverse-mode labels and single-photon mode superpositions.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};

/// LP mode family under the weak-guidance approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LpLabel {
    #[serde(rename = "LP01")]
    Lp01,
    #[serde(rename = "LP11")]
    Lp11,
}

impl LpLabel {
    /// Azimuthal order l of the Bessel profile.
    pub fn order(self) -> u32 {
        match self {
            LpLabel::Lp01 => 0,
            LpLabel::Lp11 => 1,
        }
    }
}

impl fmt::Display for LpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpLabel::Lp01 => write!(f, "LP01"),
            LpLabel::Lp11 => write!(f, "LP11"),
        }
    }
}

/// Transverse mode label: g = LP01, e = even LP11, o = odd LP11.
///
/// The derived ordering g < e < o is the canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransverseMode {
    G,
    E,
    O,
}

impl TransverseMode {
    pub const ALL: [TransverseMode; 3] = [TransverseMode::G, TransverseMode::E, TransverseMode::O];

    pub fn lp_label(self) -> LpLabel {
        match self {
            TransverseMode::G => LpLabel::Lp01,
            _ => LpLabel::Lp11,
        }
    }

    /// Mirror parity under reflection across the slow axis: e, g ↦ +1, o ↦ −1.
    pub fn parity(self) -> i32 {
        match self {
            TransverseMode::O => -1,
            _ => 1,
        }
    }

    /// OAM content |l| of the mode (cos/sin lφ superposes +l and −l).
    pub fn azimuthal_index(self) -> i32 {
        self.lp_label().order() as i32
    }

    /// e ↔ o relabeling under a 90° rotation of the frame.
    pub fn swapped(self) -> TransverseMode {
        match self {
            TransverseMode::E => TransverseMode::O,
            TransverseMode::O => TransverseMode::E,
            TransverseMode::G => TransverseMode::G,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TransverseMode::G => 'g',
            TransverseMode::E => 'e',
            TransverseMode::O => 'o',
        }
    }

    pub fn from_symbol(c: char) -> Result<Self> {
        match c {
            'g' => Ok(TransverseMode::G),
            'e' => Ok(TransverseMode::E),
            'o' => Ok(TransverseMode::O),
            _ => Err(FwmError::InvalidParameter(format!("unknown mode label '{c}'"))),
        }
    }
}

impl fmt::Display for TransverseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Normalized complex amplitudes over {g, e, o}.
///
/// Deserializes from a state name ("d") or from amplitudes
/// `{"e": [1, 0], "o": [0, 1]}` (missing modes are zero; normalized on load).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SuperpositionRepr")]
pub struct ModeSuperposition {
    pub g: Complex64,
    pub e: Complex64,
    pub o: Complex64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SuperpositionRepr {
    Named(String),
    Amplitudes(AmplitudeRepr),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplitudeRepr {
    #[serde(default)]
    g: Complex64,
    #[serde(default)]
    e: Complex64,
    #[serde(default)]
    o: Complex64,
}

impl TryFrom<SuperpositionRepr> for ModeSuperposition {
    type Error = FwmError;

    fn try_from(r: SuperpositionRepr) -> Result<Self> {
        match r {
            SuperpositionRepr::Named(n) => Self::named(&n),
            SuperpositionRepr::Amplitudes(a) => {
                // already unit norm: keep bits so serialization round-trips
                let n2 = a.g.norm_sqr() + a.e.norm_sqr() + a.o.norm_sqr();
                if (n2 - 1.0).abs() < 1e-14 {
                    Ok(Self { g: a.g, e: a.e, o: a.o })
                } else {
                    Self::new(a.g, a.e, a.o)
                }
            }
        }
    }
}

impl ModeSuperposition {
    /// Builds and normalizes a superposition; rejects the zero vector.
    pub fn new(g: Complex64, e: Complex64, o: Complex64) -> Result<Self> {
        let norm = (g.norm_sqr() + e.norm_sqr() + o.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FwmError::InvalidParameter(
                "mode superposition must have nonzero finite norm".into(),
            ));
        }
        Ok(Self {
            g: g / norm,
            e: e / norm,
            o: o / norm,
        })
    }

    pub fn basis(mode: TransverseMode) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match mode {
            TransverseMode::G => Self { g: one, e: zero, o: zero },
            TransverseMode::E => Self { g: zero, e: one, o: zero },
            TransverseMode::O => Self { g: zero, e: zero, o: one },
        }
    }

    fn lp11(e: Complex64, o: Complex64) -> Self {
        Self::new(Complex64::new(0.0, 0.0), e, o).expect("nonzero")
    }

    /// (e + o)/√2
    pub fn diagonal() -> Self {
        Self::lp11(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
    }

    /// (e − o)/√2
    pub fn antidiagonal() -> Self {
        Self::lp11(Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0))
    }

    /// (e + i o)/√2
    pub fn right() -> Self {
        Self::lp11(Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0))
    }

    /// (e − i o)/√2
    pub fn left() -> Self {
        Self::lp11(Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0))
    }

    /// Named states: g, e, o, d, a, r, l.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "g" => Ok(Self::basis(TransverseMode::G)),
            "e" => Ok(Self::basis(TransverseMode::E)),
            "o" => Ok(Self::basis(TransverseMode::O)),
            "d" => Ok(Self::diagonal()),
            "a" => Ok(Self::antidiagonal()),
            "r" => Ok(Self::right()),
            "l" => Ok(Self::left()),
            _ => Err(FwmError::InvalidParameter(format!(
                "unknown named state '{name}' (expected one of g, e, o, d, a, r, l)"
            ))),
        }
    }

    pub fn amplitude(&self, mode: TransverseMode) -> Complex64 {
        match mode {
            TransverseMode::G => self.g,
            TransverseMode::E => self.e,
            TransverseMode::O => self.o,
        }
    }

    /// ⟨self|mode⟩
    pub fn overlap_with(&self, mode: TransverseMode) -> Complex64 {
        self.amplitude(mode).conj()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.g.norm_sqr() + self.e.norm_sqr() + self.o.norm_sqr()
    }

    /// Modes carrying nonzero amplitude, in canonical order.
    pub fn support(&self) -> Vec<TransverseMode> {
        TransverseMode::ALL
            .into_iter()
            .filter(|&m| self.amplitude(m).norm_sqr() > 0.0)
            .collect()
    }
}
