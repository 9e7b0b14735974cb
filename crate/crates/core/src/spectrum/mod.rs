//! Joint spectral amplitudes, combined intensities, stimulated slices, and
//! Gaussian lobe fits on (λs, λi) grids. Wavelengths in nm.

mod fit;
mod jsa;
mod pump;

pub use fit::{fit_lobes, GaussianLobe, LobeFit, LobeSet};
pub use jsa::{
    jsa_grid, phase_matching_fn, stimulated_slice, GridSpec, JsaModel, JsiGrid, ProcessAmplitude,
    StimulatedSlice,
};
pub use pump::{pump_envelope, PumpSpec, SPEED_OF_LIGHT};

use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};

/// Real-valued grid over (λs, λi); row index runs over λs, column over λi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    pub lambda_s_axis: Vec<f64>,
    pub lambda_i_axis: Vec<f64>,
    /// Row-major, `values[r * lambda_i_axis.len() + c]`.
    pub values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(lambda_s_axis: Vec<f64>, lambda_i_axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let g = Self {
            lambda_s_axis,
            lambda_i_axis,
            values,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn rows(&self) -> usize {
        self.lambda_s_axis.len()
    }

    pub fn cols(&self) -> usize {
        self.lambda_i_axis.len()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn step_s(&self) -> f64 {
        axis_step(&self.lambda_s_axis)
    }

    pub fn step_i(&self) -> f64 {
        axis_step(&self.lambda_i_axis)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Checks shape, uniform increasing axes, and finite nonnegative cells.
    pub fn validate(&self) -> Result<()> {
        let parse = |location: String, message: &str| FwmError::Parse {
            location,
            message: message.to_string(),
        };
        if self.values.len() != self.rows() * self.cols() {
            return Err(parse("grid".into(), "cell count does not match axes"));
        }
        check_axis(&self.lambda_s_axis).map_err(|m| parse("column 1 (lambda_s axis)".into(), &m))?;
        check_axis(&self.lambda_i_axis).map_err(|m| parse("row 1 (lambda_i axis)".into(), &m))?;
        for (k, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let (r, c) = (k / self.cols(), k % self.cols());
                return Err(parse(
                    format!("row {}, col {}", r + 2, c + 2),
                    "intensity must be finite and nonnegative",
                ));
            }
        }
        Ok(())
    }
}

fn axis_step(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        return 0.0;
    }
    (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
}

/// Uniform, strictly increasing, at least two nodes, relative step spread ≤ 1e-6.
pub(crate) fn check_axis(axis: &[f64]) -> std::result::Result<(), String> {
    if axis.len() < 2 {
        return Err("axis needs at least two nodes".into());
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err("axis values must be finite".into());
    }
    let h = axis_step(axis);
    if !(h > 0.0) {
        return Err("axis must be strictly increasing".into());
    }
    for (k, w) in axis.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) {
            return Err(format!("axis not increasing at node {}", k + 2));
        }
        if ((d - h) / h).abs() > 1e-6 {
            return Err(format!("axis step nonuniform at node {}", k + 2));
        }
    }
    Ok(())
}

/// `n` evenly spaced nodes from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + k as f64 * h).collect()
}
