use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FwmError, Result};
use crate::modes::ModeSuperposition;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    /// Single-pump intensity FWHM.
    pub intensity_fwhm_nm: f64,
    pub transverse_state: ModeSuperposition,
    /// Relative weighting only.
    #[serde(default = "default_power")]
    pub average_power_mw: f64,
}

fn default_power() -> f64 {
    8.0
}

impl Default for PumpSpec {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 620.0,
            intensity_fwhm_nm: 2.0,
            transverse_state: ModeSuperposition::diagonal(),
            average_power_mw: default_power(),
        }
    }
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_fwhm_nm > 0.0) || !self.intensity_fwhm_nm.is_finite() {
            return Err(FwmError::InvalidParameter("pump intensity_fwhm_nm must be > 0".into()));
        }
        if !(self.center_wavelength_nm > 0.0) || !self.center_wavelength_nm.is_finite() {
            return Err(FwmError::InvalidParameter("pump center wavelength must be > 0".into()));
        }
        if (self.transverse_state.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(FwmError::InvalidParameter("pump transverse state must be normalized".into()));
        }
        Ok(())
    }

    /// Single-pump intensity FWHM in angular frequency, rad/s.
    pub fn fwhm_rad_per_s(&self) -> f64 {
        let l = self.center_wavelength_nm * 1e-9;
        2.0 * PI * SPEED_OF_LIGHT * self.intensity_fwhm_nm * 1e-9 / (l * l)
    }

    /// Intensity FWHM of the envelope in the summed detuning ω_s + ω_i − 2ω_p
    /// (two independent pump photons, variance doubled).
    pub fn combined_fwhm_rad_per_s(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.fwhm_rad_per_s()
    }

    /// ω_s + ω_i − 2ω_p, rad/s.
    pub fn detuning(&self, lambda_s_nm: f64, lambda_i_nm: f64) -> f64 {
        let w = |l: f64| 2.0 * PI * SPEED_OF_LIGHT / (l * 1e-9);
        w(lambda_s_nm) + w(lambda_i_nm) - 2.0 * w(self.center_wavelength_nm)
    }
}

/// Gaussian pump amplitude in the summed detuning, 1 on the energy surface.
pub fn pump_envelope(lambda_s_nm: f64, lambda_i_nm: f64, pump: &PumpSpec) -> f64 {
    let sigma = pump.fwhm_rad_per_s() / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let om = pump.detuning(lambda_s_nm, lambda_i_nm);
    (-om * om / (8.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fwm::signal_for_idler;

    #[test]
    fn unity_on_energy_surface_and_symmetric() {
        let p = PumpSpec::default();
        let ls = signal_for_idler(620.0, 571.3);
        assert!((pump_envelope(ls, 571.3, &p) - 1.0).abs() < 1e-12);
        assert_eq!(pump_envelope(677.0, 572.0, &p), pump_envelope(572.0, 677.0, &p));
    }

    #[test]
    fn half_intensity_at_half_width() {
        let p = PumpSpec::default();
        let target = 0.5 * p.combined_fwhm_rad_per_s();
        // find λs giving the target detuning at fixed λi
        let li = 571.0;
        let w_i = 2.0 * PI * SPEED_OF_LIGHT / (li * 1e-9);
        let w_p = 2.0 * PI * SPEED_OF_LIGHT / (620e-9);
        let w_s = 2.0 * w_p + target - w_i;
        let ls = 2.0 * PI * SPEED_OF_LIGHT / w_s * 1e9;
        let a = pump_envelope(ls, li, &p);
        assert!((a * a - 0.5).abs() < 1e-9, "{}", a * a);
    }

    #[test]
    fn rejects_bad_fwhm() {
        let p = PumpSpec {
            intensity_fwhm_nm: 0.0,
            ..PumpSpec::default()
        };
        assert!(p.validate().is_err());
    }
}
