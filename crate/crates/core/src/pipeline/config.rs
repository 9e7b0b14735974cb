//! Pipeline configuration: one JSON document, every block optional,
//! unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FwmError, Result};
use crate::estimation::{PhaseConvention, SpectralWindow};
use crate::fiber::FiberSpec;
use crate::fields::FieldGridSpec;
use crate::fwm::PhaseMatchingSpec;
use crate::modes::{ModeSuperposition, TransverseMode};
use crate::spectrum::{GridSpec, PumpSpec};

/// Stimulated-emission seed scan over the idler axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedScan {
    pub lambda_i_nm: [f64; 2],
    pub step_nm: f64,
    pub seed_state: ModeSuperposition,
}

impl Default for SeedScan {
    fn default() -> Self {
        Self {
            lambda_i_nm: [567.0, 576.0],
            step_nm: 0.05,
            seed_state: ModeSuperposition::diagonal(),
        }
    }
}

impl SeedScan {
    /// Seed wavelengths lo, lo + step, … up to hi (inclusive within 1e-9).
    pub fn wavelengths(&self) -> Vec<f64> {
        let [lo, hi] = self.lambda_i_nm;
        let n = ((hi - lo) / self.step_nm + 1e-9).floor() as usize + 1;
        (0..n).map(|k| lo + k as f64 * self.step_nm).collect()
    }
}

/// Where estimate-rho takes its per-process amplitudes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationSource {
    /// Lobe file if given, else a measured grid (fitted), else the model.
    #[default]
    Auto,
    /// Direct evaluation of the simulated amplitudes.
    Model,
    /// Per-process amplitudes of the simulated grid, interpolated.
    Grid,
    /// Gaussian lobes (fitted from `inputs.measured_jsi` or read from `inputs.lobes`).
    Lobes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub source: EstimationSource,
    pub phase: PhaseConvention,
    /// Side of the default square window at the lobe intersection.
    pub window_width_nm: f64,
    /// Processes whose crossing defines the default window.
    pub intersection: [String; 2],
    /// Lobes to fit to a measured grid; defaults to the in-band process count.
    pub lobe_count: Option<usize>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            source: EstimationSource::Auto,
            phase: PhaseConvention::Flat,
            window_width_nm: 1.0,
            intersection: ["B".into(), "C".into()],
            lobe_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    /// Expected counts for a unit-probability projector.
    pub n0: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            n0: 1000.0,
            n_samples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagesConfig {
    /// Named pure states to image.
    pub states: Vec<String>,
    /// Also image the equal e/o incoherent mixture.
    pub include_mixture: bool,
    /// Defaults to the pump center wavelength.
    pub wavelength_nm: Option<f64>,
}

impl Default for ImagesConfig {
    fn default() -> Self {
        Self {
            states: ["g", "e", "o", "d", "a", "r", "l"].map(String::from).to_vec(),
            include_mixture: true,
            wavelength_nm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Contour level relative to each lobe's peak.
    pub contour_level: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            contour_level: super::render::CONTOUR_LEVEL,
        }
    }
}

/// Optional input files, resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Grid CSV (measured or exported JSI).
    pub measured_jsi: Option<PathBuf>,
    /// Lobe JSON as written by fit-lobes.
    pub lobes: Option<PathBuf>,
    /// Density matrix JSON (plain matrix or an estimate-rho / qst output).
    pub rho: Option<PathBuf>,
    /// Tomography count record JSON.
    pub counts: Option<PathBuf>,
    pub compare_a: Option<PathBuf>,
    pub compare_b: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fiber: FiberSpec,
    pub pump: PumpSpec,
    pub phase_matching: PhaseMatchingSpec,
    /// Transverse modes available to pump, signal and idler.
    pub modes: Vec<TransverseMode>,
    pub grid: GridSpec,
    pub seed_scan: SeedScan,
    /// Spectral windows for estimate-rho; empty means one square window at
    /// the configured lobe intersection.
    pub windows: Vec<SpectralWindow>,
    pub estimation: EstimationConfig,
    pub tomography: TomographyConfig,
    pub field_grid: FieldGridSpec,
    pub images: ImagesConfig,
    /// δ values for sweep-delta.
    pub sweep_delta: Vec<f64>,
    pub render: RenderConfig,
    pub inputs: Inputs,
    /// Worker threads; `None` uses all cores. Results do not depend on it.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fiber: FiberSpec::default(),
            pump: PumpSpec::default(),
            phase_matching: PhaseMatchingSpec::default(),
            modes: vec![TransverseMode::E, TransverseMode::O],
            grid: GridSpec::default(),
            seed_scan: SeedScan::default(),
            windows: Vec::new(),
            estimation: EstimationConfig::default(),
            tomography: TomographyConfig::default(),
            field_grid: FieldGridSpec::default(),
            images: ImagesConfig::default(),
            sweep_delta: vec![0.0, 1.5e-5, 3e-5],
            render: RenderConfig::default(),
            inputs: Inputs::default(),
            threads: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Parses JSON text; `origin` names the source in error messages.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| FwmError::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = super::io::read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| FwmError::Config(format!("{}: not valid UTF-8", path.display())))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let i = &mut self.inputs;
        for p in [&mut i.measured_jsi, &mut i.lobes, &mut i.rho, &mut i.counts, &mut i.compare_a, &mut i.compare_b]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FwmError::Config(m));
        self.fiber.validate().map_err(as_config("fiber"))?;
        self.pump.validate().map_err(as_config("pump"))?;
        self.grid.validate().map_err(as_config("grid"))?;
        self.field_grid.validate().map_err(as_config("field_grid"))?;
        if self.modes.is_empty() {
            return bad("modes: at least one transverse mode is required".into());
        }
        let s = &self.seed_scan;
        if !(s.step_nm > 0.0) || !(s.lambda_i_nm[0] <= s.lambda_i_nm[1]) {
            return bad("seed_scan: need step_nm > 0 and an increasing range".into());
        }
        for (k, w) in self.windows.iter().enumerate() {
            w.validate().map_err(as_config(&format!("windows[{k}]")))?;
        }
        if !(self.estimation.window_width_nm > 0.0) {
            return bad("estimation.window_width_nm must be positive".into());
        }
        if self.estimation.lobe_count == Some(0) {
            return bad("estimation.lobe_count must be at least 1".into());
        }
        let t = &self.tomography;
        if !(t.n0 > 0.0 && t.n0.is_finite()) {
            return bad("tomography.n0 must be positive".into());
        }
        if t.n_samples < 2 {
            return bad("tomography.n_samples must be at least 2".into());
        }
        if self.sweep_delta.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad("sweep_delta: values must be finite and nonnegative".into());
        }
        let level = self.render.contour_level;
        if !(level > 0.0 && level < 1.0) {
            return bad("render.contour_level must lie in (0, 1)".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical (re-serialized) configuration.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

fn as_config(block: &str) -> impl Fn(FwmError) -> FwmError + '_ {
    move |e| FwmError::Config(format!("{block}: {e}"))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
