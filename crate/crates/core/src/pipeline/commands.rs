//! The ten pipeline commands. Each builds its outputs in memory and the
//! caller writes them, together with the run manifest, in one pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{EstimationSource, PipelineConfig};
use super::io::{format_f64, grid_to_csv, load_measured_jsi, read_file, table_csv, FIELD_CORNER, JSI_CORNER};
use super::manifest::Outputs;
use super::render::{render_pgm, render_ppm, render_svg, SvgOptions};
use crate::density::DensityMatrix4;
use crate::error::{FwmError, Result};
use crate::estimation::{
    integrate_window, intersection_center, process_weights, trace_spectral, AmplitudeSource, ProcessWeights,
    SpectralWindow, WINDOW_NODES,
};
use crate::fiber::FiberModel;
use crate::fields::{intensity_image, process_overlaps, ImageState};
use crate::fwm::{enumerate_processes, phasematched_center, FwmProcess, PhaseMatchedCenter};
use crate::modes::{ModeSuperposition, TransverseMode};
use crate::spectrum::{
    fit_lobes, jsa_grid, stimulated_slice, GaussianLobe, IntensityGrid, JsaModel, JsiGrid, LobeSet,
};
use crate::tomography::{bootstrap_metrics, expected_counts, mle_reconstruct, projector_basis, sample_counts, CountRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateJsi,
    SweepDelta,
    FitLobes,
    EstimateRho,
    QstSimulate,
    QstReconstruct,
    Compare,
    Render,
    Modes,
    Overlaps,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::SimulateJsi,
        Command::SweepDelta,
        Command::FitLobes,
        Command::EstimateRho,
        Command::QstSimulate,
        Command::QstReconstruct,
        Command::Compare,
        Command::Render,
        Command::Modes,
        Command::Overlaps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateJsi => "simulate-jsi",
            Command::SweepDelta => "sweep-delta",
            Command::FitLobes => "fit-lobes",
            Command::EstimateRho => "estimate-rho",
            Command::QstSimulate => "qst-simulate",
            Command::QstReconstruct => "qst-reconstruct",
            Command::Compare => "compare",
            Command::Render => "render",
            Command::Modes => "modes",
            Command::Overlaps => "overlaps",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub command: Command,
    pub files: Vec<PathBuf>,
    /// Human-readable result table for standard output.
    pub report: String,
}

/// Runs one command on a bounded thread pool and writes its outputs.
pub fn run(command: Command, config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let threads = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FwmError::Numeric(format!("thread pool: {e}")))?;
    let mut out = Outputs::default();
    let report = pool.install(|| execute(command, config, &mut out))?;
    let files = out.write(&config.output_dir, command.name(), config.sha256(), threads)?;
    Ok(RunSummary { command, files, report })
}

/// Runs a command without touching the file system.
pub fn execute(command: Command, cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    match command {
        Command::SimulateJsi => cmd_simulate_jsi(cfg, out),
        Command::SweepDelta => cmd_sweep_delta(cfg, out),
        Command::FitLobes => cmd_fit_lobes(cfg, out),
        Command::EstimateRho => cmd_estimate_rho(cfg, out),
        Command::QstSimulate => cmd_qst_simulate(cfg, out),
        Command::QstReconstruct => cmd_qst_reconstruct(cfg, out),
        Command::Compare => cmd_compare(cfg, out),
        Command::Render => cmd_render(cfg, out),
        Command::Modes => cmd_modes(cfg, out),
        Command::Overlaps => cmd_overlaps(cfg, out),
    }
}

// ---------------------------------------------------------------- model

/// Fiber, enumerated processes, overlaps and weights for one configuration.
pub struct Setup {
    pub fiber: FiberModel,
    pub processes: Vec<FwmProcess>,
    pub overlaps: BTreeMap<String, Complex64>,
    pub weights: ProcessWeights,
}

impl Setup {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let fiber = FiberModel::new(cfg.fiber.clone())?;
        let pump_nm = cfg.pump.center_wavelength_nm;
        let processes = enumerate_processes(&cfg.modes, &fiber, pump_nm, &cfg.phase_matching);
        if processes.is_empty() {
            return Err(FwmError::Numeric("no process phase matches for this fiber and pump".into()));
        }
        let overlaps = process_overlaps(&processes, &fiber, pump_nm, &cfg.phase_matching, &cfg.field_grid)?;
        let weights = process_weights(&cfg.pump, &overlaps, &processes)?;
        Ok(Self { fiber, processes, overlaps, weights })
    }

    pub fn model<'a>(&'a self, cfg: &'a PipelineConfig) -> Result<JsaModel<'a>> {
        JsaModel::new(
            &self.fiber,
            &cfg.pump,
            self.processes.clone(),
            self.weights.coefficients(),
            cfg.phase_matching.k_nl_per_m,
        )
    }

    pub fn grid(&self, cfg: &PipelineConfig) -> Result<JsiGrid> {
        jsa_grid(
            &self.processes,
            &self.fiber,
            &cfg.pump,
            &self.weights.coefficients(),
            &cfg.grid,
            cfg.phase_matching.k_nl_per_m,
        )
    }

    pub fn center(&self, cfg: &PipelineConfig, p: &FwmProcess) -> Option<PhaseMatchedCenter> {
        phasematched_center(p, &self.fiber, cfg.pump.center_wavelength_nm, &cfg.phase_matching).ok()
    }
}

fn modes_string(p: &FwmProcess) -> String {
    p.modes().iter().map(|m| m.symbol()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn jsi_svg(grid: &IntensityGrid, lobes: &[GaussianLobe], cfg: &PipelineConfig, title: &str) -> Vec<u8> {
    let opts = SvgOptions {
        title,
        contour_level: cfg.render.contour_level,
        ..SvgOptions::default()
    };
    render_svg(grid, lobes, &opts).into_bytes()
}

fn add_heatmap(out: &mut Outputs, stem: &str, grid: &IntensityGrid, lobes: &[GaussianLobe], cfg: &PipelineConfig) {
    out.add(format!("{stem}.pgm"), render_pgm(grid));
    out.add(format!("{stem}.ppm"), render_ppm(grid));
    out.add(format!("{stem}.svg"), jsi_svg(grid, lobes, cfg, stem));
}

// --------------------------------------------------------- simulate-jsi

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessReport {
    pub label: String,
    pub modes: String,
    pub pump_factor: Complex64,
    pub overlap: Complex64,
    pub coefficient: Complex64,
    pub weight: f64,
    pub center: Option<PhaseMatchedCenter>,
    /// Grid node of peak process intensity (λs, λi), nm.
    pub peak: Option<[f64; 2]>,
}

fn process_reports(cfg: &PipelineConfig, setup: &Setup, grid: Option<&JsiGrid>) -> Vec<ProcessReport> {
    setup
        .weights
        .entries
        .iter()
        .map(|e| {
            let peak = grid.and_then(|g| {
                let pa = g.per_process.get(&e.process.label)?;
                let (k, v) = pa
                    .values
                    .iter()
                    .map(|z| z.norm_sqr())
                    .enumerate()
                    .fold((0, 0.0), |b, (k, v)| if v > b.1 { (k, v) } else { b });
                let ni = g.lambda_i_axis.len();
                (v > 0.0).then(|| [g.lambda_s_axis[k / ni], g.lambda_i_axis[k % ni]])
            });
            ProcessReport {
                label: e.process.label.clone(),
                modes: modes_string(&e.process),
                pump_factor: e.pump_factor,
                overlap: e.overlap,
                coefficient: e.coefficient,
                weight: e.weight,
                center: setup.center(cfg, &e.process),
                peak,
            }
        })
        .collect()
}

fn centers_table(reports: &[ProcessReport]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.modes.clone(),
                format_f64(r.weight),
                opt(r.center.map(|c| c.lambda_s_nm)),
                opt(r.center.map(|c| c.lambda_i_nm)),
                opt(r.peak.map(|p| p[0])),
                opt(r.peak.map(|p| p[1])),
            ]
        })
        .collect();
    table_csv(
        &["process", "modes", "weight", "center_lambda_s_nm", "center_lambda_i_nm", "peak_lambda_s_nm", "peak_lambda_i_nm"],
        &rows,
    )
}

fn centers_report(reports: &[ProcessReport]) -> String {
    let mut s = String::from("process  modes  weight    center λs (nm)  center λi (nm)\n");
    for r in reports {
        let (a, b) = r
            .center
            .map_or(("-".into(), "-".into()), |c| (format!("{:.3}", c.lambda_s_nm), format!("{:.3}", c.lambda_i_nm)));
        let _ = writeln!(s, "{:<8} {:<6} {:<9.4} {:<15} {}", r.label, r.modes, r.weight, a, b);
    }
    s
}

#[derive(Serialize)]
struct JsiMetadata<'a> {
    units: &'static str,
    grid: &'a crate::spectrum::GridSpec,
    normalization_nm2: f64,
    fiber: &'a crate::fiber::FiberSpec,
    pump: &'a crate::spectrum::PumpSpec,
    dopant_fraction: Option<f64>,
    processes: &'a [ProcessReport],
}

fn cmd_simulate_jsi(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let setup = out.stage("model", |_| Setup::new(cfg))?;
    let grid = out.stage("jsi_grid", |_| setup.grid(cfg))?;
    let combined = grid.combined();
    out.add("jsi_combined.csv", grid_to_csv(&combined, JSI_CORNER)?);
    add_heatmap(out, "jsi_combined", &combined, &[], cfg);
    for label in grid.per_process.keys() {
        let g = grid.process_intensity(label).expect("label from grid");
        out.add(format!("jsi_process_{label}.csv"), grid_to_csv(&g, JSI_CORNER)?);
    }
    let reports = process_reports(cfg, &setup, Some(&grid));
    out.add("lobe_centers.csv", centers_table(&reports)?);
    out.add_json(
        "jsi_metadata.json",
        &JsiMetadata {
            units: "wavelengths nm; intensities dimensionless, normalized to unit integral over nm²",
            grid: &cfg.grid,
            normalization_nm2: grid.normalization,
            fiber: &cfg.fiber,
            pump: &cfg.pump,
            dopant_fraction: setup.fiber.dopant_fraction(),
            processes: &reports,
        },
    );
    let scan = out.stage("seed_scan", |_| seed_scan(cfg, &grid))?;
    if let Some(scan) = scan {
        out.add("stimulated_scan.csv", grid_to_csv(&scan, JSI_CORNER)?);
        add_heatmap(out, "stimulated_scan", &scan, &[], cfg);
    }
    Ok(centers_report(&reports))
}

/// Stimulated JSI: one signal slice per seed wavelength, laid out as a grid
/// with λs rows and seed-wavelength columns.
fn seed_scan(cfg: &PipelineConfig, grid: &JsiGrid) -> Result<Option<IntensityGrid>> {
    let seeds = cfg.seed_scan.wavelengths();
    if seeds.len() < 2 {
        return Ok(None);
    }
    let slices = seeds
        .iter()
        .map(|&l| stimulated_slice(grid, l, &cfg.seed_scan.seed_state))
        .collect::<Result<Vec<_>>>()?;
    let ns = grid.lambda_s_axis.len();
    let mut values = Vec::with_capacity(ns * seeds.len());
    for r in 0..ns {
        for s in &slices {
            values.push(s.intensity[r]);
        }
    }
    IntensityGrid::new(grid.lambda_s_axis.clone(), seeds, values).map(Some)
}

// ---------------------------------------------------------- sweep-delta

fn cmd_sweep_delta(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    if cfg.sweep_delta.is_empty() {
        return Err(FwmError::Config("sweep_delta: list is empty".into()));
    }
    let mut rows = Vec::new();
    let mut seps = Vec::new();
    for (k, &delta) in cfg.sweep_delta.iter().enumerate() {
        let mut c = cfg.clone();
        c.fiber.delta_parity_dispersion = delta;
        let setup = out.stage(&format!("model_{k}"), |_| Setup::new(&c))?;
        let find = |label: &str| {
            let p = setup
                .processes
                .iter()
                .find(|p| p.label == label)
                .ok_or_else(|| FwmError::Numeric(format!("process {label} not phase matched at δ = {delta}")))?;
            phasematched_center(p, &setup.fiber, c.pump.center_wavelength_nm, &c.phase_matching)
        };
        let b = find("B")?;
        let cc = find("C")?;
        let sep = (cc.lambda_i_nm - b.lambda_i_nm).abs();
        seps.push(sep);
        rows.push(vec![
            format_f64(delta),
            format_f64(b.lambda_s_nm),
            format_f64(b.lambda_i_nm),
            format_f64(cc.lambda_s_nm),
            format_f64(cc.lambda_i_nm),
            format_f64(sep),
        ]);
        let grid = out.stage(&format!("jsi_grid_{k}"), |_| setup.grid(&c))?;
        let combined = grid.combined();
        out.add(format!("jsi_delta_{k}.csv"), grid_to_csv(&combined, JSI_CORNER)?);
        add_heatmap(out, &format!("jsi_delta_{k}"), &combined, &[], cfg);
    }
    out.add(
        "sweep_delta.csv",
        table_csv(
            &["delta", "B_lambda_s_nm", "B_lambda_i_nm", "C_lambda_s_nm", "C_lambda_i_nm", "separation_lambda_i_nm"],
            &rows,
        )?,
    );
    let monotone = seps.windows(2).all(|w| w[1] > w[0]);
    let mut s = String::from("delta        B-C idler separation (nm)\n");
    for (d, sep) in cfg.sweep_delta.iter().zip(&seps) {
        let _ = writeln!(s, "{:<12} {:.4}", format_f64(*d), sep);
    }
    let _ = writeln!(s, "strictly increasing: {}", if monotone { "yes" } else { "no" });
    Ok(s)
}

// ------------------------------------------------------------ fit-lobes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LobeRecord {
    /// Process letter or mode string (e.g. "B" or "oooo").
    pub process: String,
    pub lobe: GaussianLobe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LobeFile {
    pub lobes: Vec<LobeRecord>,
    #[serde(default)]
    pub residual_norm: Option<f64>,
    #[serde(default)]
    pub r_squared: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
}

impl LobeFile {
    pub fn to_lobe_set(&self) -> Result<LobeSet> {
        let entries = self
            .lobes
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let p = FwmProcess::parse(&r.process).map_err(|e| FwmError::Parse {
                    location: format!("lobes[{k}].process"),
                    message: e.to_string(),
                })?;
                Ok((p, r.lobe.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        if entries.is_empty() {
            return Err(FwmError::Parse { location: "lobes".into(), message: "no lobes".into() });
        }
        Ok(LobeSet { entries })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| FwmError::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Measured grid if configured, else the simulated combined intensity.
fn input_grid(cfg: &PipelineConfig, setup: &Setup, out: &mut Outputs) -> Result<IntensityGrid> {
    match &cfg.inputs.measured_jsi {
        Some(p) => load_measured_jsi(p),
        None => Ok(out.stage("jsi_grid", |_| setup.grid(cfg))?.combined()),
    }
}

/// Fits lobes and labels each with the nearest unclaimed predicted center.
fn fit_and_label(cfg: &PipelineConfig, setup: &Setup, grid: &IntensityGrid, out: &mut Outputs) -> Result<LobeFile> {
    let band_s = [grid.lambda_s_axis[0], *grid.lambda_s_axis.last().unwrap()];
    let band_i = [grid.lambda_i_axis[0], *grid.lambda_i_axis.last().unwrap()];
    let predicted: Vec<(FwmProcess, [f64; 2])> = setup
        .processes
        .iter()
        .filter_map(|p| {
            let c = setup.center(cfg, p)?;
            let inside = (band_s[0]..=band_s[1]).contains(&c.lambda_s_nm) && (band_i[0]..=band_i[1]).contains(&c.lambda_i_nm);
            inside.then(|| (p.clone(), [c.lambda_s_nm, c.lambda_i_nm]))
        })
        .collect();
    let n = cfg.estimation.lobe_count.unwrap_or(predicted.len().max(1));
    let fit = out.stage("fit", |_| fit_lobes(grid, n, None))?;
    // greedy assignment on distance scaled by the band widths
    let (ws, wi) = (band_s[1] - band_s[0], band_i[1] - band_i[0]);
    let mut pairs = Vec::new();
    for (a, l) in fit.lobes.iter().enumerate() {
        for (b, (_, c)) in predicted.iter().enumerate() {
            let d = ((l.center[0] - c[0]) / ws).powi(2) + ((l.center[1] - c[1]) / wi).powi(2);
            pairs.push((d, a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut lobe_of = vec![None; fit.lobes.len()];
    let mut taken = vec![false; predicted.len()];
    for (_, a, b) in pairs {
        if lobe_of[a].is_none() && !taken[b] {
            lobe_of[a] = Some(b);
            taken[b] = true;
        }
    }
    let lobes = fit
        .lobes
        .iter()
        .zip(&lobe_of)
        .map(|(l, b)| {
            let label = b.map_or_else(|| "unassigned".to_string(), |b| predicted[b].0.label.clone());
            let mut lobe = l.clone();
            lobe.process_label = Some(label.clone());
            LobeRecord { process: label, lobe }
        })
        .collect();
    Ok(LobeFile {
        lobes,
        residual_norm: Some(fit.residual_norm),
        r_squared: Some(fit.r_squared),
        iterations: Some(fit.iterations),
    })
}

fn cmd_fit_lobes(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let setup = out.stage("model", |_| Setup::new(cfg))?;
    let grid = input_grid(cfg, &setup, out)?;
    let file = fit_and_label(cfg, &setup, &grid, out)?;
    let lobes: Vec<GaussianLobe> = file.lobes.iter().map(|r| r.lobe.clone()).collect();
    let rows: Vec<Vec<String>> = file
        .lobes
        .iter()
        .map(|r| {
            let l = &r.lobe;
            vec![
                r.process.clone(),
                format_f64(l.center[0]),
                format_f64(l.center[1]),
                format_f64(l.sigma_major),
                format_f64(l.sigma_minor),
                format_f64(l.orientation),
                format_f64(l.amplitude),
                format_f64(l.r_squared),
            ]
        })
        .collect();
    out.add(
        "lobes.csv",
        table_csv(
            &["process", "lambda_s_nm", "lambda_i_nm", "sigma_major_nm", "sigma_minor_nm", "orientation_rad", "amplitude", "r_squared"],
            &rows,
        )?,
    );
    out.add_json("lobes.json", &file);
    add_heatmap(out, "lobes", &grid, &lobes, cfg);
    let mut s = String::from("process  λs (nm)    λi (nm)    R²\n");
    for r in &file.lobes {
        let _ = writeln!(s, "{:<8} {:<10.3} {:<10.3} {:.4}", r.process, r.lobe.center[0], r.lobe.center[1], r.lobe.r_squared);
    }
    let _ = writeln!(s, "overall R² {:.5}", file.r_squared.unwrap_or(f64::NAN));
    Ok(s)
}

// --------------------------------------------------------- estimate-rho

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub concurrence: f64,
    pub bell_fidelity: f64,
    /// Square-root (unsquared) fidelity convention of the same overlap.
    pub bell_fidelity_sqrt: f64,
    pub purity: f64,
}

impl MetricsBlock {
    pub fn of(rho: &DensityMatrix4) -> Self {
        let m = rho.metrics();
        Self {
            concurrence: m.concurrence,
            bell_fidelity: m.bell_fidelity,
            bell_fidelity_sqrt: m.bell_fidelity.max(0.0).sqrt(),
            purity: m.purity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window: SpectralWindow,
    pub rho: DensityMatrix4,
    pub metrics: MetricsBlock,
    /// Concurrence change when the quadrature is doubled.
    pub quadrature_change: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub source: String,
    pub phase: crate::estimation::PhaseConvention,
    pub windows: Vec<WindowEstimate>,
}

enum Source<'a> {
    Model(JsaModel<'a>),
    Grid(JsiGrid),
    Lobes(LobeSet),
}

impl Source<'_> {
    fn as_dyn(&self) -> &dyn AmplitudeSource {
        match self {
            Source::Model(m) => m,
            Source::Grid(g) => g,
            Source::Lobes(l) => l,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Source::Model(_) => "model",
            Source::Grid(_) => "grid",
            Source::Lobes(_) => "lobes",
        }
    }
}

/// Node of the configured grid maximizing min(I_a, I_b) for a lobe set.
fn lobe_intersection(set: &LobeSet, cfg: &PipelineConfig, a: &str, b: &str) -> Option<(f64, f64)> {
    let la = set.entries.iter().find(|(p, _)| p.label == a)?.1.clone();
    let lb = set.entries.iter().find(|(p, _)| p.label == b)?.1.clone();
    let (s_axis, i_axis) = cfg.grid.axes();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &s in &s_axis {
        for &i in &i_axis {
            let v = la.value_at(s, i).min(lb.value_at(s, i));
            if v > best.0 {
                best = (v, s, i);
            }
        }
    }
    (best.0 > 0.0).then_some((best.1, best.2))
}

pub fn estimate(cfg: &PipelineConfig, out: &mut Outputs) -> Result<EstimateOutput> {
    let setup = out.stage("model", |_| Setup::new(cfg))?;
    let est = &cfg.estimation;
    let kind = match est.source {
        EstimationSource::Auto if cfg.inputs.lobes.is_some() || cfg.inputs.measured_jsi.is_some() => EstimationSource::Lobes,
        EstimationSource::Auto => EstimationSource::Model,
        k => k,
    };
    let mut band = (cfg.grid.lambda_s_nm, cfg.grid.lambda_i_nm);
    let mut sim_grid = None;
    let source = match kind {
        EstimationSource::Model => Source::Model(setup.model(cfg)?),
        EstimationSource::Grid => Source::Grid(out.stage("jsi_grid", |_| setup.grid(cfg))?),
        _ => {
            let file = match &cfg.inputs.lobes {
                Some(p) => read_json::<LobeFile>(p)?,
                None => {
                    let grid = input_grid(cfg, &setup, out)?;
                    band = (
                        [grid.lambda_s_axis[0], *grid.lambda_s_axis.last().unwrap()],
                        [grid.lambda_i_axis[0], *grid.lambda_i_axis.last().unwrap()],
                    );
                    fit_and_label(cfg, &setup, &grid, out)?
                }
            };
            Source::Lobes(file.to_lobe_set()?)
        }
    };
    let windows = if cfg.windows.is_empty() {
        let [a, b] = &est.intersection;
        let center = match &source {
            Source::Lobes(set) => lobe_intersection(set, cfg, a, b),
            Source::Grid(g) => intersection_center(g, a, b),
            Source::Model(_) => {
                let g = out.stage("jsi_grid", |_| setup.grid(cfg))?;
                let c = intersection_center(&g, a, b);
                sim_grid = Some(g);
                c
            }
        }
        .ok_or_else(|| FwmError::ZeroIntensity(format!("no overlap between processes {a} and {b} to center a window on")))?;
        let mut w = SpectralWindow::centered(center.0, center.1, est.window_width_nm);
        w.name = Some(format!("{a}{b}_intersection"));
        vec![w]
    } else {
        cfg.windows.clone()
    };
    drop(sim_grid);
    let mut results = Vec::new();
    for (k, w) in windows.iter().enumerate() {
        w.check_inside(band.0, band.1)?;
        let rho = out.stage(&format!("window_{k}"), |_| trace_spectral(source.as_dyn(), w, est.phase))?;
        let doubled = integrate_window(source.as_dyn(), w, 2 * WINDOW_NODES, 2 * WINDOW_NODES, est.phase)?.rho()?;
        results.push(WindowEstimate {
            window: w.clone(),
            metrics: MetricsBlock::of(&rho),
            quadrature_change: (rho.concurrence() - doubled.concurrence()).abs(),
            rho,
        });
    }
    Ok(EstimateOutput {
        source: source.name().to_string(),
        phase: est.phase,
        windows: results,
    })
}

fn metrics_table(rows: &[(String, MetricsBlock)]) -> String {
    let mut s = String::from("name                       concurrence  bell_F   bell_F_sqrt  purity\n");
    for (n, m) in rows {
        let _ = writeln!(
            s,
            "{:<26} {:<12.5} {:<8.5} {:<12.5} {:.5}",
            n, m.concurrence, m.bell_fidelity, m.bell_fidelity_sqrt, m.purity
        );
    }
    s
}

fn cmd_estimate_rho(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let est = estimate(cfg, out)?;
    let rows: Vec<Vec<String>> = est
        .windows
        .iter()
        .map(|w| {
            let m = &w.metrics;
            vec![
                w.window.id(),
                format_f64(w.window.lambda_s_nm[0]),
                format_f64(w.window.lambda_s_nm[1]),
                format_f64(w.window.lambda_i_nm[0]),
                format_f64(w.window.lambda_i_nm[1]),
                format_f64(m.concurrence),
                format_f64(m.bell_fidelity),
                format_f64(m.bell_fidelity_sqrt),
                format_f64(m.purity),
                format_f64(w.quadrature_change),
            ]
        })
        .collect();
    out.add(
        "rho_se_windows.csv",
        table_csv(
            &[
                "window",
                "lambda_s_min_nm",
                "lambda_s_max_nm",
                "lambda_i_min_nm",
                "lambda_i_max_nm",
                "concurrence",
                "bell_fidelity",
                "bell_fidelity_sqrt",
                "purity",
                "quadrature_change",
            ],
            &rows,
        )?,
    );
    out.add_json("rho_se.json", &est);
    let table: Vec<(String, MetricsBlock)> = est.windows.iter().map(|w| (w.window.id(), w.metrics)).collect();
    Ok(format!("source: {}\n{}", est.source, metrics_table(&table)))
}

// ------------------------------------------------------------------ QST

/// Accepts a bare matrix, an object with a `rho` field, or estimate-rho
/// output (first window).
pub fn read_rho(path: &Path) -> Result<DensityMatrix4> {
    let v: serde_json::Value = read_json(path)?;
    let candidate = if v.get("basis").is_some() {
        v
    } else if let Some(r) = v.get("rho") {
        r.clone()
    } else if let Some(r) = v.pointer("/windows/0/rho") {
        r.clone()
    } else {
        return Err(FwmError::Parse {
            location: path.display().to_string(),
            message: "no density matrix found (expected basis/entries, rho, or windows[0].rho)".into(),
        });
    };
    serde_json::from_value(candidate).map_err(|e| FwmError::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

fn source_rho(cfg: &PipelineConfig, out: &mut Outputs) -> Result<DensityMatrix4> {
    match &cfg.inputs.rho {
        Some(p) => read_rho(p),
        None => Ok(estimate(cfg, out)?.windows.remove(0).rho),
    }
}

fn sampling_seed(cfg: &PipelineConfig) -> u64 {
    cfg.tomography.seed
}

fn bootstrap_seed(cfg: &PipelineConfig) -> u64 {
    cfg.tomography.seed.wrapping_add(1)
}

fn simulate_counts(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(DensityMatrix4, Vec<f64>, CountRecord)> {
    let rho = source_rho(cfg, out)?;
    let rates = expected_counts(&rho, cfg.tomography.n0);
    let counts = sample_counts(&rates, sampling_seed(cfg))?;
    out.seed("count_sampling", sampling_seed(cfg));
    Ok((rho, rates, counts))
}

fn cmd_qst_simulate(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let (rho, rates, counts) = simulate_counts(cfg, out)?;
    let rows: Vec<Vec<String>> = projector_basis()
        .iter()
        .zip(rates.iter().zip(&counts.counts))
        .map(|(p, (r, n))| vec![p.signal.to_string(), p.idler.to_string(), format_f64(*r), n.to_string()])
        .collect();
    out.add("qst_counts.csv", table_csv(&["signal_basis", "idler_basis", "expected_counts", "counts"], &rows)?);
    out.add_json("qst_counts.json", &counts);
    out.add_json("qst_source_rho.json", &RhoReport { rho: rho.clone(), metrics: MetricsBlock::of(&rho) });
    Ok(format!(
        "simulated 36 projectors, N0 = {}, total counts {}, seed {}\n",
        cfg.tomography.n0,
        counts.total(),
        sampling_seed(cfg)
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RhoReport {
    rho: DensityMatrix4,
    metrics: MetricsBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityPair {
    pub squared: f64,
    pub sqrt: f64,
}

impl FidelityPair {
    pub fn of(a: &DensityMatrix4, b: &DensityMatrix4) -> Self {
        Self {
            squared: a.fidelity(b),
            sqrt: a.fidelity_sqrt(b),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QstOutput {
    pub rho: DensityMatrix4,
    pub metrics: MetricsBlock,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub total_counts: u64,
    pub bootstrap: crate::tomography::BootstrapSummary,
    /// Fidelity to the state the counts were simulated from, when known.
    pub fidelity_to_source: Option<FidelityPair>,
}

fn cmd_qst_reconstruct(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let (counts, source) = match &cfg.inputs.counts {
        Some(p) => (read_json::<CountRecord>(p)?, None),
        None => {
            let (rho, _, counts) = simulate_counts(cfg, out)?;
            (counts, Some(rho))
        }
    };
    let mle = out.stage("mle", |_| mle_reconstruct(&counts))?;
    let boot = out.stage("bootstrap", |_| bootstrap_metrics(&counts, cfg.tomography.n_samples, bootstrap_seed(cfg)))?;
    out.seed("bootstrap", bootstrap_seed(cfg));
    let result = QstOutput {
        metrics: MetricsBlock::of(&mle.rho),
        fidelity_to_source: source.as_ref().map(|s| FidelityPair::of(&mle.rho, s)),
        rho: mle.rho,
        log_likelihood: mle.log_likelihood,
        iterations: mle.iterations,
        total_counts: counts.total(),
        bootstrap: boot,
    };
    out.add_json("rho_qst.json", &result);
    let b = &result.bootstrap;
    let mut s = metrics_table(&[("rho_qst".into(), result.metrics)]);
    let _ = writeln!(
        s,
        "bootstrap ({} samples, {} failed): concurrence {:.4} ± {:.4}, bell_F {:.4} ± {:.4}, purity {:.4} ± {:.4}",
        b.n_samples,
        b.failed,
        b.concurrence.mean,
        b.concurrence.std,
        b.bell_fidelity.mean,
        b.bell_fidelity.std,
        b.purity.mean,
        b.purity.std
    );
    if let Some(f) = &result.fidelity_to_source {
        let _ = writeln!(s, "fidelity to source state: {:.6} (squared), {:.6} (sqrt)", f.squared, f.sqrt);
    }
    Ok(s)
}

// -------------------------------------------------------------- compare

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareOutput {
    pub fidelity: FidelityPair,
    /// F(|ρ_a|, ρ_b): entrywise magnitudes of ρ_a, phases disregarded.
    pub phase_blind_fidelity: FidelityPair,
    pub metrics_a: MetricsBlock,
    pub metrics_b: MetricsBlock,
}

pub fn compare(a: &DensityMatrix4, b: &DensityMatrix4) -> CompareOutput {
    CompareOutput {
        fidelity: FidelityPair::of(a, b),
        phase_blind_fidelity: FidelityPair::of(&a.magnitude(), b),
        metrics_a: MetricsBlock::of(a),
        metrics_b: MetricsBlock::of(b),
    }
}

fn cmd_compare(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone().ok_or_else(|| FwmError::Config(format!("compare needs inputs.{key}")))
    };
    let a = read_rho(&need(&cfg.inputs.compare_a, "compare_a")?)?;
    let b = read_rho(&need(&cfg.inputs.compare_b, "compare_b")?)?;
    let c = compare(&a, &b);
    out.add_json("compare.json", &c);
    let mut s = metrics_table(&[("a".into(), c.metrics_a), ("b".into(), c.metrics_b)]);
    let _ = writeln!(s, "fidelity F(a, b)              squared {:.6}  sqrt {:.6}", c.fidelity.squared, c.fidelity.sqrt);
    let _ = writeln!(
        s,
        "phase-blind F(|a|, b)         squared {:.6}  sqrt {:.6}",
        c.phase_blind_fidelity.squared, c.phase_blind_fidelity.sqrt
    );
    out.add("compare.txt", s.clone().into_bytes());
    Ok(s)
}

// --------------------------------------------------------------- render

fn cmd_render(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let grid = match &cfg.inputs.measured_jsi {
        Some(p) => load_measured_jsi(p)?,
        None => {
            let setup = out.stage("model", |_| Setup::new(cfg))?;
            out.stage("jsi_grid", |_| setup.grid(cfg))?.combined()
        }
    };
    let lobes: Vec<GaussianLobe> = match &cfg.inputs.lobes {
        Some(p) => read_json::<LobeFile>(p)?
            .lobes
            .into_iter()
            .map(|r| GaussianLobe { process_label: Some(r.process), ..r.lobe })
            .collect(),
        None => Vec::new(),
    };
    add_heatmap(out, "render", &grid, &lobes, cfg);
    Ok(format!("rendered {}×{} grid with {} contour(s)\n", grid.rows(), grid.cols(), lobes.len()))
}

// ---------------------------------------------------------------- modes

/// Field image as a grid with y rows and x columns (x horizontal).
fn image_grid(img: &crate::fields::IntensityImage) -> Result<IntensityGrid> {
    let n = img.spec.nodes;
    let axis: Vec<f64> = (0..n).map(|k| img.spec.coord(k)).collect();
    let mut values = vec![0.0; n * n];
    for ix in 0..n {
        for iy in 0..n {
            values[iy * n + ix] = img.values[ix * n + iy];
        }
    }
    IntensityGrid::new(axis.clone(), axis, values)
}

fn cmd_modes(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let fiber = FiberModel::new(cfg.fiber.clone())?;
    let lambda_um = cfg.images.wavelength_nm.unwrap_or(cfg.pump.center_wavelength_nm) * 1e-3;
    let mut states: Vec<(String, ImageState)> = cfg
        .images
        .states
        .iter()
        .map(|n| Ok((n.clone(), ImageState::Pure { state: ModeSuperposition::named(n).map_err(|e| FwmError::Config(format!("images.states: {e}")))? })))
        .collect::<Result<_>>()?;
    if cfg.images.include_mixture {
        states.push((
            "mixture_eo".into(),
            ImageState::Mixture {
                components: vec![
                    (0.5, ModeSuperposition::basis(TransverseMode::E)),
                    (0.5, ModeSuperposition::basis(TransverseMode::O)),
                ],
            },
        ));
    }
    let mut images = BTreeMap::new();
    for (name, state) in &states {
        let img = out.stage(&format!("image_{name}"), |_| intensity_image(state, &fiber, lambda_um, &cfg.field_grid))?;
        let grid = image_grid(&img)?;
        out.add(format!("mode_{name}.csv"), grid_to_csv(&grid, FIELD_CORNER)?);
        out.add(format!("mode_{name}.pgm"), render_pgm(&grid));
        let opts = SvgOptions {
            title: name,
            x_label: "x (µm)",
            y_label: "y (µm)",
            contour_level: cfg.render.contour_level,
        };
        out.add(format!("mode_{name}.svg"), render_svg(&grid, &[], &opts).into_bytes());
        images.insert(name.clone(), img);
    }
    let mut s = format!("{} images at {:.1} nm\n", states.len(), lambda_um * 1e3);
    if let (Some(m), Some(r)) = (images.get("mixture_eo"), images.get("r")) {
        let d = m.values.iter().zip(&r.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let _ = writeln!(s, "max |I(½e+½o mixture) − I(r)| = {d:.3e}");
    }
    Ok(s)
}

// ------------------------------------------------------------- overlaps

fn cmd_overlaps(cfg: &PipelineConfig, out: &mut Outputs) -> Result<String> {
    let setup = out.stage("model", |_| Setup::new(cfg))?;
    let doubled = out.stage("overlaps_doubled", |_| {
        process_overlaps(
            &setup.processes,
            &setup.fiber,
            cfg.pump.center_wavelength_nm,
            &cfg.phase_matching,
            &cfg.field_grid.doubled(),
        )
    })?;
    let total: f64 = setup.overlaps.values().map(|v| v.norm_sqr()).sum();
    let mut rows = Vec::new();
    let mut s = String::from("process  modes  |O|²         normalized  doubled-grid change\n");
    for p in &setup.processes {
        let o = setup.overlaps[&p.label];
        let o2 = doubled[&p.label];
        let change = if o.norm_sqr() > 0.0 { (o2.norm_sqr() - o.norm_sqr()).abs() / o.norm_sqr() } else { 0.0 };
        rows.push(vec![
            p.label.clone(),
            modes_string(p),
            p.pump_orderings().to_string(),
            format_f64(o.re),
            format_f64(o.im),
            format_f64(o.norm_sqr()),
            format_f64(o.norm_sqr() / total),
            format_f64(o2.norm_sqr()),
            format_f64(change),
        ]);
        let _ = writeln!(s, "{:<8} {:<6} {:<12.6e} {:<11.4} {:.2e}", p.label, modes_string(p), o.norm_sqr(), o.norm_sqr() / total, change);
    }
    out.add(
        "overlaps.csv",
        table_csv(
            &["process", "modes", "pump_orderings", "overlap_re_per_um2", "overlap_im_per_um2", "abs2", "normalized_abs2", "abs2_doubled_grid", "relative_change"],
            &rows,
        )?,
    );
    Ok(s)
}
