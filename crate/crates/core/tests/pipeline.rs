//! Cross-module checks through the pipeline's public surface.

use std::fs;
use std::path::Path;

use fwm_core::density::DensityMatrix4;
use fwm_core::estimation::{trace_spectral, PhaseConvention, SpectralWindow};
use fwm_core::fwm::FwmProcess;
use fwm_core::pipeline::commands::{compare, execute, read_rho, LobeFile, LobeRecord};
use fwm_core::pipeline::config::EstimationSource;
use fwm_core::pipeline::io::{grid_to_csv, JSI_CORNER};
use fwm_core::pipeline::manifest::{Outputs, RunManifest, MANIFEST_NAME};
use fwm_core::pipeline::{load_measured_jsi, run, Command, PipelineConfig};
use fwm_core::spectrum::{linspace, GaussianLobe, IntensityGrid, LobeSet};
use fwm_core::tomography::{expected_counts, mle_reconstruct, CountRecord};
use fwm_core::FwmError;

fn lobe(center: [f64; 2], amplitude: f64) -> GaussianLobe {
    GaussianLobe {
        center,
        sigma_major: 0.5,
        sigma_minor: 0.3,
        orientation: 0.5,
        amplitude,
        r_squared: 1.0,
        process_label: None,
    }
}

fn lobe_file() -> LobeFile {
    let rec = |p: &str, c, a| LobeRecord { process: p.into(), lobe: lobe(c, a) };
    LobeFile {
        lobes: vec![
            rec("A", [682.0, 568.2], 0.4),
            rec("B", [679.8, 569.9], 1.0),
            rec("C", [679.5, 570.3], 0.9),
            rec("D", [676.0, 572.8], 0.4),
        ],
        residual_norm: None,
        r_squared: None,
        iterations: None,
    }
}

fn small_config(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.grid.nodes_s = 81;
    cfg.grid.nodes_i = 81;
    cfg.seed_scan.step_nm = 0.5;
    cfg.field_grid.nodes = 65;
    cfg.tomography.n_samples = 10;
    cfg.threads = Some(1);
    cfg.output_dir = dir.to_path_buf();
    cfg
}

#[test]
fn rho_se_counts_mle_compare() {
    let set = lobe_file().to_lobe_set().unwrap();
    let w = SpectralWindow { name: None, lambda_s_nm: [676.0, 683.0], lambda_i_nm: [567.5, 573.5] };
    let rho_se = trace_spectral(&set, &w, PhaseConvention::Flat).unwrap();
    let counts = CountRecord::new(expected_counts(&rho_se, 1e7).iter().map(|r| r.round() as u64).collect()).unwrap();
    let rho_qst = mle_reconstruct(&counts).unwrap().rho;
    let c = compare(&rho_qst, &rho_se);
    assert!(c.fidelity.squared >= 0.99, "{}", c.fidelity.squared);
    assert!(c.fidelity.sqrt >= c.fidelity.squared);
}

#[test]
fn compare_with_itself_is_one() {
    let rho = DensityMatrix4::bell_phi_plus();
    let c = compare(&rho, &rho);
    assert!((c.fidelity.squared - 1.0).abs() < 1e-9);
    assert!((c.fidelity.sqrt - 1.0).abs() < 1e-9);
    // real nonnegative entries: phase-blind view changes nothing
    assert!((c.phase_blind_fidelity.squared - 1.0).abs() < 1e-9);
}

#[test]
fn lobe_file_drives_estimate_and_wide_window_reports_all_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let lobes = tmp.path().join("lobes.json");
    fs::write(&lobes, serde_json::to_vec(&lobe_file()).unwrap()).unwrap();
    let mut cfg = small_config(&tmp.path().join("out"));
    cfg.inputs.lobes = Some(lobes);
    cfg.windows = vec![
        SpectralWindow { name: Some("wide".into()), lambda_s_nm: [673.0, 681.0], lambda_i_nm: [567.5, 574.5] },
        SpectralWindow { name: Some("narrow".into()), lambda_s_nm: [679.0, 680.0], lambda_i_nm: [569.6, 570.6] },
    ];
    let summary = run(Command::EstimateRho, &cfg).unwrap();
    assert!(summary.report.contains("source: lobes"));
    let csv = fs::read_to_string(cfg.output_dir.join("rho_se_windows.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per window");
    for key in ["concurrence", "bell_fidelity", "bell_fidelity_sqrt", "purity"] {
        assert!(lines[0].split(',').any(|h| h == key), "{key}");
    }
    let rho = read_rho(&cfg.output_dir.join("rho_se.json")).unwrap();
    assert!(rho.concurrence() >= 0.0);
}

#[test]
fn zero_window_names_the_window() {
    let tmp = tempfile::tempdir().unwrap();
    let lobes = tmp.path().join("lobes.json");
    // every lobe in the far corner: the window's intensity underflows to 0
    let mut file = lobe_file();
    for r in &mut file.lobes {
        r.lobe.center = [671.0, 567.5];
    }
    fs::write(&lobes, serde_json::to_vec(&file).unwrap()).unwrap();
    let mut cfg = small_config(&tmp.path().join("out"));
    cfg.inputs.lobes = Some(lobes);
    cfg.windows = vec![SpectralWindow { name: Some("empty".into()), lambda_s_nm: [695.0, 699.0], lambda_i_nm: [575.0, 575.9] }];
    match run(Command::EstimateRho, &cfg) {
        Err(e @ FwmError::ZeroIntensity(_)) => {
            assert!(e.to_string().contains("empty"), "{e}");
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("expected zero-intensity error, got {other:?}"),
    }
}

#[test]
fn qst_commands_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("sim"));
    cfg.estimation.source = EstimationSource::Model;
    cfg.tomography.n0 = 5e4;
    run(Command::QstSimulate, &cfg).unwrap();
    let counts: CountRecord = serde_json::from_slice(&fs::read(cfg.output_dir.join("qst_counts.json")).unwrap()).unwrap();
    assert_eq!(counts.counts.len(), 36);

    let mut rec = small_config(&tmp.path().join("rec"));
    rec.inputs.counts = Some(tmp.path().join("sim/qst_counts.json"));
    let summary = run(Command::QstReconstruct, &rec).unwrap();
    assert!(summary.report.contains("bootstrap (10 samples"));

    let mut cmp = small_config(&tmp.path().join("cmp"));
    cmp.inputs.compare_a = Some(tmp.path().join("rec/rho_qst.json"));
    cmp.inputs.compare_b = Some(tmp.path().join("sim/qst_source_rho.json"));
    run(Command::Compare, &cmp).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("cmp/compare.json")).unwrap()).unwrap();
    let f = report["fidelity"]["squared"].as_f64().unwrap();
    assert!(f > 0.95 && f <= 1.0 + 1e-9, "{f}");
    assert!(report["phase_blind_fidelity"]["sqrt"].is_f64());
}

#[test]
fn manifest_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let summary = run(Command::Overlaps, &cfg).unwrap();
    let manifest: RunManifest = serde_json::from_slice(&fs::read(tmp.path().join(MANIFEST_NAME)).unwrap()).unwrap();
    let mut listed: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
    listed.push(MANIFEST_NAME.into());
    let mut on_disk: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert_eq!(summary.files.len(), on_disk.len());
    assert_eq!(manifest.config_sha256, cfg.sha256());
    assert_eq!(manifest.threads, 1);
}

#[test]
fn single_delta_sweep_matches_simulate_jsi() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.sweep_delta = vec![cfg.fiber.delta_parity_dispersion];
    let mut sweep = Outputs::default();
    execute(Command::SweepDelta, &cfg, &mut sweep).unwrap();
    let mut sim = Outputs::default();
    execute(Command::SimulateJsi, &cfg, &mut sim).unwrap();
    assert_eq!(sweep.get("jsi_delta_0.csv"), sim.get("jsi_combined.csv"));
}

#[test]
fn measured_grid_round_trip_and_errors() {
    let s = linspace(670.0, 700.0, 7);
    let i = linspace(567.0, 576.0, 5);
    let values = (0..35).map(|k| (k as f64 * 0.37).sin().abs() / 3.0).collect();
    let grid = IntensityGrid::new(s, i, values).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("jsi.csv");
    let text = String::from_utf8(grid_to_csv(&grid, JSI_CORNER).unwrap()).unwrap();
    fs::write(&path, &text).unwrap();
    assert_eq!(load_measured_jsi(&path).unwrap(), grid);

    // third data row, second value column
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[2] = "-0.5".into();
    lines[3] = cells.join(",");
    fs::write(&path, lines.join("\n")).unwrap();
    let e = load_measured_jsi(&path).unwrap_err();
    assert!(matches!(e, FwmError::Parse { .. }));
    assert!(e.to_string().contains("row 4, col 3"), "{e}");
    assert_eq!(e.exit_code(), 2);

    assert!(matches!(load_measured_jsi(&tmp.path().join("missing.csv")), Err(FwmError::Io { .. })));
}

#[test]
fn config_file_resolves_relative_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"inputs": {"lobes": "data/lobes.json"}, "output_dir": "results"}"#,
    )
    .unwrap();
    let cfg = PipelineConfig::load(&tmp.path().join("cfg.json")).unwrap();
    assert_eq!(cfg.output_dir, tmp.path().join("results"));
    assert_eq!(cfg.inputs.lobes.as_deref(), Some(tmp.path().join("data/lobes.json").as_path()));
}

#[test]
fn lobe_set_from_file_keeps_process_modes() {
    let set: LobeSet = lobe_file().to_lobe_set().unwrap();
    let b = FwmProcess::parse("B").unwrap();
    assert!(set.entries.iter().any(|(p, _)| p.modes() == b.modes()));
    let mut bad = lobe_file();
    bad.lobes[0].process = "Z".into();
    assert!(matches!(bad.to_lobe_set(), Err(FwmError::Parse { .. })));
}
