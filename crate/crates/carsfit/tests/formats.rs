use std::fs;

use carsfit::core::{
    build_library, sample_physical_parameters, select_gamma, train, CvConfig, OracleConfig,
    ParameterSpace, Sampling, SpectralLibrary, WavenumberGrid,
};
use carsfit::error::exit;
use carsfit::formats::*;
use carsfit::Error;

fn library(n: usize, m: usize, seed: u64) -> SpectralLibrary {
    let space = ParameterSpace::cars();
    let grid = WavenumberGrid::uniform(m).unwrap();
    let params = sample_physical_parameters(n, &space, seed).unwrap();
    build_library(
        &params,
        &space,
        Sampling::Random { seed },
        &grid,
        &OracleConfig::default(),
    )
    .unwrap()
}

#[test]
fn library_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let lib = library(25, 40, 1);
    save_library(&lib, dir.path(), Some(&OracleConfig::default())).unwrap();
    let (back, meta) = load_library(dir.path()).unwrap();
    assert_eq!(back, lib);
    assert_eq!(meta.n_entries, 25);
    assert_eq!(meta.n_wavenumbers, 40);
    assert_eq!(
        meta.oracle_hash.as_deref(),
        Some(oracle_hash(&OracleConfig::default()).as_str())
    );
}

#[test]
fn model_round_trip_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let lib = library(60, 48, 2);
    let model = train(&lib, 0.4).unwrap();
    save_model(&model, lib.space(), None, dir.path()).unwrap();
    let stored = load_model(dir.path()).unwrap();
    assert_eq!(stored.space, *lib.space());
    let probes = sample_physical_parameters(100, lib.space(), 77).unwrap();
    for x in &probes {
        let a = model.predict(x).unwrap().values;
        let b = stored.model.predict(x).unwrap().values;
        assert_eq!(a, b);
    }
}

#[test]
fn cv_report_is_written_in_both_forms() {
    let dir = tempfile::tempdir().unwrap();
    let lib = library(30, 24, 3);
    let cfg = CvConfig {
        gamma_grid: vec![0.1, 1.0],
        ..CvConfig::default()
    };
    let report = select_gamma(&lib, &cfg).unwrap();
    write_cv_report(&report, dir.path()).unwrap();
    let back: carsfit::core::CvReport = read_json(&dir.path().join("cv.json")).unwrap();
    assert_eq!(back.gamma_star, report.gamma_star);
    let csv = fs::read_to_string(dir.path().join("cv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn corrupted_weight_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let lib = library(20, 16, 4);
    let model = train(&lib, 0.5).unwrap();
    save_model(&model, lib.space(), None, dir.path()).unwrap();
    let path = dir.path().join(MODEL_WEIGHTS);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    fields[2] = "garbage".into();
    lines[3] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let header: Vec<&str> = lines[0].split(',').collect();
    match load_model(dir.path()) {
        Err(Error::Format { line, field, .. }) => {
            assert_eq!(line, 4);
            assert_eq!(field.as_deref(), Some(header[2]));
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn unknown_schema_is_a_version_error() {
    let dir = tempfile::tempdir().unwrap();
    let lib = library(10, 16, 5);
    save_library(&lib, dir.path(), None).unwrap();
    let path = dir.path().join(LIBRARY_META);
    let mut meta: serde_json::Value = read_json(&path).unwrap();
    meta["schema"] = serde_json::json!(99);
    write_json(&path, &meta).unwrap();
    let err = load_library(dir.path()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Version {
                found: 99,
                expected: 1,
                ..
            }
        ),
        "{err:?}"
    );
    assert_eq!(err.exit_code(), exit::DATA);
}

#[test]
fn spectra_header_must_match_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = WavenumberGrid::uniform(8).unwrap();
    let path = dir.path().join("s.csv");
    write_spectra_csv(&path, &grid, &[vec![0.5; 8], vec![-1.0; 8]]).unwrap();
    let back = read_spectra_csv(&path).unwrap();
    assert_eq!(back.grid, grid);
    assert_eq!(back.spectra, vec![vec![0.5; 8], vec![-1.0; 8]]);
}

#[test]
fn ragged_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    fs::write(&path, "a,b\n1,2\n3\n").unwrap();
    match read_float_csv(&path) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn floats_survive_text() {
    for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE] {
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
