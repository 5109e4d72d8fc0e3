use std::fs;
use std::path::Path;

use carsfit::cli::{main_with_args, parse_gamma_grid, parse_snr, replay};
use carsfit::error::exit;
use carsfit::formats::{load_library, read_spectra_csv, LIBRARY_PARAMS, LIBRARY_SPECTRA};

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["carsfit"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_random(out: &Path, n: &str, seed: &str) {
    let code = run(&[
        "gen-library",
        "--n",
        n,
        "--seed",
        seed,
        "--m",
        "32",
        "--out",
        s(out),
    ]);
    assert_eq!(code, exit::SUCCESS);
}

#[test]
fn grid_library_has_one_entry_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let code = run(&[
        "gen-library",
        "--sampling",
        "grid",
        "--levels",
        "2,2,2,2,2",
        "--m",
        "16",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, exit::SUCCESS);
    let (lib, _) = load_library(&out).unwrap();
    assert_eq!(lib.len(), 32);
}

#[test]
fn random_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gen_random(&a, "12", "9");
    gen_random(&b, "12", "9");
    for file in [LIBRARY_PARAMS, LIBRARY_SPECTRA] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap()
        );
    }
}

#[test]
fn train_and_fit_clean_surrogate_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib");
    let model = dir.path().join("model");
    let fit = dir.path().join("fit");
    gen_random(&lib, "40", "3");
    let code = run(&[
        "train",
        "--library",
        s(&lib),
        "--gamma-grid",
        "0.5",
        "--out",
        s(&model),
    ]);
    assert_eq!(code, exit::SUCCESS);
    assert!(model.join("cv.csv").exists());

    // Spectra taken from the library are matched exactly by the interpolating model.
    let code = run(&[
        "fit",
        "--model",
        s(&model),
        "--spectra",
        s(&lib),
        "--truth",
        s(&lib),
        "--snr",
        "inf",
        "--out",
        s(&fit),
    ]);
    assert_eq!(code, exit::SUCCESS);
    let mut rdr = csv::Reader::from_path(fit.join("results.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let residual = headers.iter().position(|h| h == "residual").unwrap();
    let status = headers.iter().position(|h| h == "status").unwrap();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.unwrap();
        assert_eq!(&record[status], "ok");
        assert!(record[residual].parse::<f64>().unwrap() < 1e-10);
        rows += 1;
    }
    assert_eq!(rows, 40);
}

#[test]
fn mismatched_grid_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib");
    let other = dir.path().join("other");
    let model = dir.path().join("model");
    gen_random(&lib, "20", "1");
    let code = run(&["gen-library", "--n", "3", "--m", "24", "--out", s(&other)]);
    assert_eq!(code, exit::SUCCESS);
    assert_eq!(
        run(&[
            "train",
            "--library",
            s(&lib),
            "--gamma-grid",
            "0.5",
            "--out",
            s(&model)
        ]),
        exit::SUCCESS
    );
    let spectra = read_spectra_csv(&other.join(LIBRARY_SPECTRA)).unwrap();
    assert_eq!(spectra.grid.len(), 24);
    let code = run(&[
        "fit",
        "--model",
        s(&model),
        "--spectra",
        s(&other),
        "--out",
        s(&dir.path().join("f")),
    ]);
    assert_eq!(code, exit::DATA);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"]), exit::USAGE);
    assert_eq!(run(&["gen-library", "--out", s(dir.path())]), exit::USAGE);
    assert_eq!(
        run(&[
            "train",
            "--library",
            s(&dir.path().join("missing")),
            "--out",
            s(dir.path())
        ]),
        exit::DATA
    );
    let lib = dir.path().join("lib");
    gen_random(&lib, "6", "0");
    assert_eq!(
        run(&[
            "fit",
            "--model",
            s(&lib),
            "--spectra",
            s(&lib),
            "--snr",
            "-1",
            "--out",
            s(dir.path())
        ]),
        exit::USAGE
    );
}

#[test]
fn flag_parsers() {
    assert_eq!(parse_gamma_grid("0.5").unwrap(), vec![0.5]);
    let g = parse_gamma_grid("1e-4:1e2:25").unwrap();
    assert_eq!(g.len(), 25);
    assert_eq!((g[0], g[24]), (1e-4, 1e2));
    assert!(parse_gamma_grid("1:0.1:3").is_err());
    assert!(parse_gamma_grid("-1").is_err());
    assert_eq!(parse_snr("inf").unwrap(), f64::INFINITY);
    assert!(parse_snr("0").is_err());
}

#[test]
fn noise_study_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("noise");
    let code = run(&[
        "study",
        "--study",
        "noise",
        "--n",
        "40",
        "--snrs",
        "inf,10",
        "--validation",
        "3",
        "--m",
        "32",
        "--gamma-grid",
        "0.5",
        "--starts",
        "2",
        "--quiet",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, exit::SUCCESS);
    let rows = csv::Reader::from_path(out.join("study.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 2 * 3);

    let report = replay(&out.join("manifest.json"), None).unwrap();
    assert!(report.is_identical(), "{:?}", report.mismatched);
}
