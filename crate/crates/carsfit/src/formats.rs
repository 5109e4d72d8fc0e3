//! On-disk formats.
//!
//! Every artifact is a directory holding one JSON metadata file plus CSV
//! payloads. CSV files are UTF-8 with a header row and LF line endings, and
//! floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly.
//!
//! | artifact | files |
//! |----------|-------|
//! | library  | `meta.json`, `params.csv` (N × P), `spectra.csv` (N × M) |
//! | model    | `model.json`, `weights.csv` (N × M, row n is column n of W), `centers.csv` (N × P, z-scored) |
//! | CV       | `cv.json`, `cv.csv` (`gamma,error`) |
//! | fits     | `results.csv`, `summary.json`, `timings.json` |

use std::fs;
use std::path::{Path, PathBuf};

use carsfit_core::kernel::Standardizer;
use carsfit_core::{
    CvReport, FitResult, OracleConfig, ParameterSpace, ParameterVector, Sampling, SpectralLibrary,
    SurrogateModel, WavenumberGrid,
};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LIBRARY_SCHEMA: u32 = 1;
pub const MODEL_SCHEMA: u32 = 1;
pub const ORACLE_SCHEMA: u32 = carsfit_core::oracle::ORACLE_SCHEMA;

pub const LIBRARY_META: &str = "meta.json";
pub const LIBRARY_PARAMS: &str = "params.csv";
pub const LIBRARY_SPECTRA: &str = "spectra.csv";
pub const MODEL_META: &str = "model.json";
pub const MODEL_WEIGHTS: &str = "weights.csv";
pub const MODEL_CENTERS: &str = "centers.csv";

/// Float formatting used by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn hex_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of a file's contents, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_digest(&bytes))
}

pub fn oracle_hash(cfg: &OracleConfig) -> String {
    format!("{:016x}", cfg.fingerprint())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, 0, format!("cannot serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.line() as u64, e.to_string()))
}

/// Reads a JSON document whose `schema` field must equal `expected`.
pub fn read_versioned<T: DeserializeOwned>(
    path: &Path,
    what: &'static str,
    expected: u32,
) -> Result<T> {
    let value: serde_json::Value = read_json(path)?;
    let found = value
        .get("schema")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| {
            Error::format(
                path,
                1,
                format!("{what} file has no integer `schema` field"),
            )
        })?;
    if found != u64::from(expected) {
        return Err(Error::Version {
            path: path.to_path_buf(),
            what,
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::format(path, 0, e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::format(path, line, format!("{kind:?}")),
    }
}

/// Writes `rows` under `header`; each row must have `header.len()` values.
pub fn write_float_csv<'a, I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A numeric CSV: header plus rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FloatTable {
    /// Column-major matrix with one column per row of the file.
    pub fn to_columns(&self) -> DMatrix<f64> {
        let width = self.header.len();
        DMatrix::from_fn(width, self.rows.len(), |i, j| self.rows[j][i])
    }
}

pub fn read_float_csv(path: &Path) -> Result<FloatTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::format(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::format(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .zip(&header)
            .map(|(text, name)| {
                text.trim().parse::<f64>().map_err(|_| Error::Format {
                    path: path.to_path_buf(),
                    line,
                    field: Some(name.clone()),
                    message: format!("`{text}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(FloatTable { header, rows })
}

/// Header of a spectra file: the wavenumber of every column.
pub fn grid_header(grid: &WavenumberGrid) -> Vec<String> {
    grid.axis().iter().map(|v| fmt_f64(*v)).collect()
}

fn check_grid_header(path: &Path, header: &[String], grid: &WavenumberGrid) -> Result<()> {
    if header.len() != grid.len() {
        return Err(Error::format(
            path,
            1,
            format!(
                "{} wavenumber columns, expected {}",
                header.len(),
                grid.len()
            ),
        ));
    }
    for (i, (h, nu)) in header.iter().zip(grid.axis()).enumerate() {
        match h.trim().parse::<f64>() {
            Ok(v) if v == *nu => {}
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: 1,
                    field: Some(h.clone()),
                    message: format!("column {i} does not match wavenumber {}", fmt_f64(*nu)),
                })
            }
        }
    }
    Ok(())
}

fn check_names(path: &Path, header: &[String], names: &[String]) -> Result<()> {
    if header != names {
        return Err(Error::format(
            path,
            1,
            format!("parameter columns {header:?} do not match {names:?}"),
        ));
    }
    Ok(())
}

/// Spectra read from a CSV whose header lists the wavenumbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraFile {
    pub grid: WavenumberGrid,
    pub spectra: Vec<Vec<f64>>,
}

pub fn write_spectra_csv(path: &Path, grid: &WavenumberGrid, spectra: &[Vec<f64>]) -> Result<()> {
    write_float_csv(path, &grid_header(grid), spectra.iter().map(Vec::as_slice))
}

/// Reads a spectra CSV; the grid is reconstructed from the header.
pub fn read_spectra_csv(path: &Path) -> Result<SpectraFile> {
    let table = read_float_csv(path)?;
    let axis = table
        .header
        .iter()
        .map(|h| {
            h.trim().parse::<f64>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                line: 1,
                field: Some(h.clone()),
                message: "header entries must be wavenumbers".into(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = axis.len();
    let step = if m > 1 { 1.0 / (m - 1) as f64 } else { 0.0 };
    let uniform = m >= 2
        && axis.iter().enumerate().all(|(i, v)| {
            let expected = if i + 1 == m { 1.0 } else { step * i as f64 };
            *v == expected
        });
    let grid = if uniform {
        WavenumberGrid::uniform(m)?
    } else {
        WavenumberGrid::from_axis(axis)?
    };
    Ok(SpectraFile {
        grid,
        spectra: table.rows,
    })
}

pub fn write_params_csv(path: &Path, names: &[String], params: &[ParameterVector]) -> Result<()> {
    write_float_csv(path, names, params.iter().map(|p| p.0.as_slice()))
}

/// Reads parameter vectors, checking the header against `names` when given.
pub fn read_params_csv(path: &Path, names: Option<&[String]>) -> Result<Vec<ParameterVector>> {
    let table = read_float_csv(path)?;
    if let Some(names) = names {
        check_names(path, &table.header, names)?;
    }
    Ok(table.rows.into_iter().map(ParameterVector).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub schema: u32,
    pub n_params: usize,
    pub n_wavenumbers: usize,
    pub n_entries: usize,
    pub space: ParameterSpace,
    pub grid: WavenumberGrid,
    pub sampling: Sampling,
    /// Fingerprint of the generator configuration, when known.
    pub oracle_hash: Option<String>,
}

/// Writes `lib` into directory `dir`, creating it if needed.
pub fn save_library(
    lib: &SpectralLibrary,
    dir: &Path,
    oracle: Option<&OracleConfig>,
) -> Result<()> {
    create_dir(dir)?;
    let meta = LibraryMeta {
        schema: LIBRARY_SCHEMA,
        n_params: lib.n_params(),
        n_wavenumbers: lib.n_wavenumbers(),
        n_entries: lib.len(),
        space: lib.space().clone(),
        grid: lib.grid().clone(),
        sampling: lib.sampling().clone(),
        oracle_hash: oracle.map(oracle_hash),
    };
    write_json(&dir.join(LIBRARY_META), &meta)?;
    let params = lib.params().as_slice().chunks(lib.n_params());
    write_float_csv(&dir.join(LIBRARY_PARAMS), &lib.space().names, params)?;
    let spectra: Vec<&[f64]> = (0..lib.len()).map(|n| lib.spectrum(n)).collect();
    write_float_csv(
        &dir.join(LIBRARY_SPECTRA),
        &grid_header(lib.grid()),
        spectra,
    )
}

pub fn load_library(dir: &Path) -> Result<(SpectralLibrary, LibraryMeta)> {
    let meta_path = dir.join(LIBRARY_META);
    let meta: LibraryMeta = read_versioned(&meta_path, "library", LIBRARY_SCHEMA)?;
    let params_path = dir.join(LIBRARY_PARAMS);
    let params = read_float_csv(&params_path)?;
    check_names(&params_path, &params.header, &meta.space.names)?;
    let spectra_path = dir.join(LIBRARY_SPECTRA);
    let spectra = read_float_csv(&spectra_path)?;
    check_grid_header(&spectra_path, &spectra.header, &meta.grid)?;
    for (path, got) in [
        (&params_path, params.rows.len()),
        (&spectra_path, spectra.rows.len()),
    ] {
        if got != meta.n_entries {
            return Err(Error::format(
                path,
                got as u64 + 1,
                format!("{got} rows, but {LIBRARY_META} declares {}", meta.n_entries),
            ));
        }
    }
    let lib = SpectralLibrary::from_parts(
        params.to_columns(),
        spectra.to_columns(),
        meta.grid.clone(),
        meta.space.clone(),
        meta.sampling.clone(),
    )?;
    Ok((lib, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema: u32,
    pub gamma: f64,
    pub standardizer: Standardizer,
    pub n_params: usize,
    pub n_wavenumbers: usize,
    pub n_centers: usize,
    pub grid: WavenumberGrid,
    pub grid_id: String,
    /// Parameter space of the training library; the fitter's bounds.
    pub space: ParameterSpace,
    /// Bounding box of the library parameters (raw units).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub condition_estimate: f64,
    pub oracle_hash: Option<String>,
}

/// A model plus the parameter space it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: SurrogateModel,
    pub space: ParameterSpace,
    pub oracle_hash: Option<String>,
}

pub fn save_model(
    model: &SurrogateModel,
    space: &ParameterSpace,
    oracle_hash: Option<String>,
    dir: &Path,
) -> Result<()> {
    create_dir(dir)?;
    let meta = ModelMeta {
        schema: MODEL_SCHEMA,
        gamma: model.gamma(),
        standardizer: model.standardizer().clone(),
        n_params: model.n_params(),
        n_wavenumbers: model.n_wavenumbers(),
        n_centers: model.n_centers(),
        grid: model.grid().clone(),
        grid_id: model.grid().id().to_string(),
        space: space.clone(),
        lower: model.lower().to_vec(),
        upper: model.upper().to_vec(),
        condition_estimate: model.condition_estimate(),
        oracle_hash,
    };
    write_json(&dir.join(MODEL_META), &meta)?;
    write_float_csv(
        &dir.join(MODEL_WEIGHTS),
        &grid_header(model.grid()),
        model.weights().as_slice().chunks(model.n_wavenumbers()),
    )?;
    let centers = model.centers().as_slice().chunks(model.n_params());
    write_float_csv(&dir.join(MODEL_CENTERS), &space.names, centers)
}

pub fn load_model(dir: &Path) -> Result<StoredModel> {
    let meta_path = dir.join(MODEL_META);
    let meta: ModelMeta = read_versioned(&meta_path, "model", MODEL_SCHEMA)?;
    if meta.grid.len() != meta.n_wavenumbers || meta.space.dim() != meta.n_params {
        return Err(Error::format(
            &meta_path,
            0,
            "declared sizes disagree with grid or space",
        ));
    }
    let w_path = dir.join(MODEL_WEIGHTS);
    let w = read_float_csv(&w_path)?;
    check_grid_header(&w_path, &w.header, &meta.grid)?;
    let c_path = dir.join(MODEL_CENTERS);
    let c = read_float_csv(&c_path)?;
    check_names(&c_path, &c.header, &meta.space.names)?;
    for (path, got) in [(&w_path, w.rows.len()), (&c_path, c.rows.len())] {
        if got != meta.n_centers {
            return Err(Error::format(
                path,
                got as u64 + 1,
                format!(
                    "{got} rows, but {MODEL_META} declares {} centers",
                    meta.n_centers
                ),
            ));
        }
    }
    let model = SurrogateModel::from_parts(
        w.to_columns(),
        c.to_columns(),
        meta.gamma,
        meta.standardizer,
        meta.grid,
        meta.lower,
        meta.upper,
        meta.condition_estimate,
    )?;
    Ok(StoredModel {
        model,
        space: meta.space,
        oracle_hash: meta.oracle_hash,
    })
}

pub fn save_oracle_config(cfg: &OracleConfig, path: &Path) -> Result<()> {
    write_json(path, cfg)
}

pub fn load_oracle_config(path: &Path) -> Result<OracleConfig> {
    let cfg: OracleConfig = read_versioned(path, "oracle config", ORACLE_SCHEMA)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_cv_report(report: &CvReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("cv.json"), report)?;
    let path = dir.join("cv.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["gamma", "error"])
        .map_err(|e| csv_error(&path, e))?;
    for (g, e) in report.gammas.iter().zip(&report.errors) {
        w.write_record([fmt_f64(*g), fmt_f64(*e)])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Per-spectrum outcome of a batch fit.
pub type FitOutcome = std::result::Result<FitResult, String>;

/// One row per spectrum: status, recovered parameters, residual,
/// iterations, convergence flag and winning start. Wall times are kept out
/// of this file so reruns are byte-identical; see [`write_timings`].
pub fn write_results_csv(path: &Path, names: &[String], outcomes: &[FitOutcome]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["index".to_string(), "status".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["residual", "iterations", "converged", "best_start"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, outcome) in outcomes.iter().enumerate() {
        let mut row = vec![i.to_string()];
        match outcome {
            Ok(r) => {
                row.push("ok".into());
                row.extend(r.x_star.iter().map(|v| fmt_f64(*v)));
                row.push(fmt_f64(r.residual));
                row.push(r.iterations.to_string());
                row.push(r.converged.to_string());
                row.push(r.best_start.to_string());
            }
            Err(msg) => {
                row.push(format!("error: {msg}"));
                row.extend(std::iter::repeat_n(String::new(), names.len() + 4));
            }
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Wall-clock timing record written beside deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub median_fit_seconds: Option<f64>,
    pub fit_seconds: Vec<f64>,
}

pub fn write_timings(path: &Path, timings: &Timings) -> Result<()> {
    write_json(path, timings)
}

/// Resolves a `--spectra`/`--truth` argument: a library directory maps to
/// the named file inside it.
pub fn resolve_table(path: &Path, file_in_library: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file_in_library)
    } else {
        path.to_path_buf()
    }
}
