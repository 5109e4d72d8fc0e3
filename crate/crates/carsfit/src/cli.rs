//! Command-line interface.
//!
//! ```text
//! carsfit gen-library --sampling random --n 1000 --seed 7 --out lib/
//! carsfit train --library lib/ --out model/
//! carsfit fit --model model/ --spectra val/ --truth val/ --snr 50 --out fit/
//! carsfit study --study noise --n 500 --snrs inf,20,10,2,1 --out noise/
//! carsfit replay --manifest fit/manifest.json
//! ```
//!
//! Every command writes `manifest.json` beside its outputs; `replay` reruns
//! the recorded command into a fresh directory and compares output hashes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use carsfit_core::tuning::{fit_final, log_grid};
use carsfit_core::{
    build_lagrange, grid_parameters, sample_physical_parameters, Aggregation, CvConfig,
    ErrorMetric, FitOptions, Interval, OracleConfig, ParameterSpace, Sampling, TrainOptions,
    WavenumberGrid,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::batch::{fit_batch, noisy_targets, BatchReport};
use crate::error::{exit, Error, Result};
use crate::formats::{self, FitOutcome, Timings};
use crate::manifest::{
    compare_outputs, ensure_inputs_unchanged, ReplayReport, RunManifest, RunRecord, MANIFEST_FILE,
};
use crate::pipeline::{select_gamma_parallel, OracleRunner};
use crate::studies::{compare_study, noise_study, size_study, StudySettings};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "carsfit",
    version,
    about = "Kernel surrogates for spectral parameter recovery"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a spectral library with the synthetic oracle.
    GenLibrary(GenLibraryArgs),
    /// Select gamma by cross-validation and train the surrogate.
    Train(TrainArgs),
    /// Recover parameters from spectra.
    Fit(FitArgs),
    /// Run a library-size, method-comparison or noise study.
    Study(StudyArgs),
    /// Rerun a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Random,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenLibraryArgs {
    /// Number of spectra (random sampling only).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = SamplingMode::Random)]
    pub sampling: SamplingMode,
    /// Levels per parameter axis (grid sampling only), e.g. `2,2,2,2,2`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Box overrides, e.g. `T=600:2000,x_H2=0:0.5`.
    #[arg(long)]
    pub boxes: Option<String>,
    /// Number of wavenumbers.
    #[arg(long, default_value_t = carsfit_core::oracle::DEFAULT_M)]
    pub m: usize,
    /// Oracle configuration JSON; the built-in defaults otherwise.
    #[arg(long)]
    pub oracle_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Mae,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub library: PathBuf,
    /// `lo:hi:count` (log-spaced) or a single gamma.
    #[arg(long, default_value = "1e-4:1e2:25")]
    pub gamma_grid: String,
    #[arg(long, default_value_t = 5)]
    pub cv_iters: usize,
    /// Training fraction of each CV split.
    #[arg(long, default_value_t = 0.75)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
    pub aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = MetricArg::Mae)]
    pub metric: MetricArg,
    /// Diagonal added to the kernel matrix; 0 keeps exact interpolation.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = carsfit_core::kernel::DEFAULT_MAX_CONDITION)]
    pub max_condition: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Trained model directory.
    #[arg(
        long,
        required_unless_present = "lagrange_library",
        conflicts_with = "lagrange_library"
    )]
    pub model: Option<PathBuf>,
    /// Grid library to fit with Lagrange interpolation instead.
    #[arg(long)]
    pub lagrange_library: Option<PathBuf>,
    /// Spectra CSV, or a library directory.
    #[arg(long)]
    pub spectra: PathBuf,
    /// True parameters CSV, or a library directory.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Signal-to-noise ratio of the added noise, or `inf`.
    #[arg(long, default_value = "inf")]
    pub snr: String,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Size,
    Compare,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub study: StudyKind,
    /// Library sizes for the size study.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "32,100,243,500,1024,3000"
    )]
    pub ns: Vec<usize>,
    /// Levels per axis of each grid in the comparison study.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub grid_levels: Vec<usize>,
    /// Random library size paired with each grid.
    #[arg(long, value_delimiter = ',', default_value = "32,243,1024")]
    pub random_n: Vec<usize>,
    /// SNR levels for the noise study.
    #[arg(long, value_delimiter = ',', default_value = "inf,20,10,2,1")]
    pub snrs: Vec<String>,
    /// Library size for the noise study.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// SNR for the size and comparison studies.
    #[arg(long, default_value = "50")]
    pub snr: String,
    /// Validation spectra per condition.
    #[arg(long, default_value_t = 250)]
    pub validation: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value = "1e-4:1e2:25")]
    pub gamma_grid: String,
    #[arg(long, default_value_t = carsfit_core::oracle::DEFAULT_M)]
    pub m: usize,
    #[arg(long)]
    pub oracle_config: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long)]
    pub quiet: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the rerun; `<manifest dir>/replay` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Replay(args) => {
            let report = replay(&args.manifest, args.out.as_deref())?;
            for name in &report.matched {
                eprintln!("identical: {name}");
            }
            if report.is_identical() {
                Ok(())
            } else {
                Err(Error::Replay(format!(
                    "outputs differ: {}",
                    report.mismatched.join(", ")
                )))
            }
        }
        other => execute(other).map(|_| ()),
    }
}

/// Runs a non-replay command and writes its manifest.
pub fn execute(command: Command) -> Result<RunManifest> {
    let command = absolutize(command)?;
    let start = Instant::now();
    let mut record = RunRecord::default();
    let out = match &command {
        Command::GenLibrary(a) => {
            gen_library(a, &mut record)?;
            a.out.clone()
        }
        Command::Train(a) => {
            train(a, &mut record)?;
            a.out.clone()
        }
        Command::Fit(a) => {
            fit(a, &mut record)?;
            a.out.clone()
        }
        Command::Study(a) => {
            study(a, &mut record)?;
            a.out.clone()
        }
        Command::Replay(_) => return Err(Error::Usage("replay has no manifest of its own".into())),
    };
    record
        .timings
        .insert("total_seconds".into(), start.elapsed().as_secs_f64());
    let manifest = RunManifest::build(command, record, &out)?;
    manifest.write(&out)?;
    Ok(manifest)
}

/// Reruns the command recorded in `manifest_path` into `out` and compares
/// every reproducible output with the recorded hashes.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<ReplayReport> {
    let original = RunManifest::load(manifest_path)?;
    ensure_inputs_unchanged(&original)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("replay"),
    };
    let mut command = original.command.clone();
    match &mut command {
        Command::GenLibrary(a) => a.out = out.clone(),
        Command::Train(a) => a.out = out.clone(),
        Command::Fit(a) => a.out = out.clone(),
        Command::Study(a) => a.out = out.clone(),
        Command::Replay(_) => return Err(Error::Usage("cannot replay a replay".into())),
    }
    let rerun = execute(command)?;
    let out = absolute(&out)?;
    Ok(compare_outputs(&original, &rerun, &out))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

fn absolutize(command: Command) -> Result<Command> {
    let abs = |p: &mut PathBuf| -> Result<()> {
        *p = absolute(p)?;
        Ok(())
    };
    let abs_opt = |p: &mut Option<PathBuf>| -> Result<()> {
        if let Some(p) = p {
            *p = absolute(p)?;
        }
        Ok(())
    };
    let mut command = command;
    match &mut command {
        Command::GenLibrary(a) => {
            abs(&mut a.out)?;
            abs_opt(&mut a.oracle_config)?;
        }
        Command::Train(a) => {
            abs(&mut a.out)?;
            abs(&mut a.library)?;
        }
        Command::Fit(a) => {
            abs(&mut a.out)?;
            abs(&mut a.spectra)?;
            abs_opt(&mut a.model)?;
            abs_opt(&mut a.lagrange_library)?;
            abs_opt(&mut a.truth)?;
        }
        Command::Study(a) => {
            abs(&mut a.out)?;
            abs_opt(&mut a.oracle_config)?;
        }
        Command::Replay(a) => {
            abs(&mut a.manifest)?;
            abs_opt(&mut a.out)?;
        }
    }
    Ok(command)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

type BatchFn<'a> =
    dyn Fn(&[Vec<f64>], Option<&[carsfit_core::ParameterVector]>) -> Result<BatchReport> + 'a;

/// Parses an SNR flag: a positive number or `inf`.
pub fn parse_snr(text: &str) -> Result<f64> {
    let snr: f64 = text.trim().parse().map_err(|_| {
        Error::Usage(format!(
            "invalid SNR `{text}`; use a positive number or `inf`"
        ))
    })?;
    if !(snr > 0.0) {
        return Err(Error::Usage(format!("SNR must be positive, got {text}")));
    }
    Ok(snr)
}

/// Parses `lo:hi:count` (log-spaced, inclusive) or a single value.
pub fn parse_gamma_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || {
        Error::Usage(format!(
            "invalid gamma grid `{text}`; expected lo:hi:count or a value"
        ))
    };
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let grid = match parts.as_slice() {
        [one] => vec![one.parse::<f64>().map_err(|_| bad())?],
        [lo, hi, count] => {
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            let count: usize = count.parse().map_err(|_| bad())?;
            if count == 0 || !(lo > 0.0) || !(hi >= lo) || (count > 1 && hi == lo) {
                return Err(bad());
            }
            log_grid(lo, hi, count)
        }
        _ => return Err(bad()),
    };
    if grid.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

/// Applies `name=lo:hi` overrides to the default parameter space.
pub fn parse_boxes(text: Option<&str>) -> Result<ParameterSpace> {
    let mut space = ParameterSpace::cars();
    let Some(text) = text else {
        return Ok(space);
    };
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || Error::Usage(format!("invalid box `{item}`; expected name=lo:hi"));
        let (name, range) = item.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let idx = space
            .names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown parameter `{}`; known: {}",
                    name.trim(),
                    space.names.join(", ")
                ))
            })?;
        if !(lo <= hi) {
            return Err(bad());
        }
        space.bounds[idx] = Interval::new(lo, hi);
    }
    space.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(space)
}

fn load_oracle(path: Option<&Path>, record: &mut RunRecord) -> Result<OracleConfig> {
    match path {
        Some(p) => {
            record.input(p);
            formats::load_oracle_config(p)
        }
        None => Ok(OracleConfig::default()),
    }
}

fn gen_library(a: &GenLibraryArgs, record: &mut RunRecord) -> Result<()> {
    let space = parse_boxes(a.boxes.as_deref())?;
    let (params, sampling) = match a.sampling {
        SamplingMode::Random => {
            if a.levels.is_some() {
                return Err(Error::Usage(
                    "--levels only applies to --sampling grid".into(),
                ));
            }
            let n =
                a.n.ok_or_else(|| Error::Usage("--sampling random needs --n".into()))?;
            if n == 0 {
                return Err(Error::Usage("--n must be at least 1".into()));
            }
            record.seed("sampling", a.seed);
            let params = sample_physical_parameters(n, &space, a.seed)?;
            (params, Sampling::Random { seed: a.seed })
        }
        SamplingMode::Grid => {
            if a.n.is_some() {
                return Err(Error::Usage(
                    "--n conflicts with --sampling grid; the size is the product of --levels"
                        .into(),
                ));
            }
            let levels = a
                .levels
                .clone()
                .ok_or_else(|| Error::Usage("--sampling grid needs --levels".into()))?;
            if levels.len() != space.dim() {
                return Err(Error::Usage(format!(
                    "--levels needs {} entries, got {}",
                    space.dim(),
                    levels.len()
                )));
            }
            if levels.contains(&0) {
                return Err(Error::Usage("grid levels must be at least 1".into()));
            }
            let params = grid_parameters(&levels, &space)?;
            (params, Sampling::Grid { levels })
        }
    };
    let oracle = load_oracle(a.oracle_config.as_deref(), record)?;
    let grid = WavenumberGrid::uniform(a.m).map_err(|e| Error::Usage(e.to_string()))?;
    let runner = OracleRunner::new(oracle.clone())?;
    let start = Instant::now();
    let lib = runner.library(&params, &space, sampling, &grid)?;
    record
        .timings
        .insert("oracle_seconds".into(), start.elapsed().as_secs_f64());
    formats::save_library(&lib, &a.out, Some(&oracle))?;
    for f in [
        formats::LIBRARY_META,
        formats::LIBRARY_PARAMS,
        formats::LIBRARY_SPECTRA,
    ] {
        record.output(f);
    }
    Ok(())
}

fn library_inputs(dir: &Path, record: &mut RunRecord) {
    for f in [
        formats::LIBRARY_META,
        formats::LIBRARY_PARAMS,
        formats::LIBRARY_SPECTRA,
    ] {
        record.input(&dir.join(f));
    }
}

fn train(a: &TrainArgs, record: &mut RunRecord) -> Result<()> {
    let cfg = CvConfig {
        gamma_grid: parse_gamma_grid(&a.gamma_grid)?,
        iterations: a.cv_iters,
        train_fraction: a.split,
        seed: a.seed,
        aggregation: match a.aggregation {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Median => Aggregation::Median,
        },
        metric: match a.metric {
            MetricArg::Mae => ErrorMetric::MeanAbsolute,
            MetricArg::Mse => ErrorMetric::MeanSquared,
        },
        train: TrainOptions {
            ridge: a.ridge,
            max_condition: a.max_condition,
            ..TrainOptions::default()
        },
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    if !(a.ridge >= 0.0) || !(a.max_condition > 0.0) {
        return Err(Error::Usage(
            "--ridge must be >= 0 and --max-condition > 0".into(),
        ));
    }
    record.seed("cv", a.seed);
    library_inputs(&a.library, record);
    let (lib, meta) = formats::load_library(&a.library)?;
    let start = Instant::now();
    let report = select_gamma_parallel(&lib, &cfg)?;
    record
        .timings
        .insert("cv_seconds".into(), start.elapsed().as_secs_f64());
    let start = Instant::now();
    let model = fit_final(&lib, report.gamma_star, &cfg.train)?;
    record
        .timings
        .insert("train_seconds".into(), start.elapsed().as_secs_f64());
    formats::save_model(&model, lib.space(), meta.oracle_hash, &a.out)?;
    formats::write_cv_report(&report, &a.out)?;
    for f in [
        formats::MODEL_META,
        formats::MODEL_WEIGHTS,
        formats::MODEL_CENTERS,
        "cv.json",
        "cv.csv",
    ] {
        record.output(f);
    }
    Ok(())
}

#[derive(Serialize)]
struct FitSummaryFile<'a> {
    method: &'static str,
    snr: f64,
    starts: usize,
    seed: u64,
    #[serde(flatten)]
    summary: &'a crate::batch::BatchSummary,
}

fn fit(a: &FitArgs, record: &mut RunRecord) -> Result<()> {
    let snr = parse_snr(&a.snr)?;
    if a.starts == 0 {
        return Err(Error::Usage("--starts must be at least 1".into()));
    }
    let opts = FitOptions {
        starts: a.starts,
        seed: a.seed,
        max_iterations: a.max_iterations,
        ..FitOptions::default()
    };
    record.seed("fit", a.seed);
    record.seed("noise", a.seed);
    let spectra_path = formats::resolve_table(&a.spectra, formats::LIBRARY_SPECTRA);
    record.input(&spectra_path);
    let spectra = formats::read_spectra_csv(&spectra_path)?;
    let truth_path = a
        .truth
        .as_ref()
        .map(|t| formats::resolve_table(t, formats::LIBRARY_PARAMS));

    let run_batch =
        |space: &ParameterSpace, grid: &WavenumberGrid, f: &BatchFn| -> Result<BatchReport> {
            if grid != &spectra.grid {
                return Err(carsfit_core::Error::Domain(format!(
                "spectra grid ({} points, id {}) differs from the model grid ({} points, id {})",
                spectra.grid.len(),
                spectra.grid.id(),
                grid.len(),
                grid.id()
            ))
                .into());
            }
            let truths = match &truth_path {
                Some(p) => Some(formats::read_params_csv(p, Some(&space.names))?),
                None => None,
            };
            let targets = noisy_targets(&spectra.spectra, grid, snr, a.seed)?;
            f(&targets, truths.as_deref())
        };

    let (method, names, report) = if let Some(dir) = &a.model {
        for f in [
            formats::MODEL_META,
            formats::MODEL_WEIGHTS,
            formats::MODEL_CENTERS,
        ] {
            record.input(&dir.join(f));
        }
        let stored = formats::load_model(dir)?;
        let report = run_batch(&stored.space, stored.model.grid(), &|t, tr| {
            fit_batch(t, &stored.model, &stored.space, &opts, tr)
        })?;
        ("kernel", stored.space.names.clone(), report)
    } else {
        let dir = a.lagrange_library.as_ref().ok_or_else(|| {
            Error::Usage("one of --model or --lagrange-library is required".into())
        })?;
        library_inputs(dir, record);
        let (lib, _) = formats::load_library(dir)?;
        let interp = build_lagrange(&lib)?;
        let report = run_batch(lib.space(), lib.grid(), &|t, tr| {
            fit_batch(t, &interp, lib.space(), &opts, tr)
        })?;
        ("lagrange", lib.space().names.clone(), report)
    };
    if let Some(p) = &truth_path {
        record.input(p);
    }

    create_out(&a.out)?;
    formats::write_results_csv(&a.out.join("results.csv"), &names, &report.outcomes)?;
    formats::write_json(
        &a.out.join("summary.json"),
        &FitSummaryFile {
            method,
            snr,
            starts: a.starts,
            seed: a.seed,
            summary: &report.summary,
        },
    )?;
    write_fit_timings(&a.out, &report)?;
    record.output("results.csv");
    record.output("summary.json");
    record.volatile.push("timings.json".into());
    record
        .timings
        .insert("fit_seconds_total".into(), report.fit_seconds.iter().sum());
    let failures: Vec<&FitOutcome> = report.outcomes.iter().filter(|o| o.is_err()).collect();
    if !failures.is_empty() {
        eprintln!(
            "{} of {} fits failed; see results.csv",
            failures.len(),
            report.outcomes.len()
        );
    }
    Ok(())
}

fn write_fit_timings(dir: &Path, report: &BatchReport) -> Result<()> {
    formats::write_timings(
        &dir.join("timings.json"),
        &Timings {
            total_seconds: report.fit_seconds.iter().sum(),
            median_fit_seconds: report.median_fit_seconds(),
            fit_seconds: report.fit_seconds.clone(),
        },
    )
}

fn study(a: &StudyArgs, record: &mut RunRecord) -> Result<()> {
    let mut settings = StudySettings::new(a.validation, a.seed);
    if a.validation == 0 {
        return Err(Error::Usage("--validation must be at least 1".into()));
    }
    if a.starts == 0 {
        return Err(Error::Usage("--starts must be at least 1".into()));
    }
    settings.grid = WavenumberGrid::uniform(a.m).map_err(|e| Error::Usage(e.to_string()))?;
    settings.oracle = load_oracle(a.oracle_config.as_deref(), record)?;
    settings.cv.gamma_grid = parse_gamma_grid(&a.gamma_grid)?;
    settings.fit.starts = a.starts;
    settings.snr = parse_snr(&a.snr)?;
    settings.progress = !a.quiet;
    for (name, seed) in [
        ("cv", settings.cv.seed),
        ("fit", settings.fit.seed),
        ("validation", settings.validation_seed),
        ("library", settings.library_seed),
        ("noise", settings.noise_seed),
    ] {
        record.seed(name, seed);
    }
    let report = match a.study {
        StudyKind::Size => {
            if a.ns.is_empty() || a.ns.iter().any(|&n| n < 2) {
                return Err(Error::Usage("--ns needs sizes of at least 2".into()));
            }
            size_study(&settings, &a.ns)?
        }
        StudyKind::Compare => {
            if a.grid_levels.iter().any(|&l| l < 2) || a.random_n.iter().any(|&n| n < 2) {
                return Err(Error::Usage(
                    "grid levels and library sizes must be at least 2".into(),
                ));
            }
            compare_study(&settings, &a.grid_levels, &a.random_n)?
        }
        StudyKind::Noise => {
            let snrs = a
                .snrs
                .iter()
                .map(|s| parse_snr(s))
                .collect::<Result<Vec<f64>>>()?;
            if a.n < 2 {
                return Err(Error::Usage("--n must be at least 2".into()));
            }
            noise_study(&settings, a.n, &snrs)?
        }
    };
    report.write(&a.out)?;
    record.output("study.csv");
    record.output("conditions.csv");
    record.volatile.push("timings.json".into());
    Ok(())
}

/// Path of the manifest a command writes into `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.join(MANIFEST_FILE)
}
