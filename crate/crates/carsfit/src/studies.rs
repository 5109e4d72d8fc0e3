//! Sweeps over library size, interpolation method and noise level.
//!
//! Every study fits the same validation set (drawn once from the physical
//! region) and emits tidy rows, one per fit per condition, holding the
//! absolute error of each recovered parameter. Wall times are collected
//! separately because they are not reproducible.

use std::path::Path;
use std::time::Instant;

use carsfit_core::tuning::fit_final;
use carsfit_core::{
    build_lagrange, grid_parameters, sample_physical_parameters, CvConfig, FitOptions,
    OracleConfig, ParameterSpace, ParameterVector, Sampling, WavenumberGrid,
};
use serde::{Deserialize, Serialize};

use crate::batch::{fit_batch, fit_with_lagrange, noisy_targets, BatchReport};
use crate::error::{Error, Result};
use crate::formats::{fmt_f64, write_json};
use crate::pipeline::{select_gamma_parallel, OracleRunner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kernel,
    Lagrange,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kernel => "kernel",
            Method::Lagrange => "lagrange",
        }
    }
}

/// Settings shared by all studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySettings {
    pub space: ParameterSpace,
    pub grid: WavenumberGrid,
    pub oracle: OracleConfig,
    pub cv: CvConfig,
    pub fit: FitOptions,
    pub validation: usize,
    pub validation_seed: u64,
    pub library_seed: u64,
    pub noise_seed: u64,
    /// SNR for the size and comparison studies.
    pub snr: f64,
    #[serde(skip)]
    pub progress: bool,
}

impl StudySettings {
    pub fn new(validation: usize, seed: u64) -> Self {
        StudySettings {
            space: ParameterSpace::cars(),
            grid: WavenumberGrid::uniform(carsfit_core::oracle::DEFAULT_M)
                .expect("default grid is valid"),
            oracle: OracleConfig::default(),
            cv: CvConfig {
                seed,
                ..CvConfig::default()
            },
            fit: FitOptions {
                seed,
                ..FitOptions::default()
            },
            validation,
            validation_seed: seed.wrapping_add(1),
            library_seed: seed.wrapping_add(2),
            noise_seed: seed.wrapping_add(3),
            snr: 50.0,
            progress: false,
        }
    }
}

/// One fit of one validation spectrum under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study: String,
    pub condition: String,
    pub method: Method,
    pub library_n: usize,
    pub snr: f64,
    pub fit: usize,
    pub status: String,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    /// Recovered parameters; NaN when the fit failed.
    pub estimates: Vec<f64>,
    /// `|x̂ − x|` per parameter; NaN when the fit failed.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub condition: String,
    pub method: Method,
    pub library_n: usize,
    pub snr: f64,
    pub gamma_star: Option<f64>,
    pub cv_error: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub condition: String,
    pub method: Method,
    pub fit: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub names: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub conditions: Vec<ConditionRecord>,
    /// Per-fit wall times, paired with `rows` by (condition, method, fit).
    pub timings: Vec<TimingRow>,
    /// Library build plus training time per condition, in seconds.
    pub setup_seconds: Vec<(String, Method, f64)>,
}

impl StudyReport {
    fn new(study: &str, names: &[String]) -> Self {
        StudyReport {
            study: study.into(),
            names: names.to_vec(),
            rows: Vec::new(),
            conditions: Vec::new(),
            timings: Vec::new(),
            setup_seconds: Vec::new(),
        }
    }

    /// Rows of one condition and method.
    pub fn rows_for<'a>(
        &'a self,
        condition: &'a str,
        method: Method,
    ) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.condition == condition && r.method == method)
    }

    /// Median absolute error of parameter `index` over the successful fits
    /// of one condition and method.
    pub fn median_error(&self, condition: &str, method: Method, index: usize) -> Option<f64> {
        let errs: Vec<f64> = self
            .rows_for(condition, method)
            .filter(|r| r.status == "ok")
            .map(|r| r.errors[index])
            .collect();
        carsfit_core::stats::median(&errs)
    }

    fn record_batch(
        &mut self,
        condition: &str,
        method: Method,
        library_n: usize,
        snr: f64,
        truths: &[ParameterVector],
        batch: &BatchReport,
    ) {
        for (i, (outcome, secs)) in batch.outcomes.iter().zip(&batch.fit_seconds).enumerate() {
            let row = match outcome {
                Ok(r) => StudyRow {
                    study: self.study.clone(),
                    condition: condition.into(),
                    method,
                    library_n,
                    snr,
                    fit: i,
                    status: "ok".into(),
                    converged: r.converged,
                    residual: r.residual,
                    iterations: r.iterations,
                    estimates: r.x_star.0.clone(),
                    errors: r
                        .x_star
                        .iter()
                        .zip(truths[i].iter())
                        .map(|(a, b)| (a - b).abs())
                        .collect(),
                },
                Err(msg) => StudyRow {
                    study: self.study.clone(),
                    condition: condition.into(),
                    method,
                    library_n,
                    snr,
                    fit: i,
                    status: format!("error: {msg}"),
                    converged: false,
                    residual: f64::NAN,
                    iterations: 0,
                    estimates: vec![f64::NAN; self.names.len()],
                    errors: vec![f64::NAN; self.names.len()],
                },
            };
            self.rows.push(row);
            self.timings.push(TimingRow {
                condition: condition.into(),
                method,
                fit: i,
                seconds: *secs,
            });
        }
    }

    /// Writes `study.csv`, `conditions.csv` and `timings.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("study.csv");
        let mut w = csv_writer(&path)?;
        let mut header: Vec<String> = [
            "study",
            "condition",
            "method",
            "library_n",
            "snr",
            "fit",
            "status",
            "converged",
            "residual",
            "iterations",
        ]
        .map(String::from)
        .to_vec();
        header.extend(self.names.iter().map(|n| format!("est_{n}")));
        header.extend(self.names.iter().map(|n| format!("abs_err_{n}")));
        w.write_record(&header)
            .map_err(|e| Error::format(&path, 1, e.to_string()))?;
        for r in &self.rows {
            let mut rec = vec![
                r.study.clone(),
                r.condition.clone(),
                r.method.as_str().into(),
                r.library_n.to_string(),
                fmt_f64(r.snr),
                r.fit.to_string(),
                r.status.clone(),
                r.converged.to_string(),
                fmt_f64(r.residual),
                r.iterations.to_string(),
            ];
            rec.extend(r.estimates.iter().map(|v| fmt_f64(*v)));
            rec.extend(r.errors.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)
                .map_err(|e| Error::format(&path, 0, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("conditions.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "condition",
            "method",
            "library_n",
            "snr",
            "gamma_star",
            "cv_error",
            "status",
        ])
        .map_err(|e| Error::format(&path, 1, e.to_string()))?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for c in &self.conditions {
            w.write_record([
                c.condition.clone(),
                c.method.as_str().into(),
                c.library_n.to_string(),
                fmt_f64(c.snr),
                opt(c.gamma_star),
                opt(c.cv_error),
                c.status.clone(),
            ])
            .map_err(|e| Error::format(&path, 0, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        #[derive(Serialize)]
        struct TimingFile<'a> {
            setup_seconds: &'a [(String, Method, f64)],
            fits: &'a [TimingRow],
        }
        write_json(
            &dir.join("timings.json"),
            &TimingFile {
                setup_seconds: &self.setup_seconds,
                fits: &self.timings,
            },
        )
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Clean validation spectra and their parameters.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub params: Vec<ParameterVector>,
    pub spectra: Vec<Vec<f64>>,
}

pub fn validation_set(settings: &StudySettings, runner: &OracleRunner) -> Result<ValidationSet> {
    let params = sample_physical_parameters(
        settings.validation,
        &settings.space,
        settings.validation_seed,
    )?;
    let spectra = runner.call_many(&params, &settings.grid)?;
    Ok(ValidationSet { params, spectra })
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

struct Study<'a> {
    settings: &'a StudySettings,
    runner: OracleRunner,
    validation: ValidationSet,
    report: StudyReport,
}

impl<'a> Study<'a> {
    fn new(name: &str, settings: &'a StudySettings) -> Result<Self> {
        let runner = OracleRunner::new(settings.oracle.clone())?;
        let validation = validation_set(settings, &runner)?;
        Ok(Study {
            settings,
            runner,
            validation,
            report: StudyReport::new(name, &settings.space.names),
        })
    }

    fn log(&self, msg: &str) {
        if self.settings.progress {
            eprintln!("[{}] {msg}", self.report.study);
        }
    }

    fn targets(&self, snr: f64) -> Result<Vec<Vec<f64>>> {
        noisy_targets(
            &self.validation.spectra,
            &self.settings.grid,
            snr,
            self.settings.noise_seed,
        )
    }

    fn fail(&mut self, condition: &str, method: Method, n: usize, snr: f64, err: &Error) {
        self.log(&format!("{condition} ({}) failed: {err}", method.as_str()));
        self.report.conditions.push(ConditionRecord {
            condition: condition.into(),
            method,
            library_n: n,
            snr,
            gamma_star: None,
            cv_error: None,
            status: format!("error: {err}"),
        });
    }

    /// Random library of size `n`, CV-tuned, fitted at each of `snrs`.
    fn kernel_conditions(&mut self, n: usize, snrs: &[(String, f64)]) {
        let s = self.settings;
        let start = Instant::now();
        let trained = (|| -> Result<_> {
            let params = sample_physical_parameters(n, &s.space, s.library_seed)?;
            let lib = self.runner.library(
                &params,
                &s.space,
                Sampling::Random {
                    seed: s.library_seed,
                },
                &s.grid,
            )?;
            let cv = select_gamma_parallel(&lib, &s.cv)?;
            let model = fit_final(&lib, cv.gamma_star, &s.cv.train)?;
            Ok((cv, model))
        })();
        let setup = start.elapsed().as_secs_f64();
        let (cv, model) = match trained {
            Ok(t) => t,
            Err(e) => {
                for (label, snr) in snrs {
                    self.fail(label, Method::Kernel, n, *snr, &e);
                }
                return;
            }
        };
        for (label, snr) in snrs {
            self.log(&format!(
                "{label}: kernel, N = {n}, gamma* = {:.4e}",
                cv.gamma_star
            ));
            self.report
                .setup_seconds
                .push((label.clone(), Method::Kernel, setup));
            let batch = self.targets(*snr).and_then(|t| {
                fit_batch(&t, &model, &s.space, &s.fit, Some(&self.validation.params))
            });
            match batch {
                Ok(b) => {
                    self.report.conditions.push(ConditionRecord {
                        condition: label.clone(),
                        method: Method::Kernel,
                        library_n: n,
                        snr: *snr,
                        gamma_star: Some(cv.gamma_star),
                        cv_error: Some(cv.best_error()),
                        status: "ok".into(),
                    });
                    let truths = self.validation.params.clone();
                    self.report
                        .record_batch(label, Method::Kernel, n, *snr, &truths, &b);
                }
                Err(e) => self.fail(label, Method::Kernel, n, *snr, &e),
            }
        }
    }

    fn lagrange_condition(&mut self, label: &str, levels: usize) {
        let s = self.settings;
        let levels_vec = vec![levels; s.space.dim()];
        let n = levels_vec.iter().product();
        self.log(&format!("{label}: lagrange, {levels} levels per axis"));
        let start = Instant::now();
        let built = (|| -> Result<_> {
            let params = grid_parameters(&levels_vec, &s.space)?;
            let lib = self.runner.library(
                &params,
                &s.space,
                Sampling::Grid {
                    levels: levels_vec.clone(),
                },
                &s.grid,
            )?;
            Ok(build_lagrange(&lib)?)
        })();
        self.report.setup_seconds.push((
            label.into(),
            Method::Lagrange,
            start.elapsed().as_secs_f64(),
        ));
        let batch = built.and_then(|interp| {
            let targets = self.targets(s.snr)?;
            fit_with_lagrange(
                &targets,
                &interp,
                &s.space,
                &s.fit,
                Some(&self.validation.params),
            )
        });
        match batch {
            Ok(b) => {
                self.report.conditions.push(ConditionRecord {
                    condition: label.into(),
                    method: Method::Lagrange,
                    library_n: n,
                    snr: s.snr,
                    gamma_star: None,
                    cv_error: None,
                    status: "ok".into(),
                });
                let truths = self.validation.params.clone();
                self.report
                    .record_batch(label, Method::Lagrange, n, s.snr, &truths, &b);
            }
            Err(e) => self.fail(label, Method::Lagrange, n, s.snr, &e),
        }
    }
}

/// Recovery error against library size, at `settings.snr`.
pub fn size_study(settings: &StudySettings, ns: &[usize]) -> Result<StudyReport> {
    let mut study = Study::new("size", settings)?;
    for &n in ns {
        study.kernel_conditions(n, &[(format!("n={n}"), settings.snr)]);
    }
    Ok(study.report)
}

/// Kernel method on random libraries against Lagrange interpolation on
/// regular grids. Grid `i` has `grid_levels[i]` levels per axis and is
/// paired with a random library of `random_ns[i]` entries.
pub fn compare_study(
    settings: &StudySettings,
    grid_levels: &[usize],
    random_ns: &[usize],
) -> Result<StudyReport> {
    if grid_levels.len() != random_ns.len() {
        return Err(Error::Usage(format!(
            "{} grid sizes but {} random library sizes",
            grid_levels.len(),
            random_ns.len()
        )));
    }
    let mut study = Study::new("compare", settings)?;
    for (&levels, &n) in grid_levels.iter().zip(random_ns) {
        let label = format!("pair={levels}^{}", settings.space.dim());
        study.kernel_conditions(n, &[(label.clone(), settings.snr)]);
        study.lagrange_condition(&label, levels);
    }
    Ok(study.report)
}

/// One library of `n` entries fitted at every SNR in `snrs`.
pub fn noise_study(settings: &StudySettings, n: usize, snrs: &[f64]) -> Result<StudyReport> {
    let mut study = Study::new("noise", settings)?;
    let labelled: Vec<(String, f64)> = snrs
        .iter()
        .map(|&s| (format!("snr={}", snr_label(s)), s))
        .collect();
    study.kernel_conditions(n, &labelled);
    Ok(study.report)
}
