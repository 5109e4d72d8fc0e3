//! Synthetic spectrum generator standing in for an expensive physics code.
//!
//! The intensity at normalized wavenumber `ν` is `|χ(ν)|²` with
//!
//! ```text
//! χ(ν) = Σ_s x_s Σ_{l=1..L} a_{s,l}(T) / (p_{s,l} − ν − i σ_s(T))  +  x_nr · C_nr
//! a_{s,l}(T) = exp(−e_s l / (T / 1000))
//! σ_s(T)     = σ0_s (1 + 0.5 T / 1000)
//! p_{s,l}    = o_s + l d_s
//! ```
//!
//! Resonant species interfere with each other and with the real, flat
//! non-resonant background, and the temperature changes both band
//! populations and line widths. Spectra are returned log-transformed,
//! `log(max(I, floor))`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{cars, Interval};

/// Version written to the `schema` field of serialized oracle configs.
pub const ORACLE_SCHEMA: u32 = 1;

/// Default number of wavenumber samples.
pub const DEFAULT_M: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridId(pub u64);

impl core::fmt::Display for GridId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GridSpec {
    Uniform { m: usize },
    Explicit { axis: Vec<f64> },
}

/// Fixed, strictly increasing set of normalized wavenumbers in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct WavenumberGrid {
    uniform: bool,
    axis: Vec<f64>,
}

impl WavenumberGrid {
    /// `m` evenly spaced points including both endpoints.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Domain(format!(
                "wavenumber grid needs M >= 2, got {m}"
            )));
        }
        let step = 1.0 / (m - 1) as f64;
        let mut axis: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
        axis[m - 1] = 1.0;
        Ok(WavenumberGrid {
            uniform: true,
            axis,
        })
    }

    pub fn from_axis(axis: Vec<f64>) -> Result<Self> {
        if axis.len() < 2 {
            return Err(Error::Domain(format!(
                "wavenumber grid needs M >= 2, got {}",
                axis.len()
            )));
        }
        if axis.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("wavenumbers must lie in [0, 1]".into()));
        }
        if axis.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "wavenumbers must be strictly increasing".into(),
            ));
        }
        Ok(WavenumberGrid {
            uniform: false,
            axis,
        })
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// FNV-1a over the point count and the bit patterns of the axis.
    pub fn id(&self) -> GridId {
        let mut h = Fnv::new();
        h.write_u64(self.axis.len() as u64);
        for v in &self.axis {
            h.write_u64(v.to_bits());
        }
        GridId(h.finish())
    }
}

impl TryFrom<GridSpec> for WavenumberGrid {
    type Error = Error;
    fn try_from(layout: GridSpec) -> Result<Self> {
        match layout {
            GridSpec::Uniform { m } => WavenumberGrid::uniform(m),
            GridSpec::Explicit { axis } => WavenumberGrid::from_axis(axis),
        }
    }
}

impl From<WavenumberGrid> for GridSpec {
    fn from(g: WavenumberGrid) -> Self {
        if g.uniform {
            GridSpec::Uniform { m: g.axis.len() }
        } else {
            GridSpec::Explicit { axis: g.axis }
        }
    }
}

pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Log-intensities sampled on a particular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub grid: GridId,
}

impl Spectrum {
    pub fn new(values: Vec<f64>, grid: &WavenumberGrid) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                what: "spectrum",
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum values"));
        }
        Ok(Spectrum {
            values,
            grid: grid.id(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One resonant species: `lines` Lorentzian lines at `offset + l * spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSeries {
    pub species: String,
    /// Index of this species' mole fraction in the parameter vector.
    pub parameter: usize,
    pub offset: f64,
    pub spacing: f64,
    /// Population energy scale `e_s`.
    pub energy: f64,
    /// Base half-width `σ0_s`.
    pub width: f64,
    pub lines: usize,
}

impl LineSeries {
    fn position(&self, l: usize) -> f64 {
        self.offset + l as f64 * self.spacing
    }
}

/// Complete description of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub schema: u32,
    pub temperature_parameter: usize,
    pub series: Vec<LineSeries>,
    /// Index of the non-resonant species' mole fraction.
    pub nonresonant_parameter: usize,
    /// Real susceptibility `C_nr` of the non-resonant species.
    pub nonresonant_susceptibility: f64,
    /// Intensities are floored here before the log so `log(0)` never occurs.
    pub intensity_floor: f64,
    /// Inputs accepted by [`generate_spectrum`], one interval per parameter.
    pub domain: Vec<Interval>,
    /// Artificial per-call cost for benchmarking, in seconds.
    #[serde(default)]
    pub call_delay_s: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let series = |species: &str, parameter, offset, spacing, energy, width| LineSeries {
            species: species.to_string(),
            parameter,
            offset,
            spacing,
            energy,
            width,
            lines: 8,
        };
        let mut domain = alloc::vec![Interval::new(0.0, 1.0); cars::P];
        domain[cars::TEMPERATURE] = Interval::new(cars::BOUNDS[0].0, cars::BOUNDS[0].1);
        OracleConfig {
            schema: ORACLE_SCHEMA,
            temperature_parameter: cars::TEMPERATURE,
            series: alloc::vec![
                series("N2", cars::N2, 0.05, 0.03, 0.3, 0.004),
                series("H2", cars::H2, 0.40, 0.025, 0.5, 0.003),
                series("O2", cars::O2, 0.70, 0.02, 0.4, 0.005),
            ],
            nonresonant_parameter: cars::H2O,
            nonresonant_susceptibility: 0.5,
            intensity_floor: 1e-12,
            domain,
            call_delay_s: 0.0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != ORACLE_SCHEMA {
            return Err(Error::Domain(format!(
                "unsupported oracle config schema {} (expected {ORACLE_SCHEMA})",
                self.schema
            )));
        }
        let p = self.domain.len();
        let in_range = |i: usize| i < p;
        if !in_range(self.temperature_parameter) || !in_range(self.nonresonant_parameter) {
            return Err(Error::Domain("oracle parameter index out of range".into()));
        }
        for s in &self.series {
            if !in_range(s.parameter) {
                return Err(Error::Domain(format!(
                    "series {} refers to parameter {}",
                    s.species, s.parameter
                )));
            }
            if !(s.width > 0.0) || !s.energy.is_finite() || s.lines == 0 {
                return Err(Error::Domain(format!(
                    "series {} has invalid constants",
                    s.species
                )));
            }
            if (1..=s.lines).any(|l| !(0.0..=1.0).contains(&s.position(l))) {
                return Err(Error::Domain(format!(
                    "series {} has line positions outside [0, 1]",
                    s.species
                )));
            }
        }
        if !(self.intensity_floor > 0.0) {
            return Err(Error::Domain("intensity floor must be positive".into()));
        }
        if !self.nonresonant_susceptibility.is_finite() {
            return Err(Error::Domain(
                "non-resonant susceptibility must be finite".into(),
            ));
        }
        if !(self.call_delay_s >= 0.0) || !self.call_delay_s.is_finite() {
            return Err(Error::Domain(
                "call delay must be a finite non-negative time".into(),
            ));
        }
        if self.domain.iter().any(|b| !(b.lo <= b.hi)) {
            return Err(Error::Domain("oracle domain has an empty interval".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.domain.len()
    }

    /// Stable fingerprint of every field, used to tie libraries and models
    /// to the generator that produced them.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(u64::from(self.schema));
        h.write_u64(self.temperature_parameter as u64);
        for s in &self.series {
            for b in s.species.bytes() {
                h.write_u64(u64::from(b));
            }
            h.write_u64(s.parameter as u64);
            for v in [s.offset, s.spacing, s.energy, s.width] {
                h.write_u64(v.to_bits());
            }
            h.write_u64(s.lines as u64);
        }
        h.write_u64(self.nonresonant_parameter as u64);
        h.write_u64(self.nonresonant_susceptibility.to_bits());
        h.write_u64(self.intensity_floor.to_bits());
        for b in &self.domain {
            h.write_u64(b.lo.to_bits());
            h.write_u64(b.hi.to_bits());
        }
        h.finish()
    }
}

fn check_domain(params: &[f64], cfg: &OracleConfig) -> Result<()> {
    if params.len() != cfg.n_params() {
        return Err(Error::Dimension {
            what: "oracle parameters",
            expected: cfg.n_params(),
            got: params.len(),
        });
    }
    for (i, (&v, b)) in params.iter().zip(&cfg.domain).enumerate() {
        if !b.contains(v) {
            let name = cars::NAMES
                .get(i)
                .map_or_else(|| format!("x{i}"), |s| s.to_string());
            return Err(Error::OutOfDomain {
                name,
                value: v,
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    Ok(())
}

/// Evaluates the log-intensity spectrum for `params` on `grid`.
///
/// Pure: the same inputs always give bit-identical output.
pub fn generate_spectrum(
    params: &[f64],
    grid: &WavenumberGrid,
    cfg: &OracleConfig,
) -> Result<Spectrum> {
    check_domain(params, cfg)?;
    let values = log_intensities(params, grid.axis(), cfg);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("oracle"));
    }
    Ok(Spectrum {
        values,
        grid: grid.id(),
    })
}

struct Line {
    position: f64,
    amplitude: f64,
    half_width: f64,
}

fn log_intensities(params: &[f64], axis: &[f64], cfg: &OracleConfig) -> Vec<f64> {
    let t_k = params[cfg.temperature_parameter] / 1000.0;
    let lines: Vec<Line> = cfg
        .series
        .iter()
        .flat_map(|s| {
            let fraction = params[s.parameter];
            let half_width = s.width * (1.0 + 0.5 * t_k);
            (1..=s.lines).map(move |l| Line {
                position: s.position(l),
                amplitude: fraction * libm::exp(-s.energy * l as f64 / t_k),
                half_width,
            })
        })
        .collect();
    let background = params[cfg.nonresonant_parameter] * cfg.nonresonant_susceptibility;

    axis.iter()
        .map(|&nu| {
            let (mut re, mut im) = (background, 0.0);
            for line in &lines {
                // a / (Δ − iσ) = a (Δ + iσ) / (Δ² + σ²)
                let delta = line.position - nu;
                let denom = delta * delta + line.half_width * line.half_width;
                re += line.amplitude * delta / denom;
                im += line.amplitude * line.half_width / denom;
            }
            libm::log(f64::max(re * re + im * im, cfg.intensity_floor))
        })
        .collect()
}

/// Signal-to-noise ratio; `f64::INFINITY` means noiseless.
pub fn validate_snr(snr: f64) -> Result<()> {
    if snr.is_nan() || snr <= 0.0 {
        return Err(Error::Domain(format!("SNR must be positive, got {snr}")));
    }
    Ok(())
}

/// Adds i.i.d. `N(0, (1/snr)²)` noise to every log-intensity.
///
/// An additive standard deviation of `1/snr` on `log I` is a relative
/// intensity error of about `1/snr`, i.e. noise proportional to intensity.
pub fn add_noise(spectrum: &Spectrum, snr: f64, seed: u64) -> Result<Spectrum> {
    validate_snr(snr)?;
    if snr.is_infinite() {
        return Ok(spectrum.clone());
    }
    let normal = Normal::new(0.0, 1.0 / snr)
        .map_err(|e| Error::Domain(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = spectrum
        .values
        .iter()
        .map(|&v| v + normal.sample(&mut rng))
        .collect();
    Ok(Spectrum {
        values,
        grid: spectrum.grid,
    })
}

/// Per-call cost the benchmark harness should emulate.
pub fn oracle_cost_model(cfg: &OracleConfig) -> Duration {
    Duration::from_secs_f64(cfg.call_delay_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> WavenumberGrid {
        WavenumberGrid::uniform(DEFAULT_M).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        OracleConfig::default().validate().unwrap();
    }

    #[test]
    fn uniform_grid_endpoints() {
        let g = WavenumberGrid::uniform(5).unwrap();
        assert_eq!(g.axis(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(WavenumberGrid::uniform(1).is_err());
    }

    #[test]
    fn explicit_grid_must_increase() {
        assert!(WavenumberGrid::from_axis(alloc::vec![0.1, 0.1]).is_err());
        assert!(WavenumberGrid::from_axis(alloc::vec![0.1, 1.2]).is_err());
        assert!(WavenumberGrid::from_axis(alloc::vec![0.0, 0.3, 0.9]).is_ok());
    }

    #[test]
    fn pure_nonresonant_gas_is_flat() {
        let cfg = OracleConfig::default();
        let s = generate_spectrum(&[1200.0, 0.0, 0.0, 0.0, 1.0], &grid(), &cfg).unwrap();
        let expected = libm::log(0.5 * 0.5);
        assert!(s.values.iter().all(|&v| v == expected));
    }

    #[test]
    fn single_point_matches_closed_form() {
        // Independent numpy evaluation of log|Σ_l a_l / (p_l − ν − iσ)|² for
        // pure N2 at T = 1500 K, ν = 0.5.
        let cfg = OracleConfig::default();
        let g = WavenumberGrid::from_axis(alloc::vec![0.0, 0.5]).unwrap();
        let s = generate_spectrum(&[1500.0, 1.0, 0.0, 0.0, 0.0], &g, &cfg).unwrap();
        approx::assert_relative_eq!(s.values[1], 4.774_209_243_464_5, max_relative = 1e-12);
    }

    #[test]
    fn deterministic() {
        let cfg = OracleConfig::default();
        let x = [1734.5, 0.61, 0.12, 0.09, 0.18];
        let a = generate_spectrum(&x, &grid(), &cfg).unwrap();
        let b = generate_spectrum(&x, &grid(), &cfg).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn out_of_domain_rejected() {
        let cfg = OracleConfig::default();
        assert!(matches!(
            generate_spectrum(&[200.0, 0.5, 0.2, 0.1, 0.2], &grid(), &cfg),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            generate_spectrum(&[1000.0, 0.5, 0.2], &grid(), &cfg),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn infinite_snr_is_identity() {
        let cfg = OracleConfig::default();
        let s = generate_spectrum(&[900.0, 0.7, 0.1, 0.1, 0.1], &grid(), &cfg).unwrap();
        assert_eq!(add_noise(&s, f64::INFINITY, 3).unwrap(), s);
    }

    #[test]
    fn nonpositive_snr_rejected() {
        let s = Spectrum::new(alloc::vec![0.0; 4], &WavenumberGrid::uniform(4).unwrap()).unwrap();
        assert!(add_noise(&s, 0.0, 1).is_err());
        assert!(add_noise(&s, -3.0, 1).is_err());
        assert!(add_noise(&s, f64::NAN, 1).is_err());
    }

    #[test]
    fn seeded_noise_repeats() {
        let s = Spectrum::new(alloc::vec![1.0; 64], &WavenumberGrid::uniform(64).unwrap()).unwrap();
        assert_eq!(
            add_noise(&s, 50.0, 11).unwrap(),
            add_noise(&s, 50.0, 11).unwrap()
        );
        assert_ne!(
            add_noise(&s, 50.0, 11).unwrap(),
            add_noise(&s, 50.0, 12).unwrap()
        );
    }

    #[test]
    fn cost_model_reports_delay() {
        let mut cfg = OracleConfig::default();
        assert_eq!(oracle_cost_model(&cfg), Duration::ZERO);
        cfg.call_delay_s = 1.0;
        assert_eq!(oracle_cost_model(&cfg), Duration::from_secs(1));
    }
}
