//! JSON run configurations. Every struct rejects unknown keys so that a typo
//! fails loudly instead of silently falling back to a default.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochflow_core::grid::invert_helmholtz;
use stochflow_core::sqg::{Filter, SQGParams, Scheme};
use stochflow_core::synth::band_limited_zero_mean;
use stochflow_core::transport::Interpretation;
use stochflow_core::{DifferentialForm, Field, Grade, NoiseBasis, PeriodicGrid, VectorFieldOnGrid};

use crate::formats;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    #[default]
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub shape: Vec<usize>,
    /// Box side lengths; `2π` on every axis when absent.
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn build(&self) -> Result<PeriodicGrid, CliError> {
        let grid = match &self.lengths {
            Some(l) => PeriodicGrid::with_lengths(&self.shape, l),
            None => PeriodicGrid::new(&self.shape),
        };
        grid.map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

/// One real Fourier mode `amp · cos(2π k·x/L + phase)`.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

pub fn field_from_modes(grid: &PeriodicGrid, modes: &[ModeSpec]) -> Result<Field, CliError> {
    for m in modes {
        if m.k.len() != grid.dims() {
            return Err(CliError::Config(format!(
                "mode {:?} has {} entries on a {}D grid",
                m.k,
                m.k.len(),
                grid.dims()
            )));
        }
        if !m.amp.is_finite() || !m.phase.is_finite() {
            return Err(CliError::Config(format!("mode {:?} has a non-finite amplitude or phase", m.k)));
        }
    }
    let lengths = grid.lengths().to_vec();
    Ok(Field::from_fn(grid, |x| {
        modes
            .iter()
            .map(|m| {
                let arg: f64 = m
                    .k
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| TAU * k as f64 * x[a] / lengths[a])
                    .sum();
                m.amp * (arg + m.phase).cos()
            })
            .sum()
    }))
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ScalarInit {
    /// Sum of Fourier modes.
    Modes { modes: Vec<ModeSpec> },
    /// Seeded random zero-mean field with `|m_i| ≤ kmax`.
    BandLimited { seed: u64, kmax: usize, rms: f64 },
    /// A grid-spectral snapshot file (relative paths resolve against the config).
    Snapshot { path: PathBuf },
}

impl ScalarInit {
    pub fn build(&self, grid: &PeriodicGrid, base: &Path) -> Result<Field, CliError> {
        match self {
            ScalarInit::Modes { modes } => field_from_modes(grid, modes),
            ScalarInit::BandLimited { seed, kmax, rms } => {
                if !(rms.is_finite() && *rms >= 0.0) {
                    return Err(CliError::Config("band_limited rms must be >= 0".into()));
                }
                Ok(band_limited_zero_mean(grid, *seed, *kmax, *rms))
            }
            ScalarInit::Snapshot { path } => formats::read_field(&base.join(path), grid),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(rename = "F", default)]
    pub f: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub f0: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub nu: f64,
    pub order: u32,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum SqgNoise {
    /// Stream functions, one per Brownian component.
    Modes { streams: Vec<Vec<ModeSpec>> },
    /// Leading `k` modes of a basis written by `pod-extract`, scaled by
    /// `√eigenvalue` and converted to stream functions.
    Pod { dir: PathBuf, k: usize },
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SqgConfig {
    pub grid: GridConfig,
    #[serde(default = "default_params")]
    pub params: ParamsConfig,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
    pub scheme: String,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of Brownian components; must agree with the noise spec.
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    pub initial: ScalarInit,
    #[serde(default)]
    pub noise: Option<SqgNoise>,
    #[serde(default = "default_every")]
    pub diagnostic_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub log_level: LogLevel,
}

fn default_params() -> ParamsConfig {
    ParamsConfig {
        f: 0.0,
        beta: 0.0,
        f0: 0.0,
    }
}

fn default_every() -> usize {
    1
}

fn stream_from_velocity(u: &[Field]) -> Result<Field, CliError> {
    if u.len() != 2 {
        return Err(CliError::Config("POD noise for SQG needs 2-component modes".into()));
    }
    let vort = &stochflow_core::grid::partial(&u[1], 0) - &stochflow_core::grid::partial(&u[0], 1);
    invert_helmholtz(&vort, 0.0).map_err(|e| CliError::Config(format!("POD mode: {e}")))
}

impl SqgConfig {
    pub fn scheme(&self) -> Result<Scheme, CliError> {
        Scheme::parse(&self.scheme).ok_or_else(|| {
            CliError::Config(format!(
                "unknown scheme {:?} (deterministic, stratonovich, ito, ito_uncorrected)",
                self.scheme
            ))
        })
    }

    pub fn params(&self) -> Result<SQGParams, CliError> {
        let p = SQGParams {
            f: self.params.f,
            beta: self.params.beta,
            f0: self.params.f0,
            filter: self.filter.as_ref().map(|f| Filter {
                nu: f.nu,
                order: f.order,
            }),
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.shape.len() != 2 {
            return Err(CliError::Config("SQG runs need a 2D grid".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        self.scheme()?;
        self.params()?;
        Ok(())
    }

    pub fn noise_basis(&self, grid: &PeriodicGrid, base: &Path) -> Result<NoiseBasis, CliError> {
        let streams: Vec<Field> = match &self.noise {
            None => Vec::new(),
            Some(SqgNoise::Modes { streams }) => streams
                .iter()
                .map(|m| field_from_modes(grid, m))
                .collect::<Result<_, _>>()?,
            Some(SqgNoise::Pod { dir, k }) => {
                let pod = formats::read_pod_basis(&base.join(dir), grid)?;
                if *k > pod.modes.len() {
                    return Err(CliError::Config(format!(
                        "asked for {k} POD modes, basis has {}",
                        pod.modes.len()
                    )));
                }
                pod.modes
                    .iter()
                    .zip(&pod.eigenvalues)
                    .take(*k)
                    .map(|(m, l)| stream_from_velocity(m).map(|s| &s * l.max(0.0).sqrt()))
                    .collect::<Result<_, _>>()?
            }
        };
        if let Some(k) = self.k {
            if k != streams.len() {
                return Err(CliError::Config(format!(
                    "K = {k} but the noise spec has {} fields",
                    streams.len()
                )));
            }
        }
        if streams.is_empty() {
            return Ok(NoiseBasis::empty());
        }
        // weights are reporting-only here; the fields carry their own amplitude
        let weights = vec![1.0; streams.len()];
        NoiseBasis::qg(streams, weights).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum VectorSpec {
    Zero,
    Constant { value: Vec<f64> },
    /// 2D only: velocity `ẑ × ∇ξ` of the stream function `ξ`.
    Stream { modes: Vec<ModeSpec> },
    /// One mode list per component.
    Components { components: Vec<Vec<ModeSpec>> },
}

impl VectorSpec {
    pub fn build(&self, grid: &PeriodicGrid) -> Result<VectorFieldOnGrid, CliError> {
        let cfg = |e: stochflow_core::Error| CliError::Config(e.to_string());
        match self {
            VectorSpec::Zero => Ok(VectorFieldOnGrid::zeros(grid)),
            VectorSpec::Constant { value } => VectorFieldOnGrid::constant(grid, value).map_err(cfg),
            VectorSpec::Stream { modes } => {
                VectorFieldOnGrid::from_stream_function(&field_from_modes(grid, modes)?).map_err(cfg)
            }
            VectorSpec::Components { components } => {
                if components.len() != grid.dims() {
                    return Err(CliError::Config(format!(
                        "{} components on a {}D grid",
                        components.len(),
                        grid.dims()
                    )));
                }
                let comps = components
                    .iter()
                    .map(|m| field_from_modes(grid, m))
                    .collect::<Result<Vec<_>, _>>()?;
                VectorFieldOnGrid::new(comps).map_err(cfg)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormConfig {
    /// `scalar`, `one_form`, `two_form` or `density`.
    pub grade: String,
    pub components: Vec<Vec<ModeSpec>>,
}

impl FormConfig {
    pub fn build(&self, grid: &PeriodicGrid) -> Result<DifferentialForm, CliError> {
        let grade = Grade::parse(&self.grade)
            .ok_or_else(|| CliError::Config(format!("unknown grade {:?}", self.grade)))?;
        let comps = self
            .components
            .iter()
            .map(|m| field_from_modes(grid, m))
            .collect::<Result<Vec<_>, _>>()?;
        DifferentialForm::new(grade, comps).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: usize,
    /// Axes spanning the circle's plane.
    #[serde(default = "default_plane")]
    pub plane: [usize; 2],
}

fn default_plane() -> [usize; 2] {
    [0, 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportCheck {
    /// Advect the form and record its norm and extreme values.
    Advect,
    Kelvin,
    Helicity,
    VorticityFlux,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub grid: GridConfig,
    /// `stratonovich` or `ito`.
    pub interpretation: String,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_drift")]
    pub drift: VectorSpec,
    #[serde(default)]
    pub noise: Vec<VectorSpec>,
    pub form: FormConfig,
    #[serde(default)]
    pub loops: Vec<LoopConfig>,
    pub checks: Vec<TransportCheck>,
    #[serde(default = "default_every")]
    pub record_every: usize,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub log_level: LogLevel,
}

fn default_drift() -> VectorSpec {
    VectorSpec::Zero
}

impl TransportConfig {
    pub fn interpretation(&self) -> Result<Interpretation, CliError> {
        match self.interpretation.as_str() {
            "stratonovich" => Ok(Interpretation::Stratonovich),
            "ito" => Ok(Interpretation::Ito),
            other => Err(CliError::Config(format!(
                "unknown interpretation {other:?} (stratonovich, ito)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if self.checks.is_empty() {
            return Err(CliError::Config("no checks requested".into()));
        }
        self.interpretation()?;
        for l in &self.loops {
            if l.center.len() != self.grid.shape.len() || l.plane.iter().any(|&a| a >= self.grid.shape.len()) {
                return Err(CliError::Config("loop center or plane does not fit the grid".into()));
            }
        }
        Ok(())
    }
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The `log_level` of a config file, read before the full schema check so
/// that configuration errors themselves are logged at the right level.
pub fn peek_log_level(path: &Path) -> LogLevel {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("log_level").cloned())
        .and_then(|v| serde_json::from_value(v).ok())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"grid":{"shape":[8,8]},"scheme":"deterministic","dt":0.1,"steps":1,
            "initial":{"kind":"modes","modes":[]},"bogus":1}"#;
        assert!(serde_json::from_str::<SqgConfig>(text).is_err());
        let nested = r#"{"grid":{"shape":[8,8],"extra":true},"scheme":"deterministic","dt":0.1,"steps":1,
            "initial":{"kind":"modes","modes":[]}}"#;
        assert!(serde_json::from_str::<SqgConfig>(nested).is_err());
    }

    #[test]
    fn modes_build_cosines_on_scaled_boxes() {
        let g = PeriodicGrid::with_lengths(&[16, 8], &[2.0, 1.0]).unwrap();
        let f = field_from_modes(
            &g,
            &[ModeSpec {
                k: vec![1, 2],
                amp: 0.5,
                phase: 0.3,
            }],
        )
        .unwrap();
        let i = g.ravel(&[3, 5]);
        let x = g.point(i);
        let exact = 0.5 * (TAU * (x[0] / 2.0 + 2.0 * x[1]) + 0.3).cos();
        assert!((f.values()[i] - exact).abs() < 1e-14);
        assert!(field_from_modes(&g, &[ModeSpec { k: vec![1], amp: 1.0, phase: 0.0 }]).is_err());
    }
}
