//! Run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! strategy = "zero"            # zero | hold | simultaneous-zero | simultaneous-hold
//!
//! [system]
//! catalog = "heat-neumann-1d"  # or: file = "plant.sys" (relative to this file)
//!
//! [sampler]
//! tau = 0.1
//! weight = "average"           # or: nodes = [...] and values = [...]
//! feedthrough_tol = 1e-10
//!
//! [controller]                 # optional for catalog systems with a default controller
//! p = [[0.445]]
//! q = [[0.3]]
//! r = [[-3.0]]
//!
//! [certificate]
//! rho0 = 0.91
//! rho = 0.908
//!
//! [quantizer]
//! levels_in = 150
//! levels_out = 150
//!
//! [loss]
//! generator = "greedy_worst"   # none | greedy_worst | bernoulli | periodic | file
//! xi = 1.0
//! nu = 0.175
//!
//! [simulation]
//! horizon = 600
//! substeps = 10
//! e0 = 1.0
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use crate::closed_loop::{Controller, Quantizers, SimulationSpec, Strategy};
use crate::error::{Error, Result};
use crate::heat;
use crate::loss::{self, LossSchedule};
use crate::norms::CertifyOptions;
use crate::spectral::{CVector, DiscretizationConfig, SamplerWeight, SpectralSystem};
use crate::sysfile;

/// Environment variable overriding `[output].dir`.
pub const OUT_DIR_ENV: &str = "ZOOMQUANT_OUT_DIR";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    pub system: SystemSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub controller: Option<ControllerSection>,
    pub certificate: CertificateSection,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub numap: NumapSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_strategy() -> String {
    "zero".into()
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub catalog: Option<String>,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub tau: f64,
    pub weight: String,
    pub nodes: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub feedthrough_tol: f64,
    pub mode_cap: usize,
    pub quad_tol: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = DiscretizationConfig::new(0.1);
        SamplerSection {
            tau: d.tau,
            weight: "average".into(),
            nodes: None,
            values: None,
            feedthrough_tol: d.feedthrough_tol,
            mode_cap: d.mode_cap,
            quad_tol: d.quad_tol,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub p1: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub rho0: f64,
    pub rho: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_n_start")]
    pub n_start: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tol")]
    pub decay_tol: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_tol() -> f64 {
    1e-6
}
fn default_n_start() -> usize {
    25
}
fn default_n_max() -> usize {
    400
}
fn default_k_max() -> usize {
    100_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    pub levels_in: u64,
    pub levels_out: u64,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        QuantizerSection {
            levels_in: 150,
            levels_out: 150,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub generator: String,
    pub xi: f64,
    pub nu: f64,
    pub p: f64,
    pub seed: u64,
    pub period: usize,
    pub burst: usize,
    pub file: Option<PathBuf>,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            generator: "none".into(),
            xi: 0.0,
            nu: 0.0,
            p: 0.5,
            seed: 0,
            period: 1,
            burst: 0,
            file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: usize,
    pub substeps: usize,
    pub head: usize,
    pub e0: f64,
    pub z0: Option<Vec<f64>>,
    pub floor_delta: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationSpec::default();
        SimulationSection {
            horizon: d.horizon,
            substeps: d.substeps,
            head: d.head,
            e0: d.e0,
            z0: None,
            floor_delta: d.floor_delta,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumapSection {
    pub grid: String,
}

impl Default for NumapSection {
    fn default() -> Self {
        NumapSection {
            grid: "10:300:10".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!(
            "controller.{what} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

/// Parses `start:stop:step` into the inclusive list of levels.
pub fn parse_grid(spec: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::Validation(format!(
            "grid must be start:stop:step with positive integers, got '{spec}'"
        ))
    };
    let parts: Vec<u64> = spec
        .split(':')
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        &[start, stop, step] if start >= 1 && step >= 1 && start <= stop => {
            Ok((start..=stop).step_by(step as usize).collect())
        }
        _ => Err(bad()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            Error::Validation(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks ranges that do not need the system to be loaded.
    pub fn validate(&self) -> Result<()> {
        self.strategy()?;
        match (&self.system.catalog, &self.system.file) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(Error::Validation(
                    "[system] needs exactly one of 'catalog' or 'file'".into(),
                ))
            }
        }
        self.discretization()?.validate()?;
        let c = &self.certificate;
        if !(c.rho0 > 0.0) {
            return Err(Error::Validation(
                "certificate.rho0 must be positive".into(),
            ));
        }
        if self.quantizer.levels_in == 0 || self.quantizer.levels_out == 0 {
            return Err(Error::Validation(
                "quantizer levels must be at least 1".into(),
            ));
        }
        if !(self.simulation.e0 > 0.0) {
            return Err(Error::Validation("simulation.e0 must be positive".into()));
        }
        if !(self.simulation.floor_delta >= 0.0) {
            return Err(Error::Validation(
                "simulation.floor_delta must be non-negative".into(),
            ));
        }
        parse_grid(&self.numap.grid)?;
        match self.loss.generator.as_str() {
            "none" | "greedy_worst" | "bernoulli" | "periodic" => Ok(()),
            "file" if self.loss.file.is_some() => Ok(()),
            "file" => Err(Error::Validation(
                "loss.generator = \"file\" needs loss.file".into(),
            )),
            other => Err(Error::Validation(format!(
                "unknown loss generator '{other}'"
            ))),
        }
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse()
    }

    pub fn system(&self) -> Result<SpectralSystem> {
        match (&self.system.catalog, &self.system.file) {
            (Some(name), _) => sysfile::catalog(name),
            (None, Some(file)) => sysfile::read_system(&self.resolve(file)),
            (None, None) => Err(Error::Validation("no system given".into())),
        }
    }

    pub fn discretization(&self) -> Result<DiscretizationConfig> {
        let s = &self.sampler;
        let weight =
            match (s.weight.as_str(), &s.nodes, &s.values) {
                ("average", None, None) => SamplerWeight::Average,
                ("tabulated", Some(nodes), Some(values)) => SamplerWeight::Tabulated {
                    nodes: nodes.clone(),
                    values: values.clone(),
                },
                _ => return Err(Error::Validation(
                    "sampler.weight must be \"average\", or \"tabulated\" with nodes and values"
                        .into(),
                )),
            };
        let mut cfg = DiscretizationConfig::new(s.tau)
            .with_weight(weight)
            .with_feedthrough_tol(s.feedthrough_tol);
        cfg.mode_cap = s.mode_cap;
        cfg.quad_tol = s.quad_tol;
        Ok(cfg)
    }

    pub fn controller(&self) -> Result<Controller> {
        match &self.controller {
            Some(c) => {
                let ctrl =
                    Controller::new(matrix(&c.p, "p")?, matrix(&c.q, "q")?, matrix(&c.r, "r")?)?;
                match &c.p1 {
                    Some(p1) => ctrl.with_p1(matrix(p1, "p1")?),
                    None => Ok(ctrl),
                }
            }
            None if self.system.catalog.as_deref() == Some(heat::CATALOG_NAME) => {
                Ok(heat::heat_system(1)?.controller)
            }
            None => Err(Error::Validation(
                "[controller] is required for this system".into(),
            )),
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let c = &self.certificate;
        CertifyOptions {
            rho0: c.rho0,
            rho: c.rho,
            tol: c.tol,
            n_start: c.n_start,
            n_max: c.n_max,
            decay_tol: c.decay_tol,
            k_max: c.k_max,
        }
    }

    /// Euclidean error bounds `(Δ_in, Δ_out)` for `inputs` and `outputs`
    /// channels.
    pub fn deltas(&self, inputs: usize, outputs: usize) -> Result<(f64, f64)> {
        let q = self.quantizers(inputs, outputs)?;
        Ok((q.input.norm_delta(), q.output.norm_delta()))
    }

    pub fn quantizers(&self, inputs: usize, outputs: usize) -> Result<Quantizers> {
        Quantizers::new(
            self.quantizer.levels_in,
            self.quantizer.levels_out,
            inputs,
            outputs,
        )
    }

    /// Loss schedule covering the simulation horizon.
    pub fn schedule(&self) -> Result<LossSchedule> {
        let l = &self.loss;
        let horizon = self.simulation.horizon;
        match l.generator.as_str() {
            "none" => Ok(LossSchedule::lossless(horizon)),
            "greedy_worst" => loss::greedy_worst(l.xi, l.nu, horizon),
            "bernoulli" => loss::bernoulli_clipped(l.p, l.xi, l.nu, horizon, l.seed),
            "periodic" => loss::periodic(l.period, l.burst, horizon),
            "file" => LossSchedule::read(&self.resolve(l.file.as_deref().unwrap_or(Path::new("")))),
            other => Err(Error::Validation(format!(
                "unknown loss generator '{other}'"
            ))),
        }
    }

    pub fn simulation_spec(&self) -> SimulationSpec {
        let s = &self.simulation;
        SimulationSpec {
            horizon: s.horizon,
            e0: s.e0,
            z0: s.z0.as_ref().map(|v| {
                CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
            }),
            substeps: s.substeps,
            head: s.head,
            floor_delta: s.floor_delta,
        }
    }

    /// Output directory, with the environment override applied.
    pub fn out_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.dir.clone())
    }
}
