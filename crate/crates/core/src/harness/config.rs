//! Plain-text `key = value` configuration.
//!
//! One key per line, `#` starts a comment, keys are namespaced
//! (`model.N`, `kernel.k`, `experiment.kind`, ...). The `model.*` physics keys
//! are required; everything else has a default. [`Settings::emit`] writes
//! every key, and parsing its output gives back identical settings.
//!
//! | key | meaning |
//! |---|---|
//! | `model.N` | particle count |
//! | `model.n` | dimension, 1 to 3 |
//! | `model.epsilon` | link time scale |
//! | `model.D` | diffusion constant |
//! | `model.nu_d`, `model.nu_f` | destruction rate, formation constant |
//! | `model.R` | cutoff radius |
//! | `model.dt`, `model.T` | particle step, horizon |
//! | `model.seed`, `model.replicas` | base seed, replica count |
//! | `potential.kind` | `quadratic` (uses `kappa`) or `double_well` (uses `a`, `b`) |
//! | `kernel.kind` | `spring` (uses `k`) or `saturating` (uses `k`, `s`) |
//! | `init.mean`, `init.variance` | Gaussian initial law |
//! | `init.p_link` | initial link probability, or `auto` for `ν_f/(Nν_d)` |
//! | `link.mode` | `occupation` or `endpoint` |
//! | `fp.x_min`, `fp.x_max`, `fp.M` | density grid |
//! | `observable.kind`, `observable.c` | `tanh` or `gauss_bump` test function |
//! | `experiment.kind` | `eps_sweep`, `n_sweep`, `combined`, `uniform_time`, `validate` |
//! | `experiment.eps_values`, `experiment.N_values` | comma-separated sweep lists |
//! | `experiment.T_early`, `experiment.T_late` | checkpoints of `uniform_time` |
//! | `experiment.out_dir` | output directory |
//! | `experiment.delta` | `δ` of the convexity check |
//! | `experiment.stride` | steps between recorded snapshots |
//! | `experiment.neps_warn`, `experiment.neps_max` | `Nε` warning and refusal thresholds |

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::diagnostics::ObservableSpec;
use crate::error::{Error, Result};
use crate::fastslow::{default_link_prob, GaussianInit, LinkMode};
use crate::fokker_planck::DensityGrid;
use crate::harness::experiment::{ExperimentKind, ExperimentSpec};
use crate::model::{KernelSpec, Model, ModelConfig, PotentialSpec};

/// Environment variable that overrides `model.seed`.
pub const SEED_ENV: &str = "SPARSENET_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Quadratic,
    DoubleWell,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams {
    pub kind: PotentialKind,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Quadratic,
            kappa: 1.0,
            a: 1.0,
            b: 0.25,
        }
    }
}

impl PotentialParams {
    pub fn spec(&self) -> PotentialSpec {
        match self.kind {
            PotentialKind::Quadratic => PotentialSpec::Quadratic { kappa: self.kappa },
            PotentialKind::DoubleWell => PotentialSpec::DoubleWell { a: self.a, b: self.b },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Spring,
    Saturating,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub k: f64,
    pub s: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            kind: KernelKind::Spring,
            k: 0.5,
            s: 1.0,
        }
    }
}

impl KernelParams {
    pub fn spec(&self) -> KernelSpec {
        match self.kind {
            KernelKind::Spring => KernelSpec::Spring { k: self.k },
            KernelKind::Saturating => KernelSpec::SaturatingSpring { k: self.k, s: self.s },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableKind {
    Tanh,
    GaussBump,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableParams {
    pub kind: ObservableKind,
    pub c: f64,
}

impl Default for ObservableParams {
    fn default() -> Self {
        Self {
            kind: ObservableKind::Tanh,
            c: 1.0,
        }
    }
}

impl ObservableParams {
    pub fn spec(&self) -> ObservableSpec {
        match self.kind {
            ObservableKind::Tanh => ObservableSpec::TanhScaled { c: self.c },
            ObservableKind::GaussBump => ObservableSpec::GaussBump { c: self.c },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub mean: f64,
    pub variance: f64,
    /// `None` selects `ν_f/(Nν_d)`.
    pub p_link: Option<f64>,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            mean: 0.0,
            variance: 1.0,
            p_link: None,
        }
    }
}

impl InitSpec {
    pub fn law(&self) -> GaussianInit {
        GaussianInit {
            mean: self.mean,
            variance: self.variance,
        }
    }

    pub fn link_prob(&self, cfg: &ModelConfig) -> f64 {
        self.p_link.unwrap_or_else(|| default_link_prob(cfg))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

impl Default for FpGridSpec {
    fn default() -> Self {
        Self {
            x_min: -6.0,
            x_max: 6.0,
            cells: 384,
        }
    }
}

/// Everything a run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub model: ModelConfig,
    pub potential: PotentialParams,
    pub kernel: KernelParams,
    pub init: InitSpec,
    pub link_mode: LinkMode,
    pub fp: FpGridSpec,
    pub observable: ObservableParams,
    pub experiment: ExperimentSpec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            potential: PotentialParams::default(),
            kernel: KernelParams::default(),
            init: InitSpec::default(),
            link_mode: LinkMode::Occupation,
            fp: FpGridSpec::default(),
            observable: ObservableParams::default(),
            experiment: ExperimentSpec::default(),
        }
    }
}

/// Every key in emission order.
pub const KEYS: &[&str] = &[
    "model.N",
    "model.n",
    "model.epsilon",
    "model.D",
    "model.nu_d",
    "model.nu_f",
    "model.R",
    "model.dt",
    "model.T",
    "model.seed",
    "model.replicas",
    "potential.kind",
    "potential.kappa",
    "potential.a",
    "potential.b",
    "kernel.kind",
    "kernel.k",
    "kernel.s",
    "init.mean",
    "init.variance",
    "init.p_link",
    "link.mode",
    "fp.x_min",
    "fp.x_max",
    "fp.M",
    "observable.kind",
    "observable.c",
    "experiment.kind",
    "experiment.eps_values",
    "experiment.N_values",
    "experiment.T_early",
    "experiment.T_late",
    "experiment.out_dir",
    "experiment.delta",
    "experiment.stride",
    "experiment.neps_warn",
    "experiment.neps_max",
];

/// Keys without a default.
pub const REQUIRED: &[&str] = &[
    "model.N",
    "model.n",
    "model.epsilon",
    "model.D",
    "model.nu_d",
    "model.nu_f",
    "model.R",
    "model.dt",
    "model.T",
];

enum SetError {
    Unknown,
    Bad(String),
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, SetError>
where
    T::Err: Display,
{
    v.parse::<T>()
        .map_err(|e| SetError::Bad(format!("cannot parse `{v}`: {e}")))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, SetError>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(p.trim())).collect()
}

fn choice<T: Copy>(v: &str, options: &[(&str, T)]) -> std::result::Result<T, SetError> {
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            SetError::Bad(format!("`{v}` is not one of {}", names.join(", ")))
        })
}

const POTENTIALS: &[(&str, PotentialKind)] = &[
    ("quadratic", PotentialKind::Quadratic),
    ("double_well", PotentialKind::DoubleWell),
];
const KERNELS: &[(&str, KernelKind)] = &[("spring", KernelKind::Spring), ("saturating", KernelKind::Saturating)];
const OBSERVABLES: &[(&str, ObservableKind)] = &[
    ("tanh", ObservableKind::Tanh),
    ("gauss_bump", ObservableKind::GaussBump),
];
const LINK_MODES: &[(&str, LinkMode)] = &[("occupation", LinkMode::Occupation), ("endpoint", LinkMode::Endpoint)];
const KINDS: &[(&str, ExperimentKind)] = &[
    ("eps_sweep", ExperimentKind::EpsSweep),
    ("n_sweep", ExperimentKind::NSweep),
    ("combined", ExperimentKind::Combined),
    ("uniform_time", ExperimentKind::UniformTime),
    ("validate", ExperimentKind::Validate),
];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|o| &o.1 == v).map(|o| o.0).unwrap_or("?")
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Settings {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), SetError> {
        let m = &mut self.model;
        let e = &mut self.experiment;
        match key {
            "model.N" => m.n_particles = num(v)?,
            "model.n" => m.dim = num(v)?,
            "model.epsilon" => m.epsilon = num(v)?,
            "model.D" => m.diffusion = num(v)?,
            "model.nu_d" => m.nu_d = num(v)?,
            "model.nu_f" => m.nu_f = num(v)?,
            "model.R" => m.radius = num(v)?,
            "model.dt" => m.dt = num(v)?,
            "model.T" => m.horizon = num(v)?,
            "model.seed" => m.seed = num(v)?,
            "model.replicas" => m.replicas = num(v)?,
            "potential.kind" => self.potential.kind = choice(v, POTENTIALS)?,
            "potential.kappa" => self.potential.kappa = num(v)?,
            "potential.a" => self.potential.a = num(v)?,
            "potential.b" => self.potential.b = num(v)?,
            "kernel.kind" => self.kernel.kind = choice(v, KERNELS)?,
            "kernel.k" => self.kernel.k = num(v)?,
            "kernel.s" => self.kernel.s = num(v)?,
            "init.mean" => self.init.mean = num(v)?,
            "init.variance" => self.init.variance = num(v)?,
            "init.p_link" => {
                self.init.p_link = if v == "auto" { None } else { Some(num(v)?) }
            }
            "link.mode" => self.link_mode = choice(v, LINK_MODES)?,
            "fp.x_min" => self.fp.x_min = num(v)?,
            "fp.x_max" => self.fp.x_max = num(v)?,
            "fp.M" => self.fp.cells = num(v)?,
            "observable.kind" => self.observable.kind = choice(v, OBSERVABLES)?,
            "observable.c" => self.observable.c = num(v)?,
            "experiment.kind" => e.kind = choice(v, KINDS)?,
            "experiment.eps_values" => e.eps_values = list(v)?,
            "experiment.N_values" => e.n_values = list(v)?,
            "experiment.T_early" => e.t_early = num(v)?,
            "experiment.T_late" => e.t_late = num(v)?,
            "experiment.out_dir" => e.out_dir = PathBuf::from(v),
            "experiment.delta" => e.delta = num(v)?,
            "experiment.stride" => e.stride = num(v)?,
            "experiment.neps_warn" => e.neps_warn = num(v)?,
            "experiment.neps_max" => e.neps_max = num(v)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let m = &self.model;
        let e = &self.experiment;
        match key {
            "model.N" => m.n_particles.to_string(),
            "model.n" => m.dim.to_string(),
            "model.epsilon" => m.epsilon.to_string(),
            "model.D" => m.diffusion.to_string(),
            "model.nu_d" => m.nu_d.to_string(),
            "model.nu_f" => m.nu_f.to_string(),
            "model.R" => m.radius.to_string(),
            "model.dt" => m.dt.to_string(),
            "model.T" => m.horizon.to_string(),
            "model.seed" => m.seed.to_string(),
            "model.replicas" => m.replicas.to_string(),
            "potential.kind" => name_of(POTENTIALS, &self.potential.kind).into(),
            "potential.kappa" => self.potential.kappa.to_string(),
            "potential.a" => self.potential.a.to_string(),
            "potential.b" => self.potential.b.to_string(),
            "kernel.kind" => name_of(KERNELS, &self.kernel.kind).into(),
            "kernel.k" => self.kernel.k.to_string(),
            "kernel.s" => self.kernel.s.to_string(),
            "init.mean" => self.init.mean.to_string(),
            "init.variance" => self.init.variance.to_string(),
            "init.p_link" => self.init.p_link.map_or("auto".into(), |p| p.to_string()),
            "link.mode" => name_of(LINK_MODES, &self.link_mode).into(),
            "fp.x_min" => self.fp.x_min.to_string(),
            "fp.x_max" => self.fp.x_max.to_string(),
            "fp.M" => self.fp.cells.to_string(),
            "observable.kind" => name_of(OBSERVABLES, &self.observable.kind).into(),
            "observable.c" => self.observable.c.to_string(),
            "experiment.kind" => name_of(KINDS, &e.kind).into(),
            "experiment.eps_values" => join(&e.eps_values),
            "experiment.N_values" => join(&e.n_values),
            "experiment.T_early" => e.t_early.to_string(),
            "experiment.T_late" => e.t_late.to_string(),
            "experiment.out_dir" => e.out_dir.to_string_lossy().into_owned(),
            "experiment.delta" => e.delta.to_string(),
            "experiment.stride" => e.stride.to_string(),
            "experiment.neps_warn" => e.neps_warn.to_string(),
            "experiment.neps_max" => e.neps_max.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Parses configuration text. Required keys must all be present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigLine {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.get(key) {
                return Err(Error::ConfigLine {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            settings.set(key, value).map_err(|e| Error::ConfigLine {
                line,
                message: match e {
                    SetError::Unknown => format!("unknown key `{key}`"),
                    SetError::Bad(m) => format!("`{key}`: {m}"),
                },
            })?;
            seen.insert(key.to_string(), line);
        }
        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|k| !seen.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        Ok(settings)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let (key, value) = arg.split_once('=').ok_or_else(|| Error::Override {
            arg: arg.into(),
            message: "expected KEY=VALUE".into(),
        })?;
        self.set(key.trim(), value.trim()).map_err(|e| Error::Override {
            arg: arg.into(),
            message: match e {
                SetError::Unknown => "unknown key".into(),
                SetError::Bad(m) => m,
            },
        })
    }

    /// Applies the seed from [`SEED_ENV`], if set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => self.apply_override(&format!("model.seed={v}")),
            Err(_) => Ok(()),
        }
    }

    /// Every key, one per line.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`Settings::emit`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.emit().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_model(&self) -> Result<Model> {
        Model::new(self.model.clone(), self.potential.spec(), self.kernel.spec())
    }

    pub fn observable_spec(&self) -> Result<ObservableSpec> {
        let u = self.observable.spec();
        u.validate()?;
        Ok(u)
    }

    /// Gaussian initial density on the configured grid.
    pub fn initial_density(&self) -> Result<DensityGrid> {
        if self.fp.cells < 2 {
            return Err(Error::invalid("fp.M", "need at least two cells"));
        }
        if !(self.init.variance > 0.0) {
            return Err(Error::invalid("init.variance", "must be positive"));
        }
        DensityGrid::gaussian(
            self.fp.x_min,
            self.fp.x_max,
            self.fp.cells,
            self.init.mean,
            self.init.variance,
        )
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        self.build_model()?;
        self.observable_spec()?;
        if !(self.init.variance > 0.0 && self.init.variance.is_finite()) {
            return Err(Error::invalid("init.variance", "must be finite and positive"));
        }
        if let Some(p) = self.init.p_link {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("init.p_link", format!("must lie in [0, 1], got {p}")));
            }
        }
        self.experiment.validate(&self.model)
    }
}
