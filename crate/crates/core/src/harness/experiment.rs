//! Scaling experiments over replica ensembles.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::diagnostics::{mean_and_stderr, slope_fit, ErrorDecomposition, ReplicaValue, SlopeFit};
use crate::error::{Error, Result};
use crate::harness::config::Settings;
use crate::harness::runs::{density_reference, parallel_replicas, run_replica, Checkpoint, Tiers};
use crate::harness::validate::{run_checks, ValidationCheck};
use crate::model::{ConvexityReport, Model, ModelConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Coupled against averaged system at fixed `N`, varying `ε`.
    EpsSweep,
    /// Averaged system against the density equation, varying `N`.
    NSweep,
    /// Total error along a path of `(N, ε)` pairs.
    Combined,
    /// Errors at an early and a late time under a strongly convex potential.
    UniformTime,
    /// Invariant checks.
    #[default]
    Validate,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::EpsSweep => "eps_sweep",
            ExperimentKind::NSweep => "n_sweep",
            ExperimentKind::Combined => "combined",
            ExperimentKind::UniformTime => "uniform_time",
            ExperimentKind::Validate => "validate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub eps_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub t_early: f64,
    pub t_late: f64,
    pub out_dir: PathBuf,
    /// `δ` of the convexity check.
    pub delta: f64,
    /// Steps between recorded snapshots in `simulate`.
    pub stride: u64,
    pub neps_warn: f64,
    pub neps_max: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Validate,
            eps_values: vec![0.04, 0.02, 0.01, 0.005],
            n_values: vec![50, 100, 200, 400],
            t_early: 5.0,
            t_late: 50.0,
            out_dir: PathBuf::from("out"),
            delta: 0.1,
            stride: 10,
            neps_warn: 0.5,
            neps_max: 2.0,
        }
    }
}

fn strictly_monotone<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) || v.windows(2).all(|w| w[0] > w[1])
}

impl ExperimentSpec {
    fn check_list<T: PartialOrd>(name: &'static str, v: &[T]) -> Result<()> {
        if v.is_empty() {
            return Err(Error::invalid(name, "must not be empty"));
        }
        if !strictly_monotone(v) {
            return Err(Error::invalid(name, "must be strictly monotone"));
        }
        Ok(())
    }

    /// `(N, ε)` pairs the experiment will run.
    pub fn grid(&self, cfg: &ModelConfig) -> Vec<(usize, f64)> {
        match self.kind {
            ExperimentKind::EpsSweep => self.eps_values.iter().map(|&e| (cfg.n_particles, e)).collect(),
            ExperimentKind::NSweep => self.n_values.iter().map(|&n| (n, cfg.epsilon)).collect(),
            ExperimentKind::Combined => self
                .n_values
                .iter()
                .copied()
                .zip(self.eps_values.iter().copied())
                .collect(),
            ExperimentKind::UniformTime | ExperimentKind::Validate => vec![(cfg.n_particles, cfg.epsilon)],
        }
    }

    /// Shape checks and the `Nε` refusal threshold.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if !(self.neps_warn > 0.0 && self.neps_max >= self.neps_warn) {
            return Err(Error::invalid(
                "experiment.neps_max",
                "need 0 < neps_warn <= neps_max",
            ));
        }
        if self.stride == 0 {
            return Err(Error::invalid("experiment.stride", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("experiment.delta", "must be finite and positive"));
        }
        match self.kind {
            ExperimentKind::EpsSweep => Self::check_list("experiment.eps_values", &self.eps_values)?,
            ExperimentKind::NSweep => Self::check_list("experiment.N_values", &self.n_values)?,
            ExperimentKind::Combined => {
                Self::check_list("experiment.eps_values", &self.eps_values)?;
                Self::check_list("experiment.N_values", &self.n_values)?;
                if self.eps_values.len() != self.n_values.len() {
                    return Err(Error::invalid(
                        "experiment.N_values",
                        "combined sweeps pair N_values with eps_values; lengths differ",
                    ));
                }
            }
            ExperimentKind::UniformTime => {
                if !(self.t_early > 0.0 && self.t_late > self.t_early) {
                    return Err(Error::invalid(
                        "experiment.T_late",
                        "need 0 < T_early < T_late",
                    ));
                }
            }
            ExperimentKind::Validate => {}
        }
        if self.eps_values.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::invalid("experiment.eps_values", "must be positive"));
        }
        if self.n_values.contains(&0) {
            return Err(Error::invalid("experiment.N_values", "must be positive"));
        }
        if matches!(self.kind, ExperimentKind::EpsSweep | ExperimentKind::Combined) {
            for (n, e) in self.grid(cfg) {
                let ne = n as f64 * e;
                if ne > self.neps_max {
                    return Err(Error::Refused(format!(
                        "N·ε = {ne} at (N = {n}, ε = {e}) exceeds the limit {}",
                        self.neps_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// Non-fatal remarks about the regime.
    pub fn warnings(&self, cfg: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        if matches!(
            self.kind,
            ExperimentKind::EpsSweep | ExperimentKind::Combined | ExperimentKind::UniformTime
        ) {
            for (n, e) in self.grid(cfg) {
                let ne = n as f64 * e;
                if ne > self.neps_warn {
                    out.push(format!(
                        "N·ε = {ne} at (N = {n}, ε = {e}) is above {}; averaging error may dominate",
                        self.neps_warn
                    ));
                }
            }
        }
        out
    }
}

/// One row of an experiment table. Quantities an experiment does not
/// measure are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub param: f64,
    pub n_particles: usize,
    pub epsilon: f64,
    pub horizon: f64,
    pub e: f64,
    pub eav: f64,
    pub epart: f64,
    /// Squared coupled-vs-averaged observable gap under common noise.
    pub gap: f64,
    /// Mean `(1/N)Σ|x̄ⁱ − yⁱ|²`.
    pub coupling: f64,
    /// Standard error of the experiment's primary quantity.
    pub stderr: f64,
    pub replicas: usize,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub records: Vec<SweepRecord>,
    pub slopes: Vec<(String, SlopeFit)>,
    pub warnings: Vec<String>,
    pub convexity: Option<ConvexityReport>,
    pub checks: Vec<ValidationCheck>,
    /// Largest `|E − Eᵃᵛ − Eᵖᵃʳᵗ|` over all records, relative.
    pub identity_residual: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn tagged(seed: u64, values: impl Iterator<Item = f64>) -> Vec<ReplicaValue> {
    values
        .enumerate()
        .map(|(r, value)| ReplicaValue {
            seed,
            replica: r as u64,
            value,
        })
        .collect()
}

struct Measured {
    decomposition: Option<ErrorDecomposition>,
    epart: (f64, f64),
    coupling: f64,
}

/// Reduces the per-replica checkpoint `slot` into estimators.
fn reduce(runs: &[Vec<Checkpoint>], slot: usize, seed: u64, pde: f64) -> Result<Measured> {
    let pick = |f: fn(&Checkpoint) -> f64| runs.iter().map(move |r| f(&r[slot]));
    let coupled = tagged(seed, pick(|c| c.coupled));
    let averaged = tagged(seed, pick(|c| c.averaged));
    let decomposition = if coupled.iter().all(|c| c.value.is_finite()) {
        Some(ErrorDecomposition::estimate(&coupled, &averaged, pde)?)
    } else {
        None
    };
    let sq: Vec<f64> = averaged.iter().map(|b| (b.value - pde).powi(2)).collect();
    let coupling: Vec<f64> = pick(|c| c.coupling).collect();
    Ok(Measured {
        decomposition,
        epart: mean_and_stderr(&sq),
        coupling: mean_and_stderr(&coupling).0,
    })
}

fn record(model: &Model, param: f64, horizon: f64, m: &Measured, primary_stderr: f64, wall: Duration) -> SweepRecord {
    let d = m.decomposition;
    SweepRecord {
        param,
        n_particles: model.cfg.n_particles,
        epsilon: model.cfg.epsilon,
        horizon,
        e: d.map_or(f64::NAN, |d| d.e),
        eav: d.map_or(f64::NAN, |d| d.eav),
        epart: m.epart.0,
        gap: d.map_or(f64::NAN, |d| d.gap),
        coupling: m.coupling,
        stderr: primary_stderr,
        replicas: model.cfg.replicas,
        wall_time: wall,
    }
}

fn fit(name: &str, pts: Vec<(f64, f64)>, slopes: &mut Vec<(String, SlopeFit)>) {
    if pts.len() >= 2 && pts.iter().all(|p| p.1 > 0.0 && p.1.is_finite()) {
        if let Ok(f) = slope_fit(&pts) {
            slopes.push((name.to_string(), f));
        }
    }
}

/// Runs the experiment described by `settings`, distributing replicas over
/// `jobs` threads. `force` lifts the convexity gate of `uniform_time`.
pub fn run_experiment(settings: &Settings, jobs: usize, force: bool) -> Result<ExperimentReport> {
    settings.validate()?;
    let spec = &settings.experiment;
    let base = settings.build_model()?;
    let cfg = &base.cfg;
    let u = settings.observable_spec()?;
    let mut report = ExperimentReport {
        kind: spec.kind,
        records: Vec::new(),
        slopes: Vec::new(),
        warnings: spec.warnings(cfg),
        convexity: None,
        checks: Vec::new(),
        identity_residual: 0.0,
    };
    let needs_density = !matches!(spec.kind, ExperimentKind::Validate | ExperimentKind::EpsSweep) || cfg.dim == 1;
    if needs_density && cfg.dim != 1 {
        return Err(Error::invalid(
            "model.n",
            format!("{} compares against the one-dimensional density", spec.kind.name()),
        ));
    }

    match spec.kind {
        ExperimentKind::Validate => {
            report.checks = run_checks(settings, jobs)?;
        }
        ExperimentKind::EpsSweep | ExperimentKind::Combined | ExperimentKind::NSweep => {
            let steps = cfg.steps_to(cfg.horizon);
            let with_y = spec.kind == ExperimentKind::NSweep;
            let pde = if needs_density {
                let (_, v) = density_reference(&base, settings.initial_density()?, &u, steps, &[steps], false)?;
                v[0]
            } else {
                f64::NAN
            };
            let fields = if with_y {
                density_reference(&base, settings.initial_density()?, &u, steps, &[], true)?.0
            } else {
                Vec::new()
            };
            for (n, eps) in spec.grid(cfg) {
                let start = Instant::now();
                let model = base.with_particles(n)?.with_epsilon(eps)?;
                let tiers = Tiers {
                    coupled: !with_y,
                    averaged: true,
                    fields: with_y.then_some(fields.as_slice()),
                };
                let runs = parallel_replicas(jobs, cfg.replicas, |r| {
                    run_replica(&model, &settings.init, settings.link_mode, &u, r, tiers, &[steps])
                })?;
                let m = reduce(&runs, 0, cfg.seed, pde)?;
                if let Some(d) = m.decomposition {
                    if d.e.is_finite() {
                        report.identity_residual = report.identity_residual.max(d.identity_residual());
                    }
                }
                let (param, primary) = match spec.kind {
                    ExperimentKind::EpsSweep => (eps, m.decomposition.map_or(f64::NAN, |d| d.gap_stderr)),
                    ExperimentKind::NSweep => (n as f64, m.epart.1),
                    _ => (n as f64, m.decomposition.map_or(f64::NAN, |d| d.e_stderr)),
                };
                report
                    .records
                    .push(record(&model, param, cfg.horizon, &m, primary, start.elapsed()));
            }
            let pts = |f: fn(&SweepRecord) -> f64| -> Vec<(f64, f64)> {
                report.records.iter().map(|r| (r.param, f(r))).collect()
            };
            let mut slopes = Vec::new();
            match spec.kind {
                ExperimentKind::EpsSweep => fit("gap_vs_epsilon", pts(|r| r.gap), &mut slopes),
                ExperimentKind::NSweep => {
                    fit("epart_vs_N", pts(|r| r.epart), &mut slopes);
                    fit("coupling_vs_N", pts(|r| r.coupling), &mut slopes);
                }
                _ => {
                    fit("E_vs_N", pts(|r| r.e), &mut slopes);
                    fit("Eav_vs_N", pts(|r| r.eav.abs()), &mut slopes);
                    fit("Epart_vs_N", pts(|r| r.epart), &mut slopes);
                }
            }
            report.slopes = slopes;
        }
        ExperimentKind::UniformTime => {
            let conv = base.convexity_condition_check(spec.delta)?;
            report.convexity = Some(conv);
            if !conv.uniform_in_time_ok {
                if !force {
                    return Err(Error::Refused(format!(
                        "κ₃ = {} is below max(κ_av, κ_mf) = {}; rerun with --force to proceed anyway",
                        conv.kappa3,
                        conv.kappa_av.max(conv.kappa_mf)
                    )));
                }
                report
                    .warnings
                    .push("convexity condition fails; no uniform-in-time bound applies".into());
            }
            let early = cfg.steps_to(spec.t_early);
            let late = cfg.steps_to(spec.t_late);
            let (fields, pde) = density_reference(&base, settings.initial_density()?, &u, late, &[early, late], true)?;
            let start = Instant::now();
            let tiers = Tiers {
                coupled: true,
                averaged: true,
                fields: Some(&fields),
            };
            let runs = parallel_replicas(jobs, cfg.replicas, |r| {
                run_replica(&base, &settings.init, settings.link_mode, &u, r, tiers, &[early, late])
            })?;
            let wall = start.elapsed();
            for (slot, (t, p)) in [(spec.t_early, pde[0]), (spec.t_late, pde[1])].into_iter().enumerate() {
                let m = reduce(&runs, slot, cfg.seed, p)?;
                let d = m.decomposition.expect("coupled tier ran");
                report.identity_residual = report.identity_residual.max(d.identity_residual());
                report.records.push(record(&base, t, t, &m, d.e_stderr, wall));
            }
        }
    }
    Ok(report)
}
