//! Single-replica drivers and the replica pool.

use rayon::prelude::*;

use crate::averaged::{AveragedSim, AveragedState};
use crate::diagnostics::{empirical_observable, pde_observable, ObservableSpec};
use crate::error::{Error, Result};
use crate::fastslow::{init_positions, init_state, FastSlowSim, LinkMode};
use crate::fokker_planck::{DensityGrid, FieldProfile, FpSolver};
use crate::harness::config::InitSpec;
use crate::model::Model;
use crate::rng::Streams;

/// Which tiers a replica runs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Tiers<'a> {
    pub coupled: bool,
    pub averaged: bool,
    /// Mean-field profiles at every particle step; enables the `Y` particles.
    pub fields: Option<&'a [FieldProfile]>,
}

/// Values of one replica at one checkpoint. Tiers that did not run are NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub coupled: f64,
    pub averaged: f64,
    pub coupling: f64,
}

/// Runs one replica of the selected tiers from shared initial data and
/// shared noise, reporting at every step listed in `checkpoints` (ascending).
pub fn run_replica(
    model: &Model,
    init: &InitSpec,
    mode: LinkMode,
    u: &ObservableSpec,
    replica: u64,
    tiers: Tiers<'_>,
    checkpoints: &[u64],
) -> Result<Vec<Checkpoint>> {
    let cfg = &model.cfg;
    let streams = Streams::new(cfg.seed, replica);
    let law = init.law();
    let last = checkpoints.last().copied().unwrap_or(0);
    if let Some(f) = tiers.fields {
        if (f.len() as u64) < last {
            return Err(Error::invalid(
                "fp",
                format!("{} field profiles for {last} steps", f.len()),
            ));
        }
    }

    let mut coupled = if tiers.coupled {
        Some(init_state(cfg, &law, init.link_prob(cfg), &streams)?)
    } else {
        None
    };
    let fs = FastSlowSim::new(model, mode, streams);
    let mut averaged = if tiers.averaged || tiers.fields.is_some() {
        let x0 = match &coupled {
            Some(c) => c.positions.clone(),
            None => init_positions(cfg, &law, &streams),
        };
        Some(AveragedState::new(x0, tiers.fields.is_some()))
    } else {
        None
    };
    let av = AveragedSim::new(model, streams);

    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for step in 0..=last {
        while next.peek().is_some_and(|&&s| s == step) {
            next.next();
            out.push(Checkpoint {
                step,
                coupled: coupled
                    .as_ref()
                    .map_or(f64::NAN, |c| empirical_observable(u, &c.positions)),
                averaged: averaged
                    .as_ref()
                    .filter(|_| tiers.averaged)
                    .map_or(f64::NAN, |a| empirical_observable(u, &a.xbar)),
                coupling: averaged
                    .as_ref()
                    .and_then(|a| av.coupling_error(a))
                    .unwrap_or(f64::NAN),
            });
        }
        if step == last {
            break;
        }
        if let Some(c) = coupled.as_mut() {
            fs.step(c)?;
        }
        if let Some(a) = averaged.as_mut() {
            let field = tiers.fields.map(|f| &f[step as usize]);
            av.step(a, field)?;
        }
    }
    Ok(out)
}

/// Runs `f(replica)` for `replica in 0..replicas` on `jobs` threads and
/// returns the results in replica order.
pub fn parallel_replicas<T, F>(jobs: usize, replicas: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    pool.install(|| {
        (0..replicas as u64)
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<T>>>()
    })
}

/// Solves the density equation once and returns the mean-field profile at
/// every particle step `0..steps` together with `∫uρ` at each requested step.
pub fn density_reference(
    model: &Model,
    rho0: DensityGrid,
    u: &ObservableSpec,
    steps: u64,
    observe_at: &[u64],
    with_fields: bool,
) -> Result<(Vec<FieldProfile>, Vec<f64>)> {
    let dt = model.cfg.dt;
    let mut solver = FpSolver::new(model, rho0)?;
    let mut fields = Vec::new();
    let mut values = vec![f64::NAN; observe_at.len()];
    for k in 0..=steps {
        solver.advance_to(k as f64 * dt)?;
        for (slot, _) in observe_at.iter().enumerate().filter(|(_, &s)| s == k) {
            values[slot] = pde_observable(u, solver.grid());
        }
        if with_fields && k < steps {
            fields.push(solver.field_profile()?);
        }
    }
    Ok((fields, values))
}
