//! Quick invariant checks behind the `validate` experiment.

use rand::Rng;

use crate::averaged::{AveragedSim, AveragedState};
use crate::cell_list::{brute_force_pairs, CellGrid};
use crate::diagnostics::GFunction;
use crate::error::Result;
use crate::fastslow::{candidate_pairs, init_positions, init_state, two_state_transition, FastSlowSim};
use crate::fokker_planck::{convolve_kernel, DensityGrid, FpSolver};
use crate::harness::config::Settings;
use crate::harness::runs::{parallel_replicas, run_replica, Tiers};
use crate::model::{KernelSpec, Model};
use crate::point;
use crate::rng::{Stream, StreamRng, Streams};

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> ValidationCheck {
    ValidationCheck {
        name,
        passed,
        detail: detail.into(),
    }
}

fn validation_rng(settings: &Settings, index: u64) -> StreamRng {
    Streams::new(settings.model.seed, 0).rng(Stream::Validation, 0, index)
}

fn candidates(settings: &Settings) -> ValidationCheck {
    let dim = settings.model.dim;
    let mut rng = validation_rng(settings, 1);
    let mut failures = 0;
    for _ in 0..20 {
        let positions: Vec<point::Point> = (0..100)
            .map(|_| {
                let mut p = point::ORIGIN;
                for a in p.iter_mut().take(dim) {
                    *a = rng.random_range(-4.0..4.0);
                }
                p
            })
            .collect();
        let grid = CellGrid::build(&positions, dim, settings.model.radius);
        if grid.pairs_within(&positions, settings.model.radius) != brute_force_pairs(&positions, settings.model.radius) {
            failures += 1;
        }
    }
    check("candidate_pairs", failures == 0, format!("{failures} of 20 configurations differ from brute force"))
}

fn one_d(model: &Model) -> Result<Model> {
    let mut cfg = model.cfg.clone();
    cfg.dim = 1;
    Model::new(cfg, model.potential, model.kernel)
}

fn convolution(settings: &Settings, model: &Model) -> Result<ValidationCheck> {
    let m = one_d(model)?;
    let mut rng = validation_rng(settings, 2);
    let raw: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let g = DensityGrid::new(-3.0, 3.0, raw)?;
    let fast = convolve_kernel(&g, &m);
    let dx = g.dx();
    let mut worst: f64 = 0.0;
    for (i, f) in fast.iter().enumerate() {
        let direct: f64 = (0..64)
            .map(|k| m.averaged_kernel_limit(&[g.center(i) - g.center(k), 0.0, 0.0])[0] * g.values[k] * dx)
            .sum();
        worst = worst.max((f - direct).abs() / direct.abs().max(1e-300));
    }
    let ok = worst <= 1e-12 || fast.iter().all(|v| v.abs() < 1e-300);
    Ok(check("convolution", ok, format!("max relative deviation {worst:e}")))
}

fn density(settings: &Settings, model: &Model) -> Result<ValidationCheck> {
    let m = one_d(model)?;
    let rho0 = settings.initial_density()?;
    let m0 = rho0.mass();
    let mut s = FpSolver::new(&m, rho0)?;
    s.advance_to(0.2)?;
    let drift = (s.grid().mass() - m0).abs();
    let positive = s.grid().values.iter().all(|v| *v >= 0.0);
    Ok(check(
        "density_mass_positivity",
        drift <= 1e-12 && positive,
        format!("mass drift {drift:e} over {} steps, positive: {positive}", s.steps()),
    ))
}

fn link_chain(settings: &Settings) -> ValidationCheck {
    let (on, off, t) = (1.5f64, 2.5f64, 0.5f64);
    let lam = on + off;
    let p01 = on / lam * (1.0 - (-lam * t).exp());
    let trials = 20_000;
    let mut rng = validation_rng(settings, 3);
    let hits = (0..trials)
        .filter(|_| two_state_transition(false, on, off, t, &mut rng).new_linked)
        .count();
    let freq = hits as f64 / trials as f64;
    let z = (freq - p01) / (p01 * (1.0 - p01) / trials as f64).sqrt();
    check("link_chain", z.abs() < 4.0, format!("z-score {z:.2}"))
}

fn link_invariants(settings: &Settings, model: &Model) -> Result<ValidationCheck> {
    let m = model.with_particles(model.cfg.n_particles.min(60))?;
    let cfg = &m.cfg;
    let streams = Streams::new(cfg.seed, 0);
    let mut st = init_state(cfg, &settings.init.law(), settings.init.link_prob(cfg), &streams)?;
    let sim = FastSlowSim::new(&m, settings.link_mode, streams);
    let mut bad = 0;
    for _ in 0..20 {
        let before = st.clone();
        let grid = CellGrid::build(&before.positions, cfg.dim, cfg.radius);
        let cands = candidate_pairs(&before, &grid, cfg.radius);
        sim.step(&mut st)?;
        if !st.links.is_well_formed() {
            bad += 1;
        }
        for (i, j) in st.links.sorted_edges() {
            if !before.links.contains(i, j) && point::dist(&before.positions[i], &before.positions[j]) >= cfg.radius {
                bad += 1;
            }
            if cands.binary_search(&(i, j)).is_err() {
                bad += 1;
            }
        }
    }
    Ok(check("link_invariants", bad == 0, format!("{bad} violations in 20 steps")))
}

fn common_noise(settings: &Settings, model: &Model) -> Result<ValidationCheck> {
    let mut m = one_d(model)?.with_particles(model.cfg.n_particles.min(40))?;
    m.kernel = KernelSpec::Spring { k: 0.0 };
    let streams = Streams::new(m.cfg.seed, 0);
    let x0 = init_positions(&m.cfg, &settings.init.law(), &streams);
    let fp = FpSolver::new(&m, settings.initial_density()?)?;
    let field = fp.field_profile()?;
    let sim = AveragedSim::new(&m, streams);
    let mut st = AveragedState::new(x0, true);
    for _ in 0..20 {
        sim.step(&mut st, Some(&field))?;
    }
    let err = sim.coupling_error(&st).unwrap_or(f64::NAN);
    Ok(check("common_noise", err == 0.0, format!("coupling error with K = 0: {err:e}")))
}

fn determinism(settings: &Settings, model: &Model, jobs: usize) -> Result<ValidationCheck> {
    let m = model.with_particles(model.cfg.n_particles.min(30))?;
    let u = settings.observable_spec()?;
    let tiers = Tiers {
        coupled: true,
        averaged: true,
        fields: None,
    };
    let steps = m.cfg.steps_to(m.cfg.horizon).min(20);
    let go = |j| {
        parallel_replicas(j, 4, |r| run_replica(&m, &settings.init, settings.link_mode, &u, r, tiers, &[steps]))
    };
    let a = go(1)?;
    let b = go(jobs.max(2))?;
    let same = format!("{a:?}") == format!("{b:?}");
    Ok(check("determinism", same, format!("jobs 1 vs {}", jobs.max(2))))
}

fn kernel_report(settings: &Settings, model: &Model) -> Result<ValidationCheck> {
    let r = model.convexity_condition_check(settings.experiment.delta)?;
    let finite = [r.kappa1, r.kappa2, r.kappa_mf, r.l_kbar].iter().all(|v| v.is_finite());
    let dominated = GFunction.dominates(&model.kernel);
    Ok(check(
        "kernel_bounds",
        finite,
        format!(
            "κ1 = {:.4}, κ2 = {:.4}, κ_av = {:.4}, κ_mf = {:.4}, uniform-in-time: {}, g ≥ |K|: {dominated}",
            r.kappa1, r.kappa2, r.kappa_av, r.kappa_mf, r.uniform_in_time_ok
        ),
    ))
}

/// Runs every check; only configuration errors abort.
pub fn run_checks(settings: &Settings, jobs: usize) -> Result<Vec<ValidationCheck>> {
    let model = settings.build_model()?;
    Ok(vec![
        candidates(settings),
        convolution(settings, &model)?,
        density(settings, &model)?,
        link_chain(settings),
        link_invariants(settings, &model)?,
        common_noise(settings, &model)?,
        determinism(settings, &model, jobs)?,
        kernel_report(settings, &model)?,
    ])
}
