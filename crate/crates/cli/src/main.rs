//! `sparsenet` command-line driver.
//!
//! Settings are layered: defaults, then `--config`, then the
//! `SPARSENET_SEED` environment variable, then `--set KEY=VALUE` flags in
//! order, then `--seed`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error or
//! refusal, 3 numerical failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sparsenet::averaged::{AveragedSim, AveragedState};
use sparsenet::diagnostics::DiagnosticsRecorder;
use sparsenet::fastslow::{self, init_positions, init_state, FastSlowSim, Observer, SnapshotRecorder};
use sparsenet::fokker_planck::{fp_solve, DensitySnapshots};
use sparsenet::harness::output::write_outputs;
use sparsenet::harness::{run_experiment, ExperimentKind, Settings};
use sparsenet::rng::Streams;
use sparsenet::Error;

#[derive(Parser)]
#[command(name = "sparsenet", version, about = "Particles interacting through a fast random sparse network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replica of the coupled or averaged particle system.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Tier::Coupled)]
        tier: Tier,
        /// Replica index.
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Solve the one-dimensional density equation up to `model.T`.
    FpSolve {
        #[command(flatten)]
        common: Common,
        /// Time between density snapshots; the horizon alone if omitted.
        #[arg(long)]
        every: Option<f64>,
    },
    /// Coupled vs averaged gap across `experiment.eps_values`.
    SweepEps(Experiment),
    /// Averaged system vs density across `experiment.N_values`.
    SweepN(Experiment),
    /// Total error along paired `N_values` and `eps_values`.
    SweepCombined(Experiment),
    /// Error at `experiment.T_early` and `experiment.T_late`.
    UniformTime(Experiment),
    /// Run the invariant checks.
    Validate(Experiment),
    /// Print the default configuration.
    Defaults,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; `experiment.out_dir` if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override `model.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Experiment {
    #[command(flatten)]
    common: Common,
    /// Worker threads for the replica pool.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
    /// Run `uniform-time` even when the convexity check fails.
    #[arg(long)]
    force: bool,
    /// Also write a log-log SVG plot.
    #[arg(long)]
    svg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tier {
    Coupled,
    Averaged,
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn load(common: &Common) -> anyhow::Result<Settings> {
    let mut s = match &common.config {
        Some(path) => Settings::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => Settings::default(),
    };
    s.apply_seed_env()?;
    for o in &common.overrides {
        s.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        s.model.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn out_dir(common: &Common, s: &Settings) -> PathBuf {
    common.out.clone().unwrap_or_else(|| s.experiment.out_dir.clone())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(common: &Common, tier: Tier, replica: u64) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let model = s.build_model()?;
    let cfg = &model.cfg;
    let dir = out_dir(common, &s);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), s.emit())?;
    let streams = Streams::new(cfg.seed, replica);
    let stride = s.experiment.stride;
    let mut snaps = SnapshotRecorder::new(cfg.dim);
    match tier {
        Tier::Coupled => {
            let state = init_state(cfg, &s.init.law(), s.init.link_prob(cfg), &streams)?;
            let sim = FastSlowSim::new(&model, s.link_mode, streams);
            let mut diag = DiagnosticsRecorder::default();
            let mut observers: [&mut dyn Observer; 2] = [&mut snaps, &mut diag];
            let end = fastslow::run(&sim, state, &mut observers, stride)?;
            snaps.write_edges(&mut create(&dir.join("edges.csv"))?)?;
            diag.write_csv(&mut create(&dir.join("functionals.csv"))?)?;
            eprintln!("final time {}, {} links", end.time, end.links.len());
        }
        Tier::Averaged => {
            let mut state = AveragedState::new(init_positions(cfg, &s.init.law(), &streams), false);
            let sim = AveragedSim::new(&model, streams);
            snaps.record_positions(state.time, &state.xbar);
            let steps = cfg.steps_to(cfg.horizon);
            for k in 1..=steps {
                sim.step(&mut state, None)?;
                if k % stride.max(1) == 0 || k == steps {
                    snaps.record_positions(state.time, &state.xbar);
                }
            }
        }
    }
    snaps.write_positions(&mut create(&dir.join("positions.csv"))?)?;
    eprintln!("wrote {}", dir.display());
    Ok(Outcome::Done)
}

fn solve_density(common: &Common, every: Option<f64>) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let model = s.build_model()?;
    if model.cfg.dim != 1 {
        bail!(Error::InvalidParameter {
            name: "model.n",
            reason: "the density solver is one-dimensional".into()
        });
    }
    let dir = out_dir(common, &s);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), s.emit())?;
    let mut snaps = DensitySnapshots::default();
    let horizon = model.cfg.horizon;
    let run = fp_solve(s.initial_density()?, &model, horizon, every.unwrap_or(horizon), &mut [&mut snaps])?;
    let mut w = create(&dir.join("density.csv"))?;
    w.write_all(sparsenet::harness::output::metadata(&s, "density").as_bytes())?;
    snaps.write_csv(&mut w)?;
    eprintln!("{} steps, final mass {:.15}", run.steps, run.grid.mass());
    eprintln!("wrote {}", dir.display());
    Ok(Outcome::Done)
}

fn experiment(kind: ExperimentKind, args: &Experiment) -> anyhow::Result<Outcome> {
    let mut s = load(&args.common)?;
    s.experiment.kind = kind;
    let report = run_experiment(&s, args.jobs.max(1), args.force)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for r in &report.records {
        eprintln!("param {}: {:.2} s", r.param, r.wall_time.as_secs_f64());
    }
    for (name, fit) in &report.slopes {
        println!("{name}: slope {:.4}, r² {:.4}", fit.slope, fit.r2);
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let dir = out_dir(&args.common, &s);
    for path in write_outputs(&dir, &s, &report, args.svg)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(if report.passed() { Outcome::Done } else { Outcome::ChecksFailed })
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate { common, tier, replica } => simulate(&common, tier, replica),
        Command::FpSolve { common, every } => solve_density(&common, every),
        Command::SweepEps(a) => experiment(ExperimentKind::EpsSweep, &a),
        Command::SweepN(a) => experiment(ExperimentKind::NSweep, &a),
        Command::SweepCombined(a) => experiment(ExperimentKind::Combined, &a),
        Command::UniformTime(a) => experiment(ExperimentKind::UniformTime, &a),
        Command::Validate(a) => experiment(ExperimentKind::Validate, &a),
        Command::Defaults => {
            print!("{}", Settings::default().emit());
            Ok(Outcome::Done)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = dispatch(cli);
    eprintln!("wall time {:.2} s", start.elapsed().as_secs_f64());
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
