//! The coupled particle/network system.
//!
//! Each step of length `dt` is split in two. First every candidate pair runs
//! its two-state link chain exactly over `[0, dt]` with the rates frozen at the
//! start-of-step positions, recording the fraction of the step it spent
//! linked. Then every particle takes an Euler–Maruyama step in which pair
//! forces are weighted by those occupation fractions. Weighting by occupation
//! integrates `∫ A_ij dt` exactly under frozen positions, so the scheme stays
//! consistent when `ε ≪ dt`. [`LinkMode::Endpoint`] uses the end-of-step link
//! state instead, for comparison.

use std::collections::HashSet;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::cell_list::CellGrid;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::point::{self, Point, ORIGIN};
use crate::rng::{self, Stream, Streams};

/// Undirected simple graph on particle indices, edges stored as `(i, j)` with
/// `i < j`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkSet {
    edges: HashSet<(u32, u32)>,
}

#[inline]
fn ordered(i: usize, j: usize) -> (u32, u32) {
    if i < j {
        (i as u32, j as u32)
    } else {
        (j as u32, i as u32)
    }
}

impl LinkSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts the edge `{i, j}`. Self-loops are rejected.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        assert_ne!(i, j, "particles are never linked to themselves");
        self.edges.insert(ordered(i, j))
    }

    pub fn remove(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&ordered(i, j))
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&ordered(i, j))
    }

    /// Flips the edge and returns its new state.
    pub fn toggle(&mut self, i: usize, j: usize) -> bool {
        if self.remove(i, j) {
            false
        } else {
            self.insert(i, j)
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in lexicographic order.
    pub fn sorted_edges(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| (i as usize, j as usize))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn degrees(&self, n: usize) -> Vec<usize> {
        let mut d = vec![0; n];
        for &(i, j) in &self.edges {
            d[i as usize] += 1;
            d[j as usize] += 1;
        }
        d
    }

    /// Structural invariants: no self-loops, `i < j` everywhere.
    pub fn is_well_formed(&self) -> bool {
        self.edges.iter().all(|&(i, j)| i < j)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub time: f64,
    /// Number of completed steps; part of every random-stream key.
    pub step: u64,
    pub positions: Vec<Point>,
    pub links: LinkSet,
}

/// Law of the initial particle positions.
pub trait InitialLaw {
    fn sample(&self, dim: usize, rng: &mut rng::StreamRng) -> Point;
}

/// Independent Gaussian coordinates with common mean and variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianInit {
    pub mean: f64,
    pub variance: f64,
}

impl Default for GaussianInit {
    fn default() -> Self {
        Self {
            mean: 0.0,
            variance: 1.0,
        }
    }
}

impl InitialLaw for GaussianInit {
    fn sample(&self, dim: usize, rng: &mut rng::StreamRng) -> Point {
        let g = rng::gaussian_point(rng, dim);
        let sd = self.variance.sqrt();
        let mut p = ORIGIN;
        for a in 0..dim {
            p[a] = self.mean + sd * g[a];
        }
        p
    }
}

/// Initial link probability giving an `O(1)` expected degree.
pub fn default_link_prob(cfg: &ModelConfig) -> f64 {
    (cfg.nu_f / (cfg.n_particles as f64 * cfg.nu_d)).min(1.0)
}

/// Initial positions only; shared by every tier so that replicas start from
/// identical data.
pub fn init_positions(cfg: &ModelConfig, law: &dyn InitialLaw, streams: &Streams) -> Vec<Point> {
    (0..cfg.n_particles)
        .map(|i| law.sample(cfg.dim, &mut streams.rng(Stream::InitPosition, 0, i as u64)))
        .collect()
}

/// Draws i.i.d. positions and independently links every pair with
/// probability `p_link`.
pub fn init_state(
    cfg: &ModelConfig,
    law: &dyn InitialLaw,
    p_link: f64,
    streams: &Streams,
) -> Result<CoupledState> {
    if !(0.0..=1.0).contains(&p_link) {
        return Err(Error::invalid(
            "init.p_link",
            format!("must lie in [0, 1], got {p_link}"),
        ));
    }
    let positions = init_positions(cfg, law, streams);
    let n = cfg.n_particles;
    let mut links = LinkSet::new();
    if p_link > 0.0 {
        for i in 0..n {
            let mut r = streams.rng(Stream::InitLink, 0, i as u64);
            for j in i + 1..n {
                if p_link >= 1.0 || r.random::<f64>() < p_link {
                    links.insert(i, j);
                }
            }
        }
    }
    Ok(CoupledState {
        time: 0.0,
        step: 0,
        positions,
        links,
    })
}

/// Pairs that may change state or exert a force during the next step: every
/// pair closer than `radius`, plus every currently linked pair. Sorted.
pub fn candidate_pairs(state: &CoupledState, grid: &CellGrid, radius: f64) -> Vec<(usize, usize)> {
    let x = &state.positions;
    let mut pairs = grid.pairs_within(x, radius);
    let before = pairs.len();
    for (i, j) in state.links.sorted_edges() {
        if point::dist(&x[i], &x[j]) >= radius {
            pairs.push((i, j));
        }
    }
    if pairs.len() > before {
        pairs.sort_unstable();
    }
    pairs
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkTransition {
    pub new_linked: bool,
    /// Fraction of the step spent linked.
    pub occupation: f64,
}

/// Exact simulation of a two-state chain with constant rates over `[0, dt]`.
pub fn two_state_transition<R: Rng + ?Sized>(
    linked: bool,
    rate_on: f64,
    rate_off: f64,
    dt: f64,
    rng: &mut R,
) -> LinkTransition {
    let mut state = linked;
    let mut t = 0.0;
    let mut occupied = 0.0;
    loop {
        let rate = if state { rate_off } else { rate_on };
        if rate <= 0.0 {
            if state {
                occupied += dt - t;
            }
            break;
        }
        let hold: f64 = Exp1.sample(rng);
        let tau = hold / rate;
        if t + tau >= dt {
            if state {
                occupied += dt - t;
            }
            break;
        }
        if state {
            occupied += tau;
        }
        t += tau;
        state = !state;
    }
    LinkTransition {
        new_linked: state,
        occupation: (occupied / dt).clamp(0.0, 1.0),
    }
}

/// Link chain of one pair at frozen distance `r`.
pub fn link_transition<R: Rng + ?Sized>(
    linked: bool,
    r: f64,
    dt: f64,
    model: &Model,
    rng: &mut R,
) -> LinkTransition {
    let cfg = &model.cfg;
    let rate_on = cfg.formation_rate() * model.cutoff.value(r) / cfg.epsilon;
    let rate_off = cfg.nu_d / cfg.epsilon;
    two_state_transition(linked, rate_on, rate_off, dt, rng)
}

/// How link activity enters the particle drift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinkMode {
    /// Force weighted by the occupation fraction over the step.
    #[default]
    Occupation,
    /// Force weighted by the end-of-step link indicator.
    Endpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub candidates: usize,
    pub created: usize,
    pub destroyed: usize,
    /// Sum over pairs of the fraction of the step spent linked.
    pub occupation: f64,
}

/// Stepper for one replica of the coupled system.
#[derive(Clone, Copy, Debug)]
pub struct FastSlowSim<'a> {
    pub model: &'a Model,
    pub mode: LinkMode,
    pub streams: Streams,
}

#[inline]
fn pair_index(i: usize, j: usize, n: usize) -> u64 {
    (i as u64) * (n as u64) + j as u64
}

impl<'a> FastSlowSim<'a> {
    pub fn new(model: &'a Model, mode: LinkMode, streams: Streams) -> Self {
        Self {
            model,
            mode,
            streams,
        }
    }

    pub fn step(&self, state: &mut CoupledState) -> Result<StepStats> {
        let cfg = &self.model.cfg;
        let n = cfg.n_particles;
        let dt = cfg.dt;
        let x = &state.positions;
        let grid = CellGrid::build(x, cfg.dim, cfg.radius);
        let pairs = candidate_pairs(state, &grid, cfg.radius);

        let mut force = vec![ORIGIN; n];
        let mut links = LinkSet::new();
        let mut stats = StepStats {
            candidates: pairs.len(),
            ..StepStats::default()
        };
        for &(i, j) in &pairs {
            let r = point::dist(&x[i], &x[j]);
            let linked = state.links.contains(i, j);
            let mut rng = self.streams.rng(Stream::Link, state.step, pair_index(i, j, n));
            let tr = link_transition(linked, r, dt, self.model, &mut rng);
            stats.occupation += tr.occupation;
            let weight = match self.mode {
                LinkMode::Occupation => tr.occupation,
                LinkMode::Endpoint => f64::from(u8::from(tr.new_linked)),
            };
            if weight > 0.0 {
                let kij = self.model.kernel.force(&point::sub(&x[j], &x[i]));
                let kji = self.model.kernel.force(&point::sub(&x[i], &x[j]));
                point::add_scaled(&mut force[i], &kij, weight);
                point::add_scaled(&mut force[j], &kji, weight);
            }
            if tr.new_linked {
                links.insert(i, j);
                if !linked {
                    debug_assert!(r < cfg.radius, "link created beyond the cutoff");
                    stats.created += 1;
                }
            } else if linked {
                stats.destroyed += 1;
            }
        }

        let noise_scale = (2.0 * cfg.diffusion * dt).sqrt();
        let mut next = Vec::with_capacity(n);
        for (i, (xi, fi)) in x.iter().zip(&force).enumerate() {
            let mut drift = *fi;
            point::add_scaled(&mut drift, &self.model.potential.gradient(xi), -1.0);
            let xi_noise = rng::brownian(&self.streams, state.step, i, cfg.dim);
            let mut y = *xi;
            point::add_scaled(&mut y, &drift, dt);
            point::add_scaled(&mut y, &xi_noise, noise_scale);
            if !point::is_finite(&y) {
                return Err(Error::NonFinite {
                    time: state.time + dt,
                    particle: i,
                });
            }
            next.push(y);
        }
        debug_assert!(links.is_well_formed());
        state.positions = next;
        state.links = links;
        state.step += 1;
        state.time += dt;
        Ok(stats)
    }
}

/// Something that looks at the coupled state while a run progresses.
pub trait Observer {
    fn observe(&mut self, model: &Model, state: &CoupledState) -> Result<()>;
}

/// Steps `state` up to the model horizon, calling every observer on the
/// initial state, every `stride` steps, and on the final state.
pub fn run(
    sim: &FastSlowSim<'_>,
    mut state: CoupledState,
    observers: &mut [&mut dyn Observer],
    stride: u64,
) -> Result<CoupledState> {
    let stride = stride.max(1);
    let steps = sim.model.cfg.steps_to(sim.model.cfg.horizon);
    for o in observers.iter_mut() {
        o.observe(sim.model, &state)?;
    }
    for k in 1..=steps {
        sim.step(&mut state)?;
        if k % stride == 0 || k == steps {
            for o in observers.iter_mut() {
                o.observe(sim.model, &state)?;
            }
        }
    }
    Ok(state)
}

/// Records positions and edge lists for CSV output.
#[derive(Clone, Debug, Default)]
pub struct SnapshotRecorder {
    pub positions: Vec<(f64, usize, Point)>,
    pub edges: Vec<(f64, usize, usize)>,
    dim: usize,
}

impl SnapshotRecorder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn record_positions(&mut self, time: f64, positions: &[Point]) {
        self.positions
            .extend(positions.iter().enumerate().map(|(i, p)| (time, i, *p)));
    }

    /// `t,i,x_1..x_n` rows.
    pub fn write_positions<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "t,i")?;
        for a in 1..=self.dim {
            write!(w, ",x_{a}")?;
        }
        writeln!(w)?;
        for (t, i, p) in &self.positions {
            write!(w, "{t},{i}")?;
            for c in &p[..self.dim] {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `t,i,j` rows.
    pub fn write_edges<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,i,j")?;
        for (t, i, j) in &self.edges {
            writeln!(w, "{t},{i},{j}")?;
        }
        Ok(())
    }
}

impl Observer for SnapshotRecorder {
    fn observe(&mut self, _model: &Model, state: &CoupledState) -> Result<()> {
        self.record_positions(state.time, &state.positions);
        self.edges.extend(
            state
                .links
                .sorted_edges()
                .into_iter()
                .map(|(i, j)| (state.time, i, j)),
        );
        Ok(())
    }
}
