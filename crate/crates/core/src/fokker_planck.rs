//! Finite-volume solver for the one-dimensional limiting density.
//!
//! The density evolves as `∂ₜρ = −∂ₓ(ρ v) + D ∂ₓₓρ` with velocity
//! `v(x) = −V′(x) + ∫ K̄(y − x) ρ(y) dy`, the continuum limit of the particle
//! drift. Fluxes are oriented left to right: the face flux
//! `J = v⁺ρ_left + v⁻ρ_right − D(ρ_right − ρ_left)/dx` carries mass from cell
//! `m` to cell `m + 1`, and both outer faces carry zero flux.

use std::io::{self, Write};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::Model;

/// Safety factor of the CFL condition.
pub const CFL_SAFETY: f64 = 0.4;

/// Cell averages of a density on `[x_min, x_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::invalid(
                "fp.x_min/fp.x_max",
                format!("need finite x_min < x_max, got [{x_min}, {x_max}]"),
            ));
        }
        if values.is_empty() {
            return Err(Error::invalid("fp.M", "need at least one cell"));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NegativeDensity { cell, value });
        }
        Ok(Self {
            x_min,
            x_max,
            values,
        })
    }

    /// Constant density of unit mass.
    pub fn uniform(x_min: f64, x_max: f64, cells: usize) -> Result<Self> {
        let h = 1.0 / (x_max - x_min);
        Self::new(x_min, x_max, vec![h; cells])
    }

    /// Exact cell averages of a normal law, renormalised to unit mass on the
    /// truncated domain.
    pub fn gaussian(x_min: f64, x_max: f64, cells: usize, mean: f64, variance: f64) -> Result<Self> {
        let normal = Normal::new(mean, variance.sqrt())
            .map_err(|e| Error::invalid("init.variance", e.to_string()))?;
        let dx = (x_max - x_min) / cells as f64;
        let mut values: Vec<f64> = (0..cells)
            .map(|m| {
                let a = x_min + m as f64 * dx;
                (normal.cdf(a + dx) - normal.cdf(a)) / dx
            })
            .collect();
        let mass: f64 = values.iter().sum::<f64>() * dx;
        if mass <= 0.0 {
            return Err(Error::invalid("init.mean", "initial law has no mass on the grid"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(x_min, x_max, values)
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.values.len() as f64
    }

    #[inline]
    pub fn center(&self, m: usize) -> f64 {
        self.x_min + (m as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells()).map(|m| self.center(m)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    /// `∫|ρ − σ|` for grids with identical geometry.
    pub fn l1_distance(&self, other: &DensityGrid) -> f64 {
        assert_eq!(self.cells(), other.cells(), "grids differ in size");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dx()
    }

    /// Averages consecutive pairs of cells; `cells()` must be even.
    pub fn coarsen(&self) -> DensityGrid {
        assert!(self.cells().is_multiple_of(2), "cannot coarsen an odd grid");
        let values = self
            .values
            .chunks_exact(2)
            .map(|c| 0.5 * (c[0] + c[1]))
            .collect();
        DensityGrid {
            values,
            ..self.clone()
        }
    }

    /// `t,x_center,rho` rows, without header.
    pub fn write_rows<W: Write>(&self, time: f64, w: &mut W) -> io::Result<()> {
        for (m, v) in self.values.iter().enumerate() {
            writeln!(w, "{time},{},{v}", self.center(m))?;
        }
        Ok(())
    }
}

fn require_1d(model: &Model) -> Result<()> {
    if model.cfg.dim != 1 {
        return Err(Error::invalid(
            "model.n",
            format!("the density solver is one-dimensional, got n = {}", model.cfg.dim),
        ));
    }
    Ok(())
}

#[inline]
fn kbar(model: &Model, z: f64) -> f64 {
    model.averaged_kernel_limit(&[z, 0.0, 0.0])[0]
}

/// `K̄(d·dx)` for every offset `d` with `|d·dx| < R`, indexed by `d + half`.
fn stencil(model: &Model, dx: f64) -> (usize, Vec<f64>) {
    let half = (model.cfg.radius / dx).ceil() as usize;
    let w = (0..=2 * half)
        .map(|k| kbar(model, (k as f64 - half as f64) * dx))
        .collect();
    (half, w)
}

/// Discrete `Σ_k w(k − m)·ρ_k·dx` over the stencil.
fn stencil_sum(grid: &DensityGrid, half: usize, w: &[f64], sign: f64) -> Vec<f64> {
    let m_len = grid.cells() as isize;
    let dx = grid.dx();
    let h = half as isize;
    (0..m_len)
        .map(|m| {
            let lo = (m - h).max(0);
            let hi = (m + h).min(m_len - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let d = sign as isize * (k - m);
                acc += w[(d + h) as usize] * grid.values[k as usize];
            }
            acc * dx
        })
        .collect()
}

/// `(K̄∗ρ)(x_m) = Σ_k K̄(x_m − x_k)·ρ_k·dx` at every cell centre.
pub fn convolve_kernel(grid: &DensityGrid, model: &Model) -> Vec<f64> {
    let (half, w) = stencil(model, grid.dx());
    stencil_sum(grid, half, &w, -1.0)
}

/// Mean-field force `Σ_k K̄(x_k − x_m)·ρ_k·dx` felt at every cell centre.
pub fn interaction_field(grid: &DensityGrid, model: &Model) -> Vec<f64> {
    let (half, w) = stencil(model, grid.dx());
    stencil_sum(grid, half, &w, 1.0)
}

/// Mean-field force at arbitrary points, frozen at one instant.
#[derive(Clone, Debug)]
pub struct FieldProfile {
    grid: DensityGrid,
    field: Vec<f64>,
    model: Model,
}

impl FieldProfile {
    pub fn new(grid: &DensityGrid, model: &Model) -> Result<Self> {
        require_1d(model)?;
        Ok(Self {
            field: interaction_field(grid, model),
            grid: grid.clone(),
            model: model.clone(),
        })
    }

    /// Linear interpolation between cell centres; direct quadrature outside
    /// the centre range.
    pub fn at(&self, y: f64) -> f64 {
        let g = &self.grid;
        let dx = g.dx();
        let s = (y - g.x_min) / dx - 0.5;
        let last = g.cells() - 1;
        if s >= 0.0 && s <= last as f64 {
            let m = (s.floor() as usize).min(last.saturating_sub(1));
            if last == 0 {
                return self.field[0];
            }
            let t = s - m as f64;
            return (1.0 - t) * self.field[m] + t * self.field[m + 1];
        }
        let r = self.model.cfg.radius;
        if y < g.x_min - r || y > g.x_max + r {
            return 0.0;
        }
        g.values
            .iter()
            .enumerate()
            .map(|(k, v)| kbar(&self.model, g.center(k) - y) * v)
            .sum::<f64>()
            * dx
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }
}

/// Geometry-dependent parts of the face velocities, fixed for a solve.
#[derive(Clone, Debug)]
struct Transport {
    half: usize,
    weights: Vec<f64>,
    interacting: bool,
    confinement: Vec<f64>,
}

impl Transport {
    fn new(grid: &DensityGrid, model: &Model) -> Self {
        let dx = grid.dx();
        let (half, weights) = stencil(model, dx);
        let interacting = weights.iter().any(|w| *w != 0.0);
        let confinement = (0..grid.cells().saturating_sub(1))
            .map(|m| {
                let xf = grid.x_min + (m + 1) as f64 * dx;
                -model.potential.gradient(&[xf, 0.0, 0.0])[0]
            })
            .collect();
        Self {
            half,
            weights,
            interacting,
            confinement,
        }
    }

    fn velocities(&self, grid: &DensityGrid) -> Vec<f64> {
        if !self.interacting {
            return self.confinement.clone();
        }
        let field = stencil_sum(grid, self.half, &self.weights, 1.0);
        self.confinement
            .iter()
            .enumerate()
            .map(|(m, c)| c + 0.5 * (field[m] + field[m + 1]))
            .collect()
    }
}

fn face_velocities(grid: &DensityGrid, model: &Model) -> Vec<f64> {
    Transport::new(grid, model).velocities(grid)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Largest `dt` accepted by [`fp_step`].
pub fn cfl_limit(grid: &DensityGrid, model: &Model) -> f64 {
    cfl_from(&face_velocities(grid, model), grid.dx(), model.cfg.diffusion)
}

fn cfl_from(v: &[f64], dx: f64, diffusion: f64) -> f64 {
    let vmax = max_abs(v);
    let adv = if vmax > 0.0 { dx / vmax } else { f64::INFINITY };
    let dif = if diffusion > 0.0 {
        dx * dx / (2.0 * diffusion)
    } else {
        f64::INFINITY
    };
    CFL_SAFETY * adv.min(dif)
}

/// Step chosen automatically: within the CFL limit and small enough that
/// every updated cell is a convex combination of its neighbours.
fn auto_dt(v: &[f64], dx: f64, diffusion: f64) -> f64 {
    let rate = 2.0 * max_abs(v) / dx + 2.0 * diffusion / (dx * dx);
    let positive = if rate > 0.0 { 0.9 / rate } else { f64::INFINITY };
    cfl_from(v, dx, diffusion).min(positive)
}

fn apply(grid: &mut DensityGrid, v: &[f64], diffusion: f64, dt: f64) -> Result<()> {
    let dx = grid.dx();
    let rho = &grid.values;
    let m_len = rho.len();
    let mut flux = vec![0.0; m_len + 1];
    for m in 0..m_len.saturating_sub(1) {
        let vf = v[m];
        flux[m + 1] = vf.max(0.0) * rho[m] + vf.min(0.0) * rho[m + 1]
            - diffusion * (rho[m + 1] - rho[m]) / dx;
    }
    let c = dt / dx;
    for (m, value) in grid.values.iter_mut().enumerate() {
        *value -= c * (flux[m + 1] - flux[m]);
        if *value < 0.0 || !value.is_finite() {
            return Err(Error::NegativeDensity {
                cell: m,
                value: *value,
            });
        }
    }
    Ok(())
}

/// One explicit conservative update of length `dt`.
pub fn fp_step(grid: &DensityGrid, model: &Model, dt: f64) -> Result<DensityGrid> {
    require_1d(model)?;
    let v = face_velocities(grid, model);
    let limit = cfl_from(&v, grid.dx(), model.cfg.diffusion);
    if !(dt > 0.0 && dt <= limit) {
        return Err(Error::Cfl { dt, limit });
    }
    let mut next = grid.clone();
    apply(&mut next, &v, model.cfg.diffusion, dt)?;
    Ok(next)
}

/// Time-stepping state of one solve.
#[derive(Clone, Debug)]
pub struct FpSolver<'a> {
    model: &'a Model,
    grid: DensityGrid,
    transport: Transport,
    time: f64,
    steps: u64,
}

impl<'a> FpSolver<'a> {
    pub fn new(model: &'a Model, rho0: DensityGrid) -> Result<Self> {
        require_1d(model)?;
        Ok(Self {
            model,
            transport: Transport::new(&rho0, model),
            grid: rho0,
            time: 0.0,
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    pub fn into_grid(self) -> DensityGrid {
        self.grid
    }

    /// Steps with automatic `dt` until exactly `t`, recomputing the
    /// interaction field every step.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let dx = self.grid.dx();
        let diffusion = self.model.cfg.diffusion;
        while self.time < t {
            let v = self.transport.velocities(&self.grid);
            let mut dt = auto_dt(&v, dx, diffusion);
            let remaining = t - self.time;
            let last = dt >= remaining;
            if last {
                dt = remaining;
            }
            apply(&mut self.grid, &v, diffusion, dt)?;
            self.steps += 1;
            self.time = if last { t } else { self.time + dt };
        }
        Ok(())
    }

    pub fn field_profile(&self) -> Result<FieldProfile> {
        FieldProfile::new(&self.grid, self.model)
    }
}

/// Receives the density at observation times.
pub trait DensityObserver {
    fn observe(&mut self, time: f64, grid: &DensityGrid) -> Result<()>;
}

/// Keeps every observed density.
#[derive(Clone, Debug, Default)]
pub struct DensitySnapshots {
    pub frames: Vec<(f64, DensityGrid)>,
}

impl DensitySnapshots {
    /// `t,x_center,rho` CSV.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,x_center,rho")?;
        for (t, g) in &self.frames {
            g.write_rows(*t, w)?;
        }
        Ok(())
    }
}

impl DensityObserver for DensitySnapshots {
    fn observe(&mut self, time: f64, grid: &DensityGrid) -> Result<()> {
        self.frames.push((time, grid.clone()));
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FpRun {
    pub grid: DensityGrid,
    pub steps: u64,
}

/// Solves up to `horizon`, calling the observers at `t = 0`, every
/// `observe_every` units of time and at `horizon`.
pub fn fp_solve(
    rho0: DensityGrid,
    model: &Model,
    horizon: f64,
    observe_every: f64,
    observers: &mut [&mut dyn DensityObserver],
) -> Result<FpRun> {
    let mut solver = FpSolver::new(model, rho0)?;
    for o in observers.iter_mut() {
        o.observe(0.0, solver.grid())?;
    }
    if horizon > 0.0 {
        let every = if observe_every > 0.0 { observe_every } else { horizon };
        let chunks = (horizon / every).ceil().max(1.0) as u64;
        for k in 1..=chunks {
            let t = (k as f64 * every).min(horizon);
            solver.advance_to(t)?;
            for o in observers.iter_mut() {
                o.observe(t, solver.grid())?;
            }
        }
    }
    let steps = solver.steps();
    Ok(FpRun {
        grid: solver.into_grid(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelSpec, ModelConfig, PotentialSpec};
    use rand::{Rng, SeedableRng};

    fn model(kappa: f64, k: f64, diffusion: f64) -> Model {
        let cfg = ModelConfig {
            diffusion,
            ..ModelConfig::default()
        };
        Model::new(cfg, PotentialSpec::Quadratic { kappa }, KernelSpec::Spring { k }).unwrap()
    }

    fn random_grid(cells: usize, seed: u64) -> DensityGrid {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let raw: Vec<f64> = (0..cells).map(|_| rng.random::<f64>()).collect();
        let g = DensityGrid::new(-3.0, 3.0, raw).unwrap();
        let mass = g.mass();
        DensityGrid::new(-3.0, 3.0, g.values.iter().map(|v| v / mass).collect()).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = DensityGrid::uniform(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.centers(), vec![-0.75, -0.25, 0.25, 0.75]);
        assert!((g.mass() - 1.0).abs() < 1e-15);
        assert!(DensityGrid::new(1.0, 0.0, vec![1.0]).is_err());
        assert!(DensityGrid::new(0.0, 1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn point_mass_convolution_reproduces_kernel() {
        let m = model(1.0, 0.7, 0.5);
        let mut g = DensityGrid::uniform(-3.0, 3.0, 120).unwrap();
        g.values.iter_mut().for_each(|v| *v = 0.0);
        let at = 50;
        g.values[at] = 1.0 / g.dx();
        let x0 = g.center(at);
        let out = convolve_kernel(&g, &m);
        for (i, o) in out.iter().enumerate() {
            let expect = kbar(&m, g.center(i) - x0);
            assert!((o - expect).abs() < 1e-12, "cell {i}: {o} vs {expect}");
        }
        let field = interaction_field(&g, &m);
        for (a, b) in field.iter().zip(&out) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_kernel_vanishes_at_symmetry_centre() {
        let m = model(1.0, 0.5, 0.5);
        let g = DensityGrid::gaussian(-4.0, 4.0, 101, 0.0, 0.7).unwrap();
        assert!(convolve_kernel(&g, &m)[50].abs() < 1e-15);
    }

    #[test]
    fn convolution_matches_direct_double_sum() {
        let m = model(1.0, 0.9, 0.5);
        let g = random_grid(64, 3);
        let fast = convolve_kernel(&g, &m);
        let dx = g.dx();
        for (i, f) in fast.iter().enumerate() {
            let mut direct = 0.0;
            for k in 0..64 {
                direct += kbar(&m, g.center(i) - g.center(k)) * g.values[k] * dx;
            }
            assert!((f - direct).abs() <= 1e-12 * direct.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn uniform_density_without_forces_is_stationary() {
        let m = model(1e-300, 0.0, 0.5);
        let g = DensityGrid::uniform(-2.0, 2.0, 40).unwrap();
        let next = fp_step(&g, &m, 1e-3).unwrap();
        assert_eq!(next, g);
    }

    #[test]
    fn cfl_violations_are_reported() {
        let m = model(1.0, 0.5, 0.5);
        let g = DensityGrid::gaussian(-4.0, 4.0, 200, 0.0, 1.0).unwrap();
        let limit = cfl_limit(&g, &m);
        assert!(matches!(fp_step(&g, &m, 2.0 * limit), Err(Error::Cfl { .. })));
        assert!(fp_step(&g, &m, limit).is_ok());
        let mut m2 = m.clone();
        m2.cfg.dim = 2;
        assert!(fp_step(&g, &m2, limit).is_err());
    }

    #[test]
    fn mass_is_conserved_and_positivity_kept() {
        let m = model(2.0, 0.5, 0.5);
        let mut s = FpSolver::new(&m, DensityGrid::gaussian(-4.0, 4.0, 64, 1.0, 0.3).unwrap()).unwrap();
        let m0 = s.grid().mass();
        let mut t = 0.0;
        while s.steps() < 10_000 {
            t += 0.01;
            s.advance_to(t).unwrap();
        }
        assert!((s.grid().mass() - m0).abs() < 1e-12);
        assert!(s.grid().values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_horizon_returns_initial_density() {
        let m = model(1.0, 0.5, 0.5);
        let g = DensityGrid::gaussian(-4.0, 4.0, 64, 0.0, 1.0).unwrap();
        let run = fp_solve(g.clone(), &m, 0.0, 0.1, &mut []).unwrap();
        assert_eq!(run.grid, g);
        assert_eq!(run.steps, 0);
    }

    #[test]
    fn symmetric_problems_stay_symmetric() {
        let m = Model::new(
            ModelConfig::default(),
            PotentialSpec::DoubleWell { a: 1.0, b: 0.25 },
            KernelSpec::Spring { k: 0.8 },
        )
        .unwrap();
        let g = DensityGrid::gaussian(-3.0, 3.0, 96, 0.0, 0.5).unwrap();
        let run = fp_solve(g, &m, 1.0, 1.0, &mut []).unwrap();
        let v = &run.grid.values;
        for i in 0..v.len() / 2 {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_problem_relaxes_to_gaussian() {
        let (kappa, d) = (1.0, 0.5);
        let m = model(kappa, 0.0, d);
        // domain of ±6.5 stationary standard deviations: tail mass below 1e-10
        let half = 6.5 * (d / kappa).sqrt();
        let g = DensityGrid::gaussian(-half, half, 512, 1.5, 0.05).unwrap();
        let run = fp_solve(g, &m, 15.0, 15.0, &mut []).unwrap();
        let exact = DensityGrid::gaussian(-half, half, 512, 0.0, d / kappa).unwrap();
        let l1 = run.grid.l1_distance(&exact);
        assert!(l1 < 1e-2, "{l1}");
    }

    #[test]
    fn grid_refinement_converges_at_order_one_to_two() {
        let m = model(1.0, 0.5, 0.5);
        let solve = |cells| {
            let g = DensityGrid::gaussian(-4.0, 4.0, cells, 0.5, 0.4).unwrap();
            fp_solve(g, &m, 1.0, 1.0, &mut []).unwrap().grid
        };
        let (c, f, ff) = (solve(128), solve(256), solve(512));
        let d1 = f.coarsen().l1_distance(&c);
        let d2 = ff.coarsen().l1_distance(&f);
        let ratio = d1 / d2;
        assert!((1.8..=4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn field_profile_interpolates_and_extends() {
        let m = model(1.0, 0.5, 0.5);
        let g = DensityGrid::gaussian(-2.0, 2.0, 80, 0.3, 0.4).unwrap();
        let p = FieldProfile::new(&g, &m).unwrap();
        let field = interaction_field(&g, &m);
        assert!((p.at(g.center(10)) - field[10]).abs() < 1e-14);
        let mid = 0.5 * (g.center(10) + g.center(11));
        assert!((p.at(mid) - 0.5 * (field[10] + field[11])).abs() < 1e-14);
        assert_eq!(p.at(10.0), 0.0);
        // just outside the last centre: direct quadrature, close to the edge value
        let edge = g.x_max - 0.1 * g.dx();
        assert!((p.at(edge) - field[79]).abs() < 1e-2);
    }

    #[test]
    fn snapshots_csv_layout() {
        let mut s = DensitySnapshots::default();
        let g = DensityGrid::uniform(0.0, 1.0, 2).unwrap();
        s.observe(0.5, &g).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,x_center,rho\n0.5,0.25,1\n0.5,0.75,1\n");
    }
}
