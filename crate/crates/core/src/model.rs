//! Model ingredients: confining potential, pair force, cutoff, link rates,
//! the averaged kernels and the convexity thresholds for uniform-in-time
//! behaviour.

use crate::cell_list::CellGrid;
use crate::error::{Error, Result};
use crate::point::{self, Point, ORIGIN};

/// Physical and numerical parameters shared by every tier.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Particle count `N`.
    pub n_particles: usize,
    /// Spatial dimension `n` (1, 2 or 3).
    pub dim: usize,
    /// Time-scale separation of the link dynamics.
    pub epsilon: f64,
    /// Diffusion constant `D`.
    pub diffusion: f64,
    /// Link destruction rate.
    pub nu_d: f64,
    /// Formation-rate constant; the per-pair rate is `nu_f / N`.
    pub nu_f: f64,
    /// Cutoff radius `R`.
    pub radius: f64,
    pub dt: f64,
    /// Horizon `T`. Zero is allowed and means "observe the initial state only".
    pub horizon: f64,
    pub seed: u64,
    pub replicas: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_particles: 100,
            dim: 1,
            epsilon: 0.001,
            diffusion: 0.5,
            nu_d: 1.0,
            nu_f: 2.0,
            radius: 1.0,
            dt: 0.01,
            horizon: 1.0,
            seed: 20_240_601,
            replicas: 32,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be a finite positive number, got {v}")))
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::invalid("model.N", "need at least two particles"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::invalid("model.n", "dimension must be 1, 2 or 3"));
        }
        positive("model.epsilon", self.epsilon)?;
        positive("model.D", self.diffusion)?;
        positive("model.nu_d", self.nu_d)?;
        positive("model.nu_f", self.nu_f)?;
        positive("model.R", self.radius)?;
        positive("model.dt", self.dt)?;
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::invalid("model.T", "horizon must be finite and non-negative"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("model.replicas", "need at least one replica"));
        }
        Ok(())
    }

    /// Per-pair formation rate `nu_f / N` (sparse scaling).
    #[inline]
    pub fn formation_rate(&self) -> f64 {
        self.nu_f / self.n_particles as f64
    }

    /// Number of whole steps of size `dt` needed to reach `horizon`.
    pub fn steps_to(&self, horizon: f64) -> u64 {
        (horizon / self.dt).round() as u64
    }
}

/// Compactly supported bump `φ_R(r) = (1 − (r/R)²)³` on `[0, R)`.
///
/// The value and its first two derivatives vanish at `r = R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub radius: f64,
}

impl Cutoff {
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let u = 1.0 - (r / self.radius).powi(2);
        u * u * u
    }

    /// `dφ/dr`.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let r2 = self.radius * self.radius;
        let u = 1.0 - r * r / r2;
        -6.0 * r * u * u / r2
    }

    /// `d²φ/dr²`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let r2 = self.radius * self.radius;
        let u = 1.0 - r * r / r2;
        -6.0 * u * u / r2 + 24.0 * r * r * u / (r2 * r2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialSpec {
    /// `V(x) = κ|x|²/2`.
    Quadratic { kappa: f64 },
    /// `V(x) = b|x|⁴ − a|x|²`, non-convex near the origin.
    DoubleWell { a: f64, b: f64 },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Quadratic { kappa: 1.0 }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialSpec::Quadratic { kappa } => positive("potential.kappa", kappa),
            PotentialSpec::DoubleWell { a, b } => {
                positive("potential.a", a)?;
                positive("potential.b", b)
            }
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        let r2 = point::norm_sq(x);
        match *self {
            PotentialSpec::Quadratic { kappa } => 0.5 * kappa * r2,
            PotentialSpec::DoubleWell { a, b } => b * r2 * r2 - a * r2,
        }
    }

    #[inline]
    pub fn gradient(&self, x: &Point) -> Point {
        match *self {
            PotentialSpec::Quadratic { kappa } => point::scale(x, kappa),
            PotentialSpec::DoubleWell { a, b } => {
                point::scale(x, 4.0 * b * point::norm_sq(x) - 2.0 * a)
            }
        }
    }

    /// Lower bound `κ₃` on the Hessian.
    pub fn kappa3(&self) -> f64 {
        match *self {
            PotentialSpec::Quadratic { kappa } => kappa,
            PotentialSpec::DoubleWell { a, .. } => -2.0 * a,
        }
    }

    /// Bound `κ₄` on the third derivatives; the quartic well has none.
    pub fn kappa4(&self) -> f64 {
        match *self {
            PotentialSpec::Quadratic { .. } => 0.0,
            PotentialSpec::DoubleWell { .. } => f64::INFINITY,
        }
    }

    pub fn is_convex(&self) -> bool {
        self.kappa3() > 0.0
    }
}

/// Pair force `K(z)` acting on particle `i` with `z = xʲ − xⁱ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `K(z) = k z`.
    Spring { k: f64 },
    /// `K(z) = k z / (1 + |z|²/s²)`.
    SaturatingSpring { k: f64, s: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Spring { k: 0.5 }
    }
}

pub type Matrix3 = [[f64; 3]; 3];

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Spring { k } if k.is_finite() => Ok(()),
            KernelSpec::SaturatingSpring { k, s } if k.is_finite() => positive("kernel.s", s),
            _ => Err(Error::invalid("kernel.k", "must be finite")),
        }
    }

    #[inline]
    pub fn force(&self, z: &Point) -> Point {
        match *self {
            KernelSpec::Spring { k } => point::scale(z, k),
            KernelSpec::SaturatingSpring { k, s } => {
                point::scale(z, k / (1.0 + point::norm_sq(z) / (s * s)))
            }
        }
    }

    pub fn jacobian(&self, z: &Point) -> Matrix3 {
        let mut j = [[0.0; 3]; 3];
        match *self {
            KernelSpec::Spring { k } => {
                for (a, row) in j.iter_mut().enumerate() {
                    row[a] = k;
                }
            }
            KernelSpec::SaturatingSpring { k, s } => {
                let s2 = s * s;
                let q = 1.0 + point::norm_sq(z) / s2;
                for a in 0..3 {
                    for b in 0..3 {
                        let diag = if a == b { 1.0 / q } else { 0.0 };
                        j[a][b] = k * (diag - 2.0 * z[a] * z[b] / (s2 * q * q));
                    }
                }
            }
        }
        j
    }

    /// Largest `|K(z)|` over `|z| ≤ r_max`.
    pub fn magnitude_bound(&self, r_max: f64) -> f64 {
        match *self {
            KernelSpec::Spring { k } => k.abs() * r_max,
            KernelSpec::SaturatingSpring { k, s } => {
                let r = r_max.min(s);
                k.abs() * r / (1.0 + r * r / (s * s))
            }
        }
    }
}

/// Sampled derivative bounds of the averaged kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelBounds {
    /// Bound on `|∇(N·K̄ᴺ)|`.
    pub kappa1: f64,
    /// Bound on `|∇²(N·K̄ᴺ)|`.
    pub kappa2: f64,
    /// Lipschitz constant of the limiting kernel `K̄`.
    pub l_kbar: f64,
}

/// Safety factor applied on top of the sampled maxima.
pub const BOUND_SAFETY: f64 = 1.1;
/// Default number of radial samples on `[0, R]`.
pub const BOUND_SAMPLES: usize = 2001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityReport {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub delta: f64,
    pub kappa_av: f64,
    pub kappa_mf: f64,
    pub l_kbar: f64,
    pub convex: bool,
    pub uniform_in_time_ok: bool,
}

/// Averaging threshold `δ/2 + 2κ₁ + (κ₄+4κ₂)/(δ+4κ₂+κ₄+4κ₁)`.
///
/// An infinite `κ₄` takes the limiting value of the last fraction, 1.
pub fn kappa_av(kappa1: f64, kappa2: f64, kappa4: f64, delta: f64) -> f64 {
    let tail = if kappa4.is_infinite() {
        1.0
    } else {
        (kappa4 + 4.0 * kappa2) / (delta + 4.0 * kappa2 + kappa4 + 4.0 * kappa1)
    };
    delta / 2.0 + 2.0 * kappa1 + tail
}

/// Radially weighted kernel `w(|z|)·K(z)`; used for both averaged kernels.
#[derive(Clone, Copy)]
enum Weight {
    FiniteN,
    Limit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub potential: PotentialSpec,
    pub kernel: KernelSpec,
    pub cutoff: Cutoff,
}

impl Model {
    pub fn new(cfg: ModelConfig, potential: PotentialSpec, kernel: KernelSpec) -> Result<Self> {
        cfg.validate()?;
        potential.validate()?;
        kernel.validate()?;
        let cutoff = Cutoff { radius: cfg.radius };
        Ok(Self {
            cfg,
            potential,
            kernel,
            cutoff,
        })
    }

    /// Copy with a different particle count, keeping everything else.
    pub fn with_particles(&self, n_particles: usize) -> Result<Self> {
        let cfg = ModelConfig {
            n_particles,
            ..self.cfg.clone()
        };
        Model::new(cfg, self.potential, self.kernel)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let cfg = ModelConfig {
            epsilon,
            ..self.cfg.clone()
        };
        Model::new(cfg, self.potential, self.kernel)
    }

    /// Stationary probability that a pair at distance `r` is linked.
    #[inline]
    pub fn link_prob_at(&self, r: f64) -> f64 {
        let on = self.cfg.formation_rate() * self.cutoff.value(r);
        on / (on + self.cfg.nu_d)
    }

    pub fn stationary_link_prob(&self, xi: &Point, xj: &Point) -> f64 {
        self.link_prob_at(point::dist(xi, xj))
    }

    fn weight(&self, which: Weight, r: f64) -> (f64, f64) {
        let phi = self.cutoff.value(r);
        let dphi = self.cutoff.derivative(r);
        match which {
            Weight::FiniteN => {
                let a = self.cfg.formation_rate();
                let den = a * phi + self.cfg.nu_d;
                (a * phi / den, a * self.cfg.nu_d * dphi / (den * den))
            }
            Weight::Limit => {
                let c = self.cfg.nu_f / self.cfg.nu_d;
                (c * phi, c * dphi)
            }
        }
    }

    /// Averaged pair force `K̄ᴺ(z)` on particle `i`, with `z = xʲ − xⁱ`.
    #[inline]
    pub fn averaged_kernel_n(&self, z: &Point) -> Point {
        let r = point::norm(z);
        if r >= self.cfg.radius {
            return ORIGIN;
        }
        point::scale(&self.kernel.force(z), self.link_prob_at(r))
    }

    /// Limiting kernel `K̄(z) = (ν_f/ν_d)·φ_R(|z|)·K(z)`.
    #[inline]
    pub fn averaged_kernel_limit(&self, z: &Point) -> Point {
        let r = point::norm(z);
        if r >= self.cfg.radius {
            return ORIGIN;
        }
        let c = self.cfg.nu_f / self.cfg.nu_d * self.cutoff.value(r);
        point::scale(&self.kernel.force(z), c)
    }

    /// Averaged drift of particle `i` by a direct scan over all partners.
    pub fn averaged_drift(&self, i: usize, x: &[Point]) -> Point {
        let mut f = ORIGIN;
        for (j, xj) in x.iter().enumerate() {
            if j != i {
                let k = self.averaged_kernel_n(&point::sub(xj, &x[i]));
                point::add_scaled(&mut f, &k, 1.0);
            }
        }
        let g = self.potential.gradient(&x[i]);
        point::add_scaled(&mut f, &g, -1.0);
        f
    }

    /// Averaged drift of every particle, enumerating only pairs within `R`.
    pub fn averaged_drifts(&self, x: &[Point]) -> Vec<Point> {
        let grid = CellGrid::build(x, self.cfg.dim, self.cfg.radius);
        let mut f = vec![ORIGIN; x.len()];
        for (i, j) in grid.pairs_within(x, self.cfg.radius) {
            let kij = self.averaged_kernel_n(&point::sub(&x[j], &x[i]));
            let kji = self.averaged_kernel_n(&point::sub(&x[i], &x[j]));
            point::add_scaled(&mut f[i], &kij, 1.0);
            point::add_scaled(&mut f[j], &kji, 1.0);
        }
        for (fi, xi) in f.iter_mut().zip(x) {
            let g = self.potential.gradient(xi);
            point::add_scaled(fi, &g, -1.0);
        }
        f
    }

    fn weighted_jacobian(&self, which: Weight, z: &Point) -> Matrix3 {
        let r = point::norm(z);
        let (w, dw) = self.weight(which, r);
        let k = self.kernel.force(z);
        let jk = self.kernel.jacobian(z);
        let mut j = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let radial = if r > 0.0 { dw * z[b] / r } else { 0.0 };
                j[a][b] = w * jk[a][b] + k[a] * radial;
            }
        }
        j
    }

    /// Frobenius norms of the first and second derivatives of the weighted
    /// kernel at `z = r·e₁`, restricted to the active dimensions.
    fn derivative_norms(&self, which: Weight, r: f64) -> (f64, f64) {
        let n = self.cfg.dim;
        let z = [r, 0.0, 0.0];
        let j = self.weighted_jacobian(which, &z);
        let first = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| j[a][b] * j[a][b])
            .sum::<f64>()
            .sqrt();
        let h = 1e-5 * self.cfg.radius;
        let mut second = 0.0;
        for c in 0..n {
            let mut zp = z;
            let mut zm = z;
            zp[c] += h;
            zm[c] -= h;
            let jp = self.weighted_jacobian(which, &zp);
            let jm = self.weighted_jacobian(which, &zm);
            for a in 0..n {
                for b in 0..n {
                    let d = (jp[a][b] - jm[a][b]) / (2.0 * h);
                    second += d * d;
                }
            }
        }
        (first, second.sqrt())
    }

    /// Maxima of the sampled derivative norms on `samples` radii in `[0, R]`,
    /// without any safety factor.
    pub fn sampled_kernel_derivatives(&self, samples: usize) -> KernelBounds {
        let samples = samples.max(2);
        let scale_n = self.cfg.n_particles as f64;
        let mut out = KernelBounds {
            kappa1: 0.0,
            kappa2: 0.0,
            l_kbar: 0.0,
        };
        for s in 0..samples {
            let r = self.cfg.radius * s as f64 / (samples - 1) as f64;
            let (d1, d2) = self.derivative_norms(Weight::FiniteN, r);
            let (l1, _) = self.derivative_norms(Weight::Limit, r);
            out.kappa1 = out.kappa1.max(scale_n * d1);
            out.kappa2 = out.kappa2.max(scale_n * d2);
            out.l_kbar = out.l_kbar.max(l1);
        }
        out
    }

    /// Derivative bounds `κ₁, κ₂, L_K̄` with the safety factor applied.
    pub fn kernel_bounds(&self) -> KernelBounds {
        let s = self.sampled_kernel_derivatives(BOUND_SAMPLES);
        KernelBounds {
            kappa1: BOUND_SAFETY * s.kappa1,
            kappa2: BOUND_SAFETY * s.kappa2,
            l_kbar: BOUND_SAFETY * s.l_kbar,
        }
    }

    /// Checks whether the potential is convex enough for both the averaging
    /// and the mean-field estimates to hold uniformly in time.
    pub fn convexity_condition_check(&self, delta: f64) -> Result<ConvexityReport> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("experiment.delta", "delta must be positive"));
        }
        let b = self.kernel_bounds();
        Ok(report_from(b, self.potential.kappa3(), self.potential.kappa4(), delta))
    }
}

/// Assembles the threshold report from already-computed constants.
pub fn report_from(b: KernelBounds, kappa3: f64, kappa4: f64, delta: f64) -> ConvexityReport {
    let kav = kappa_av(b.kappa1, b.kappa2, kappa4, delta);
    let kmf = 2.0 * b.l_kbar;
    ConvexityReport {
        kappa1: b.kappa1,
        kappa2: b.kappa2,
        kappa3,
        kappa4,
        delta,
        kappa_av: kav,
        kappa_mf: kmf,
        l_kbar: b.l_kbar,
        convex: kappa3 > 0.0,
        uniform_in_time_ok: kappa3 >= kav.max(kmf),
    }
}
