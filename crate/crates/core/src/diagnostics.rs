//! Link functionals, observables and error estimators.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::fastslow::{CoupledState, Observer};
use crate::fokker_planck::DensityGrid;
use crate::model::{KernelSpec, Model};
use crate::point::{self, Point, ORIGIN};

/// Bounded test function with bounded first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObservableSpec {
    /// `u(x) = tanh(c·x₁)`.
    TanhScaled { c: f64 },
    /// `u(x) = exp(−c|x|²)`.
    GaussBump { c: f64 },
}

impl Default for ObservableSpec {
    fn default() -> Self {
        ObservableSpec::TanhScaled { c: 1.0 }
    }
}

/// Suprema of `|u|`, `|∇u|` and the operator norm of `∇²u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableBounds {
    pub value: f64,
    pub gradient: f64,
    pub hessian: f64,
}

impl ObservableSpec {
    pub fn validate(&self) -> Result<()> {
        let c = match *self {
            ObservableSpec::TanhScaled { c } | ObservableSpec::GaussBump { c } => c,
        };
        if c.is_finite() && c >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("observable.c", format!("must be finite and non-negative, got {c}")))
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        match *self {
            ObservableSpec::TanhScaled { c } => (c * x[0]).tanh(),
            ObservableSpec::GaussBump { c } => (-c * point::norm_sq(x)).exp(),
        }
    }

    pub fn gradient(&self, x: &Point) -> Point {
        match *self {
            ObservableSpec::TanhScaled { c } => {
                let t = (c * x[0]).tanh();
                [c * (1.0 - t * t), 0.0, 0.0]
            }
            ObservableSpec::GaussBump { c } => point::scale(x, -2.0 * c * self.value(x)),
        }
    }

    pub fn hessian(&self, x: &Point) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        match *self {
            ObservableSpec::TanhScaled { c } => {
                let t = (c * x[0]).tanh();
                h[0][0] = -2.0 * c * c * t * (1.0 - t * t);
            }
            ObservableSpec::GaussBump { c } => {
                let u = self.value(x);
                for a in 0..3 {
                    for b in 0..3 {
                        let id = if a == b { 1.0 } else { 0.0 };
                        h[a][b] = u * (4.0 * c * c * x[a] * x[b] - 2.0 * c * id);
                    }
                }
            }
        }
        h
    }

    pub fn bounds(&self) -> ObservableBounds {
        match *self {
            ObservableSpec::TanhScaled { c } => ObservableBounds {
                value: 1.0,
                gradient: c,
                hessian: c * c * 4.0 / (3.0 * 3f64.sqrt()),
            },
            ObservableSpec::GaussBump { c } => ObservableBounds {
                value: 1.0,
                gradient: (2.0 * c).sqrt() * (-0.5f64).exp(),
                hessian: 2.0 * c,
            },
        }
    }
}

/// `g(z) = max(1, |z|)`, the weight of a link in the sparsity functionals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GFunction;

impl GFunction {
    #[inline]
    pub fn value(&self, z: &Point) -> f64 {
        point::norm(z).max(1.0)
    }

    /// Whether `g ≥ |K|` everywhere. Both kernels satisfy `|K(z)| ≤ |z|·|K(e)|`
    /// for `|z| ≥ 1`, so the supremum of `|K|` on the unit ball decides.
    pub fn dominates(&self, kernel: &KernelSpec) -> bool {
        kernel.magnitude_bound(1.0) <= 1.0
    }
}

/// `ψⁱ = Σ_{j linked to i} g(xʲ − xⁱ)`.
pub fn psi_i(i: usize, state: &CoupledState, g: &GFunction) -> f64 {
    let x = &state.positions;
    state
        .links
        .sorted_edges()
        .into_iter()
        .filter_map(|(a, b)| match (a == i, b == i) {
            (true, _) => Some(b),
            (_, true) => Some(a),
            _ => None,
        })
        .map(|j| g.value(&point::sub(&x[j], &x[i])))
        .sum()
}

/// `ψⁱ` for every particle.
pub fn psi_all(state: &CoupledState, g: &GFunction) -> Vec<f64> {
    let x = &state.positions;
    let mut psi = vec![0.0; x.len()];
    for (i, j) in state.links.sorted_edges() {
        let w = g.value(&point::sub(&x[j], &x[i]));
        psi[i] += w;
        psi[j] += w;
    }
    psi
}

/// `(1/N)Σψⁱ`.
pub fn i1(psi: &[f64]) -> f64 {
    if psi.is_empty() {
        return 0.0;
    }
    psi.iter().sum::<f64>() / psi.len() as f64
}

/// `(1/N)Σ(ψⁱ)²`.
pub fn i2(psi: &[f64]) -> f64 {
    if psi.is_empty() {
        return 0.0;
    }
    psi.iter().map(|p| p * p).sum::<f64>() / psi.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    pub max: usize,
}

pub fn degree_stats(state: &CoupledState) -> DegreeStats {
    let n = state.positions.len();
    let degrees = state.links.degrees(n);
    DegreeStats {
        mean: if n == 0 { 0.0 } else { 2.0 * state.links.len() as f64 / n as f64 },
        max: degrees.into_iter().max().unwrap_or(0),
    }
}

/// `(1/N)Σ u(xⁱ)`.
pub fn empirical_observable(u: &ObservableSpec, positions: &[Point]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    positions.iter().map(|x| u.value(x)).sum::<f64>() / positions.len() as f64
}

/// `Σ_m u(x_m)·ρ_m·dx`.
pub fn pde_observable(u: &ObservableSpec, grid: &DensityGrid) -> f64 {
    let mut x = ORIGIN;
    let mut acc = 0.0;
    for (m, v) in grid.values.iter().enumerate() {
        x[0] = grid.center(m);
        acc += u.value(&x) * v;
    }
    acc * grid.dx()
}

/// Observable of one replica, tagged with the stream it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaValue {
    pub seed: u64,
    pub replica: u64,
    pub value: f64,
}

fn check_matched(a: &[ReplicaValue], b: &[ReplicaValue]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ReplicaMismatch(format!(
            "{} coupled replicas against {} averaged",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::ReplicaMismatch("no replicas".into()));
    }
    for (x, y) in a.iter().zip(b) {
        if (x.seed, x.replica) != (y.seed, y.replica) {
            return Err(Error::ReplicaMismatch(format!(
                "replica ({}, {}) paired with ({}, {})",
                x.seed, x.replica, y.seed, y.replica
            )));
        }
    }
    Ok(())
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimators over a common replica set, with `a` the coupled
/// observable, `b` the averaged one and `p` the density observable:
/// `E = mean (a − p)²`, `Eᵖᵃʳᵗ = mean (b − p)²` and
/// `Eᵃᵛ = mean(a² − b²) − 2p·mean(a − b)`, so that `E = Eᵃᵛ + Eᵖᵃʳᵗ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDecomposition {
    pub e: f64,
    pub eav: f64,
    pub epart: f64,
    /// `mean (a − b)²`, the squared observable gap under common noise.
    pub gap: f64,
    pub e_stderr: f64,
    pub eav_stderr: f64,
    pub epart_stderr: f64,
    pub gap_stderr: f64,
    pub replicas: usize,
}

impl ErrorDecomposition {
    pub fn estimate(coupled: &[ReplicaValue], averaged: &[ReplicaValue], pde: f64) -> Result<Self> {
        check_matched(coupled, averaged)?;
        let p = pde;
        let sq = |v: f64| v * v;
        let e: Vec<f64> = coupled.iter().map(|a| sq(a.value - p)).collect();
        let epart: Vec<f64> = averaged.iter().map(|b| sq(b.value - p)).collect();
        let eav: Vec<f64> = coupled
            .iter()
            .zip(averaged)
            .map(|(a, b)| sq(a.value) - sq(b.value) - 2.0 * p * (a.value - b.value))
            .collect();
        let gap: Vec<f64> = coupled
            .iter()
            .zip(averaged)
            .map(|(a, b)| sq(a.value - b.value))
            .collect();
        let (e, e_stderr) = mean_and_stderr(&e);
        let (eav, eav_stderr) = mean_and_stderr(&eav);
        let (epart, epart_stderr) = mean_and_stderr(&epart);
        let (gap, gap_stderr) = mean_and_stderr(&gap);
        Ok(Self {
            e,
            eav,
            epart,
            gap,
            e_stderr,
            eav_stderr,
            epart_stderr,
            gap_stderr,
            replicas: coupled.len(),
        })
    }

    /// `|E − Eᵃᵛ − Eᵖᵃʳᵗ|` relative to `max(E, 1)`.
    pub fn identity_residual(&self) -> f64 {
        (self.e - self.eav - self.epart).abs() / self.e.abs().max(1.0)
    }
}

pub fn error_e(coupled: &[ReplicaValue], averaged: &[ReplicaValue], pde: f64) -> Result<f64> {
    Ok(ErrorDecomposition::estimate(coupled, averaged, pde)?.e)
}

pub fn error_eav(coupled: &[ReplicaValue], averaged: &[ReplicaValue], pde: f64) -> Result<f64> {
    Ok(ErrorDecomposition::estimate(coupled, averaged, pde)?.eav)
}

pub fn error_epart(averaged: &[ReplicaValue], pde: f64) -> Result<f64> {
    if averaged.is_empty() {
        return Err(Error::ReplicaMismatch("no replicas".into()));
    }
    Ok(mean_and_stderr(&averaged.iter().map(|b| (b.value - pde).powi(2)).collect::<Vec<_>>()).0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on `(ln parameter, ln error)`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least two points"));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::invalid(
            "points",
            format!("log-log fit needs positive values, got {p:?}"),
        ));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "parameters are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}

/// Envelope `C₁ + I₀·e^{−C₂t/ε}` over an `I₁` time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub c1: f64,
    pub c2: f64,
    pub i0: f64,
    pub epsilon: f64,
}

impl Envelope {
    /// `C₁` is the largest value from `tail_start` on; `C₂` the largest rate
    /// for which every earlier excess over `C₁` is still covered.
    pub fn fit(series: &[(f64, f64)], epsilon: f64, tail_start: f64) -> Result<Self> {
        let &(t0, i0) = series
            .first()
            .ok_or_else(|| Error::invalid("series", "empty time series"))?;
        if t0 != 0.0 {
            return Err(Error::invalid("series", "must start at t = 0"));
        }
        let c1 = series
            .iter()
            .filter(|(t, _)| *t >= tail_start)
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max);
        if !c1.is_finite() {
            return Err(Error::invalid("series", "no samples after the tail start"));
        }
        let mut c2 = f64::INFINITY;
        for &(t, v) in series.iter().skip(1) {
            if v > c1 {
                let ratio = (v - c1) / i0;
                c2 = c2.min(-epsilon * ratio.ln() / t);
            }
        }
        Ok(Self {
            c1,
            c2,
            i0,
            epsilon,
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        let decay = if self.c2.is_infinite() && t > 0.0 {
            0.0
        } else {
            (-self.c2 * t / self.epsilon).exp()
        };
        self.c1 + self.i0 * decay
    }

    /// Every sample lies on or below the envelope.
    pub fn covers(&self, series: &[(f64, f64)]) -> bool {
        series
            .iter()
            .all(|&(t, v)| v <= self.at(t) * (1.0 + 1e-12) + 1e-12)
    }
}

/// One row of the link-functional time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalRow {
    pub t: f64,
    pub i1: f64,
    pub i2: f64,
    pub mean_degree: f64,
    pub max_degree: usize,
}

pub fn functional_row(state: &CoupledState, g: &GFunction) -> FunctionalRow {
    let psi = psi_all(state, g);
    let deg = degree_stats(state);
    FunctionalRow {
        t: state.time,
        i1: i1(&psi),
        i2: i2(&psi),
        mean_degree: deg.mean,
        max_degree: deg.max,
    }
}

/// Collects [`FunctionalRow`]s during a coupled run.
#[derive(Clone, Debug, Default)]
pub struct DiagnosticsRecorder {
    pub rows: Vec<FunctionalRow>,
    pub g: GFunction,
}

impl DiagnosticsRecorder {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,I1,I2,mean_degree,max_degree")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.t, r.i1, r.i2, r.mean_degree, r.max_degree)?;
        }
        Ok(())
    }

    pub fn i1_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.i1)).collect()
    }
}

impl Observer for DiagnosticsRecorder {
    fn observe(&mut self, _model: &Model, state: &CoupledState) -> Result<()> {
        self.rows.push(functional_row(state, &self.g));
        Ok(())
    }
}
