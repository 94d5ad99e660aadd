//! The averaged particle system `X̄` and the auxiliary independent particles
//! `Y`, driven by the same Brownian increments.
//!
//! Noise is drawn from the same keyed stream as the coupled system, so a
//! coupled run, an averaged run and a `Y` run with equal seed and replica
//! index share every increment.

use crate::error::{Error, Result};
use crate::fokker_planck::FieldProfile;
use crate::model::Model;
use crate::point::{self, Point};
use crate::rng::{self, Streams};

#[derive(Clone, Debug, PartialEq)]
pub struct AveragedState {
    pub time: f64,
    pub step: u64,
    pub xbar: Vec<Point>,
    /// Auxiliary particles, present when the run tracks them.
    pub y: Option<Vec<Point>>,
    /// Increments `ξ` of the most recent step, one per particle.
    pub shared_noise: Vec<Point>,
}

impl AveragedState {
    /// Starts `X̄` (and `Y`, if requested) from the same positions.
    pub fn new(initial: Vec<Point>, with_y: bool) -> Self {
        let n = initial.len();
        Self {
            time: 0.0,
            step: 0,
            y: with_y.then(|| initial.clone()),
            xbar: initial,
            shared_noise: vec![point::ORIGIN; n],
        }
    }
}

/// `(1/N) Σᵢ |x̄ⁱ − yⁱ|²`.
pub fn coupling_error(xbar: &[Point], y: &[Point]) -> f64 {
    assert_eq!(xbar.len(), y.len(), "particle arrays differ in length");
    if xbar.is_empty() {
        return 0.0;
    }
    xbar.iter()
        .zip(y)
        .map(|(a, b)| point::norm_sq(&point::sub(a, b)))
        .sum::<f64>()
        / xbar.len() as f64
}

#[derive(Clone, Copy, Debug)]
pub struct AveragedSim<'a> {
    pub model: &'a Model,
    pub streams: Streams,
}

impl<'a> AveragedSim<'a> {
    pub fn new(model: &'a Model, streams: Streams) -> Self {
        Self { model, streams }
    }

    /// One Euler–Maruyama step. `field` must be the mean-field force at the
    /// current time; it is required exactly when the state carries `Y`.
    pub fn step(&self, state: &mut AveragedState, field: Option<&FieldProfile>) -> Result<()> {
        let cfg = &self.model.cfg;
        let dt = cfg.dt;
        let scale = (2.0 * cfg.diffusion * dt).sqrt();
        let n = state.xbar.len();
        let t_next = (state.step + 1) as f64 * dt;

        for i in 0..n {
            state.shared_noise[i] = rng::brownian(&self.streams, state.step, i, cfg.dim);
        }

        let drifts = self.model.averaged_drifts(&state.xbar);
        for (i, (x, d)) in state.xbar.iter_mut().zip(&drifts).enumerate() {
            point::add_scaled(x, d, dt);
            point::add_scaled(x, &state.shared_noise[i], scale);
            if !point::is_finite(x) {
                return Err(Error::NonFinite {
                    time: t_next,
                    particle: i,
                });
            }
        }

        if let Some(y) = state.y.as_mut() {
            let field = field.ok_or_else(|| {
                Error::invalid("fp", "auxiliary particles need the mean-field profile")
            })?;
            if cfg.dim != 1 {
                return Err(Error::invalid(
                    "model.n",
                    "auxiliary particles use the one-dimensional density",
                ));
            }
            for (i, yi) in y.iter_mut().enumerate() {
                let mut d = self.model.potential.gradient(yi);
                d = point::scale(&d, -1.0);
                d[0] += field.at(yi[0]);
                point::add_scaled(yi, &d, dt);
                point::add_scaled(yi, &state.shared_noise[i], scale);
                if !point::is_finite(yi) {
                    return Err(Error::NonFinite {
                        time: t_next,
                        particle: i,
                    });
                }
            }
        }

        state.step += 1;
        state.time = t_next;
        Ok(())
    }

    /// Current `(1/N)Σ|x̄ⁱ − yⁱ|²`, or `None` without auxiliary particles.
    pub fn coupling_error(&self, state: &AveragedState) -> Option<f64> {
        state.y.as_ref().map(|y| coupling_error(&state.xbar, y))
    }
}
