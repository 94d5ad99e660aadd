//! Particles diffusing in a confining potential and interacting only through
//! a sparse network whose links form and break on a fast time scale `ε`.
//!
//! Three tiers of the model are simulated side by side:
//!
//! * [`fastslow`]: the coupled particle/link system,
//! * [`averaged`]: the particle system with links replaced by their
//!   stationary probabilities, plus auxiliary independent particles,
//! * [`fokker_planck`]: the limiting one-dimensional density equation.
//!
//! [`diagnostics`] measures sparsity functionals and the error between tiers,
//! and [`harness`] runs replica ensembles and writes the tables.
//!
//! ```
//! use sparsenet::model::{KernelSpec, Model, ModelConfig, PotentialSpec};
//!
//! let model = Model::new(
//!     ModelConfig::default(),
//!     PotentialSpec::Quadratic { kappa: 1.0 },
//!     KernelSpec::Spring { k: 0.5 },
//! )?;
//! // formation rate ν_f/N = 0.02 against destruction rate 1 at zero distance
//! let p = model.link_prob_at(0.0);
//! assert!((p - 0.02 / 1.02).abs() < 1e-15);
//! # Ok::<(), sparsenet::Error>(())
//! ```

pub mod averaged;
pub mod cell_list;
pub mod diagnostics;
pub mod error;
pub mod fastslow;
pub mod fokker_planck;
pub mod harness;
pub mod model;
pub mod point;
pub mod rng;

pub use error::{Error, Result};
pub use model::{KernelSpec, Model, ModelConfig, PotentialSpec};
pub use point::Point;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/links.md")]
    mod links {}
    #[doc = include_str!("../../../book/src/averaging.md")]
    mod averaging {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
