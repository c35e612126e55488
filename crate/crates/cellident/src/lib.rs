//! Battery model parameter identification and design optimisation.
//!
//! `cellident` forward-simulates battery models written as
//! differential-algebraic systems, fits their parameters to time- or
//! frequency-domain measurements, samples Bayesian posteriors over those
//! parameters, and searches design spaces for objectives such as gravimetric
//! energy density.
//!
//! The crate is organised as a pipeline of small layers:
//!
//! * [`parameters`] — the unknown parameter vector, its bounds, priors and
//!   search-space transformations,
//! * [`models`] — equivalent-circuit and single-particle cell models in mass
//!   matrix DAE form, integrated with an adaptive Dormand–Prince solver with
//!   forward sensitivities,
//! * [`problems`] — datasets plus the fitting/design problem wrappers that
//!   align simulations with observations,
//! * [`costs`] — distance metrics, likelihoods, posterior and design
//!   objectives, and Hessian-based identifiability reports,
//! * [`optimisers`] — gradient, evolutionary and metaheuristic minimisers,
//! * [`samplers`] — adaptive Markov chain Monte Carlo and chain diagnostics,
//! * [`eis`] — small-signal impedance via linearisation of the DAE at a
//!   steady state.
//!
//! A batch command-line front end lives in the companion `cellident-cli`
//! crate; the `book/` directory of the repository holds a guide with worked
//! examples mirroring this API.
//!
//! ```
//! use cellident::parameters::{Parameter, ParameterSet, Prior, Transformation};
//!
//! let set = ParameterSet::new(vec![
//!     Parameter::new("r0", 1e-3, 1e-1, 1e-2)
//!         .with_transform(Transformation::Log)
//!         .with_prior(Prior::LogUniform { a: 1e-3, b: 1e-1 }),
//! ])
//! .unwrap();
//!
//! let u = set.to_search(&[1e-2]).unwrap();
//! let theta = set.from_search(&u);
//! assert!((theta[0] - 1e-2).abs() < 1e-15);
//! ```

pub mod models;
pub mod parameters;
pub mod solver;
