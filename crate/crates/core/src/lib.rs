//! Bayesian model of binary decomposition characteristics as a function of
//! elapsed time and categorical covariates.
//!
//! The crate covers the whole pipeline:
//!
//! * [`schema`]: covariate / characteristic vocabulary and interaction masks.
//! * [`model`]: logistic likelihood in `log(1 + t)`, priors and the joint
//!   log-posterior with its analytic gradient.
//! * [`sampler`]: NUTS and adaptive random-walk samplers with split-R̂/ESS
//!   diagnostics.
//! * [`pmi`]: postmortem-interval posteriors for new cases by grid
//!   marginalisation over `τ = log(1 + t)`.
//! * [`evaluation`]: k-fold cross-validation with ROC AUC, log-space R² and
//!   interval calibration.
//! * [`eig`]: expected-information-gain estimators for candidate experiments.
//! * [`data_io`]: case tables, PMI date arithmetic, synthetic data and effect
//!   tables.
//!
//! Data-parallel loops go through [`parallel`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Every
//! reduction is performed in a fixed order so results do not depend on the
//! number of worker threads.

pub mod api;
pub mod bundle;
pub mod data_io;
pub mod eig;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod model;
pub mod parallel;
pub mod pmi;
pub mod sampler;
pub mod schema;

pub use error::{Error, Result};
