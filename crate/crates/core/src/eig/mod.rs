//! Expected information gain of candidate experiments.
//!
//! An [`Experiment`] supplies the outcome model `p(y | params, δ)`; a
//! [`ParameterSource`] supplies joint draws of `(Θ, Φ)` and nuisance draws
//! conditional on `Θ`. Both estimators are written against these traits, so
//! the closed-form toy model and the decomposition model share one code
//! path.

pub mod design;
pub mod estimators;
pub mod mvn;
pub mod toy;

use rand_chacha::ChaCha8Rng;

pub use design::{
    before_after_posterior, design_scan, BeforeAfter, DecompositionExperiment, DesignEvaluator, DesignRow, DesignSpec,
    EffectTarget, EIG_OUTCOME_CAP,
};
pub use estimators::{eig_low_variance, eig_naive, EigBudget, EigEstimate, EstimatorKind};
pub use mvn::{conditional_nuisance_sample, fit_mvn, ConditionalMvn, MvnApproximation, TargetSelection};
pub use toy::{toy_exact_eig, ToyExperiment, ToySource, ToyTarget};

/// Outcome model of a design.
pub trait Experiment: Sync {
    type Outcome: Clone + Send + Sync;

    /// Draw `y ~ p(y | params)`.
    fn simulate(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Self::Outcome;

    /// `log p(y | params)`.
    fn log_likelihood(&self, y: &Self::Outcome, params: &[f64]) -> f64;
}

/// An experiment whose outcome space can be listed.
pub trait EnumerableExperiment: Experiment {
    /// All outcomes, or `None` when there are more than `cap`.
    fn outcomes(&self, cap: usize) -> Option<Vec<Self::Outcome>>;

    /// `log p(y | params)` for every outcome in `ys`.
    fn log_likelihood_batch(&self, ys: &[Self::Outcome], params: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().zip(ys) {
            *o = self.log_likelihood(y, params);
        }
    }
}

/// Source of parameter draws. `params` vectors are in whatever form the
/// paired experiment consumes; `theta` holds the target coordinates.
pub trait ParameterSource: Sync {
    /// One draw of `(Θ, Φ)` from the joint: returns `(theta, params)`.
    fn joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);

    /// Parameters with `Θ = theta` and `Φ ~ p(Φ | Θ)`.
    fn conditional(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}
