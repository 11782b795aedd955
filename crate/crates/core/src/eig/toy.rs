//! Linear-regression toy model with known EIG.
//!
//! `θ ~ N(0, σ_θ)`, `φ ~ N(0, σ_φ)`, `y | θ, φ ~ N(θ x + φ, σ)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Experiment, ParameterSource};
use crate::math::normal_log_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyTarget {
    Slope,
    Intercept,
}

/// Closed-form EIG of observing one `y` at `x`.
pub fn toy_exact_eig(x: f64, sigma: f64, sigma_theta: f64, sigma_phi: f64, target: ToyTarget) -> f64 {
    let s2 = sigma * sigma;
    let tx2 = (sigma_theta * x).powi(2);
    let p2 = sigma_phi * sigma_phi;
    match target {
        ToyTarget::Slope => 0.5 * (tx2 / (s2 + p2)).ln_1p(),
        ToyTarget::Intercept => 0.5 * (p2 / (s2 + tx2)).ln_1p(),
    }
}

/// One observation at design point `x`. Parameters are `[θ, φ]`.
#[derive(Debug, Clone, Copy)]
pub struct ToyExperiment {
    pub x: f64,
    pub sigma: f64,
}

impl Experiment for ToyExperiment {
    type Outcome = f64;

    fn simulate(&self, params: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        params[0] * self.x + params[1] + self.sigma * z
    }

    fn log_likelihood(&self, y: &f64, params: &[f64]) -> f64 {
        normal_log_pdf(*y, params[0] * self.x + params[1], self.sigma)
    }
}

/// Independent normal priors; the target is either coordinate.
#[derive(Debug, Clone, Copy)]
pub struct ToySource {
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub target: ToyTarget,
}

impl ParameterSource for ToySource {
    fn joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let params = vec![self.sigma_theta * a, self.sigma_phi * b];
        let theta = match self.target {
            ToyTarget::Slope => vec![params[0]],
            ToyTarget::Intercept => vec![params[1]],
        };
        (theta, params)
    }

    fn conditional(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z: f64 = rng.sample(StandardNormal);
        match self.target {
            ToyTarget::Slope => vec![theta[0], self.sigma_phi * z],
            ToyTarget::Intercept => vec![self.sigma_theta * z, theta[0]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_values() {
        assert_eq!(toy_exact_eig(0.0, 0.5, 1.0, 1.0, ToyTarget::Slope), 0.0);
        assert_abs_diff_eq!(toy_exact_eig(0.0, 0.5, 1.0, 1.0, ToyTarget::Intercept), 0.5 * 5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(toy_exact_eig(2.0, 0.5, 1.0, 1.0, ToyTarget::Slope), 0.5 * 4.2f64.ln(), epsilon = 1e-12);
        assert!(toy_exact_eig(1e6, 0.5, 1.0, 1.0, ToyTarget::Intercept) < 1e-11);
    }
}
