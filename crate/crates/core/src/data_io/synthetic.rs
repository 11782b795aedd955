use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::model::{DecompositionModel, ParamKind};
use crate::parallel::{map_indexed, Execution};
use crate::schema::{CaseRecord, Schema, Variant};

/// Synthetic-data recipe as written in a TOML file.
///
/// ```toml
/// variant = "strict"
/// n_cases = 500
/// default_gamma = -2.0
/// default_beta0 = 0.5
///
/// [coefficients]
/// "gamma[Bloat]" = -4.0
/// "beta[Bloat|Hanging=present]" = -1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpecDoc {
    pub variant: Variant,
    #[serde(default = "default_cases")]
    pub n_cases: usize,
    #[serde(default = "default_tau_mean")]
    pub tau_mean: f64,
    #[serde(default = "default_tau_sd")]
    pub tau_sd: f64,
    #[serde(default = "default_gamma")]
    pub default_gamma: f64,
    #[serde(default)]
    pub default_beta0: f64,
    #[serde(default)]
    pub default_beta: f64,
    /// Probability that each characteristic is recorded.
    #[serde(default = "default_observed")]
    pub observed_fraction: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

/// Generator used by the examples and the command-line demo.
pub const DEMO_SYNTHETIC_SPEC: &str = include_str!("../../data/demo_synthetic.toml");

fn default_cases() -> usize {
    500
}
fn default_tau_mean() -> f64 {
    2.33
}
fn default_tau_sd() -> f64 {
    1.53
}
fn default_gamma() -> f64 {
    -2.0
}
fn default_observed() -> f64 {
    1.0
}

/// Resolved synthetic-data specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// True coefficients in the model's packing order.
    pub coefficients: Vec<f64>,
    pub n_cases: usize,
    /// Normal law on `τ`, truncated at zero.
    pub tau_mean: f64,
    pub tau_sd: f64,
    /// Per covariate level probabilities (schema order).
    pub frequencies: Vec<Vec<f64>>,
    pub observed_fraction: f64,
}

impl SyntheticSpec {
    /// Default frequencies come from the schema; covariates without any are
    /// drawn uniformly.
    pub fn new(schema: &Schema, coefficients: Vec<f64>, n_cases: usize) -> Self {
        let frequencies = schema
            .covariates
            .covariates
            .iter()
            .map(|c| {
                c.frequencies
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / c.levels.len() as f64; c.levels.len()])
            })
            .collect();
        Self {
            coefficients,
            n_cases,
            tau_mean: 2.33,
            tau_sd: 1.53,
            frequencies,
            observed_fraction: 1.0,
        }
    }

    pub fn from_doc(doc: &SyntheticSpecDoc, schema: &Schema, model: &DecompositionModel) -> Result<Self> {
        let layout = &model.layout;
        let mut coefficients: Vec<f64> = layout
            .kinds()
            .iter()
            .map(|k| match k {
                ParamKind::Gamma { .. } => doc.default_gamma,
                ParamKind::Beta0 { .. } => doc.default_beta0,
                ParamKind::Beta { .. } => doc.default_beta,
            })
            .collect();
        for (name, &v) in &doc.coefficients {
            let i = layout
                .index_of(name)
                .ok_or_else(|| Error::UnknownName(format!("coefficient {name} (not in the {} layout)", doc.variant)))?;
            coefficients[i] = v;
        }
        let mut spec = Self::new(schema, coefficients, doc.n_cases);
        spec.tau_mean = doc.tau_mean;
        spec.tau_sd = doc.tau_sd;
        spec.observed_fraction = doc.observed_fraction;
        spec.validate(schema, model)?;
        Ok(spec)
    }

    pub fn validate(&self, schema: &Schema, model: &DecompositionModel) -> Result<()> {
        if self.coefficients.len() != model.dim() {
            return Err(Error::invalid("coefficient vector does not match the model layout"));
        }
        if self.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        if !(self.tau_sd > 0.0) || !self.tau_mean.is_finite() {
            return Err(Error::invalid("PMI law needs a finite mean and positive sd"));
        }
        if !(0.0..=1.0).contains(&self.observed_fraction) {
            return Err(Error::invalid("observed_fraction must lie in [0, 1]"));
        }
        if self.frequencies.len() != schema.num_covariates() {
            return Err(Error::invalid("one frequency vector per covariate is required"));
        }
        for (f, c) in self.frequencies.iter().zip(&schema.covariates.covariates) {
            let s: f64 = f.iter().sum();
            if f.len() != c.levels.len() || f.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("frequencies for {} must be a distribution over its levels", c.name)));
            }
        }
        Ok(())
    }
}

/// Forward simulation of the model. Each case has its own random stream, so
/// the output depends only on `seed`.
pub fn generate_synthetic(schema: &Schema, model: &DecompositionModel, spec: &SyntheticSpec, seed: u64) -> Result<Vec<CaseRecord>> {
    spec.validate(schema, model)?;
    let samplers = spec
        .frequencies
        .iter()
        .map(|f| WeightedIndex::new(f).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let tau_law = Normal::new(spec.tau_mean, spec.tau_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let exec = if spec.n_cases >= 256 { model.execution } else { Execution::Sequential };
    let records = map_indexed(exec, spec.n_cases, |n| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        let levels: Vec<usize> = samplers.iter().map(|s| s.sample(&mut rng)).collect();
        let tau = loop {
            let t = tau_law.sample(&mut rng);
            if t >= 0.0 {
                break t;
            }
        };
        let mut decomposition = BTreeMap::new();
        for (d, name) in schema.decomposition.characteristics.iter().enumerate() {
            let p = sigmoid(model.char_log_odds(&spec.coefficients, &levels, tau, d));
            let y = rng.random::<f64>() < p;
            let observed = spec.observed_fraction >= 1.0 || rng.random::<f64>() < spec.observed_fraction;
            if observed {
                decomposition.insert(name.clone(), y);
            }
        }
        CaseRecord {
            case_id: format!("syn-{n:06}"),
            pmi_days: Some(tau.exp_m1()),
            dates: None,
            covariate_levels: schema
                .covariates
                .covariates
                .iter()
                .zip(&levels)
                .map(|(c, &l)| (c.name.clone(), c.levels[l].clone()))
                .collect(),
            decomposition,
        }
    });
    Ok(records)
}
