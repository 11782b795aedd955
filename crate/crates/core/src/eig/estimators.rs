//! Nested Monte-Carlo EIG estimators in log-sum-exp form.
//!
//! Random streams: the `M'` marginal draws use stream 0 of the seed and
//! outer term `n` uses stream `n + 1`. Each term is therefore reproducible
//! on its own, independent of scheduling, and designs evaluated with the
//! same seed share their parameter draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnumerableExperiment, Experiment, ParameterSource};
use crate::error::{Error, Result};
use crate::math::LogSumExp;
use crate::parallel::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    #[default]
    LowVariance,
}

/// Sample sizes `N` (outer), `M` (conditional nuisance) and `M'`
/// (marginal) plus the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigBudget {
    pub n: usize,
    pub m: usize,
    pub m_prime: usize,
    pub seed: u64,
}

impl Default for EigBudget {
    fn default() -> Self {
        Self {
            n: 10_000,
            m: 5_000,
            m_prime: 5_000,
            seed: 0,
        }
    }
}

impl EigBudget {
    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m < 2 || self.m_prime < 2 {
            return Err(Error::invalid("EIG sample sizes N, M and M' must each be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigEstimate {
    /// Nats.
    pub value: f64,
    pub mc_standard_error: f64,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub m: usize,
    pub m_prime: usize,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

const TERMS_PER_TASK: usize = 64;

fn terms<F>(exec: Execution, n: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let tasks = n.div_ceil(TERMS_PER_TASK);
    let parts = map_indexed(exec, tasks, |t| {
        let lo = t * TERMS_PER_TASK;
        let hi = (lo + TERMS_PER_TASK).min(n);
        (lo..hi).map(&f).collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn summarise(values: &[f64], estimator: EstimatorKind, budget: &EigBudget) -> Result<EigEstimate> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite EIG term; increase M or check the likelihood".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(EigEstimate {
        value: mean,
        mc_standard_error: (var / n).sqrt(),
        estimator,
        n: budget.n,
        m: budget.m,
        m_prime: budget.m_prime,
    })
}

fn marginal_draws<S: ParameterSource>(source: &S, budget: &EigBudget) -> Vec<Vec<f64>> {
    let mut rng = stream(budget.seed, 0);
    (0..budget.m_prime).map(|_| source.joint(&mut rng).1).collect()
}

/// Nested estimator with sampled outcomes:
/// `1/N Σ_n [LSE_m l(y_n | Θ_n, Φ_mn) - LSE_m' l(y_n | Θ_m', Φ_m') + log(M'/M)]`.
pub fn eig_naive<E, S>(experiment: &E, source: &S, budget: &EigBudget, exec: Execution) -> Result<EigEstimate>
where
    E: Experiment,
    S: ParameterSource,
{
    budget.validate()?;
    let marginal = marginal_draws(source, budget);
    let offset = (budget.m_prime as f64 / budget.m as f64).ln();
    let values = terms(exec, budget.n, |n| {
        let mut rng = stream(budget.seed, n as u64 + 1);
        let (theta, params) = source.joint(&mut rng);
        let y = experiment.simulate(&params, &mut rng);
        let mut inner = LogSumExp::default();
        for _ in 0..budget.m {
            let p = source.conditional(&theta, &mut rng);
            inner.push(experiment.log_likelihood(&y, &p));
        }
        let mut outer = LogSumExp::default();
        for p in &marginal {
            outer.push(experiment.log_likelihood(&y, p));
        }
        Ok(inner.value() - outer.value() + offset)
    })?;
    summarise(&values, EstimatorKind::Naive, budget)
}

/// Estimator with the expectation over outcomes computed exactly by
/// enumeration. Fails with [`Error::Budget`] when the outcome space exceeds
/// `cap`.
pub fn eig_low_variance<E, S>(experiment: &E, source: &S, budget: &EigBudget, cap: usize, exec: Execution) -> Result<EigEstimate>
where
    E: EnumerableExperiment,
    S: ParameterSource,
{
    budget.validate()?;
    let ys = experiment
        .outcomes(cap)
        .ok_or_else(|| Error::Budget(format!("outcome space exceeds {cap} outcomes")))?;
    let k = ys.len();
    let marginal = marginal_draws(source, budget);
    // the marginal term depends only on y
    let mut acc = vec![LogSumExp::default(); k];
    let mut buf = vec![0.0; k];
    for p in &marginal {
        experiment.log_likelihood_batch(&ys, p, &mut buf);
        for (a, &l) in acc.iter_mut().zip(&buf) {
            a.push(l);
        }
    }
    let log_marginal: Vec<f64> = acc.iter().map(LogSumExp::value).collect();
    let offset = (budget.m_prime as f64 / budget.m as f64).ln();
    let values = terms(exec, budget.n, |n| {
        let mut rng = stream(budget.seed, n as u64 + 1);
        let (theta, params) = source.joint(&mut rng);
        let mut weights = vec![0.0; k];
        experiment.log_likelihood_batch(&ys, &params, &mut weights);
        let mut inner = vec![LogSumExp::default(); k];
        let mut buf = vec![0.0; k];
        for _ in 0..budget.m {
            let p = source.conditional(&theta, &mut rng);
            experiment.log_likelihood_batch(&ys, &p, &mut buf);
            for (a, &l) in inner.iter_mut().zip(&buf) {
                a.push(l);
            }
        }
        let mut total = 0.0;
        for j in 0..k {
            let w = weights[j].exp();
            if w > 0.0 {
                total += w * (inner[j].value() - log_marginal[j] + offset);
            }
        }
        Ok(total)
    })?;
    summarise(&values, EstimatorKind::LowVariance, budget)
}
