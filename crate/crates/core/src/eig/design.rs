//! Experimental designs for the decomposition model.
//!
//! A design places cadavers in chosen covariate states and records every
//! tracked characteristic once, at the observation day. Tracked
//! characteristics are those owning a target coefficient: the posterior
//! factorises over characteristics, so no other outcome carries information
//! about the targets. Cadavers sharing covariate levels form a group whose
//! outcome is the count of cadavers showing each characteristic.
//!
//! The likelihood depends on the coefficients only through the linear
//! predictors `η = γ + τ B` of each (group, characteristic) cell, so the
//! parameter source works directly with `η`. Under the normal approximation
//! `η | Θ` is again normal, which makes conditional draws cheap.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::estimators::{eig_low_variance, eig_naive, EigBudget, EigEstimate, EstimatorKind};
use super::mvn::{fit_mvn, psd_factor, ConditionalMvn, TargetSelection};
use super::{EnumerableExperiment, Experiment, ParameterSource};
use crate::error::{Error, Result};
use crate::math::{ln_choose, log_sigmoid, sigmoid};
use crate::model::{DecompositionModel, ParamKind};
use crate::parallel::Execution;
use crate::sampler::{ensure_converged, sample_posterior, PosteriorSamples, SamplerConfig};
use crate::schema::{CaseDesign, Schema};

/// Largest outcome space enumerated by the low-variance estimator.
pub const EIG_OUTCOME_CAP: usize = 4096;

/// A candidate experiment.
///
/// Covariates not mentioned are held at their reference level. When
/// `cadavers` is given it lists per-cadaver overrides on top of
/// `covariates` and must have `num_cadavers` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub num_cadavers: usize,
    #[serde(default)]
    pub covariates: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadavers: Option<Vec<BTreeMap<String, String>>>,
    pub observation_day: f64,
}

/// Cadaver groups with identical covariate levels.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResolvedDesign {
    pub tau: f64,
    pub groups: Vec<(Vec<usize>, u32)>,
}

impl DesignSpec {
    pub(crate) fn resolve(&self, schema: &Schema) -> Result<ResolvedDesign> {
        if !(self.observation_day >= 0.0) || !self.observation_day.is_finite() {
            return Err(Error::invalid("observation_day must be a nonnegative number"));
        }
        let covs = &schema.covariates;
        let apply = |levels: &mut Vec<usize>, map: &BTreeMap<String, String>| -> Result<()> {
            for (name, level) in map {
                let c = covs
                    .index_of(name)
                    .ok_or_else(|| Error::UnknownName(format!("covariate {name}")))?;
                let cov = &covs.covariates[c];
                levels[c] = cov.level_index(level).map(Ok).unwrap_or_else(|| cov.resolve(Some(level)))?;
            }
            Ok(())
        };
        let mut shared = covs.reference_levels();
        apply(&mut shared, &self.covariates)?;
        let mut counts: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
        match &self.cadavers {
            Some(list) => {
                if list.len() != self.num_cadavers {
                    return Err(Error::invalid(format!(
                        "design lists {} cadavers but num_cadavers is {}",
                        list.len(),
                        self.num_cadavers
                    )));
                }
                for overrides in list {
                    let mut levels = shared.clone();
                    apply(&mut levels, overrides)?;
                    *counts.entry(levels).or_default() += 1;
                }
            }
            None if self.num_cadavers > 0 => {
                counts.insert(shared, self.num_cadavers as u32);
            }
            None => {}
        }
        Ok(ResolvedDesign {
            tau: self.observation_day.ln_1p(),
            groups: counts.into_iter().collect(),
        })
    }
}

/// Target coefficients given by parameter name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectTarget {
    pub names: Vec<String>,
}

impl EffectTarget {
    pub fn indices(&self, model: &DecompositionModel) -> Result<Vec<usize>> {
        if self.names.is_empty() {
            return Err(Error::invalid("at least one target effect is required"));
        }
        let mut out = Vec::with_capacity(self.names.len());
        for n in &self.names {
            let i = model
                .layout
                .index_of(n)
                .ok_or_else(|| Error::UnknownName(format!("effect {n}")))?;
            if out.contains(&i) {
                return Err(Error::invalid(format!("effect {n} listed twice")));
            }
            out.push(i);
        }
        Ok(out)
    }
}

/// Binomial counts per (group, tracked characteristic) cell. Parameters
/// are the cell log-odds `η`, cell-major.
#[derive(Debug, Clone)]
pub struct DecompositionExperiment {
    /// Cadavers in each cell.
    trials: Vec<u32>,
    /// `ln C(n, k)` per cell and count.
    ln_choose: Vec<Vec<f64>>,
}

impl DecompositionExperiment {
    fn new(trials: Vec<u32>) -> Self {
        let ln_choose = trials.iter().map(|&n| (0..=n).map(|k| ln_choose(n, k)).collect()).collect();
        Self { trials, ln_choose }
    }

    pub fn num_cells(&self) -> usize {
        self.trials.len()
    }

    pub fn outcome_space_size(&self) -> Option<usize> {
        self.trials
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n as usize + 1))
    }
}

impl Experiment for DecompositionExperiment {
    type Outcome = Vec<u32>;

    fn simulate(&self, params: &[f64], rng: &mut ChaCha8Rng) -> Vec<u32> {
        self.trials
            .iter()
            .zip(params)
            .map(|(&n, &eta)| {
                let p = sigmoid(eta);
                Binomial::new(n as u64, p).map(|b| b.sample(rng) as u32).unwrap_or(0)
            })
            .collect()
    }

    fn log_likelihood(&self, y: &Vec<u32>, params: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, (&n, &eta)) in self.trials.iter().zip(params).enumerate() {
            let k = y[j];
            total += self.ln_choose[j][k as usize] + k as f64 * log_sigmoid(eta) + (n - k) as f64 * log_sigmoid(-eta);
        }
        total
    }
}

impl EnumerableExperiment for DecompositionExperiment {
    fn outcomes(&self, cap: usize) -> Option<Vec<Vec<u32>>> {
        let size = self.outcome_space_size()?;
        if size > cap {
            return None;
        }
        let mut out = Vec::with_capacity(size);
        let mut cur = vec![0u32; self.trials.len()];
        for _ in 0..size {
            out.push(cur.clone());
            // mixed-radix increment
            for (c, &n) in cur.iter_mut().zip(&self.trials) {
                if *c < n {
                    *c += 1;
                    break;
                }
                *c = 0;
            }
        }
        Some(out)
    }

    fn log_likelihood_batch(&self, ys: &[Vec<u32>], params: &[f64], out: &mut [f64]) {
        let mut lp = Vec::with_capacity(params.len());
        for &eta in params {
            let l1 = log_sigmoid(eta);
            lp.push((l1, l1 - eta));
        }
        for (o, y) in out.iter_mut().zip(ys) {
            let mut total = 0.0;
            for (j, &k) in y.iter().enumerate() {
                let (l1, l0) = lp[j];
                total += self.ln_choose[j][k as usize] + k as f64 * l1 + (self.trials[j] - k) as f64 * l0;
            }
            *o = total;
        }
    }
}

/// Parameter source over cell log-odds for one design.
pub struct DesignSource<'e> {
    eval: &'e DesignEvaluator,
    /// Design matrix from reduced coordinates `[Θ, Φ]` to cell log-odds.
    w: DMatrix<f64>,
    /// `η | Θ = B θ + c + F ε`.
    b: DMatrix<f64>,
    c: DVector<f64>,
    f: DMatrix<f64>,
}

impl ParameterSource for DesignSource<'_> {
    fn joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let i = rng.random_range(0..self.eval.draws.len());
        let z = &self.eval.draws[i];
        let eta = &self.w * z;
        (z.rows(0, self.eval.num_theta).iter().copied().collect(), eta.as_slice().to_vec())
    }

    fn conditional(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = self.f.ncols();
        let eps = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let eta = &self.b * DVector::from_column_slice(theta) + &self.c + &self.f * eps;
        eta.as_slice().to_vec()
    }
}

/// Precomputed state for evaluating many designs against one posterior and
/// one target selection.
pub struct DesignEvaluator {
    model: DecompositionModel,
    schema: Schema,
    /// Full-vector indices: targets first, then relevant nuisances.
    relevant: Vec<usize>,
    num_theta: usize,
    tracked: Vec<usize>,
    /// Reduced draws `[Θ, Φ]`.
    draws: Vec<DVector<f64>>,
    cond: ConditionalMvn,
}

impl DesignEvaluator {
    pub fn new(model: &DecompositionModel, schema: &Schema, samples: &PosteriorSamples, theta: &[usize]) -> Result<Self> {
        let layout = &model.layout;
        if samples.names != layout.names() {
            return Err(Error::invalid("samples do not match the model layout"));
        }
        let selection = TargetSelection::new(theta.to_vec(), layout.dim())?;
        let char_of = |i: usize| match layout.kind(i) {
            ParamKind::Gamma { d } | ParamKind::Beta0 { d } | ParamKind::Beta { d, .. } => d,
        };
        let mut tracked: Vec<usize> = selection.theta.iter().map(|&i| char_of(i)).collect();
        tracked.sort_unstable();
        tracked.dedup();
        let mut relevant = selection.theta.clone();
        for &d in &tracked {
            for i in layout.params_of_characteristic(d) {
                if !relevant.contains(&i) {
                    relevant.push(i);
                }
            }
        }
        let num_theta = selection.theta.len();
        let draws: Vec<DVector<f64>> = samples
            .iter()
            .map(|d| DVector::from_iterator(relevant.len(), relevant.iter().map(|&i| d[i])))
            .collect();
        let reduced = TargetSelection::new((0..num_theta).collect(), relevant.len())?;
        let mvn = fit_mvn(draws.iter().map(|d| d.as_slice()), &reduced)?;
        let cond = ConditionalMvn::new(&mvn)?;
        Ok(Self {
            model: model.clone(),
            schema: schema.clone(),
            relevant,
            num_theta,
            tracked,
            draws,
            cond,
        })
    }

    pub fn tracked_characteristics(&self) -> Vec<String> {
        self.tracked
            .iter()
            .map(|&d| self.schema.decomposition.characteristics[d].clone())
            .collect()
    }

    /// Experiment and parameter source for `design`.
    pub fn prepare(&self, design: &DesignSpec) -> Result<(DecompositionExperiment, DesignSource<'_>)> {
        let resolved = design.resolve(&self.schema)?;
        if resolved.groups.is_empty() {
            return Err(Error::invalid("EIG needs at least one cadaver"));
        }
        let pos: HashMap<usize, usize> = self.relevant.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let layout = &self.model.layout;
        let cells = resolved.groups.len() * self.tracked.len();
        let mut w = DMatrix::zeros(cells, self.relevant.len());
        let mut trials = Vec::with_capacity(cells);
        let mut active = Vec::new();
        let mut row = 0;
        for (levels, count) in &resolved.groups {
            for &d in &self.tracked {
                w[(row, pos[&layout.gamma_index(d)])] = 1.0;
                w[(row, pos[&layout.beta0_index(d)])] += resolved.tau;
                layout.active_betas(levels, d, &mut active);
                for &i in &active {
                    w[(row, pos[&i])] += resolved.tau;
                }
                trials.push(*count);
                row += 1;
            }
        }
        let t = self.num_theta;
        let w_theta = w.columns(0, t).into_owned();
        let w_phi = w.columns(t, self.relevant.len() - t).into_owned();
        let b = &w_theta + &w_phi * &self.cond.gain;
        let c = &w_phi * (&self.cond.mean_phi - &self.cond.gain * &self.cond.mean_theta);
        let f = psd_factor(&(&w_phi * &self.cond.cov * w_phi.transpose()))?;
        Ok((DecompositionExperiment::new(trials), DesignSource { eval: self, w, b, c, f }))
    }

    /// EIG of `design`. The low-variance estimator falls back to the naive
    /// one when the outcome space exceeds [`EIG_OUTCOME_CAP`]; the returned
    /// estimate records which estimator ran.
    pub fn estimate(&self, design: &DesignSpec, estimator: EstimatorKind, budget: &EigBudget, exec: Execution) -> Result<EigEstimate> {
        let (experiment, source) = self.prepare(design)?;
        match estimator {
            EstimatorKind::Naive => eig_naive(&experiment, &source, budget, exec),
            EstimatorKind::LowVariance => match eig_low_variance(&experiment, &source, budget, EIG_OUTCOME_CAP, exec) {
                Err(Error::Budget(_)) => eig_naive(&experiment, &source, budget, exec),
                other => other,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub design: DesignSpec,
    pub eig: EigEstimate,
    pub eig_per_cadaver: f64,
    pub se_per_cadaver: f64,
    pub optimal: bool,
}

/// Evaluate every design with the same seed (common random numbers) and
/// flag the one with the largest EIG per cadaver.
pub fn design_scan(
    evaluator: &DesignEvaluator,
    designs: &[DesignSpec],
    estimator: EstimatorKind,
    budget: &EigBudget,
    exec: Execution,
) -> Result<Vec<DesignRow>> {
    let mut rows = designs
        .iter()
        .map(|d| {
            let eig = evaluator.estimate(d, estimator, budget, exec)?;
            let n = d.num_cadavers as f64;
            Ok(DesignRow {
                design: d.clone(),
                eig,
                eig_per_cadaver: eig.value / n,
                se_per_cadaver: eig.mc_standard_error / n,
                optimal: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(best) = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.eig_per_cadaver.total_cmp(&b.1.eig_per_cadaver))
        .map(|(i, _)| i)
    {
        rows[best].optimal = true;
    }
    Ok(rows)
}

/// Posterior of one target coefficient before and after a hypothetical
/// experiment, as kernel density estimates on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter {
    pub target: String,
    pub grid: Vec<f64>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub before_mean: f64,
    pub before_sd: f64,
    pub after_sd: f64,
    pub variance_ratio: f64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// Gaussian KDE with Silverman's bandwidth.
pub fn kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    let (_, sd) = mean_sd(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = crate::math::sorted_quantile(&sorted, 0.75) - crate::math::sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = (0.9 * spread * n.powf(-0.2)).max(1e-12);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| samples.iter().map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

const KDE_POINTS: usize = 201;

/// Refit with the design's expected outcomes appended to the training set.
///
/// Each cadaver contributes soft labels `σ(η)` at the posterior-mean
/// coefficients for the tracked characteristics. Only tracked
/// characteristics are kept in the refit data; the posterior factorises
/// over characteristics, so the targets' marginal is unaffected. The
/// "after" draws are recentred on the "before" mean.
pub fn before_after_posterior(
    model: &DecompositionModel,
    schema: &Schema,
    samples: &PosteriorSamples,
    training: &[CaseDesign],
    theta: &[usize],
    design: &DesignSpec,
    config: &SamplerConfig,
) -> Result<Vec<BeforeAfter>> {
    let layout = &model.layout;
    let selection = TargetSelection::new(theta.to_vec(), layout.dim())?;
    let resolved = design.resolve(schema)?;
    let char_of = |i: usize| match layout.kind(i) {
        ParamKind::Gamma { d } | ParamKind::Beta0 { d } | ParamKind::Beta { d, .. } => d,
    };
    let nd = layout.num_characteristics();
    let mut tracked = vec![false; nd];
    for &i in &selection.theta {
        tracked[char_of(i)] = true;
    }

    let before: Vec<Vec<f64>> = selection
        .theta
        .iter()
        .map(|&j| samples.iter().map(|d| d[j]).collect())
        .collect();
    let after: Vec<Vec<f64>> = if resolved.groups.is_empty() {
        before.clone()
    } else {
        let post_mean = samples.mean();
        let mut cases: Vec<CaseDesign> = training
            .iter()
            .map(|c| CaseDesign {
                levels: c.levels.clone(),
                log1p_pmi: c.log1p_pmi,
                observations: c
                    .observations
                    .iter()
                    .enumerate()
                    .map(|(d, o)| if tracked[d] { *o } else { None })
                    .collect(),
            })
            .collect();
        for (levels, count) in &resolved.groups {
            let observations = (0..nd)
                .map(|d| tracked[d].then(|| sigmoid(model.char_log_odds(&post_mean, levels, resolved.tau, d))))
                .collect();
            let case = CaseDesign {
                levels: levels.clone(),
                log1p_pmi: Some(resolved.tau),
                observations,
            };
            cases.extend(std::iter::repeat_n(case, *count as usize));
        }
        let data = model.dataset(&cases)?;
        let refit = sample_posterior(model, &data, config)?;
        ensure_converged(&refit)?;
        selection
            .theta
            .iter()
            .zip(&before)
            .map(|(&j, b)| {
                let raw: Vec<f64> = refit.iter().map(|d| d[j]).collect();
                let shift = mean_sd(b).0 - mean_sd(&raw).0;
                raw.into_iter().map(|v| v + shift).collect()
            })
            .collect()
    };

    Ok(selection
        .theta
        .iter()
        .zip(before.iter().zip(&after))
        .map(|(&j, (b, a))| {
            let (bm, bs) = mean_sd(b);
            let (_, a_sd) = mean_sd(a);
            let half = 5.0 * bs.max(a_sd).max(1e-9);
            let grid: Vec<f64> = (0..KDE_POINTS)
                .map(|k| bm - half + 2.0 * half * k as f64 / (KDE_POINTS - 1) as f64)
                .collect();
            let before_density = kde(b, &grid);
            let after_density = if std::ptr::eq(a, b) || a == b { before_density.clone() } else { kde(a, &grid) };
            BeforeAfter {
                target: layout.names()[j].clone(),
                before: before_density,
                after: after_density,
                grid,
                before_mean: bm,
                before_sd: bs,
                after_sd: a_sd,
                variance_ratio: if bs > 0.0 { (a_sd / bs).powi(2) } else { 1.0 },
            }
        })
        .collect())
}
