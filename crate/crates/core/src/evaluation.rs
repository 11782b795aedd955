//! k-fold cross-validation: ROC AUC per characteristic, log-space R² of the
//! PMI point prediction and calibration of PMI intervals.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::encode_cases;
use crate::error::{Error, Result};
use crate::math::{mean, sigmoid, t_critical, variance};
use crate::model::DecompositionModel;
use crate::parallel::{map_indexed, Execution};
use crate::pmi::{GridConfig, PmiEngine, PmiPrior, TauGrid};
use crate::sampler::{sample_posterior, SamplerConfig};
use crate::schema::{CaseRecord, InteractionMask, Schema};

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counted half. `None` unless both classes occur.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // count pairs directly by tie blocks to stay exact
    let mut wins = 0.0f64;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let pos = idx[i..j].iter().filter(|&&k| labels[k]).count();
        let neg = (j - i) - pos;
        wins += pos as f64 * neg_below as f64 + 0.5 * (pos * neg) as f64;
        neg_below += neg;
        i = j;
    }
    Some(wins / (n_pos as f64 * n_neg as f64))
}

/// Empirical ROC curve from (0, 0) to (1, 1), one vertex per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Option<RocCurve> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        fpr.push(fp / n_neg);
        tpr.push(tp / n_pos);
    }
    Some(RocCurve { fpr, tpr })
}

impl RocCurve {
    /// True-positive rate at each `grid` value by linear interpolation; at
    /// a vertical segment the highest rate is used.
    pub fn interpolate(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter()
            .map(|&x| {
                let mut best = None;
                for k in 0..self.fpr.len() {
                    if self.fpr[k] == x {
                        best = Some(best.map_or(self.tpr[k], |b: f64| b.max(self.tpr[k])));
                    }
                }
                if let Some(b) = best {
                    return b;
                }
                let k = self.fpr.iter().rposition(|&f| f < x).unwrap_or(0);
                let (x0, x1) = (self.fpr[k], self.fpr[k + 1]);
                let (y0, y1) = (self.tpr[k], self.tpr[k + 1]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            })
            .collect()
    }
}

/// Averaged ROC curve with a 95% band across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRoc {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const ROC_GRID_POINTS: usize = 101;

/// Average per-fold curves: `curves[fold][characteristic]`, `None` where a
/// characteristic was single-class in that fold. Each fold's curves are
/// first averaged over characteristics; the band is the t-interval of those
/// fold curves.
pub fn mean_roc_curve(curves: &[Vec<Option<RocCurve>>], grid_points: usize) -> Result<MeanRoc> {
    if curves.len() < 2 {
        return Err(Error::invalid("averaging ROC curves needs at least two folds"));
    }
    if grid_points < 2 {
        return Err(Error::invalid("ROC grid needs at least two points"));
    }
    let grid: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
    let mut fold_curves = Vec::with_capacity(curves.len());
    for fold in curves {
        let present: Vec<Vec<f64>> = fold.iter().flatten().map(|c| c.interpolate(&grid)).collect();
        if present.is_empty() {
            continue;
        }
        let avg: Vec<f64> = (0..grid.len())
            .map(|i| present.iter().map(|c| c[i]).sum::<f64>() / present.len() as f64)
            .collect();
        fold_curves.push(avg);
    }
    if fold_curves.len() < 2 {
        return Err(Error::invalid("fewer than two folds have a usable ROC curve"));
    }
    let mut tpr = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let col: Vec<f64> = fold_curves.iter().map(|c| c[i]).collect();
        let ci = MeanCi::new(&col);
        tpr.push(ci.mean);
        lower.push(ci.lower);
        upper.push(ci.upper);
    }
    Ok(MeanRoc { fpr: grid, tpr, lower, upper })
}

/// `1 − SSE/SST` on `log(1 + t)`.
pub fn r_squared_log(predicted_t: &[f64], true_t: &[f64]) -> Result<f64> {
    if predicted_t.len() != true_t.len() || true_t.len() < 2 {
        return Err(Error::invalid("R² needs two equal-length vectors of at least two values"));
    }
    if predicted_t.iter().chain(true_t).any(|&t| !(t >= 0.0)) {
        return Err(Error::invalid("R² inputs must be nonnegative days"));
    }
    let y: Vec<f64> = true_t.iter().map(|t| t.ln_1p()).collect();
    let ybar = mean(&y);
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::invalid("R² is undefined when the true values have zero variance"));
    }
    let sse: f64 = y.iter().zip(predicted_t).map(|(v, p)| (v - p.ln_1p()).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn new(values: &[f64]) -> Self {
        let m = mean(values);
        let half = if values.len() >= 2 {
            t_critical(0.95, values.len() - 1) * (variance(values) / values.len() as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean: m,
            lower: m - half,
            upper: m + half,
            n: values.len(),
        }
    }
}

/// Assignment of case ids to `k` folds with sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Random balanced assignment. Ids are sorted before shuffling, so the
    /// plan does not depend on input order.
    pub fn new(case_ids: &[String], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("cross-validation needs k ≥ 2"));
        }
        if case_ids.len() < k {
            return Err(Error::invalid(format!("{} cases cannot fill {k} folds", case_ids.len())));
        }
        let mut ids: Vec<&String> = case_ids.iter().collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("case ids must be unique"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let assignments = ids.into_iter().enumerate().map(|(i, id)| (id.clone(), i % k)).collect();
        Ok(Self { k, seed, assignments })
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.assignments.get(case_id).copied()
    }
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub sampler: SamplerConfig,
    /// Posterior draws used for scoring (evenly thinned); 0 uses all.
    pub scoring_draws: usize,
    pub interval_masses: Vec<f64>,
    pub prior: PmiPrior,
    pub grid: GridConfig,
    /// Reject folds whose fit fails the convergence thresholds.
    pub enforce_diagnostics: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            scoring_draws: 400,
            interval_masses: (1..=9).map(|i| i as f64 / 10.0).collect(),
            prior: PmiPrior::default(),
            grid: GridConfig::default(),
            enforce_diagnostics: true,
            execution: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
    pub r_squared: f64,
    /// Share of true PMIs inside each interval of `interval_masses`.
    pub coverage: Vec<f64>,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub diagnostics_pass: bool,
    #[serde(skip)]
    pub roc: Vec<Option<RocCurve>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub nominal: f64,
    pub observed: f64,
    pub n: usize,
    /// 95% binomial band around `nominal`.
    pub lower: f64,
    pub upper: f64,
}

/// Calibration of interval coverage: `hits[i][j]` says whether case `i`
/// fell inside the interval of mass `masses[j]`.
pub fn calibration(masses: &[f64], hits: &[Vec<bool>]) -> Vec<CalibrationPoint> {
    let n = hits.len();
    masses
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let inside = hits.iter().filter(|h| h[j]).count();
            let half = 1.96 * (q * (1.0 - q) / n.max(1) as f64).sqrt();
            CalibrationPoint {
                nominal: q,
                observed: if n > 0 { inside as f64 / n as f64 } else { f64::NAN },
                n,
                lower: (q - half).max(0.0),
                upper: (q + half).min(1.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seed: u64,
    pub variant: String,
    pub characteristics: Vec<String>,
    pub folds: Vec<FoldResult>,
    /// Per-characteristic AUC averaged over folds where it is defined.
    pub auc_by_characteristic: Vec<Option<f64>>,
    pub macro_auc: MeanCi,
    pub r_squared: MeanCi,
    pub calibration: Vec<CalibrationPoint>,
    pub roc: MeanRoc,
}

/// Fit on `k − 1` folds, score the held-out fold, repeat. AUC uses
/// decomposition probabilities at the true PMI; R² and calibration use the
/// PMI posterior with the PMI hidden.
pub fn run_cv(records: &[CaseRecord], schema: &Schema, mask: &InteractionMask, config: &CvConfig, plan: &FoldPlan) -> Result<EvalReport> {
    config.sampler.validate()?;
    if let Some(r) = records.iter().find(|r| r.pmi_days.is_none()) {
        return Err(Error::invalid(format!("case {} has no PMI", r.case_id)));
    }
    for r in records {
        if plan.fold_of(&r.case_id).is_none() {
            return Err(Error::invalid(format!("case {} is not in the fold plan", r.case_id)));
        }
    }
    if config.interval_masses.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::invalid("interval masses must lie in [0, 1]"));
    }
    // fixed order regardless of how the records were supplied
    let mut sorted: Vec<&CaseRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let owned: Vec<CaseRecord> = sorted.iter().map(|r| (*r).clone()).collect();
    let designs = encode_cases(schema, &owned)?;
    let folds: Vec<usize> = owned.iter().map(|r| plan.assignments[&r.case_id]).collect();
    let model = DecompositionModel::new(schema, mask)?;
    let grid = TauGrid::new(config.prior, config.grid)?;
    let nd = schema.num_characteristics();

    let results = map_indexed(config.execution, plan.k, |f| -> Result<(FoldResult, Vec<Vec<bool>>)> {
        let train: Vec<_> = designs.iter().zip(&folds).filter(|(_, &g)| g != f).map(|(d, _)| d.clone()).collect();
        let test: Vec<_> = designs.iter().zip(&folds).filter(|(_, &g)| g == f).map(|(d, _)| d.clone()).collect();
        let data = model.dataset(&train)?;
        let mut cfg = config.sampler.clone();
        cfg.seed = config.sampler.seed.wrapping_add(f as u64);
        let samples = sample_posterior(&model, &data, &cfg)?;
        let report = samples.diagnostics()?;
        if config.enforce_diagnostics && !report.passes {
            return Err(Error::Diagnostics(format!("fold {f}: {}", report.summary())));
        }
        let draws = samples.thinned(config.scoring_draws);

        let mut auc = Vec::with_capacity(nd);
        let mut roc = Vec::with_capacity(nd);
        for d in 0..nd {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for case in &test {
                let Some(y) = case.observations[d] else { continue };
                let tau = case.log1p_pmi.expect("checked above");
                let p = draws.iter().map(|c| sigmoid(model.char_log_odds(c, &case.levels, tau, d))).sum::<f64>()
                    / draws.len() as f64;
                scores.push(p);
                labels.push(y >= 0.5);
            }
            auc.push(roc_auc(&scores, &labels));
            roc.push(roc_curve(&scores, &labels));
        }
        let defined: Vec<f64> = auc.iter().flatten().copied().collect();
        let macro_auc = (!defined.is_empty()).then(|| mean(&defined));

        let engine = PmiEngine::new(&model, draws, grid.clone())?;
        let posts = engine.posteriors(&test)?;
        let mut predicted = Vec::with_capacity(test.len());
        let mut truth = Vec::with_capacity(test.len());
        let mut hits = Vec::with_capacity(test.len());
        for (case, post) in test.iter().zip(&posts) {
            let tau = case.log1p_pmi.expect("checked above");
            predicted.push(post.mean_tau().exp_m1());
            truth.push(tau.exp_m1());
            hits.push(config.interval_masses.iter().map(|&m| post.interval(m).contains_tau(tau)).collect::<Vec<_>>());
        }
        let r_squared = r_squared_log(&predicted, &truth).unwrap_or(f64::NAN);
        let coverage = (0..config.interval_masses.len())
            .map(|j| hits.iter().filter(|h| h[j]).count() as f64 / hits.len().max(1) as f64)
            .collect();
        Ok((
            FoldResult {
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                auc,
                macro_auc,
                r_squared,
                coverage,
                max_rhat: report.max_rhat,
                min_ess: report.min_ess,
                diagnostics_pass: report.passes,
                roc,
            },
            hits,
        ))
    });

    let mut fold_results = Vec::with_capacity(plan.k);
    let mut all_hits = Vec::new();
    for r in results {
        let (fr, hits) = r?;
        fold_results.push(fr);
        all_hits.extend(hits);
    }
    let auc_by_characteristic = (0..nd)
        .map(|d| {
            let v: Vec<f64> = fold_results.iter().filter_map(|f| f.auc[d]).collect();
            (!v.is_empty()).then(|| mean(&v))
        })
        .collect();
    let macro_values: Vec<f64> = fold_results.iter().filter_map(|f| f.macro_auc).collect();
    let r2_values: Vec<f64> = fold_results.iter().map(|f| f.r_squared).filter(|v| v.is_finite()).collect();
    let curves: Vec<Vec<Option<RocCurve>>> = fold_results.iter().map(|f| f.roc.clone()).collect();
    Ok(EvalReport {
        k: plan.k,
        seed: plan.seed,
        variant: mask.variant.to_string(),
        characteristics: schema.decomposition.characteristics.clone(),
        auc_by_characteristic,
        macro_auc: MeanCi::new(&macro_values),
        r_squared: MeanCi::new(&r2_values),
        calibration: calibration(&config.interval_masses, &all_hits),
        roc: mean_roc_curve(&curves, ROC_GRID_POINTS)?,
        folds: fold_results,
    })
}
