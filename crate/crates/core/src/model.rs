//! Logistic decomposition model.
//!
//! For case `n` and characteristic `d` the log-odds of observing `d` are
//! `γ_d + log(1 + t) · B_d`, where the rate coefficient
//! `B_d = β_d0 + Σ_c β_{d,c,ℓ(c)}` sums the effects of the covariate levels
//! allowed by the interaction mask. Reference levels carry no parameter.
//!
//! Free parameters are packed into one vector: all `γ_d`, then all `β_d0`,
//! then the `β` block ordered by characteristic, covariate and level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, normal_log_pdf};
use crate::parallel::{map_chunks, Execution};
use crate::schema::{CaseDesign, InteractionMask, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Gamma { d: usize },
    Beta0 { d: usize },
    Beta { d: usize, c: usize, level: usize },
}

/// Index map between model coefficients and the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    num_characteristics: usize,
    num_covariates: usize,
    /// `beta_start[d * C + c]`: first slot of the (d, c) block when allowed.
    beta_start: Vec<Option<usize>>,
    /// `level_rank[c][ℓ]`: position of level ℓ among non-reference levels.
    level_rank: Vec<Vec<Option<usize>>>,
    kinds: Vec<ParamKind>,
    names: Vec<String>,
}

impl ParameterLayout {
    pub fn new(schema: &Schema, mask: &InteractionMask) -> Result<Self> {
        let nd = schema.num_characteristics();
        let nc = schema.num_covariates();
        if mask.num_characteristics() != nd || mask.num_covariates() != nc {
            return Err(Error::invalid("interaction mask does not match schema dimensions"));
        }
        let chars = &schema.decomposition.characteristics;
        let covs = &schema.covariates.covariates;
        let mut kinds = Vec::new();
        let mut names = Vec::new();
        for (d, name) in chars.iter().enumerate() {
            kinds.push(ParamKind::Gamma { d });
            names.push(format!("gamma[{name}]"));
        }
        for (d, name) in chars.iter().enumerate() {
            kinds.push(ParamKind::Beta0 { d });
            names.push(format!("beta0[{name}]"));
        }
        let level_rank: Vec<Vec<Option<usize>>> = covs
            .iter()
            .map(|c| {
                let mut rank = 0;
                (0..c.levels.len())
                    .map(|l| {
                        (l != c.reference_level_index).then(|| {
                            rank += 1;
                            rank - 1
                        })
                    })
                    .collect()
            })
            .collect();
        let mut beta_start = vec![None; nd * nc];
        for d in 0..nd {
            for (c, cov) in covs.iter().enumerate() {
                if !mask.allows(d, c) {
                    continue;
                }
                beta_start[d * nc + c] = Some(kinds.len());
                for (l, level) in cov.levels.iter().enumerate() {
                    if l == cov.reference_level_index {
                        continue;
                    }
                    kinds.push(ParamKind::Beta { d, c, level: l });
                    names.push(format!("beta[{}|{}={}]", chars[d], cov.name, level));
                }
            }
        }
        Ok(Self {
            num_characteristics: nd,
            num_covariates: nc,
            beta_start,
            level_rank,
            kinds,
            names,
        })
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_characteristics(&self) -> usize {
        self.num_characteristics
    }

    pub fn num_covariates(&self) -> usize {
        self.num_covariates
    }

    pub fn gamma_index(&self, d: usize) -> usize {
        d
    }

    pub fn beta0_index(&self, d: usize) -> usize {
        self.num_characteristics + d
    }

    /// Slot of `β_{d,c,ℓ}`; `None` for reference levels and masked pairs.
    pub fn beta_index(&self, d: usize, c: usize, level: usize) -> Option<usize> {
        let start = self.beta_start[d * self.num_covariates + c]?;
        self.level_rank[c][level].map(|r| start + r)
    }

    pub fn kinds(&self) -> &[ParamKind] {
        &self.kinds
    }

    pub fn kind(&self, i: usize) -> ParamKind {
        self.kinds[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name.trim())
    }

    /// Slots that enter the likelihood of characteristic `d`.
    pub fn params_of_characteristic(&self, d: usize) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| match self.kinds[i] {
                ParamKind::Gamma { d: x } | ParamKind::Beta0 { d: x } | ParamKind::Beta { d: x, .. } => x == d,
            })
            .collect()
    }

    /// Non-reference β slots active for a case with the given levels.
    pub fn active_betas(&self, levels: &[usize], d: usize, out: &mut Vec<usize>) {
        out.clear();
        for (c, &l) in levels.iter().enumerate() {
            if let Some(i) = self.beta_index(d, c, l) {
                out.push(i);
            }
        }
    }
}

/// Owned coefficient vector in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub values: Vec<f64>,
}

impl CoefficientSet {
    pub fn zeros(layout: &ParameterLayout) -> Self {
        Self {
            values: vec![0.0; layout.dim()],
        }
    }
}

/// Independent normal priors on each coefficient block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub gamma_mean: f64,
    pub gamma_sd: f64,
    pub beta0_mean: f64,
    pub beta0_sd: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            gamma_mean: -2.0,
            gamma_sd: 2.0,
            beta0_mean: 0.0,
            beta0_sd: 2.0,
            beta_mean: 0.0,
            beta_sd: 2.0,
        }
    }
}

impl PriorSpec {
    pub fn moments(&self, kind: ParamKind) -> (f64, f64) {
        match kind {
            ParamKind::Gamma { .. } => (self.gamma_mean, self.gamma_sd),
            ParamKind::Beta0 { .. } => (self.beta0_mean, self.beta0_sd),
            ParamKind::Beta { .. } => (self.beta_mean, self.beta_sd),
        }
    }
}

/// One observed (case, characteristic) pair compiled against a layout.
#[derive(Debug, Clone, Copy)]
struct Term {
    tau: f64,
    y: f64,
    d: u32,
    /// Range into `Dataset::active`.
    start: u32,
    end: u32,
}

/// Training cases compiled for one parameter layout. PMI is required.
#[derive(Debug, Clone)]
pub struct Dataset {
    terms: Vec<Term>,
    active: Vec<u32>,
    num_cases: usize,
    dim: usize,
}

const CHUNK: usize = 4096;
const LOG_BLOCK: usize = 512;

impl Dataset {
    pub fn len(&self) -> usize {
        self.num_cases
    }

    pub fn is_empty(&self) -> bool {
        self.num_cases == 0
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Model structure (layout plus priors) shared by sampler, PMI inference
/// and design evaluation.
#[derive(Debug, Clone)]
pub struct DecompositionModel {
    pub layout: ParameterLayout,
    pub prior: PriorSpec,
    pub execution: Execution,
}

impl DecompositionModel {
    pub fn new(schema: &Schema, mask: &InteractionMask) -> Result<Self> {
        Ok(Self {
            layout: ParameterLayout::new(schema, mask)?,
            prior: PriorSpec::default(),
            execution: Execution::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// `B_d = β_d0 + Σ_c β_{d,c,ℓ(c)}` over mask-allowed covariates.
    pub fn total_rate(&self, params: &[f64], levels: &[usize], d: usize) -> f64 {
        let l = &self.layout;
        let mut b = params[l.beta0_index(d)];
        for (c, &level) in levels.iter().enumerate() {
            if let Some(i) = l.beta_index(d, c, level) {
                b += params[i];
            }
        }
        b
    }

    /// `γ_d + τ · B_d`.
    pub fn char_log_odds(&self, params: &[f64], levels: &[usize], tau: f64, d: usize) -> f64 {
        params[self.layout.gamma_index(d)] + tau * self.total_rate(params, levels, d)
    }

    /// Bernoulli log-likelihood of the observed characteristics at log-PMI `tau`.
    pub fn log_lik_at(&self, params: &[f64], case: &CaseDesign, tau: f64) -> f64 {
        case.observations
            .iter()
            .enumerate()
            .filter_map(|(d, o)| o.map(|y| (d, y)))
            .map(|(d, y)| {
                let eta = self.char_log_odds(params, &case.levels, tau, d);
                y * log_sigmoid(eta) + (1.0 - y) * log_sigmoid(-eta)
            })
            .sum()
    }

    /// Case log-likelihood at the case's own PMI.
    ///
    /// Panics if the case has no PMI.
    pub fn case_log_lik(&self, params: &[f64], case: &CaseDesign) -> f64 {
        let tau = case.log1p_pmi.expect("case_log_lik needs a case with known PMI");
        self.log_lik_at(params, case, tau)
    }

    pub fn log_prior(&self, params: &[f64]) -> f64 {
        self.layout
            .kinds()
            .iter()
            .zip(params)
            .map(|(&k, &x)| {
                let (m, s) = self.prior.moments(k);
                normal_log_pdf(x, m, s)
            })
            .sum()
    }

    fn add_log_prior_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for ((&k, &x), g) in self.layout.kinds().iter().zip(params).zip(grad.iter_mut()) {
            let (m, s) = self.prior.moments(k);
            lp += normal_log_pdf(x, m, s);
            *g -= (x - m) / (s * s);
        }
        lp
    }

    /// Prior means, used for initialisation.
    pub fn prior_means(&self) -> Vec<f64> {
        self.layout.kinds().iter().map(|&k| self.prior.moments(k).0).collect()
    }

    pub fn prior_sds(&self) -> Vec<f64> {
        self.layout.kinds().iter().map(|&k| self.prior.moments(k).1).collect()
    }

    /// Compile cases for likelihood evaluation. Every case needs a PMI.
    pub fn dataset(&self, cases: &[CaseDesign]) -> Result<Dataset> {
        let nd = self.layout.num_characteristics();
        let mut scratch = Vec::new();
        let mut terms = Vec::new();
        let mut active = Vec::new();
        for (n, case) in cases.iter().enumerate() {
            let tau = case
                .log1p_pmi
                .ok_or_else(|| Error::invalid(format!("training case #{n} has no PMI")))?;
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(Error::invalid(format!("training case #{n} has invalid log-PMI {tau}")));
            }
            if case.levels.len() != self.layout.num_covariates() || case.observations.len() != nd {
                return Err(Error::invalid(format!("training case #{n} does not match the schema")));
            }
            for (d, o) in case.observations.iter().enumerate() {
                let Some(y) = *o else { continue };
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::invalid(format!("training case #{n}: outcome {y} outside [0, 1]")));
                }
                self.layout.active_betas(&case.levels, d, &mut scratch);
                let start = active.len() as u32;
                active.extend(scratch.iter().map(|&i| i as u32));
                terms.push(Term {
                    tau,
                    y,
                    d: d as u32,
                    start,
                    end: active.len() as u32,
                });
            }
        }
        Ok(Dataset {
            terms,
            active,
            num_cases: cases.len(),
            dim: self.dim(),
        })
    }

    /// Log-likelihood of a whole dataset and its gradient (written to `grad`).
    fn log_lik_and_grad(&self, data: &Dataset, params: &[f64], grad: &mut [f64]) -> f64 {
        let nd = self.layout.num_characteristics();
        let (gamma, beta0) = (&params[..nd], &params[nd..2 * nd]);
        let partials = map_chunks(self.execution, &data.terms, CHUNK, |chunk| {
            let mut g = vec![0.0; params.len()];
            let mut ll = 0.0;
            // Σ log(1 + e) is taken as the log of a running product, one log
            // per block; every factor lies in (1, 2] so the block cannot overflow
            let mut prod = 1.0f64;
            for (k, t) in chunk.iter().enumerate() {
                let d = t.d as usize;
                let act = &data.active[t.start as usize..t.end as usize];
                let mut rate = beta0[d];
                for &i in act {
                    rate += params[i as usize];
                }
                let eta = gamma[d] + t.tau * rate;
                let e = (-eta.abs()).exp();
                prod *= 1.0 + e;
                let inv = 1.0 / (1.0 + e);
                let sig = if eta >= 0.0 { inv } else { e * inv };
                ll += eta.min(0.0) - (1.0 - t.y) * eta;
                if k % LOG_BLOCK == LOG_BLOCK - 1 {
                    ll -= prod.ln();
                    prod = 1.0;
                }
                let r = t.y - sig;
                g[d] += r;
                let rt = r * t.tau;
                g[nd + d] += rt;
                for &i in act {
                    g[i as usize] += rt;
                }
            }
            ll -= prod.ln();
            (ll, g)
        });
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (ll, g) in partials {
            total += ll;
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x;
            }
        }
        total
    }

    /// Unnormalised log-posterior `Σ_n log p(y_n | C) + log p(C)` and its
    /// exact gradient.
    pub fn log_posterior_and_grad(&self, data: &Dataset, params: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(data.dim, params.len());
        let ll = self.log_lik_and_grad(data, params, grad);
        ll + self.add_log_prior_grad(params, grad)
    }

    pub fn log_posterior(&self, data: &Dataset, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.log_posterior_and_grad(data, params, &mut g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{build_mask, Variant};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(variant: Variant) -> (Schema, DecompositionModel) {
        let schema = Schema::bundled();
        let mask = build_mask(variant, &schema, None).unwrap();
        let m = DecompositionModel::new(&schema, &mask).unwrap();
        (schema, m)
    }

    fn random_case(schema: &Schema, rng: &mut impl Rng) -> CaseDesign {
        CaseDesign {
            levels: schema
                .covariates
                .covariates
                .iter()
                .map(|c| rng.random_range(0..c.levels.len()))
                .collect(),
            log1p_pmi: Some(rng.random_range(0.0..6.0)),
            observations: (0..schema.num_characteristics())
                .map(|_| match rng.random_range(0..3) {
                    0 => None,
                    1 => Some(0.0),
                    _ => Some(1.0),
                })
                .collect(),
        }
    }

    #[test]
    fn layout_sizes_per_variant() {
        let (_, empty) = model(Variant::Empty);
        assert_eq!(empty.dim(), 48);
        let (_, strict) = model(Variant::Strict);
        assert_eq!(strict.dim(), 200);
        let (_, full) = model(Variant::Full);
        // 29 non-reference levels per characteristic
        assert_eq!(full.dim(), 24 * (2 + 29));
        assert_eq!(full.layout.names().len(), full.dim());
        assert_eq!(full.layout.index_of("gamma[Bloat]"), Some(13));
    }

    #[test]
    fn reference_levels_carry_no_parameter() {
        let (schema, m) = model(Variant::Full);
        for (c, cov) in schema.covariates.covariates.iter().enumerate() {
            assert_eq!(m.layout.beta_index(0, c, cov.reference_level_index), None);
        }
        let params: Vec<f64> = (0..m.dim()).map(|i| 0.01 * i as f64).collect();
        let refs = schema.covariates.reference_levels();
        assert_eq!(m.total_rate(&params, &refs, 3), params[m.layout.beta0_index(3)]);
    }

    #[test]
    fn total_rate_sums_non_reference_effects() {
        let (schema, m) = model(Variant::Full);
        let mut params = vec![0.0; m.dim()];
        params[m.layout.beta0_index(5)] = 0.5;
        let larva = schema.covariates.index_of("Larva").unwrap();
        params[m.layout.beta_index(5, larva, 1).unwrap()] = -0.2;
        let mut levels = schema.covariates.reference_levels();
        levels[larva] = 1;
        assert_abs_diff_eq!(m.total_rate(&params, &levels, 5), 0.3, epsilon = 1e-15);
        let (_, e) = model(Variant::Empty);
        let mut p = vec![0.0; e.dim()];
        p[e.layout.beta0_index(5)] = 0.5;
        assert_eq!(e.total_rate(&p, &levels, 5), 0.5);
    }

    #[test]
    fn log_odds_and_probabilities() {
        let (schema, m) = model(Variant::Empty);
        let levels = schema.covariates.reference_levels();
        let mut p = vec![0.0; m.dim()];
        p[0] = -2.0;
        assert_eq!(m.char_log_odds(&p, &levels, 0.0, 0), -2.0);
        assert_abs_diff_eq!(crate::math::sigmoid(-2.0), 0.119_202_922, epsilon = 1e-9);
        p[0] = 0.0;
        p[m.layout.beta0_index(0)] = 1.0;
        let tau = (std::f64::consts::E - 1.0).ln_1p();
        assert_abs_diff_eq!(m.char_log_odds(&p, &levels, tau, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(crate::math::sigmoid(1.0), 0.731_058_58, epsilon = 1e-8);
    }

    #[test]
    fn case_log_lik_examples() {
        let (schema, m) = model(Variant::Empty);
        let mut case = CaseDesign {
            levels: schema.covariates.reference_levels(),
            log1p_pmi: Some(1.0),
            observations: vec![None; 24],
        };
        let p = vec![0.0; m.dim()];
        assert_eq!(m.case_log_lik(&p, &case), 0.0);
        case.observations[2] = Some(1.0);
        assert_abs_diff_eq!(m.case_log_lik(&p, &case), -std::f64::consts::LN_2, epsilon = 1e-15);
        let mut p = p;
        p[2] = 40.0;
        let v = m.case_log_lik(&p, &case);
        assert!(v <= 0.0 && v > -1e-17);
    }

    #[test]
    fn log_prior_examples() {
        let (_, m) = model(Variant::Empty);
        let single = normal_log_pdf(0.0, 0.0, 2.0);
        assert_abs_diff_eq!(single, -1.612_085_713, epsilon = 1e-9);
        assert_abs_diff_eq!(normal_log_pdf(-2.0, -2.0, 2.0), -1.612_085_713, epsilon = 1e-9);
        let base = m.prior_means();
        let mut shifted = base.clone();
        shifted[30] += 2.0;
        assert_abs_diff_eq!(m.log_prior(&base) - m.log_prior(&shifted), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_dataset_gives_prior() {
        let (_, m) = model(Variant::Strict);
        let data = m.dataset(&[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut g = vec![0.0; m.dim()];
        let v = m.log_posterior_and_grad(&data, &p, &mut g);
        assert_abs_diff_eq!(v, m.log_prior(&p), epsilon = 1e-12);
        for (i, &k) in m.layout.kinds().iter().enumerate() {
            let (mu, s) = m.prior.moments(k);
            assert_abs_diff_eq!(g[i], -(p[i] - mu) / (s * s), epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (schema, m) = model(Variant::Strict);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cases: Vec<CaseDesign> = (0..40).map(|_| random_case(&schema, &mut rng)).collect();
        let data = m.dataset(&cases).unwrap();
        let p: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; m.dim()];
        m.log_posterior_and_grad(&data, &p, &mut g);
        let h = 1e-5;
        for i in 0..m.dim() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (m.log_posterior(&data, &a) - m.log_posterior(&data, &b)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
            assert!(rel < 1e-6, "coordinate {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn duplicating_cases_doubles_likelihood() {
        let (schema, m) = model(Variant::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases: Vec<CaseDesign> = (0..30).map(|_| random_case(&schema, &mut rng)).collect();
        let doubled: Vec<CaseDesign> = cases.iter().chain(&cases).cloned().collect();
        let p: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut g1, mut g2) = (vec![0.0; m.dim()], vec![0.0; m.dim()]);
        let v1 = m.log_posterior_and_grad(&m.dataset(&cases).unwrap(), &p, &mut g1);
        let v2 = m.log_posterior_and_grad(&m.dataset(&doubled).unwrap(), &p, &mut g2);
        let prior = m.log_prior(&p);
        assert_abs_diff_eq!(v2 - prior, 2.0 * (v1 - prior), epsilon = 1e-9);
        let mut gp = vec![0.0; m.dim()];
        m.log_posterior_and_grad(&m.dataset(&[]).unwrap(), &p, &mut gp);
        for i in 0..m.dim() {
            assert_abs_diff_eq!(g2[i] - gp[i], 2.0 * (g1[i] - gp[i]), epsilon = 1e-9);
        }
    }

    #[test]
    fn reference_case_likelihood_is_mask_invariant() {
        let (schema, strict) = model(Variant::Strict);
        let (_, full) = model(Variant::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut case = random_case(&schema, &mut rng);
        case.levels = schema.covariates.reference_levels();
        let ps: Vec<f64> = (0..strict.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pf: Vec<f64> = (0..full.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        pf[..48].copy_from_slice(&ps[..48]);
        assert_abs_diff_eq!(strict.case_log_lik(&ps, &case), full.case_log_lik(&pf, &case), epsilon = 1e-12);
    }

    #[test]
    fn probability_is_monotone_in_time() {
        let (schema, m) = model(Variant::Empty);
        let levels = schema.covariates.reference_levels();
        let mut p = vec![0.0; m.dim()];
        p[0] = -1.0;
        p[m.layout.beta0_index(0)] = 0.7;
        p[1] = 0.5;
        p[m.layout.beta0_index(1)] = -0.4;
        let taus: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        for w in taus.windows(2) {
            assert!(m.char_log_odds(&p, &levels, w[1], 0) > m.char_log_odds(&p, &levels, w[0], 0));
            assert!(m.char_log_odds(&p, &levels, w[1], 1) < m.char_log_odds(&p, &levels, w[0], 1));
        }
    }

    #[test]
    fn likelihood_is_order_invariant() {
        let (schema, m) = model(Variant::Strict);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cases: Vec<CaseDesign> = (0..20).map(|_| random_case(&schema, &mut rng)).collect();
        let mut rev = cases.clone();
        rev.reverse();
        let p: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = m.log_posterior(&m.dataset(&cases).unwrap(), &p);
        let b = m.log_posterior(&m.dataset(&rev).unwrap(), &p);
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn dataset_requires_pmi() {
        let (schema, m) = model(Variant::Empty);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = random_case(&schema, &mut rng);
        c.log1p_pmi = None;
        assert!(m.dataset(&[c]).is_err());
    }
}
