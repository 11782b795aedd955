//! Request and response types shared by the command line and the HTTP
//! service, with the functions that answer them. Both front ends call these
//! so identical inputs give identical numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::data_io::{export_effects, EffectsTable, DEFAULT_QUANTILES};
use crate::eig::{
    before_after_posterior, design_scan, BeforeAfter, DesignEvaluator, DesignRow, DesignSpec, EffectTarget, EigBudget, EstimatorKind,
};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pmi::{PmiEngine, PmiReport, TauGrid};
use crate::schema::{CaseDesign, CaseRecord, Schema};

/// A case to score: covariate answers and observed characteristics.
/// Characteristics mapped to `null` or left out are unobserved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseInput {
    #[serde(default)]
    pub covariates: BTreeMap<String, String>,
    #[serde(default)]
    pub observations: BTreeMap<String, Option<bool>>,
}

fn field(path: String, message: impl Into<String>) -> Error {
    Error::Field {
        field: path,
        message: message.into(),
    }
}

impl CaseInput {
    /// Encode with the usual unknown/missing rules. Errors name the
    /// offending field, e.g. `covariates.Sex`.
    pub fn to_design(&self, schema: &Schema) -> Result<CaseDesign> {
        for (name, level) in &self.covariates {
            let path = format!("covariates.{name}");
            let c = schema
                .covariates
                .index_of(name)
                .ok_or_else(|| field(path.clone(), "unknown covariate"))?;
            schema.covariates.covariates[c]
                .resolve(Some(level))
                .map_err(|e| field(path, e.to_string()))?;
        }
        for name in self.observations.keys() {
            if schema.decomposition.index_of(name).is_none() {
                return Err(field(format!("observations.{name}"), "unknown characteristic"));
            }
        }
        let record = CaseRecord {
            case_id: String::new(),
            pmi_days: None,
            dates: None,
            covariate_levels: self.covariates.clone(),
            decomposition: self.observations.iter().filter_map(|(k, v)| v.map(|b| (k.clone(), b))).collect(),
        };
        schema.encode_case(&record)
    }
}

fn default_masses() -> Vec<f64> {
    vec![0.5, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(flatten)]
    pub case: CaseInput,
    #[serde(default = "default_masses")]
    pub interval_masses: Vec<f64>,
}

/// PMI posterior of one case averaged over every stored draw.
pub fn predict_pmi(bundle: &ModelBundle, request: &PredictRequest) -> Result<PmiReport> {
    for (i, m) in request.interval_masses.iter().enumerate() {
        if !(0.0..=1.0).contains(m) {
            return Err(field(format!("interval_masses.{i}"), format!("mass {m} outside [0, 1]")));
        }
    }
    let design = request.case.to_design(&bundle.schema)?;
    let grid = TauGrid::new(bundle.manifest.pmi_prior, Default::default())?;
    let engine = PmiEngine::new(&bundle.model, bundle.samples.iter().collect(), grid)?;
    let posterior = engine.posterior(&design)?;
    Ok(PmiReport::new(&posterior, &request.interval_masses, engine.num_draws(), design.num_observed()))
}

/// Upper limits on request budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetCaps {
    pub max_n: usize,
    pub max_m: usize,
    pub max_designs: usize,
}

impl BudgetCaps {
    pub const SERVICE: BudgetCaps = BudgetCaps {
        max_n: 20_000,
        max_m: 10_000,
        max_designs: 256,
    };
    pub const UNLIMITED: BudgetCaps = BudgetCaps {
        max_n: usize::MAX,
        max_m: usize::MAX,
        max_designs: usize::MAX,
    };

    pub fn check(&self, budget: &EigBudget, designs: usize) -> Result<()> {
        if budget.n > self.max_n {
            return Err(Error::Budget(format!("N = {} exceeds the cap of {}", budget.n, self.max_n)));
        }
        if budget.m > self.max_m || budget.m_prime > self.max_m {
            return Err(Error::Budget(format!("M and M' must not exceed {}", self.max_m)));
        }
        if designs > self.max_designs {
            return Err(Error::Budget(format!("{designs} designs exceed the cap of {}", self.max_designs)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigRequest {
    /// Target effect names, e.g. `beta[Bloat|Larva=present]`.
    pub targets: Vec<String>,
    pub designs: Vec<DesignSpec>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub budget: EigBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigResponse {
    pub model_version: String,
    pub targets: Vec<String>,
    pub tracked_characteristics: Vec<String>,
    pub estimator: EstimatorKind,
    pub rows: Vec<DesignRow>,
    /// Index of the design with the largest EIG per cadaver.
    pub optimal: Option<usize>,
}

fn targets(bundle: &ModelBundle, names: &[String]) -> Result<Vec<usize>> {
    EffectTarget { names: names.to_vec() }.indices(&bundle.model).map_err(|e| match e {
        Error::UnknownName(m) => field("targets".into(), format!("unknown {m}")),
        other => other,
    })
}

pub fn eig_scan(bundle: &ModelBundle, request: &EigRequest, caps: BudgetCaps, exec: Execution) -> Result<EigResponse> {
    caps.check(&request.budget, request.designs.len())?;
    if request.designs.is_empty() {
        return Err(field("designs".into(), "at least one design is required"));
    }
    let theta = targets(bundle, &request.targets)?;
    let evaluator = DesignEvaluator::new(&bundle.model, &bundle.schema, &bundle.samples, &theta)?;
    let rows = design_scan(&evaluator, &request.designs, request.estimator, &request.budget, exec)?;
    Ok(EigResponse {
        model_version: bundle.manifest.version.clone(),
        targets: request.targets.clone(),
        tracked_characteristics: evaluator.tracked_characteristics(),
        estimator: request.estimator,
        optimal: rows.iter().position(|r| r.optimal),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfterRequest {
    pub targets: Vec<String>,
    pub design: DesignSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfterResponse {
    pub model_version: String,
    pub results: Vec<BeforeAfter>,
}

/// Refit with the design's expected outcomes, using the bundle's sampler
/// settings and the request seed.
pub fn before_after(bundle: &ModelBundle, request: &BeforeAfterRequest) -> Result<BeforeAfterResponse> {
    let theta = targets(bundle, &request.targets)?;
    let mut config = bundle.manifest.sampler.clone();
    config.seed = request.seed;
    let results = before_after_posterior(
        &bundle.model,
        &bundle.schema,
        &bundle.samples,
        &bundle.training_designs,
        &theta,
        &request.design,
        &config,
    )?;
    Ok(BeforeAfterResponse {
        model_version: bundle.manifest.version.clone(),
        results,
    })
}

/// Parse a comma-separated quantile list; blank selects the defaults.
pub fn parse_quantiles(text: Option<&str>) -> Result<Vec<f64>> {
    match text.map(str::trim) {
        None | Some("") => Ok(DEFAULT_QUANTILES.to_vec()),
        Some(t) => t
            .split(',')
            .map(|q| {
                q.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| field("quantiles".into(), format!("invalid quantile {q:?}")))
            })
            .collect(),
    }
}

pub fn effects(bundle: &ModelBundle, quantiles: &[f64]) -> Result<EffectsTable> {
    export_effects(&bundle.samples, &bundle.schema, &bundle.model.layout, quantiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInfo {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: String,
    pub missing: String,
}

/// Vocabulary and model description for clients building forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaInfo {
    pub model_version: String,
    pub schema_version: String,
    pub variant: String,
    pub covariates: Vec<CovariateInfo>,
    pub characteristics: Vec<String>,
    pub effects: Vec<String>,
    pub budget_caps: BudgetCaps,
}

pub fn schema_info(bundle: &ModelBundle, caps: BudgetCaps) -> SchemaInfo {
    SchemaInfo {
        model_version: bundle.manifest.version.clone(),
        schema_version: bundle.schema.version.clone(),
        variant: bundle.mask.variant.to_string(),
        covariates: bundle
            .schema
            .covariates
            .covariates
            .iter()
            .map(|c| CovariateInfo {
                name: c.name.clone(),
                levels: c.levels.clone(),
                reference: c.reference_level().to_string(),
                missing: c.levels[c.missing_level_index].clone(),
            })
            .collect(),
        characteristics: bundle.schema.decomposition.characteristics.clone(),
        effects: bundle.model.layout.names().to_vec(),
        budget_caps: caps,
    }
}
