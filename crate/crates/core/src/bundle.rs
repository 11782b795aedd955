//! Fitted-model directory: everything needed to serve predictions and
//! design evaluations without refitting.
//!
//! ```text
//! model.json           manifest (version tag, variant, sampler settings)
//! schema.toml          schema document used for the fit
//! mask.csv             interaction mask
//! samples.csv          draws, one per line
//! diagnostics.json     convergence report
//! training_cases.csv   cases the model was fitted on
//! ```

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_io::{encode_cases, parse_cases, write_cases};
use crate::error::{Error, Result};
use crate::model::DecompositionModel;
use crate::pmi::PmiPrior;
use crate::sampler::{sample_posterior, DiagnosticsReport, PosteriorSamples, SamplerConfig};
use crate::schema::{load_schema, parse_mask_table, CaseDesign, CaseRecord, InteractionMask, Schema, Variant};

pub const MANIFEST_FILE: &str = "model.json";
pub const SCHEMA_FILE: &str = "schema.toml";
pub const MASK_FILE: &str = "mask.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const TRAINING_FILE: &str = "training_cases.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    /// Content hash of the draws; changes whenever the fit changes.
    pub version: String,
    pub variant: Variant,
    pub schema_version: String,
    pub num_parameters: usize,
    pub num_training_cases: usize,
    pub sampler: SamplerConfig,
    pub pmi_prior: PmiPrior,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub manifest: ModelManifest,
    pub schema_document: String,
    pub schema: Schema,
    pub mask: InteractionMask,
    pub model: DecompositionModel,
    pub samples: PosteriorSamples,
    pub diagnostics: DiagnosticsReport,
    pub training: Vec<CaseRecord>,
    pub training_designs: Vec<CaseDesign>,
}

fn version_tag(samples: &PosteriorSamples) -> Result<String> {
    let mut buf = Vec::new();
    samples.write_csv(&mut buf)?;
    let mut h = DefaultHasher::new();
    buf.hash(&mut h);
    Ok(format!("{:016x}", h.finish()))
}

impl ModelBundle {
    /// Fit the model. The bundle is returned even when diagnostics fail;
    /// callers decide whether to keep it.
    pub fn fit(schema_document: &str, mask: InteractionMask, records: Vec<CaseRecord>, config: &SamplerConfig) -> Result<Self> {
        let schema = load_schema(schema_document)?;
        let model = DecompositionModel::new(&schema, &mask)?;
        let designs = encode_cases(&schema, &records)?;
        let data = model.dataset(&designs)?;
        let samples = sample_posterior(&model, &data, config)?;
        let diagnostics = samples.diagnostics()?;
        let manifest = ModelManifest {
            version: version_tag(&samples)?,
            variant: mask.variant,
            schema_version: schema.version.clone(),
            num_parameters: model.dim(),
            num_training_cases: records.len(),
            sampler: config.clone(),
            pmi_prior: PmiPrior::default(),
        };
        Ok(Self {
            manifest,
            schema_document: schema_document.to_string(),
            schema,
            mask,
            model,
            samples,
            diagnostics,
            training: records,
            training_designs: designs,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)?)?;
        fs::write(dir.join(SCHEMA_FILE), &self.schema_document)?;
        fs::write(dir.join(MASK_FILE), self.mask.to_table(&self.schema)?)?;
        self.samples.write_csv(BufWriter::new(fs::File::create(dir.join(SAMPLES_FILE))?))?;
        fs::write(dir.join(DIAGNOSTICS_FILE), serde_json::to_string_pretty(&self.diagnostics)?)?;
        write_cases(BufWriter::new(fs::File::create(dir.join(TRAINING_FILE))?), &self.schema, &self.training)?;
        Ok(())
    }

    /// Load a saved model. With `require_converged` a bundle whose
    /// diagnostics fail is rejected with [`Error::Diagnostics`].
    pub fn load(dir: &Path, require_converged: bool) -> Result<Self> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(name).display()))))
        };
        let manifest: ModelManifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
        let schema_document = read(SCHEMA_FILE)?;
        let schema = load_schema(&schema_document)?;
        let mut mask = parse_mask_table(&read(MASK_FILE)?, &schema)?;
        mask.variant = manifest.variant;
        let model = DecompositionModel::new(&schema, &mask)?;
        let mut samples = PosteriorSamples::read_csv(read(SAMPLES_FILE)?.as_bytes())?;
        if samples.names != model.layout.names() {
            return Err(Error::invalid("sample columns do not match the schema and mask"));
        }
        // the stored report keeps per-chain sampler statistics; convergence
        // is re-checked from the draws themselves
        let diagnostics: DiagnosticsReport = serde_json::from_str(&read(DIAGNOSTICS_FILE)?)?;
        if diagnostics.chains.len() == samples.num_chains() {
            samples.stats = diagnostics.chains.clone();
        }
        if require_converged {
            let fresh = samples.diagnostics()?;
            if !fresh.passes {
                return Err(Error::Diagnostics(fresh.summary()));
            }
        }
        let (training, report) = parse_cases(read(TRAINING_FILE)?.as_bytes(), &schema)?;
        if !report.rejected.is_empty() {
            return Err(Error::Parse(format!("{} training rows failed to parse", report.rejected.len())));
        }
        let training_designs = encode_cases(&schema, &training)?;
        Ok(Self {
            manifest,
            schema_document,
            schema,
            mask,
            model,
            samples,
            diagnostics,
            training,
            training_designs,
        })
    }
}
