use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, sorted_quantile, variance};
use crate::model::{ParamKind, ParameterLayout};
use crate::sampler::PosteriorSamples;
use crate::schema::Schema;

pub const DEFAULT_QUANTILES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub name: String,
    /// `gamma`, `beta0` or `beta`.
    pub kind: String,
    pub characteristic: String,
    pub covariate: Option<String>,
    pub level: Option<String>,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsTable {
    pub quantiles: Vec<f64>,
    pub rows: Vec<EffectRow>,
}

/// Column label for a quantile, e.g. `q2.5` for 0.025.
pub fn quantile_label(q: f64) -> String {
    let pct = format!("{:.6}", q * 100.0);
    let pct = pct.trim_end_matches('0').trim_end_matches('.');
    format!("q{pct}")
}

/// Posterior summaries of every coefficient, in packing order.
pub fn export_effects(samples: &PosteriorSamples, schema: &Schema, layout: &ParameterLayout, quantiles: &[f64]) -> Result<EffectsTable> {
    if quantiles.is_empty() {
        return Err(Error::invalid("at least one quantile is required"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
    }
    if samples.names != layout.names() {
        return Err(Error::invalid("samples do not match the model layout"));
    }
    if samples.num_draws() == 0 {
        return Err(Error::invalid("no posterior draws"));
    }
    let chars = &schema.decomposition.characteristics;
    let covs = &schema.covariates.covariates;
    let rows = layout
        .kinds()
        .iter()
        .enumerate()
        .map(|(j, kind)| {
            let mut col: Vec<f64> = samples.iter().map(|d| d[j]).collect();
            let (m, v) = (mean(&col), variance(&col));
            col.sort_by(f64::total_cmp);
            let (kind_name, d, cov, level) = match *kind {
                ParamKind::Gamma { d } => ("gamma", d, None, None),
                ParamKind::Beta0 { d } => ("beta0", d, None, None),
                ParamKind::Beta { d, c, level } => {
                    ("beta", d, Some(covs[c].name.clone()), Some(covs[c].levels[level].clone()))
                }
            };
            EffectRow {
                name: layout.names()[j].clone(),
                kind: kind_name.to_string(),
                characteristic: chars[d].clone(),
                covariate: cov,
                level,
                mean: m,
                sd: v.sqrt(),
                quantiles: quantiles.iter().map(|&q| sorted_quantile(&col, q)).collect(),
            }
        })
        .collect();
    Ok(EffectsTable {
        quantiles: quantiles.to_vec(),
        rows,
    })
}

impl EffectsTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["name", "kind", "characteristic", "covariate", "level", "mean", "sd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.quantiles.iter().map(|&q| quantile_label(q)));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                r.name.clone(),
                r.kind.clone(),
                r.characteristic.clone(),
                r.covariate.clone().unwrap_or_default(),
                r.level.clone().unwrap_or_default(),
                r.mean.to_string(),
                r.sd.to_string(),
            ];
            row.extend(r.quantiles.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::quantile_label;

    #[test]
    fn labels() {
        assert_eq!(quantile_label(0.025), "q2.5");
        assert_eq!(quantile_label(0.5), "q50");
        assert_eq!(quantile_label(0.975), "q97.5");
        assert_eq!(quantile_label(1.0), "q100");
    }
}
