//! Covariate and decomposition vocabulary, interaction masks and case
//! encoding.
//!
//! Schemas are loaded from a TOML document (see `data/schema.toml`) and the
//! strict interaction mask from a delimited table (`data/strict_mask.csv`).
//! Both files are bundled with the crate and can be replaced at run time.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::DateEvidence;
use crate::error::{Error, Result};

pub const BUNDLED_SCHEMA: &str = include_str!("../data/schema.toml");
pub const BUNDLED_STRICT_MASK: &str = include_str!("../data/strict_mask.csv");

/// Level name used for grouped "unknown"/skipped answers.
pub const UNKNOWN_LEVEL: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub levels: Vec<String>,
    pub reference_level_index: usize,
    /// Level substituted for blank or "unknown" answers.
    pub missing_level_index: usize,
    /// Population share per level, normalised to sum to one.
    pub frequencies: Option<Vec<f64>>,
}

impl Covariate {
    pub fn level_index(&self, level: &str) -> Option<usize> {
        let level = level.trim();
        self.levels
            .iter()
            .position(|l| l == level)
            .or_else(|| self.levels.iter().position(|l| l.eq_ignore_ascii_case(level)))
    }

    pub fn reference_level(&self) -> &str {
        &self.levels[self.reference_level_index]
    }

    pub fn is_binary(&self) -> bool {
        self.levels.len() == 2
            && self.levels.iter().any(|l| l.eq_ignore_ascii_case("absent"))
            && self.levels.iter().any(|l| l.eq_ignore_ascii_case("present"))
    }

    /// Resolve a raw answer to a level index, applying the unknown/missing
    /// grouping rule.
    pub fn resolve(&self, raw: Option<&str>) -> Result<usize> {
        let raw = raw.map(str::trim).unwrap_or("");
        if raw.is_empty() || raw.eq_ignore_ascii_case(UNKNOWN_LEVEL) {
            return Ok(self.missing_level_index);
        }
        if let Some(i) = self.level_index(raw) {
            return Ok(i);
        }
        if self.is_binary() {
            let present = self.levels.iter().position(|l| l.eq_ignore_ascii_case("present"));
            let absent = self.levels.iter().position(|l| l.eq_ignore_ascii_case("absent"));
            match raw.to_ascii_lowercase().as_str() {
                "1" | "yes" | "true" | "y" => return Ok(present.unwrap()),
                "0" | "no" | "false" | "n" | "not present" => return Ok(absent.unwrap()),
                _ => {}
            }
        }
        Err(Error::UnknownLevel {
            covariate: self.name.clone(),
            level: raw.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub covariates: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name.trim())
    }

    pub fn reference_levels(&self) -> Vec<usize> {
        self.covariates.iter().map(|c| c.reference_level_index).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSchema {
    pub characteristics: Vec<String>,
    /// Marginal prevalence in the source population, when known.
    pub prevalence: Vec<Option<f64>>,
}

impl DecompositionSchema {
    pub fn len(&self) -> usize {
        self.characteristics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characteristics.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.characteristics.iter().position(|c| c == name.trim())
    }
}

/// Covariate and decomposition vocabularies loaded from one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub version: String,
    pub covariates: CovariateSchema,
    pub decomposition: DecompositionSchema,
}

#[derive(Deserialize)]
struct SchemaDoc {
    version: Option<String>,
    #[serde(default)]
    covariate: Vec<CovariateDoc>,
    #[serde(default)]
    characteristic: Vec<CharacteristicDoc>,
}

#[derive(Deserialize)]
struct CovariateDoc {
    name: String,
    levels: Vec<String>,
    reference: Option<String>,
    missing: Option<String>,
    frequencies: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct CharacteristicDoc {
    name: String,
    prevalence: Option<f64>,
}

/// Parse a schema document. Ordering follows the document.
pub fn load_schema(document: &str) -> Result<Schema> {
    let doc: SchemaDoc = toml::from_str(document)?;
    let mut seen = HashSet::new();
    let mut covariates = Vec::with_capacity(doc.covariate.len());
    for c in doc.covariate {
        let name = c.name.trim().to_string();
        if name.is_empty() {
            return Err(Error::schema("covariate with empty name"));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::schema(format!("duplicate covariate {name:?}")));
        }
        if c.levels.len() < 2 {
            return Err(Error::schema(format!(
                "covariate {name:?} has {} level(s); at least 2 required",
                c.levels.len()
            )));
        }
        let levels: Vec<String> = c.levels.iter().map(|l| l.trim().to_string()).collect();
        let distinct: HashSet<&str> = levels.iter().map(String::as_str).collect();
        if distinct.len() != levels.len() {
            return Err(Error::schema(format!("covariate {name:?} has duplicate levels")));
        }
        let reference = c
            .reference
            .ok_or_else(|| Error::schema(format!("covariate {name:?} has no reference level")))?;
        let reference_level_index = levels
            .iter()
            .position(|l| *l == reference.trim())
            .ok_or_else(|| {
                Error::schema(format!("reference level {reference:?} not among levels of {name:?}"))
            })?;
        let missing_level_index = match c.missing {
            Some(m) => levels.iter().position(|l| *l == m.trim()).ok_or_else(|| {
                Error::schema(format!("missing level {m:?} not among levels of {name:?}"))
            })?,
            None => levels
                .iter()
                .position(|l| l == UNKNOWN_LEVEL)
                .unwrap_or(reference_level_index),
        };
        let frequencies = match c.frequencies {
            None => None,
            Some(f) => Some(normalise_frequencies(&name, &levels, f)?),
        };
        let cov = Covariate {
            name: name.clone(),
            levels,
            reference_level_index,
            missing_level_index,
            frequencies,
        };
        if cov.is_binary() && !cov.reference_level().eq_ignore_ascii_case("absent") {
            return Err(Error::schema(format!(
                "binary covariate {name:?} must use \"absent\" as reference"
            )));
        }
        covariates.push(cov);
    }

    let mut seen = HashSet::new();
    let mut characteristics = Vec::new();
    let mut prevalence = Vec::new();
    for ch in doc.characteristic {
        let name = ch.name.trim().to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::schema(format!("duplicate characteristic {name:?}")));
        }
        characteristics.push(name);
        prevalence.push(ch.prevalence);
    }
    if characteristics.is_empty() {
        return Err(Error::schema("schema declares no decomposition characteristics"));
    }
    Ok(Schema {
        version: doc.version.unwrap_or_else(|| "unversioned".into()),
        covariates: CovariateSchema { covariates },
        decomposition: DecompositionSchema {
            characteristics,
            prevalence,
        },
    })
}

fn normalise_frequencies(name: &str, levels: &[String], f: Vec<f64>) -> Result<Vec<f64>> {
    if f.len() != levels.len() {
        return Err(Error::schema(format!(
            "covariate {name:?}: {} frequencies for {} levels",
            f.len(),
            levels.len()
        )));
    }
    if f.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::schema(format!("covariate {name:?}: negative frequency")));
    }
    let total: f64 = f.iter().sum();
    // published shares are rounded; accept up to half a percentage point of slack
    if (total - 1.0).abs() > 5e-3 {
        return Err(Error::schema(format!(
            "covariate {name:?}: frequencies sum to {total}, expected 1"
        )));
    }
    Ok(f.into_iter().map(|x| x / total).collect())
}

impl Schema {
    pub fn bundled() -> Self {
        load_schema(BUNDLED_SCHEMA).expect("bundled schema is valid")
    }

    pub fn num_characteristics(&self) -> usize {
        self.decomposition.len()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.len()
    }

    /// Encode a case record: one level index per covariate plus the
    /// observation vector. Blank and "unknown" answers map to each
    /// covariate's missing level.
    pub fn encode_case(&self, record: &CaseRecord) -> Result<CaseDesign> {
        for name in record.covariate_levels.keys() {
            if self.covariates.index_of(name).is_none() {
                return Err(Error::UnknownName(format!("covariate {name}")));
            }
        }
        for name in record.decomposition.keys() {
            if self.decomposition.index_of(name).is_none() {
                return Err(Error::UnknownName(format!("characteristic {name}")));
            }
        }
        if let Some(t) = record.pmi_days {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::invalid(format!("case {}: PMI must be >= 0, got {t}", record.case_id)));
            }
        }
        let levels = self
            .covariates
            .covariates
            .iter()
            .map(|c| c.resolve(record.covariate_levels.get(&c.name).map(String::as_str)))
            .collect::<Result<Vec<_>>>()?;
        let observations = self
            .decomposition
            .characteristics
            .iter()
            .map(|name| record.decomposition.get(name).map(|&b| if b { 1.0 } else { 0.0 }))
            .collect();
        Ok(CaseDesign {
            levels,
            log1p_pmi: record.pmi_days.map(f64::ln_1p),
            observations,
        })
    }

    /// Inverse of [`Schema::encode_case`] for the covariate and observation
    /// parts. Soft (fractional) observations are rounded.
    pub fn decode_case(&self, case_id: &str, design: &CaseDesign) -> CaseRecord {
        let covariate_levels = self
            .covariates
            .covariates
            .iter()
            .zip(&design.levels)
            .map(|(c, &l)| (c.name.clone(), c.levels[l].clone()))
            .collect();
        let decomposition = self
            .decomposition
            .characteristics
            .iter()
            .zip(&design.observations)
            .filter_map(|(n, o)| o.map(|y| (n.clone(), y >= 0.5)))
            .collect();
        CaseRecord {
            case_id: case_id.to_string(),
            pmi_days: design.log1p_pmi.map(f64::exp_m1),
            dates: None,
            covariate_levels,
            decomposition,
        }
    }
}

/// Which covariate effects enter the rate coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Empty,
    Strict,
    Full,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Empty => "empty",
            Variant::Strict => "strict",
            Variant::Full => "full",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "empty" => Ok(Variant::Empty),
            "strict" => Ok(Variant::Strict),
            "full" => Ok(Variant::Full),
            other => Err(Error::invalid(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Boolean (characteristic × covariate) matrix of allowed effects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMask {
    pub variant: Variant,
    num_characteristics: usize,
    num_covariates: usize,
    allowed: Vec<bool>,
}

impl InteractionMask {
    pub fn new(variant: Variant, num_characteristics: usize, num_covariates: usize, fill: bool) -> Self {
        Self {
            variant,
            num_characteristics,
            num_covariates,
            allowed: vec![fill; num_characteristics * num_covariates],
        }
    }

    pub fn allows(&self, d: usize, c: usize) -> bool {
        self.allowed[d * self.num_covariates + c]
    }

    pub fn set(&mut self, d: usize, c: usize, value: bool) {
        self.allowed[d * self.num_covariates + c] = value;
    }

    pub fn num_characteristics(&self) -> usize {
        self.num_characteristics
    }

    pub fn num_covariates(&self) -> usize {
        self.num_covariates
    }

    /// Covariates allowed for characteristic `d`.
    pub fn row(&self, d: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_covariates).filter(move |&c| self.allows(d, c))
    }

    pub fn row_count(&self, d: usize) -> usize {
        self.row(d).count()
    }

    /// Serialise as a delimited table readable by [`build_mask`].
    pub fn to_table(&self, schema: &Schema) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["characteristic".to_string()];
        header.extend(schema.covariates.covariates.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (d, name) in schema.decomposition.characteristics.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.num_covariates).map(|c| if self.allows(d, c) { "1".into() } else { String::new() }));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Build the interaction mask for a model variant. `strict_table` is only
/// read for [`Variant::Strict`]; `None` selects the bundled table.
pub fn build_mask(variant: Variant, schema: &Schema, strict_table: Option<&str>) -> Result<InteractionMask> {
    let (nd, nc) = (schema.num_characteristics(), schema.num_covariates());
    match variant {
        Variant::Empty => Ok(InteractionMask::new(variant, nd, nc, false)),
        Variant::Full => Ok(InteractionMask::new(variant, nd, nc, true)),
        Variant::Strict => {
            let mut mask = parse_mask_table(strict_table.unwrap_or(BUNDLED_STRICT_MASK), schema)?;
            mask.variant = Variant::Strict;
            Ok(mask)
        }
    }
}

/// Parse a characteristic × covariate table. Characteristics without a row
/// and covariates without a column are disallowed.
pub fn parse_mask_table(table: &str, schema: &Schema) -> Result<InteractionMask> {
    let mut mask = InteractionMask::new(Variant::Strict, schema.num_characteristics(), schema.num_covariates(), false);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(table.as_bytes());
    let headers = reader.headers()?.clone();
    let columns = headers
        .iter()
        .skip(1)
        .map(|name| {
            schema
                .covariates
                .index_of(name)
                .ok_or_else(|| Error::UnknownName(format!("covariate {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen_rows = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let name = record.get(0).unwrap_or("");
        let d = schema
            .decomposition
            .index_of(name)
            .ok_or_else(|| Error::UnknownName(format!("characteristic {name}")))?;
        if !seen_rows.insert(d) {
            return Err(Error::schema(format!("duplicate mask row {name:?}")));
        }
        for (cell, &c) in record.iter().skip(1).zip(&columns) {
            let on = match cell.to_ascii_lowercase().as_str() {
                "" | "0" | "false" | "no" => false,
                "1" | "x" | "true" | "yes" | "✓" => true,
                other => return Err(Error::Parse(format!("mask cell {other:?} in row {name:?}"))),
            };
            mask.set(d, c, on);
        }
    }
    Ok(mask)
}

/// One case as ingested: PMI (when known), raw covariate answers and
/// decomposition observations. Characteristics missing from `decomposition`
/// are unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub pmi_days: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dates: Option<DateEvidence>,
    pub covariate_levels: BTreeMap<String, String>,
    pub decomposition: BTreeMap<String, bool>,
}

/// Encoded form of a case used by the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDesign {
    /// Level index per covariate, in schema order.
    pub levels: Vec<usize>,
    /// `τ = log(1 + t)`, absent for cases whose PMI is unknown.
    pub log1p_pmi: Option<f64>,
    /// Per characteristic: `None` when unobserved, otherwise the outcome in
    /// `[0, 1]` (fractional values act as soft labels).
    pub observations: Vec<Option<f64>>,
}

impl CaseDesign {
    pub fn num_observed(&self) -> usize {
        self.observations.iter().filter(|o| o.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::bundled()
    }

    #[test]
    fn bundled_schema_has_table_vocabulary() {
        let s = schema();
        assert_eq!(s.num_characteristics(), 24);
        assert_eq!(s.num_covariates(), 18);
        let body = &s.covariates.covariates[s.covariates.index_of("Body size estimation").unwrap()];
        assert_eq!(body.levels, ["Obese", "Emaciated", "Moderate", "Unknown"]);
        assert_eq!(body.reference_level(), "Moderate");
        let age = &s.covariates.covariates[s.covariates.index_of("Age").unwrap()];
        assert_eq!(age.levels[age.missing_level_index], "Adult");
        for c in &s.covariates.covariates {
            let f = c.frequencies.as_ref().unwrap();
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_single_level_covariate() {
        let doc = r#"
            [[covariate]]
            name = "A"
            levels = ["only"]
            reference = "only"
            [[characteristic]]
            name = "X"
        "#;
        assert!(matches!(load_schema(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_duplicates_and_missing_reference() {
        let dup = r#"
            [[covariate]]
            name = "A"
            levels = ["x", "y"]
            reference = "x"
            [[covariate]]
            name = "A"
            levels = ["x", "y"]
            reference = "x"
            [[characteristic]]
            name = "X"
        "#;
        assert!(load_schema(dup).is_err());
        let noref = r#"
            [[covariate]]
            name = "A"
            levels = ["x", "y"]
            [[characteristic]]
            name = "X"
        "#;
        assert!(load_schema(noref).is_err());
        let badref = r#"
            [[covariate]]
            name = "A"
            levels = ["absent", "present"]
            reference = "present"
            [[characteristic]]
            name = "X"
        "#;
        assert!(load_schema(badref).is_err());
    }

    #[test]
    fn masks_for_each_variant() {
        let s = schema();
        let empty = build_mask(Variant::Empty, &s, None).unwrap();
        let full = build_mask(Variant::Full, &s, None).unwrap();
        for d in 0..24 {
            assert_eq!(empty.row_count(d), 0);
            assert_eq!(full.row_count(d), 18);
        }
        let strict = build_mask(Variant::Strict, &s, None).unwrap();
        let marbling = s.decomposition.index_of("Marbling").unwrap();
        let row: Vec<&str> = strict.row(marbling).map(|c| s.covariates.covariates[c].name.as_str()).collect();
        assert_eq!(row, ["Hanging"]);
        let corneal = s.decomposition.index_of("Corneal clouding").unwrap();
        assert_eq!(strict.row_count(corneal), 0);
    }

    #[test]
    fn strict_row_counts_match_check_marks() {
        let s = schema();
        let strict = build_mask(Variant::Strict, &s, None).unwrap();
        let expected = [
            ("Desiccation", 7),
            ("Skin slippage", 3),
            ("Exposed bone with moist tissue", 9),
            ("Exposed bone with desiccated tissue", 9),
            ("Bloat", 3),
            ("Purging", 3),
            ("Bone with grease", 9),
            ("Dry bone", 8),
            ("Adipocere", 3),
            ("Abdominal caving", 3),
            ("Weathered bone", 7),
            ("Body intact but rigor mortis has passed", 6),
            ("Marbling", 1),
            ("Skin discoloration", 1),
            ("Greening of the abdomen", 1),
            ("Drying of fingertips, lips and/or nose", 1),
            ("Livor mortis fixed", 0),
            ("Liquid decomposition", 0),
        ];
        for (name, count) in expected {
            assert_eq!(strict.row_count(s.decomposition.index_of(name).unwrap()), count, "{name}");
        }
        // never-included covariates
        for name in ["Age", "Sex", "Beetles", "Ants", "Fly eggs", "Other insect activity", "Other scavenger activity"] {
            let c = s.covariates.index_of(name).unwrap();
            assert!((0..24).all(|d| !strict.allows(d, c)), "{name}");
        }
    }

    #[test]
    fn mask_table_round_trips_and_rejects_unknown_names() {
        let s = schema();
        let strict = build_mask(Variant::Strict, &s, None).unwrap();
        let again = parse_mask_table(&strict.to_table(&s).unwrap(), &s).unwrap();
        assert_eq!(strict, again);
        let bad = "characteristic,Hanging\nNot a thing,1\n";
        assert!(matches!(parse_mask_table(bad, &s), Err(Error::UnknownName(_))));
        let bad = "characteristic,Moon phase\nMarbling,1\n";
        assert!(matches!(parse_mask_table(bad, &s), Err(Error::UnknownName(_))));
    }

    fn record(pairs: &[(&str, &str)]) -> CaseRecord {
        CaseRecord {
            case_id: "c1".into(),
            pmi_days: Some(3.0),
            dates: None,
            covariate_levels: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            decomposition: BTreeMap::from([("Bloat".to_string(), true)]),
        }
    }

    #[test]
    fn encode_applies_unknown_and_adult_rules() {
        let s = schema();
        let enc = s.encode_case(&record(&[("Deposition site type", "Water")])).unwrap();
        let sex = s.covariates.index_of("Sex").unwrap();
        let age = s.covariates.index_of("Age").unwrap();
        let dep = s.covariates.index_of("Deposition site type").unwrap();
        assert_eq!(s.covariates.covariates[sex].levels[enc.levels[sex]], "Unknown");
        assert_eq!(s.covariates.covariates[age].levels[enc.levels[age]], "Adult");
        assert_eq!(s.covariates.covariates[dep].levels[enc.levels[dep]], "Water");
        let enc = s.encode_case(&record(&[("Age", "unknown"), ("Sex", "UNKNOWN")])).unwrap();
        assert_eq!(s.covariates.covariates[age].levels[enc.levels[age]], "Adult");
        assert_eq!(s.covariates.covariates[sex].levels[enc.levels[sex]], "Unknown");
        assert_eq!(enc.observations.iter().filter(|o| o.is_some()).count(), 1);
    }

    #[test]
    fn all_reference_levels_encode_to_reference_indices() {
        let s = schema();
        let pairs: Vec<(String, String)> = s
            .covariates
            .covariates
            .iter()
            .map(|c| (c.name.clone(), c.reference_level().to_string()))
            .collect();
        let rec = CaseRecord {
            case_id: "r".into(),
            pmi_days: None,
            dates: None,
            covariate_levels: pairs.into_iter().collect(),
            decomposition: BTreeMap::new(),
        };
        let enc = s.encode_case(&rec).unwrap();
        assert_eq!(enc.levels, s.covariates.reference_levels());
        assert_eq!(enc.log1p_pmi, None);
    }

    #[test]
    fn unknown_level_is_an_error() {
        let s = schema();
        let err = s.encode_case(&record(&[("Sex", "Robot")])).unwrap_err();
        assert!(matches!(err, Error::UnknownLevel { .. }));
    }

    #[test]
    fn encode_decode_is_idempotent() {
        let s = schema();
        let rec = record(&[("Sex", ""), ("Larva", "1"), ("Presence of clothing", "unclothed")]);
        let enc = s.encode_case(&rec).unwrap();
        let dec = s.decode_case("c1", &enc);
        assert_eq!(dec.covariate_levels["Sex"], "Unknown");
        assert_eq!(dec.covariate_levels["Larva"], "present");
        assert_eq!(dec.covariate_levels["Presence of clothing"], "Unclothed");
        let enc2 = s.encode_case(&dec).unwrap();
        assert_eq!(enc, enc2);
        assert_eq!(s.decode_case("c1", &enc2), dec);
    }
}
