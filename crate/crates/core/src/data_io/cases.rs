use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::dates::{compute_pmi, DateEvidence, DeathDateKind};
use crate::error::{Error, Result};
use crate::schema::{CaseDesign, CaseRecord, Schema};

const DATE_COLUMNS: [&str; 5] = ["discovery_date", "death_date_kind", "death_date", "range_start", "range_end"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the file, header included.
    pub line: usize,
    pub case_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: Vec<RowError>,
    pub ignored_columns: Vec<String>,
}

enum Column {
    CaseId,
    Pmi,
    Date(usize),
    Covariate(usize),
    Characteristic(usize),
    Ignored,
}

fn parse_flag(raw: &str) -> std::result::Result<Option<bool>, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "na" | "nan" => Ok(None),
        "1" | "true" | "yes" | "present" => Ok(Some(true)),
        "0" | "false" | "no" | "absent" => Ok(Some(false)),
        other => Err(format!("expected 0/1/blank, got {other:?}")),
    }
}

fn parse_date(raw: &str, column: &str) -> std::result::Result<Option<NaiveDate>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(Some)
        .map_err(|_| format!("{column}: expected an ISO-8601 date, got {raw:?}"))
}

/// Parse a case table. Header problems are fatal; bad rows are reported and
/// skipped. Covariate answers are normalised to the schema's level names
/// (blank or "unknown" answers become the covariate's missing level).
pub fn parse_cases<R: Read>(reader: R, schema: &Schema) -> Result<(Vec<CaseRecord>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(reader);
    let mut report = IngestReport::default();
    let header = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(e) => return Err(Error::Parse(format!("case table header: {e}"))),
    };
    if header.is_empty() {
        return Ok((Vec::new(), report));
    }
    let mut columns = Vec::with_capacity(header.len());
    let mut seen = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if seen.insert(name.to_string(), i).is_some() {
            return Err(Error::Parse(format!("duplicate column {name:?}")));
        }
        let col = if name == "case_id" {
            Column::CaseId
        } else if name == "pmi_days" {
            Column::Pmi
        } else if let Some(k) = DATE_COLUMNS.iter().position(|c| *c == name) {
            Column::Date(k)
        } else if let Some(c) = schema.covariates.index_of(name) {
            Column::Covariate(c)
        } else if let Some(d) = schema.decomposition.index_of(name) {
            Column::Characteristic(d)
        } else {
            report.ignored_columns.push(name.to_string());
            Column::Ignored
        };
        columns.push(col);
    }
    if !seen.contains_key("case_id") {
        return Err(Error::Parse("case table needs a case_id column".into()));
    }

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(RowError {
                    line,
                    case_id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&rec, &columns, schema) {
            Ok(r) => {
                report.accepted += 1;
                records.push(r);
            }
            Err((case_id, reason)) => report.rejected.push(RowError { line, case_id, reason }),
        }
    }
    Ok((records, report))
}

type RowResult = std::result::Result<CaseRecord, (Option<String>, String)>;

fn parse_row(rec: &csv::StringRecord, columns: &[Column], schema: &Schema) -> RowResult {
    let mut case_id = None;
    let mut pmi_raw = None;
    let mut dates: [&str; 5] = [""; 5];
    let mut raw_levels: Vec<Option<&str>> = vec![None; schema.num_covariates()];
    let mut decomposition = BTreeMap::new();
    let mut problems = Vec::new();
    for (col, value) in columns.iter().zip(rec.iter()) {
        match col {
            Column::CaseId => case_id = Some(value.to_string()),
            Column::Pmi => pmi_raw = Some(value),
            Column::Date(k) => dates[*k] = value,
            Column::Covariate(c) => raw_levels[*c] = Some(value),
            Column::Characteristic(d) => match parse_flag(value) {
                Ok(Some(b)) => {
                    decomposition.insert(schema.decomposition.characteristics[*d].clone(), b);
                }
                Ok(None) => {}
                Err(e) => problems.push(format!("{}: {e}", schema.decomposition.characteristics[*d])),
            },
            Column::Ignored => {}
        }
    }
    let case_id = case_id.filter(|s| !s.is_empty());
    let fail = |reason: String| Err((case_id.clone(), reason));
    if case_id.is_none() {
        return fail("missing case_id".into());
    }
    if !problems.is_empty() {
        return fail(problems.join("; "));
    }

    let mut covariate_levels = BTreeMap::new();
    for (cov, raw) in schema.covariates.covariates.iter().zip(&raw_levels) {
        match cov.resolve(*raw) {
            Ok(i) => {
                covariate_levels.insert(cov.name.clone(), cov.levels[i].clone());
            }
            Err(e) => return fail(e.to_string()),
        }
    }

    let evidence = match read_dates(&dates) {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let pmi_days = match pmi_raw.map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Some(v),
            Ok(v) => return fail(format!("PMI must be a nonnegative number, got {v}")),
            Err(_) => return fail(format!("pmi_days: not a number: {s:?}")),
        },
        None => match &evidence {
            Some(e) => match compute_pmi(e) {
                Ok(v) => Some(v),
                Err(err) => return fail(err.to_string()),
            },
            None => None,
        },
    };
    Ok(CaseRecord {
        case_id: case_id.clone().unwrap_or_default(),
        pmi_days,
        dates: evidence,
        covariate_levels,
        decomposition,
    })
}

fn read_dates(raw: &[&str; 5]) -> std::result::Result<Option<DateEvidence>, String> {
    let discovery = parse_date(raw[0], DATE_COLUMNS[0])?;
    let Some(discovery_date) = discovery else {
        if raw[1..].iter().any(|s| !s.trim().is_empty()) {
            return Err("date fields given without discovery_date".into());
        }
        return Ok(None);
    };
    let kind = if raw[1].trim().is_empty() {
        DeathDateKind::Exact
    } else {
        raw[1].parse::<DeathDateKind>().map_err(|e| e.to_string())?
    };
    Ok(Some(DateEvidence {
        discovery_date,
        death_date_kind: kind,
        death_date: parse_date(raw[2], DATE_COLUMNS[2])?,
        range_start: parse_date(raw[3], DATE_COLUMNS[3])?,
        range_end: parse_date(raw[4], DATE_COLUMNS[4])?,
    }))
}

pub fn read_cases_file(path: &Path, schema: &Schema) -> Result<(Vec<CaseRecord>, IngestReport)> {
    let file = std::fs::File::open(path)?;
    parse_cases(std::io::BufReader::new(file), schema)
}

/// Write records in the format read by [`parse_cases`].
pub fn write_cases<W: Write>(writer: W, schema: &Schema, records: &[CaseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = vec!["case_id", "pmi_days"];
    header.extend(DATE_COLUMNS);
    header.extend(schema.covariates.covariates.iter().map(|c| c.name.as_str()));
    header.extend(schema.decomposition.characteristics.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.case_id.clone());
        row.push(r.pmi_days.map(|v| v.to_string()).unwrap_or_default());
        let fmt_date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        match &r.dates {
            Some(e) => {
                row.push(e.discovery_date.to_string());
                row.push(e.death_date_kind.to_string());
                row.push(fmt_date(e.death_date));
                row.push(fmt_date(e.range_start));
                row.push(fmt_date(e.range_end));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        for c in &schema.covariates.covariates {
            row.push(r.covariate_levels.get(&c.name).cloned().unwrap_or_default());
        }
        for d in &schema.decomposition.characteristics {
            row.push(match r.decomposition.get(d) {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn encode_cases(schema: &Schema, records: &[CaseRecord]) -> Result<Vec<CaseDesign>> {
    records.iter().map(|r| schema.encode_case(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_no_records() {
        let (recs, rep) = parse_cases("".as_bytes(), &Schema::bundled()).unwrap();
        assert!(recs.is_empty());
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn rows_are_validated_individually() {
        let csv = "case_id,pmi_days,Sex,Age,Bloat\n\
                   a,3,unknown,,1\n\
                   b,-2,Male,Adult,0\n\
                   c,,Martian,Adult,\n\
                   d,,Female,Child,\n";
        let (recs, rep) = parse_cases(csv.as_bytes(), &Schema::bundled()).unwrap();
        assert_eq!(rep.rows_read, 4);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].covariate_levels["Sex"], "Unknown");
        assert_eq!(recs[0].covariate_levels["Age"], "Adult");
        assert_eq!(recs[0].decomposition["Bloat"], true);
        assert_eq!(recs[1].pmi_days, None);
        assert_eq!(rep.rejected.len(), 2);
        assert_eq!(rep.rejected[0].line, 3);
        assert!(rep.rejected[0].reason.contains("nonnegative"));
        assert_eq!(rep.rejected[1].case_id.as_deref(), Some("c"));
    }

    #[test]
    fn pmi_from_dates() {
        let csv = "case_id,discovery_date,death_date_kind,death_date,range_start,range_end\n\
                   a,2020-01-21,range,,2020-01-01,2020-01-11\n\
                   b,2020-01-21,exact,2020-01-25,,\n";
        let (recs, rep) = parse_cases(csv.as_bytes(), &Schema::bundled()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].pmi_days, Some(15.0));
        assert_eq!(rep.rejected.len(), 1);
    }
}
