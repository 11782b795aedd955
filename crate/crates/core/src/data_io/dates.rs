use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the death date was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathDateKind {
    Longitudinal,
    Exact,
    Approximate,
    Range,
    LastKnownAliveExact,
    LastKnownAliveApproximate,
    /// Handled as approximate.
    Unknown,
}

impl DeathDateKind {
    const ALL: [(DeathDateKind, &'static str); 7] = [
        (DeathDateKind::Longitudinal, "longitudinal"),
        (DeathDateKind::Exact, "exact"),
        (DeathDateKind::Approximate, "approximate"),
        (DeathDateKind::Range, "range"),
        (DeathDateKind::LastKnownAliveExact, "last_known_alive_exact"),
        (DeathDateKind::LastKnownAliveApproximate, "last_known_alive_approximate"),
        (DeathDateKind::Unknown, "unknown"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(k, _)| *k == self).map(|(_, s)| *s).unwrap_or("unknown")
    }
}

impl fmt::Display for DeathDateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeathDateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Self::ALL
            .iter()
            .find(|(_, name)| *name == norm)
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::Parse(format!("unknown death date kind {s:?}")))
    }
}

/// Dates from which the PMI is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateEvidence {
    pub discovery_date: NaiveDate,
    pub death_date_kind: DeathDateKind,
    pub death_date: Option<NaiveDate>,
    pub range_start: Option<NaiveDate>,
    pub range_end: Option<NaiveDate>,
}

/// PMI in days. Range evidence uses the midpoint of the range, which can
/// yield half days.
pub fn compute_pmi(e: &DateEvidence) -> Result<f64> {
    let days = |from: NaiveDate| (e.discovery_date - from).num_days() as f64;
    match e.death_date_kind {
        DeathDateKind::Range => {
            let (Some(start), Some(end)) = (e.range_start, e.range_end) else {
                return Err(Error::invalid("range evidence needs range_start and range_end"));
            };
            if start > end {
                return Err(Error::invalid(format!("range start {start} is after range end {end}")));
            }
            if end > e.discovery_date {
                return Err(Error::invalid(format!(
                    "range end {end} is after discovery {}",
                    e.discovery_date
                )));
            }
            Ok(days(start) - 0.5 * (end - start).num_days() as f64)
        }
        _ => {
            let Some(death) = e.death_date else {
                return Err(Error::invalid(format!("{} evidence needs death_date", e.death_date_kind)));
            };
            if death > e.discovery_date {
                return Err(Error::invalid(format!(
                    "death {death} is after discovery {}",
                    e.discovery_date
                )));
            }
            Ok(days(death))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn evidence(kind: DeathDateKind, death: Option<&str>, range: Option<(&str, &str)>, discovery: &str) -> DateEvidence {
        DateEvidence {
            discovery_date: date(discovery),
            death_date_kind: kind,
            death_date: death.map(date),
            range_start: range.map(|r| date(r.0)),
            range_end: range.map(|r| date(r.1)),
        }
    }

    #[test]
    fn exact_range_and_same_day() {
        let e = evidence(DeathDateKind::Exact, Some("2020-01-06"), None, "2020-01-21");
        assert_eq!(compute_pmi(&e).unwrap(), 15.0);
        let r = evidence(DeathDateKind::Range, None, Some(("2020-01-01", "2020-01-11")), "2020-01-21");
        assert_eq!(compute_pmi(&r).unwrap(), 15.0);
        let l = evidence(DeathDateKind::Longitudinal, Some("2021-03-04"), None, "2021-03-04");
        assert_eq!(compute_pmi(&l).unwrap(), 0.0);
        let odd = evidence(DeathDateKind::Range, None, Some(("2020-01-01", "2020-01-02")), "2020-01-03");
        assert_eq!(compute_pmi(&odd).unwrap(), 1.5);
    }

    #[test]
    fn death_after_discovery_is_rejected() {
        let e = evidence(DeathDateKind::Approximate, Some("2020-02-01"), None, "2020-01-21");
        assert!(compute_pmi(&e).is_err());
        let r = evidence(DeathDateKind::Range, None, Some(("2020-01-05", "2020-01-01")), "2020-01-21");
        assert!(compute_pmi(&r).is_err());
    }

    #[test]
    fn kind_names_parse_loosely() {
        assert_eq!("Last known alive - exact".replace(" - ", "_").parse::<DeathDateKind>().unwrap(), DeathDateKind::LastKnownAliveExact);
        assert_eq!("last-known-alive-approximate".parse::<DeathDateKind>().unwrap(), DeathDateKind::LastKnownAliveApproximate);
        assert_eq!("UNKNOWN".parse::<DeathDateKind>().unwrap(), DeathDateKind::Unknown);
        assert!("sometime".parse::<DeathDateKind>().is_err());
    }
}
