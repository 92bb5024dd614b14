use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::SimilarityError;

/// Inclusive calendar date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn calendar_year(year: i32) -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year"),
            end: NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year"),
        }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// Daily simple returns of one company, dates strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub company_id: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl ReturnSeries {
    pub fn new(company_id: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self, SimilarityError> {
        let company_id = company_id.into();
        for w in observations.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(SimilarityError::InvalidSeries {
                    id: company_id,
                    message: format!("dates not strictly increasing at {}", w[1].0),
                });
            }
        }
        if let Some((d, r)) = observations.iter().find(|(_, r)| !r.is_finite() || *r <= -1.0) {
            return Err(SimilarityError::InvalidSeries {
                id: company_id,
                message: format!("return {r} on {d} is not a finite value above -1"),
            });
        }
        Ok(Self { company_id, observations })
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observations falling inside `window`.
    pub fn within(&self, window: &DateRange) -> &[(NaiveDate, f64)] {
        let lo = self.observations.partition_point(|(d, _)| *d < window.start);
        let hi = self.observations.partition_point(|(d, _)| *d <= window.end);
        &self.observations[lo..hi.max(lo)]
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.observations.iter().map(|(d, _)| d.year()).collect();
        y.dedup();
        y
    }
}

#[derive(Debug, Deserialize)]
struct ReturnRow {
    company_id: String,
    date: NaiveDate,
    #[serde(rename = "return")]
    value: f64,
}

/// Reads `company_id,date,return` rows (ISO dates, decimal fractions). Rows may
/// come in any order; a repeated `(company_id, date)` is an error.
pub fn load_returns(path: &Path) -> Result<BTreeMap<String, ReturnSeries>, SimilarityError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| SimilarityError::ReturnsFile {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut grouped: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ReturnRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| SimilarityError::ReturnsFile { line, message: e.to_string() })?;
        if !row.value.is_finite() || row.value <= -1.0 {
            return Err(SimilarityError::ReturnsFile {
                line,
                message: format!("return {} must be finite and above -1", row.value),
            });
        }
        grouped.entry(row.company_id).or_default().push((row.date, row.value));
    }
    grouped
        .into_iter()
        .map(|(id, mut obs)| {
            obs.sort_by_key(|(d, _)| *d);
            if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(SimilarityError::ReturnsFile {
                    line: 0,
                    message: format!("{id} has two returns on {}", w[0].0),
                });
            }
            let series = ReturnSeries::new(id.clone(), obs)?;
            Ok((id, series))
        })
        .collect()
}

pub fn save_returns(returns: &BTreeMap<String, ReturnSeries>, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["company_id", "date", "return"])?;
    for (id, series) in returns {
        for (d, r) in &series.observations {
            w.write_record([id.as_str(), &d.to_string(), &format!("{r}")])?;
        }
    }
    w.flush()
}
