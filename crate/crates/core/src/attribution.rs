//! Monthly cross-sectional regression of company returns on cluster membership.
//!
//! For each month `t`, `R_jt = A_t + sum_i B_it C_ji + e_jt` is fitted by OLS
//! where `C_ji` indicates that company `j` is in cluster `i`. One present
//! cluster (the lowest index) is the reference and has `B = 0`. The metric is
//! the unweighted mean of the monthly R².

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterAssignment;
use crate::similarity::{DateRange, ReturnSeries};

pub const DEFAULT_MIN_MONTH_OBS: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributionError {
    #[error("date span {0} .. {1} is empty")]
    EmptySpan(NaiveDate, NaiveDate),
    #[error("no company has a complete month inside the span")]
    EmptyPanel,
    #[error("{id} {month}: return {value} must be finite and above -1")]
    InvalidValue { id: String, month: YearMonth, value: f64 },
    #[error("{n_obs} companies present, need at least {required}")]
    TooFewCompanies { n_obs: usize, required: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("no month could be fitted: {0}")]
    NoValidMonths(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = AttributionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(AttributionError::InvalidArgument(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self { year: date.year(), month: date.month() }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = AttributionError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AttributionError::InvalidArgument(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        Self::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Cumulative monthly returns keyed by month, then company.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonthlyReturnPanel {
    values: BTreeMap<YearMonth, BTreeMap<String, f64>>,
    pub span: Option<DateRange>,
}

impl MonthlyReturnPanel {
    pub fn new(values: BTreeMap<YearMonth, BTreeMap<String, f64>>) -> Result<Self> {
        for (month, row) in &values {
            for (id, &value) in row {
                if !value.is_finite() || value <= -1.0 {
                    return Err(AttributionError::InvalidValue { id: id.clone(), month: *month, value });
                }
            }
        }
        Ok(Self { values, span: None })
    }

    pub fn months(&self) -> Vec<YearMonth> {
        self.values.keys().copied().collect()
    }

    pub fn month(&self, month: YearMonth) -> Option<&BTreeMap<String, f64>> {
        self.values.get(&month)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&YearMonth, &BTreeMap<String, f64>)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Compounds daily simple returns into calendar-month returns. A company's
/// month is kept only if it has at least `min_obs` daily observations in it.
pub fn monthly_cumulative_returns(
    returns: &BTreeMap<String, ReturnSeries>,
    span: &DateRange,
    min_obs: usize,
) -> Result<MonthlyReturnPanel> {
    if span.start > span.end {
        return Err(AttributionError::EmptySpan(span.start, span.end));
    }
    let mut values: BTreeMap<YearMonth, BTreeMap<String, f64>> = BTreeMap::new();
    for (id, series) in returns {
        let mut current: Option<(YearMonth, f64, usize)> = None;
        let mut flush = |cur: Option<(YearMonth, f64, usize)>| {
            if let Some((m, growth, count)) = cur {
                if count >= min_obs.max(1) {
                    values.entry(m).or_default().insert(id.clone(), growth - 1.0);
                }
            }
        };
        for &(date, r) in series.within(span) {
            let m = YearMonth::of(date);
            match &mut current {
                Some((cm, growth, count)) if *cm == m => {
                    *growth *= 1.0 + r;
                    *count += 1;
                }
                _ => {
                    flush(current.take());
                    current = Some((m, 1.0 + r, 1));
                }
            }
        }
        flush(current);
    }
    if values.is_empty() {
        return Err(AttributionError::EmptyPanel);
    }
    let mut panel = MonthlyReturnPanel::new(values)?;
    panel.span = Some(*span);
    Ok(panel)
}

/// Clamps each month's cross-section to its `[lower, upper]` quantiles
/// (linear interpolation between order statistics).
pub fn winsorize(panel: &MonthlyReturnPanel, lower: f64, upper: f64) -> Result<MonthlyReturnPanel> {
    if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower > upper {
        return Err(AttributionError::InvalidArgument(format!("quantiles {lower}, {upper}")));
    }
    let values = panel
        .values
        .iter()
        .map(|(m, row)| {
            let mut sorted: Vec<f64> = row.values().copied().collect();
            sorted.sort_by(f64::total_cmp);
            let (lo, hi) = (quantile(&sorted, lower), quantile(&sorted, upper));
            (*m, row.iter().map(|(id, v)| (id.clone(), v.clamp(lo, hi))).collect())
        })
        .collect();
    let mut out = MonthlyReturnPanel::new(values)?;
    out.span = panel.span;
    Ok(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionFit {
    pub month: YearMonth,
    /// `A_t`: the reference cluster's mean return.
    pub intercept: f64,
    /// `B_it` per cluster index; `Some(0.0)` for the reference cluster,
    /// `None` for clusters with no company this month.
    pub cluster_returns: Vec<Option<f64>>,
    pub reference_cluster: usize,
    pub residuals: BTreeMap<String, f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub n_clusters_present: usize,
    /// All returns were equal, so R² is set to 0.
    pub zero_variance: bool,
}

/// OLS of one month's returns on an intercept plus cluster dummies.
/// Companies without a cluster are ignored.
pub fn cross_sectional_fit(
    month: YearMonth,
    month_returns: &BTreeMap<String, f64>,
    assignment: &ClusterAssignment,
) -> Result<AttributionFit> {
    let clusters = assignment.as_map();
    let obs: Vec<(&String, f64, usize)> =
        month_returns.iter().filter_map(|(id, &r)| clusters.get(id).map(|&c| (id, r, c))).collect();
    let n = obs.len();
    let n_clusters = assignment.n_clusters();
    let required = n_clusters + 2;
    if n < required {
        return Err(AttributionError::TooFewCompanies { n_obs: n, required });
    }
    let mut present = vec![false; n_clusters];
    for &(_, _, c) in &obs {
        present[c] = true;
    }
    let present: Vec<usize> = (0..n_clusters).filter(|&c| present[c]).collect();
    let reference = present[0];
    // column 0 is the intercept, then one dummy per non-reference present cluster
    let mut column_of = vec![None; n_clusters];
    for (k, &c) in present.iter().skip(1).enumerate() {
        column_of[c] = Some(k + 1);
    }
    let p = present.len();
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 || column_of[obs[i].2] == Some(j) {
            1.0
        } else {
            0.0
        }
    });
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.1));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx.cholesky().ok_or(AttributionError::RankDeficient)?.solve(&xty);

    let fitted = &x * &beta;
    let mean = y.mean();
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut residuals = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        let e = y[i] - fitted[i];
        ss_res += e * e;
        ss_tot += (y[i] - mean) * (y[i] - mean);
        residuals.insert(o.0.clone(), e);
    }
    let zero_variance = ss_tot == 0.0;
    let r2 = if zero_variance { 0.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    let dof = (n - p) as f64;
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof;
    let cluster_returns = (0..n_clusters)
        .map(|c| match column_of[c] {
            Some(j) => Some(beta[j]),
            None if c == reference => Some(0.0),
            None => None,
        })
        .collect();
    Ok(AttributionFit {
        month,
        intercept: beta[0],
        cluster_returns,
        reference_cluster: reference,
        residuals,
        r2,
        adj_r2,
        n_obs: n,
        n_clusters_present: p,
        zero_variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub avg_r2: f64,
    pub avg_adj_r2: f64,
    pub per_month: Vec<AttributionFit>,
    pub skipped: Vec<(YearMonth, String)>,
    pub n_clusters: usize,
    pub span: Option<DateRange>,
}

/// Fits every month of `panel` and averages R² over the months that could be fitted.
pub fn attribution_metric(panel: &MonthlyReturnPanel, assignment: &ClusterAssignment) -> Result<AttributionReport> {
    let results: Vec<(YearMonth, Result<AttributionFit>)> = panel
        .values
        .par_iter()
        .map(|(m, row)| (*m, cross_sectional_fit(*m, row, assignment)))
        .collect();
    let mut per_month = Vec::new();
    let mut skipped = Vec::new();
    for (m, r) in results {
        match r {
            Ok(fit) => per_month.push(fit),
            Err(e) => skipped.push((m, e.to_string())),
        }
    }
    if per_month.is_empty() {
        let reasons: Vec<String> = skipped.iter().map(|(m, r)| format!("{m}: {r}")).collect();
        return Err(AttributionError::NoValidMonths(reasons.join("; ")));
    }
    let k = per_month.len() as f64;
    Ok(AttributionReport {
        avg_r2: per_month.iter().map(|f| f.r2).sum::<f64>() / k,
        avg_adj_r2: per_month.iter().map(|f| f.adj_r2).sum::<f64>() / k,
        per_month,
        skipped,
        n_clusters: assignment.n_clusters(),
        span: panel.span,
    })
}

impl AttributionReport {
    /// CSV `month,r2,adj_r2,n_obs,n_clusters_present`, one row per fitted
    /// month, then an `average` row holding the mean R² values, the total
    /// observation count and the assignment's cluster count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("month,r2,adj_r2,n_obs,n_clusters_present\n");
        for f in &self.per_month {
            out.push_str(&format!("{},{:.6},{:.6},{},{}\n", f.month, f.r2, f.adj_r2, f.n_obs, f.n_clusters_present));
        }
        let total: usize = self.per_month.iter().map(|f| f.n_obs).sum();
        out.push_str(&format!("average,{:.6},{:.6},{},{}\n", self.avg_r2, self.avg_adj_r2, total, self.n_clusters));
        out
    }
}
