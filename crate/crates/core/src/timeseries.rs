//! Return series ingestion, descriptive statistics, the squared-return
//! volatility proxy and the chronological train/test split.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};

/// A dated sequence of raw values (prices, proxies, forecasts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    pub label: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(label: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(VolError::Config(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        check_increasing(&dates)?;
        Ok(Self { label: label.into(), dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Arithmetic daily returns as decimal fractions (0.01 = 1%).
///
/// Dates are strictly increasing and every value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    label: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(label: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(VolError::Config(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        check_increasing(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VolError::Domain(format!("non-finite return at index {i}")));
        }
        Ok(Self { label: label.into(), dates, values })
    }

    /// Builds a series with consecutive calendar dates starting at `start`.
    pub fn with_daily_dates(label: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(values.len()).collect();
        Self::new(label, dates, values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Contiguous sub-range `[start, end)` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> ReturnSeries {
        ReturnSeries {
            label: self.label.clone(),
            dates: self.dates[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
        }
    }

    pub fn into_dated(self) -> DatedSeries {
        DatedSeries { label: self.label, dates: self.dates, values: self.values }
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(VolError::Domain(format!(
                "dates not strictly increasing at index {}: {} after {}",
                i + 1,
                w[1],
                w[0]
            )));
        }
    }
    Ok(())
}

/// Moments and range of a return series. Kurtosis is raw (normal = 3).
///
/// Skewness and kurtosis are `None` only when produced by
/// [`describe_partial`] on fewer than four observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub max: f64,
    pub min: f64,
    pub count: usize,
}

/// Train/test boundary for a series of `train_len + test_len` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub train_len: usize,
    pub test_len: usize,
}

impl SplitSpec {
    /// `train_len = floor(fraction * total)`; both sides must be non-empty and
    /// the training side needs at least two observations.
    pub fn new(total: usize, train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(VolError::Config(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let train_len = (train_fraction * total as f64).floor() as usize;
        if train_len < 2 || train_len >= total {
            return Err(VolError::Config(format!(
                "degenerate split of {total} observations at fraction {train_fraction}"
            )));
        }
        Ok(Self { train_fraction, train_len, test_len: total - train_len })
    }

    pub fn total(&self) -> usize {
        self.train_len + self.test_len
    }
}

/// Simple arithmetic returns `(P_t - P_{t-1}) / P_{t-1}`, dated at `t`.
pub fn compute_returns(prices: &DatedSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(VolError::InsufficientData(format!(
            "need at least 2 prices, got {}",
            prices.len()
        )));
    }
    if let Some(i) = prices.values.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(VolError::Domain(format!(
            "price {} at index {i} is not positive",
            prices.values[i]
        )));
    }
    let values = prices.values.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    ReturnSeries::new(prices.label.clone(), prices.dates[1..].to_vec(), values)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Full descriptive statistics; requires at least four observations.
pub fn describe(series: &ReturnSeries) -> Result<DescriptiveStats> {
    if series.len() < 4 {
        return Err(VolError::InsufficientData(format!(
            "describe needs at least 4 observations, got {}",
            series.len()
        )));
    }
    describe_partial(series)
}

/// Like [`describe`] but accepts two or three observations, leaving the
/// higher moments empty.
pub fn describe_partial(series: &ReturnSeries) -> Result<DescriptiveStats> {
    let x = series.values();
    let n = x.len();
    if n < 2 {
        return Err(VolError::InsufficientData(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let m = mean(x);
    let std_dev = sample_variance(series)?.sqrt();
    let (skewness, kurtosis) = if n >= 4 {
        let (s, k) = standardized_moments(x);
        (Some(s), Some(k))
    } else {
        (None, None)
    };
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DescriptiveStats { mean: m, std_dev, skewness, kurtosis, max, min, count: n })
}

/// Skewness and raw kurtosis from population central moments. A constant
/// series has zero skewness and kurtosis by convention.
pub(crate) fn standardized_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2))
}

/// Squared-return proxy `r_t^2`, same dates as the input.
pub fn squared_return_proxy(series: &ReturnSeries) -> DatedSeries {
    DatedSeries {
        label: series.label.clone(),
        dates: series.dates.clone(),
        values: series.values.iter().map(|r| r * r).collect(),
    }
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(series: &ReturnSeries) -> Result<f64> {
    variance_of(series.values())
}

pub(crate) fn variance_of(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(VolError::InsufficientData(format!(
            "variance needs at least 2 observations, got {}",
            x.len()
        )));
    }
    let m = mean(x);
    Ok(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64)
}

/// Chronological split: the first `floor(fraction * n)` observations train.
pub fn split(series: &ReturnSeries, train_fraction: f64) -> Result<(ReturnSeries, ReturnSeries, SplitSpec)> {
    let spec = SplitSpec::new(series.len(), train_fraction)?;
    let train = series.slice(0, spec.train_len);
    let test = series.slice(spec.train_len, series.len());
    Ok((train, test, spec))
}

/// Parses `YYYY-MM-DD` or `YYYYMMDD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .ok()
}

/// Reads a wide CSV: a `date` column followed by one column per series.
///
/// Any unparseable cell rejects the whole file with the offending line
/// number (the header is line 1). With `percent`, every value is divided
/// by 100.
pub fn read_csv<R: Read>(reader: R, percent: bool) -> Result<Vec<DatedSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| VolError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.get(0).map(|h| h.to_ascii_lowercase()) != Some("date".to_string()) {
        return Err(VolError::Parse { line: 1, message: "first column must be `date`".into() });
    }
    if headers.len() < 2 {
        return Err(VolError::Parse { line: 1, message: "no data columns".into() });
    }
    let ncols = headers.len() - 1;
    let mut dates = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| VolError::Parse { line, message: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(VolError::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let date = parse_date(&rec[0])
            .ok_or_else(|| VolError::Parse { line, message: format!("bad date `{}`", &rec[0]) })?;
        dates.push(date);
        for (c, col) in cols.iter_mut().enumerate() {
            let cell = &rec[c + 1];
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| VolError::Parse {
                    line,
                    message: format!("bad value `{cell}` in column `{}`", &headers[c + 1]),
                })?;
            col.push(if percent { v / 100.0 } else { v });
        }
    }
    cols.into_iter()
        .enumerate()
        .map(|(c, values)| DatedSeries::new(&headers[c + 1], dates.clone(), values))
        .collect()
}

/// Writes series sharing one date axis in the same schema as [`read_csv`].
pub fn write_csv<W: Write>(writer: W, series: &[&ReturnSeries]) -> Result<()> {
    let first = series
        .first()
        .ok_or_else(|| VolError::Usage("no series to write".into()))?;
    if series.iter().any(|s| s.dates != first.dates) {
        return Err(VolError::Alignment("series do not share dates".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    w.write_record(&header).map_err(|e| VolError::Io(e.to_string()))?;
    for (i, d) in first.dates.iter().enumerate() {
        let mut row = vec![d.format("%Y-%m-%d").to_string()];
        row.extend(series.iter().map(|s| s.values[i].to_string()));
        w.write_record(&row).map_err(|e| VolError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
