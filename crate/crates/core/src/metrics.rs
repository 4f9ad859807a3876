//! Forecast accuracy metrics and model comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};
use crate::forecaster::ForecastTrack;

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(VolError::Usage(format!(
            "metric inputs must be equal-length and non-empty ({} vs {})",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn evaluate(model_id: impl Into<String>, y: &[f64], y_hat: &[f64]) -> Result<Self> {
        let mse = mse(y, y_hat)?;
        Ok(Self { model_id: model_id.into(), mae: mae(y, y_hat)?, mse, rmse: mse.sqrt(), n: y.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    /// Minimal-RMSE model; absent when the minimum is shared.
    pub winner: Option<String>,
    pub tie: bool,
    /// Every model attaining the minimal RMSE.
    pub best: Vec<String>,
}

/// Scores each track against its realized proxy and ranks by RMSE. Tracks
/// must share dates and realized values exactly.
pub fn compare(tracks: &[ForecastTrack]) -> Result<Comparison> {
    let first = tracks.first().ok_or_else(|| VolError::Usage("no tracks to compare".into()))?;
    for t in &tracks[1..] {
        if t.dates != first.dates || t.realized != first.realized {
            return Err(VolError::Alignment(format!(
                "track `{}` does not share dates/realized values with `{}`",
                t.model_id, first.model_id
            )));
        }
    }
    let reports = tracks
        .iter()
        .map(|t| EvalReport::evaluate(&t.model_id, &t.realized, &t.predicted))
        .collect::<Result<Vec<_>>>()?;
    let min = reports.iter().map(|r| r.rmse).fold(f64::INFINITY, f64::min);
    let best: Vec<String> = reports.iter().filter(|r| r.rmse == min).map(|r| r.model_id.clone()).collect();
    let tie = best.len() > 1;
    Ok(Comparison { winner: if tie { None } else { best.first().cloned() }, tie, best, reports })
}

/// Plain-text table, 7 decimals, winner starred.
pub fn render_table(title: &str, cmp: &Comparison) -> String {
    let width = cmp.reports.iter().map(|r| r.model_id.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{title:<width$}  {:>10}  {:>10}  {:>10}", "MAE", "MSE", "RMSE");
    for r in &cmp.reports {
        let mark = if cmp.best.contains(&r.model_id) { if cmp.tie { " =" } else { " *" } } else { "" };
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.7}  {:>10.7}  {:>10.7}{mark}",
            r.model_id, r.mae, r.mse, r.rmse
        );
    }
    if cmp.tie {
        let _ = writeln!(s, "= tied on RMSE");
    } else {
        let _ = writeln!(s, "* lowest RMSE");
    }
    s
}

pub fn render_csv(cmp: &Comparison) -> String {
    let mut s = String::from("model_id,mae,mse,rmse,n,best\n");
    for r in &cmp.reports {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.model_id, r.mae, r.mse, r.rmse, r.n, cmp.best.contains(&r.model_id));
    }
    s
}
