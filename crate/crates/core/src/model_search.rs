//! Lag-order search: minimal AIC among fits with white-noise residuals.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{ljung_box, TestResult};
use crate::error::{Result, VolError};
use crate::garch::{fit, Family, FitOptions, FitResult, FitSummary, GarchSpec, NamedParam};
use crate::timeseries::ReturnSeries;

/// AIC values closer than this are treated as equal.
pub const AIC_TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub families: Vec<Family>,
    pub p_max: usize,
    pub q_max: usize,
    pub lb_lags: usize,
    pub significance: f64,
    pub fit_options: FitOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            families: vec![Family::Garch, Family::Egarch],
            p_max: 5,
            q_max: 5,
            lb_lags: 12,
            significance: 0.01,
            fit_options: FitOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(VolError::Config("no model family selected".into()));
        }
        if self.p_max < 1 || self.q_max < 1 {
            return Err(VolError::Config("p_max and q_max must be >= 1".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(VolError::Config("significance must be in (0, 1)".into()));
        }
        if self.lb_lags < 1 {
            return Err(VolError::Config("lb_lags must be >= 1".into()));
        }
        Ok(())
    }

    /// Grid in evaluation order: family, then p, then q. EGARCH uses one
    /// asymmetry lag.
    pub fn grid(&self) -> Vec<GarchSpec> {
        let mut out = vec![];
        let mut families = self.families.clone();
        families.dedup();
        for fam in families {
            for p in 1..=self.p_max {
                for q in 1..=self.q_max {
                    let o = if fam == Family::Egarch { 1 } else { 0 };
                    out.push(GarchSpec::new(fam, p, o, q).expect("valid orders"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub spec: GarchSpec,
    pub model: String,
    pub converged: bool,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub params: Vec<NamedParam>,
    /// Ljung-Box on standardized residuals.
    pub lb_levels: Option<TestResult>,
    /// Ljung-Box on squared standardized residuals.
    pub lb_squares: Option<TestResult>,
    pub lb_levels_pass: bool,
    pub lb_squares_pass: bool,
    /// Present when the fit itself failed.
    pub error: Option<String>,
}

impl Candidate {
    pub fn passes(&self) -> bool {
        self.converged && self.lb_levels_pass && self.lb_squares_pass
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub candidates: Vec<Candidate>,
    pub winner_index: usize,
    pub winner: FitSummary,
    pub winner_unconditional_variance: Option<f64>,
    pub selection_rationale: String,
    /// True when no candidate passed the residual checks.
    pub relaxed: bool,
    #[serde(skip)]
    pub fits: Vec<Option<FitResult>>,
}

impl SearchReport {
    pub fn winner_fit(&self) -> &FitResult {
        self.fits[self.winner_index].as_ref().expect("winner has a fit")
    }

    /// Best candidate within one family under the same selection rule.
    pub fn best_by_family(&self, family: Family) -> Option<&FitResult> {
        let idx: Vec<usize> = (0..self.candidates.len()).filter(|i| self.candidates[*i].spec.family == family).collect();
        select(&self.candidates, &idx).map(|(i, _)| self.fits[i].as_ref().expect("selected fit exists"))
    }
}

fn evaluate(series: &ReturnSeries, spec: GarchSpec, config: &SearchConfig) -> (Candidate, Option<FitResult>) {
    let mut cand = Candidate {
        spec,
        model: spec.label(),
        converged: false,
        log_likelihood: None,
        aic: None,
        params: vec![],
        lb_levels: None,
        lb_squares: None,
        lb_levels_pass: false,
        lb_squares_pass: false,
        error: None,
    };
    let result = match fit(series, &spec, &config.fit_options) {
        Ok(r) => r,
        Err(e) => {
            cand.error = Some(e.to_string());
            return (cand, None);
        }
    };
    let summary = result.summary();
    cand.converged = result.converged;
    cand.log_likelihood = Some(result.log_likelihood);
    cand.aic = Some(result.aic);
    cand.params = summary.params;
    let squares: Vec<f64> = result.std_residuals.iter().map(|z| z * z).collect();
    match (ljung_box(&result.std_residuals, config.lb_lags), ljung_box(&squares, config.lb_lags)) {
        (Ok(a), Ok(b)) => {
            cand.lb_levels_pass = a.p_value.is_some_and(|p| p >= config.significance);
            cand.lb_squares_pass = b.p_value.is_some_and(|p| p >= config.significance);
            cand.lb_levels = Some(a);
            cand.lb_squares = Some(b);
        }
        (Err(e), _) | (_, Err(e)) => cand.error = Some(format!("residual diagnostics: {e}")),
    }
    (cand, Some(result))
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let (fa, fb) = (a.aic.unwrap_or(f64::INFINITY), b.aic.unwrap_or(f64::INFINITY));
    if (fa - fb).abs() > AIC_TIE_TOLERANCE {
        return fa < fb;
    }
    (a.spec.p + a.spec.q, a.spec.p) < (b.spec.p + b.spec.q, b.spec.p)
}

/// Index of the winner among `indices`, and whether the white-noise
/// requirement had to be relaxed.
fn select(cands: &[Candidate], indices: &[usize]) -> Option<(usize, bool)> {
    let pick = |filter: &dyn Fn(&Candidate) -> bool| {
        indices
            .iter()
            .copied()
            .filter(|i| filter(&cands[*i]) && cands[*i].aic.is_some_and(f64::is_finite))
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if !better(&cands[i], &cands[b]) => Some(b),
                _ => Some(i),
            })
    };
    if let Some(i) = pick(&Candidate::passes) {
        return Some((i, false));
    }
    pick(&|c: &Candidate| c.converged).map(|i| (i, true))
}

/// Fits every grid cell and selects the minimal-AIC model whose
/// standardized residuals and squares both look like white noise.
/// Cells may be evaluated in parallel; results are merged in grid order.
pub fn search(series: &ReturnSeries, config: &SearchConfig) -> Result<SearchReport> {
    config.validate()?;
    let grid = config.grid();
    let evaluated: Vec<(Candidate, Option<FitResult>)> =
        grid.par_iter().map(|spec| evaluate(series, *spec, config)).collect();
    let (candidates, fits): (Vec<Candidate>, Vec<Option<FitResult>>) = evaluated.into_iter().unzip();

    let all: Vec<usize> = (0..candidates.len()).collect();
    let Some((winner_index, relaxed)) = select(&candidates, &all) else {
        let detail: Vec<String> = candidates
            .iter()
            .map(|c| match &c.error {
                Some(e) => format!("{}: {e}", c.model),
                None => format!("{}: not converged", c.model),
            })
            .collect();
        return Err(VolError::SearchFailed(detail.join("; ")));
    };
    let w = &candidates[winner_index];
    let passing = candidates.iter().filter(|c| c.passes()).count();
    let aic = w.aic.expect("winner has an AIC");
    let selection_rationale = if relaxed {
        format!(
            "{}: no candidate passed both Ljung-Box checks at the {} level; selected the lowest AIC ({aic:.3}) among converged fits",
            w.model, config.significance
        )
    } else {
        format!(
            "{}: lowest AIC ({aic:.3}) among {passing} of {} candidates whose standardized residuals and squares pass Ljung-Box({}) at the {} level",
            w.model,
            candidates.len(),
            config.lb_lags,
            config.significance
        )
    };
    let winner_fit = fits[winner_index].as_ref().expect("winner has a fit");
    Ok(SearchReport {
        winner: winner_fit.summary(),
        winner_unconditional_variance: winner_fit.params.unconditional_variance(winner_fit.spec.family).ok(),
        winner_index,
        selection_rationale,
        relaxed,
        candidates,
        fits,
    })
}

fn stars(t: &Option<TestResult>) -> String {
    match t {
        Some(r) => {
            let mark = if r.reject_at_1pct {
                "**"
            } else if r.reject_at_5pct {
                "*"
            } else {
                ""
            };
            format!("{:.2}{mark}", r.statistic)
        }
        None => "NA".into(),
    }
}

fn persistence(c: &Candidate) -> Option<f64> {
    if c.params.is_empty() {
        return None;
    }
    let sum = |prefix: &str| c.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.value).sum::<f64>();
    Some(match c.spec.family {
        Family::Garch => sum("alpha") + sum("beta"),
        Family::Egarch => sum("beta"),
    })
}

/// Coefficients, Ljung-Box statistics and AIC with one column per
/// candidate, in blocks of `per_block` columns. `**`/`*` mark Q statistics
/// significant at 1%/5%; the winner's header is bracketed.
pub fn render_table(report: &SearchReport, per_block: usize) -> String {
    let per_block = per_block.max(1);
    let lags = report.candidates.iter().find_map(|c| c.lb_levels.as_ref().and_then(|t| t.lags)).unwrap_or(12);
    let mut s = String::new();
    let label_w = 12;
    let col_w = 16;
    for (b, block) in report.candidates.chunks(per_block).enumerate() {
        let offset = b * per_block;
        let mut names: Vec<String> = vec![];
        for c in block {
            for p in &c.params {
                if !names.contains(&p.name) {
                    names.push(p.name.clone());
                }
            }
        }
        let order = |n: &str| -> (usize, usize) {
            let rank = ["mu", "omega", "alpha", "gamma", "beta"].iter().position(|p| n.starts_with(p)).unwrap_or(5);
            let idx = n.rsplit('[').next().and_then(|t| t.trim_end_matches(']').parse().ok()).unwrap_or(0);
            (rank, idx)
        };
        names.sort_by_key(|n| order(n));

        let _ = write!(s, "{:<label_w$}", "");
        for (i, c) in block.iter().enumerate() {
            let head = if offset + i == report.winner_index { format!("[{}]", c.model) } else { c.model.clone() };
            let _ = write!(s, "{head:>col_w$}");
        }
        s.push('\n');
        for name in &names {
            let _ = write!(s, "{name:<label_w$}");
            for c in block {
                let cell = c
                    .params
                    .iter()
                    .find(|p| &p.name == name)
                    .map(|p| format!("{:.6}", p.value))
                    .unwrap_or_default();
                let _ = write!(s, "{cell:>col_w$}");
            }
            s.push('\n');
        }
        let rows: [(String, Box<dyn Fn(&Candidate) -> String>); 5] = [
            ("Persistence".into(), Box::new(|c| persistence(c).map(|v| format!("{v:.4}")).unwrap_or("NA".into()))),
            (format!("Q({lags})"), Box::new(|c| stars(&c.lb_levels))),
            (format!("Q2({lags})"), Box::new(|c| stars(&c.lb_squares))),
            ("AIC".into(), Box::new(|c| c.aic.map(|v| format!("{v:.2}")).unwrap_or("NA".into()))),
            ("Converged".into(), Box::new(|c| if c.error.is_some() && c.aic.is_none() { "failed".into() } else { c.converged.to_string() })),
        ];
        for (label, f) in rows.iter() {
            let _ = write!(s, "{label:<label_w$}");
            for c in block {
                let _ = write!(s, "{:>col_w$}", f(c));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    let _ = writeln!(s, "Selected: {}", report.selection_rationale);
    s
}
