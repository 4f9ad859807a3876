//! Normality, autocorrelation and unit-root tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Result, VolError};
use crate::timeseries::standardized_moments;

/// Asymptotic Dickey-Fuller critical values, constant and no trend.
pub const ADF_CRITICAL_1PCT: f64 = -3.43;
pub const ADF_CRITICAL_5PCT: f64 = -2.86;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Absent for ADF, which is decided against critical values.
    pub p_value: Option<f64>,
    pub lags: Option<usize>,
    pub reject_at_1pct: bool,
    pub reject_at_5pct: bool,
}

impl TestResult {
    fn from_p_value(statistic: f64, p: f64, lags: Option<usize>) -> Self {
        Self { statistic, p_value: Some(p), lags, reject_at_1pct: p < 0.01, reject_at_5pct: p < 0.05 }
    }
}

/// Upper-tail probability of a chi-square variate with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
    }
}

/// `JB = n/6 (S^2 + (K - 3)^2 / 4)` against chi-square(2).
pub fn jarque_bera(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if n < 4 {
        return Err(VolError::InsufficientData(format!("Jarque-Bera needs n >= 4, got {n}")));
    }
    let (s, k) = standardized_moments(x);
    let jb = n as f64 / 6.0 * (s * s + (k - 3.0).powi(2) / 4.0);
    Ok(TestResult::from_p_value(jb, chi_square_sf(jb, 2.0), None))
}

/// Sample autocorrelations `rho_1..rho_lags` of the demeaned series.
pub fn autocorrelations(x: &[f64], lags: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(VolError::DegenerateInput("zero-variance series has no autocorrelation".into()));
    }
    Ok((1..=lags)
        .map(|k| d[k..].iter().zip(&d[..n - k]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

/// Ljung-Box portmanteau `Q = n(n+2) sum rho_k^2 / (n - k)` against
/// chi-square(`lags`).
pub fn ljung_box(x: &[f64], lags: usize) -> Result<TestResult> {
    let n = x.len();
    if lags < 1 || n <= lags {
        return Err(VolError::InsufficientData(format!(
            "Ljung-Box needs n > lags >= 1 (n={n}, lags={lags})"
        )));
    }
    let rho = autocorrelations(x, lags)?;
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * rho.iter().enumerate().map(|(i, r)| r * r / (nf - (i + 1) as f64)).sum::<f64>();
    Ok(TestResult::from_p_value(q, chi_square_sf(q, lags as f64), Some(lags)))
}

struct Ols {
    coef: DVector<f64>,
    se: DVector<f64>,
    rss: f64,
    nobs: usize,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    let (nobs, k) = x.shape();
    if nobs <= k {
        return Err(VolError::InsufficientData(format!("{nobs} rows for {k} regressors")));
    }
    let xtx = x.transpose() * x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| VolError::DegenerateInput("singular regression".into()))?;
    let coef = chol.solve(&(x.transpose() * y));
    let resid = y - x * &coef;
    let rss = resid.dot(&resid);
    let sigma2 = rss / (nobs - k) as f64;
    let inv = chol.inverse();
    let se = DVector::from_iterator(k, (0..k).map(|i| (sigma2 * inv[(i, i)]).sqrt()));
    if coef.iter().chain(se.iter()).any(|v| !v.is_finite()) {
        return Err(VolError::DegenerateInput("singular regression".into()));
    }
    Ok(Ols { coef, se, rss, nobs })
}

/// Rows `t = first..n-1` of the ADF regression with `k` lagged differences:
/// `dy_t` on `[1, y_{t-1}, dy_{t-1}, .., dy_{t-k}]`.
fn adf_design(y: &[f64], k: usize, first: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = y.len();
    let rows = n - first;
    let dy = |t: usize| y[t] - y[t - 1];
    let x = DMatrix::from_fn(rows, k + 2, |r, c| {
        let t = first + r;
        match c {
            0 => 1.0,
            1 => y[t - 1],
            _ => dy(t - (c - 1)),
        }
    });
    let target = DVector::from_iterator(rows, (first..n).map(dy));
    (x, target)
}

/// Augmented Dickey-Fuller test with a constant. The number of lagged
/// differences is chosen in `0..=max_lag` by AIC over a common sample, then
/// the chosen regression is re-estimated on all usable rows.
pub fn adf(y: &[f64], max_lag: usize) -> Result<TestResult> {
    let n = y.len();
    if n < 25 {
        return Err(VolError::InsufficientData(format!("ADF needs n >= 25, got {n}")));
    }
    if n - max_lag - 1 <= max_lag + 2 {
        return Err(VolError::Config(format!("max_lag {max_lag} too large for n = {n}")));
    }
    let common_first = max_lag + 1;
    let mut best: Option<(f64, usize)> = None;
    for k in 0..=max_lag {
        let (x, t) = adf_design(y, k, common_first);
        let fit = ols(&x, &t)?;
        let nobs = fit.nobs as f64;
        let aic = nobs * (fit.rss / nobs).ln() + 2.0 * (k + 2) as f64;
        if best.map_or(true, |(a, _)| aic < a) {
            best = Some((aic, k));
        }
    }
    let (_, k) = best.expect("at least one lag evaluated");
    let (x, t) = adf_design(y, k, k + 1);
    let fit = ols(&x, &t)?;
    let stat = fit.coef[1] / fit.se[1];
    Ok(TestResult {
        statistic: stat,
        p_value: None,
        lags: Some(k),
        reject_at_1pct: stat < ADF_CRITICAL_1PCT,
        reject_at_5pct: stat < ADF_CRITICAL_5PCT,
    })
}

/// Schwert's rule `floor(12 (n / 100)^{1/4})`.
pub fn default_adf_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Table-1 style battery for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub jarque_bera: TestResult,
    pub ljung_box: TestResult,
    pub ljung_box_squared: TestResult,
    pub adf: TestResult,
}

pub fn diagnose(x: &[f64], lb_lags: usize) -> Result<DiagnosticsReport> {
    let squared: Vec<f64> = x.iter().map(|v| v * v).collect();
    Ok(DiagnosticsReport {
        jarque_bera: jarque_bera(x)?,
        ljung_box: ljung_box(x, lb_lags)?,
        ljung_box_squared: ljung_box(&squared, lb_lags)?,
        adf: adf(x, default_adf_lags(x.len()).min(x.len() / 4))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::NormalRng;
    use proptest::prelude::*;

    #[test]
    fn chi_square_tail_values() {
        // chi2(2) survival is exactly exp(-x/2).
        for x in [0.5, 2.0, 9.21] {
            assert!((chi_square_sf(x, 2.0) - (-x / 2.0f64).exp()).abs() < 1e-12);
        }
        assert_eq!(chi_square_sf(0.0, 12.0), 1.0);
        // 26.217 is the 1% critical value of chi2(12).
        assert!((chi_square_sf(26.217, 12.0) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn jarque_bera_zero_for_normal_moments() {
        // Two-point symmetric +-1 has S = 0, K = 1; use a mixture with K = 3:
        // values {-a, 0, a} with weights making m4/m2^2 = 3 -> P(0) = 2/3.
        let x = [-1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let r = jarque_bera(&x).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value.unwrap() - 1.0).abs() < 1e-12);
        assert!(jarque_bera(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ljung_box_zero_autocorrelation() {
        let x = [1.0, 0.0, -1.0, 0.0];
        let rho = autocorrelations(&x, 2).unwrap();
        assert!(rho[0].abs() < 1e-15);
        let r = ljung_box(&x, 1).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!(matches!(ljung_box(&[2.0; 10], 3), Err(VolError::DegenerateInput(_))));
        assert!(ljung_box(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn adf_minimum_length_and_singular() {
        assert!(matches!(adf(&[1.0; 20], 2), Err(VolError::InsufficientData(_))));
        assert!(matches!(adf(&[1.0; 40], 2), Err(VolError::DegenerateInput(_))));
    }

    #[test]
    fn adf_separates_noise_from_random_walk() {
        let mut rng = NormalRng::new(99);
        let noise = rng.fill(2000);
        let walk: Vec<f64> = noise.iter().scan(0.0, |s, e| { *s += e; Some(*s) }).collect();
        let r = adf(&noise, 8).unwrap();
        assert!(r.reject_at_1pct && r.reject_at_5pct);
        assert!(r.p_value.is_none());
        let w = adf(&walk, 8).unwrap();
        assert!(w.statistic > r.statistic);
    }

    proptest! {
        #[test]
        fn ljung_box_monotone_in_lags(xs in proptest::collection::vec(-1.0f64..1.0, 30..80)) {
            let mut prev = 0.0;
            for lags in 1..15 {
                let q = ljung_box(&xs, lags).unwrap();
                prop_assert!(q.statistic >= prev - 1e-12);
                let p = q.p_value.unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(!q.reject_at_1pct || q.reject_at_5pct);
                prev = q.statistic;
            }
        }

        #[test]
        fn jarque_bera_affine_invariant(
            xs in proptest::collection::vec(-1.0f64..1.0, 10..60),
            a in -5.0f64..5.0,
            b in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        ) {
            let base = jarque_bera(&xs).unwrap();
            let ys: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
            let t = jarque_bera(&ys).unwrap();
            prop_assert!((base.statistic - t.statistic).abs() <= 1e-8 * base.statistic.max(1.0));
            prop_assert!(!t.reject_at_1pct || t.reject_at_5pct);
        }
    }
}
