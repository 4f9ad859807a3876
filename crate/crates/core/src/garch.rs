//! GARCH(p,q) and EGARCH(p,o,q) conditional variance models with a constant
//! mean, fitted by Gaussian maximum likelihood.
//!
//! Parameter vectors are laid out as `[mu, omega, alpha_1..alpha_q,
//! gamma_1..gamma_o, beta_1..beta_p]`. For plain GARCH `omega` is the
//! variance intercept and there are no `gamma` terms; for EGARCH every
//! coefficient acts on `ln sigma^2`.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::timeseries::{variance_of, ReturnSeries};

/// `E|z|` for a standard normal `z`.
pub(crate) fn abs_normal_mean() -> f64 {
    FRAC_2_PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Garch,
    Egarch,
}

/// Lag orders: `p` variance lags, `q` shock lags, `o` asymmetry lags
/// (EGARCH only, zero for GARCH).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GarchSpec {
    pub family: Family,
    pub p: usize,
    pub o: usize,
    pub q: usize,
}

impl GarchSpec {
    pub fn garch(p: usize, q: usize) -> Result<Self> {
        Self::new(Family::Garch, p, 0, q)
    }

    pub fn egarch(p: usize, o: usize, q: usize) -> Result<Self> {
        Self::new(Family::Egarch, p, o, q)
    }

    pub fn new(family: Family, p: usize, o: usize, q: usize) -> Result<Self> {
        if p < 1 || q < 1 {
            return Err(VolError::Config(format!("lag orders must be >= 1 (p={p}, q={q})")));
        }
        match family {
            Family::Garch if o != 0 => {
                Err(VolError::Config("GARCH models take no asymmetry lags".into()))
            }
            Family::Egarch if o < 1 => Err(VolError::Config("EGARCH needs o >= 1".into())),
            _ => Ok(Self { family, p, o, q }),
        }
    }

    /// Number of estimated parameters, counting the mean.
    pub fn n_params(&self) -> usize {
        2 + self.q + self.o + self.p
    }

    /// Longest lag the recursion looks back.
    pub fn max_lag(&self) -> usize {
        self.p.max(self.q).max(self.o)
    }

    pub fn label(&self) -> String {
        match self.family {
            Family::Garch => format!("GARCH({},{})", self.p, self.q),
            Family::Egarch => format!("EGARCH({},{},{})", self.p, self.o, self.q),
        }
    }

    /// File-name friendly identifier, e.g. `egarch_1_1_2`.
    pub fn id(&self) -> String {
        match self.family {
            Family::Garch => format!("garch_{}_{}", self.p, self.q),
            Family::Egarch => format!("egarch_{}_{}_{}", self.p, self.o, self.q),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["mu".to_string(), "omega".to_string()];
        names.extend((1..=self.q).map(|i| format!("alpha[{i}]")));
        names.extend((1..=self.o).map(|i| format!("gamma[{i}]")));
        names.extend((1..=self.p).map(|i| format!("beta[{i}]")));
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl GarchParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.mu, self.omega];
        v.extend(&self.alpha);
        v.extend(&self.gamma);
        v.extend(&self.beta);
        v
    }

    pub fn from_vec(spec: &GarchSpec, v: &[f64]) -> Result<Self> {
        if v.len() != spec.n_params() {
            return Err(VolError::Config(format!(
                "{} expects {} parameters, got {}",
                spec.label(),
                spec.n_params(),
                v.len()
            )));
        }
        let a_end = 2 + spec.q;
        let g_end = a_end + spec.o;
        Ok(Self {
            mu: v[0],
            omega: v[1],
            alpha: v[2..a_end].to_vec(),
            gamma: v[a_end..g_end].to_vec(),
            beta: v[g_end..].to_vec(),
        })
    }

    fn check_shape(&self, spec: &GarchSpec) -> Result<()> {
        if self.alpha.len() != spec.q || self.beta.len() != spec.p || self.gamma.len() != spec.o {
            return Err(VolError::InvalidParameter(format!(
                "parameter lengths (alpha {}, gamma {}, beta {}) do not match {}",
                self.alpha.len(),
                self.gamma.len(),
                self.beta.len(),
                spec.label()
            )));
        }
        Ok(())
    }

    /// Checks the family constraints: positivity and `sum(alpha) + sum(beta) < 1`
    /// for GARCH, `beta >= 0` and `sum(beta) < 1` for EGARCH.
    pub fn validate(&self, spec: &GarchSpec) -> Result<()> {
        self.check_shape(spec)?;
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(VolError::InvalidParameter("non-finite parameter".into()));
        }
        let sum_beta: f64 = self.beta.iter().sum();
        match spec.family {
            Family::Garch => {
                if !(self.omega > 0.0) {
                    return Err(VolError::InvalidParameter(format!("omega {} must be > 0", self.omega)));
                }
                if self.alpha.iter().chain(&self.beta).any(|v| *v < 0.0) {
                    return Err(VolError::InvalidParameter("negative ARCH/GARCH coefficient".into()));
                }
                let persistence = self.alpha.iter().sum::<f64>() + sum_beta;
                if !(persistence < 1.0) {
                    return Err(VolError::Nonstationary(format!("alpha + beta = {persistence} >= 1")));
                }
            }
            Family::Egarch => {
                if self.beta.iter().any(|v| *v < 0.0) {
                    return Err(VolError::InvalidParameter("negative EGARCH beta".into()));
                }
                if !(sum_beta < 1.0) {
                    return Err(VolError::Nonstationary(format!("sum(beta) = {sum_beta} >= 1")));
                }
            }
        }
        Ok(())
    }

    /// Long-run variance: `omega / (1 - sum(alpha) - sum(beta))` for GARCH,
    /// `exp(omega / (1 - sum(beta)))` for EGARCH.
    pub fn unconditional_variance(&self, family: Family) -> Result<f64> {
        let sum_beta: f64 = self.beta.iter().sum();
        match family {
            Family::Garch => {
                let persistence = self.alpha.iter().sum::<f64>() + sum_beta;
                if persistence >= 1.0 {
                    return Err(VolError::Nonstationary(format!("alpha + beta = {persistence} >= 1")));
                }
                Ok(self.omega / (1.0 - persistence))
            }
            Family::Egarch => {
                if sum_beta >= 1.0 {
                    return Err(VolError::Nonstationary(format!("sum(beta) = {sum_beta} >= 1")));
                }
                Ok((self.omega / (1.0 - sum_beta)).exp())
            }
        }
    }
}

/// GARCH(p,q) variance path. Pre-sample squared residuals and variances are
/// replaced by `init_variance`.
pub fn cond_variance_garch(params: &GarchParams, residuals: &[f64], init_variance: f64) -> Result<Vec<f64>> {
    let spec = GarchSpec::garch(params.beta.len(), params.alpha.len())?;
    params.validate(&spec)?;
    if !(init_variance > 0.0) || !init_variance.is_finite() {
        return Err(VolError::InvalidParameter(format!("init variance {init_variance} must be > 0")));
    }
    let mut out = vec![0.0; residuals.len()];
    garch_path(params, residuals, init_variance, &mut out);
    Ok(out)
}

fn garch_path(params: &GarchParams, residuals: &[f64], init_variance: f64, out: &mut [f64]) {
    for t in 0..residuals.len() {
        let mut s = params.omega;
        for (i, a) in params.alpha.iter().enumerate() {
            let lag = i + 1;
            s += a * if t >= lag { residuals[t - lag] * residuals[t - lag] } else { init_variance };
        }
        for (j, b) in params.beta.iter().enumerate() {
            let lag = j + 1;
            s += b * if t >= lag { out[t - lag] } else { init_variance };
        }
        out[t] = s;
    }
}

/// EGARCH variance path. Pre-sample log variances equal `init_log_variance`;
/// pre-sample standardized-residual terms contribute nothing.
pub fn cond_variance_egarch(params: &GarchParams, residuals: &[f64], init_log_variance: f64) -> Result<Vec<f64>> {
    let spec = GarchSpec::egarch(params.beta.len(), params.gamma.len(), params.alpha.len())?;
    params.validate(&spec)?;
    if !init_log_variance.is_finite() {
        return Err(VolError::InvalidParameter("init log variance must be finite".into()));
    }
    let mut out = vec![0.0; residuals.len()];
    let mut logs = vec![0.0; residuals.len()];
    let mut z = vec![0.0; residuals.len()];
    egarch_path(params, residuals, init_log_variance, &mut out, &mut logs, &mut z)
        .map_err(|index| VolError::NumericalOverflow { index })?;
    Ok(out)
}

/// Returns the offending index when `exp` leaves the finite positive range.
fn egarch_path(
    params: &GarchParams,
    residuals: &[f64],
    init_log_variance: f64,
    out: &mut [f64],
    logs: &mut [f64],
    z: &mut [f64],
) -> std::result::Result<(), usize> {
    let e_abs = abs_normal_mean();
    for t in 0..residuals.len() {
        let mut l = params.omega;
        for (k, b) in params.beta.iter().enumerate() {
            let lag = k + 1;
            l += b * if t >= lag { logs[t - lag] } else { init_log_variance };
        }
        for (j, g) in params.gamma.iter().enumerate() {
            let lag = j + 1;
            if t >= lag {
                l += g * z[t - lag];
            }
        }
        for (i, a) in params.alpha.iter().enumerate() {
            let lag = i + 1;
            if t >= lag {
                l += a * (z[t - lag].abs() - e_abs);
            }
        }
        let s = l.exp();
        if !s.is_finite() || s <= 0.0 {
            return Err(t);
        }
        logs[t] = l;
        out[t] = s;
        z[t] = residuals[t] / s.sqrt();
    }
    Ok(())
}

/// Gaussian log-likelihood of residuals given their conditional variances.
pub fn log_likelihood(residuals: &[f64], variances: &[f64]) -> Result<f64> {
    if residuals.len() != variances.len() {
        return Err(VolError::Usage(format!(
            "{} residuals vs {} variances",
            residuals.len(),
            variances.len()
        )));
    }
    if let Some(i) = variances.iter().position(|v| !(*v > 0.0)) {
        return Err(VolError::Domain(format!("variance {} at index {i} is not positive", variances[i])));
    }
    Ok(log_likelihood_unchecked(residuals, variances))
}

fn log_likelihood_unchecked(residuals: &[f64], variances: &[f64]) -> f64 {
    // Neumaier summation keeps finite-difference checks on l free of
    // accumulation noise.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (u, s) in residuals.iter().zip(variances) {
        let term = s.ln() + u * u / s;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    let n = residuals.len() as f64;
    -0.5 * n * (2.0 * PI).ln() - 0.5 * (sum + comp)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Restarts after the initial simplex run.
    pub restarts: usize,
    pub tolerance: f64,
    /// Iteration budget per simplex run, multiplied by the parameter count.
    pub max_iter_per_param: usize,
    pub seed: u64,
    /// Warm start; the default initialization is used when absent or infeasible.
    pub start: Option<GarchParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 3, tolerance: 1e-8, max_iter_per_param: 500, seed: 0, start: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: GarchSpec,
    pub params: GarchParams,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Pre-sample variance used by the recursion (sample variance of the
    /// demeaned returns).
    pub backcast: f64,
    pub residuals: Vec<f64>,
    pub conditional_variance_path: Vec<f64>,
    pub std_residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Machine-readable view of a fit without the in-sample paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub family: Family,
    pub p: usize,
    pub o: usize,
    pub q: usize,
    pub params: Vec<NamedParam>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub value: f64,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            model: self.spec.label(),
            family: self.spec.family,
            p: self.spec.p,
            o: self.spec.o,
            q: self.spec.q,
            params: self
                .spec
                .param_names()
                .into_iter()
                .zip(self.params.to_vec())
                .map(|(name, value)| NamedParam { name, value })
                .collect(),
            log_likelihood: self.log_likelihood,
            aic: self.aic,
            converged: self.converged,
            iterations: self.iterations,
        }
    }

    /// One-step-ahead variance following the last in-sample observation.
    pub fn forecast_next(&self) -> Result<f64> {
        forecast_one_step(&self.spec, &self.params, &self.residuals, &self.conditional_variance_path)
    }
}

pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

pub fn unconditional_variance(result: &FitResult) -> Result<f64> {
    result.params.unconditional_variance(result.spec.family)
}

/// Variance path for `returns` under `params`, with residuals `r - mu`.
pub fn variance_path(spec: &GarchSpec, params: &GarchParams, returns: &[f64], backcast: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check_shape(spec)?;
    let residuals: Vec<f64> = returns.iter().map(|r| r - params.mu).collect();
    let path = match spec.family {
        Family::Garch => cond_variance_garch(params, &residuals, backcast)?,
        Family::Egarch => cond_variance_egarch(params, &residuals, backcast.ln())?,
    };
    Ok((residuals, path))
}

/// Log-likelihood of `returns` at `params`. Used by the optimizer and by
/// first-order-condition checks.
pub fn log_likelihood_at(spec: &GarchSpec, params: &GarchParams, returns: &[f64], backcast: f64) -> Result<f64> {
    let (residuals, path) = variance_path(spec, params, returns, backcast)?;
    log_likelihood(&residuals, &path)
}

struct Objective<'a> {
    spec: GarchSpec,
    returns: &'a [f64],
    backcast: f64,
    scale: Vec<f64>,
    residuals: Vec<f64>,
    path: Vec<f64>,
    logs: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(spec: GarchSpec, returns: &'a [f64], backcast: f64, scale: Vec<f64>) -> Self {
        let n = returns.len();
        Self {
            spec,
            returns,
            backcast,
            scale,
            residuals: vec![0.0; n],
            path: vec![0.0; n],
            logs: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    fn unscale(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }

    /// Negative log-likelihood at raw parameter vector `theta`; `+inf` outside
    /// the feasible region.
    fn neg_loglik(&mut self, theta: &[f64]) -> f64 {
        let Ok(params) = GarchParams::from_vec(&self.spec, theta) else {
            return f64::INFINITY;
        };
        if params.validate(&self.spec).is_err() {
            return f64::INFINITY;
        }
        for (u, r) in self.residuals.iter_mut().zip(self.returns) {
            *u = r - params.mu;
        }
        match self.spec.family {
            Family::Garch => garch_path(&params, &self.residuals, self.backcast, &mut self.path),
            Family::Egarch => {
                if egarch_path(
                    &params,
                    &self.residuals,
                    self.backcast.ln(),
                    &mut self.path,
                    &mut self.logs,
                    &mut self.z,
                )
                .is_err()
                {
                    return f64::INFINITY;
                }
            }
        }
        let l = log_likelihood_unchecked(&self.residuals, &self.path);
        if l.is_finite() {
            -l
        } else {
            f64::INFINITY
        }
    }
}

/// Feasible starting point near typical daily-equity magnitudes.
pub fn default_start(spec: &GarchSpec, mean: f64, variance: f64) -> GarchParams {
    let beta = vec![0.85 / spec.p as f64; spec.p];
    let alpha = vec![0.10 / spec.q as f64; spec.q];
    match spec.family {
        Family::Garch => GarchParams { mu: mean, omega: variance * (1.0 - 0.95), alpha, beta, gamma: vec![] },
        Family::Egarch => GarchParams {
            mu: mean,
            omega: (1.0 - 0.85) * variance.ln(),
            alpha,
            beta,
            gamma: vec![-0.1; spec.o],
        },
    }
}

/// Maximum-likelihood fit of `spec` to `series`.
///
/// The simplex runs in coordinates rescaled by the magnitude of each start
/// value (the mean uses the standard error of the sample mean), so a single
/// tolerance covers `omega ~ 1e-5` and `beta ~ 0.9` alike.
pub fn fit(series: &ReturnSeries, spec: &GarchSpec, options: &FitOptions) -> Result<FitResult> {
    let returns = series.values();
    let n = returns.len();
    let needed = 20 * (spec.p + spec.q + 2);
    if n < needed {
        return Err(VolError::InsufficientData(format!(
            "{} needs at least {needed} observations, got {n}",
            spec.label()
        )));
    }
    let backcast = variance_of(returns)?;
    if returns.iter().all(|r| *r == returns[0]) || !(backcast > 0.0) {
        return Err(VolError::DegenerateInput("return series is constant".into()));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;

    let default = default_start(spec, mean, backcast);
    let start = match &options.start {
        Some(p) if p.validate(spec).is_ok() => p.clone(),
        _ => default.clone(),
    };
    let theta0 = start.to_vec();
    let mean_se = (backcast / n as f64).sqrt();
    let scale: Vec<f64> = theta0
        .iter()
        .zip(default.to_vec())
        .enumerate()
        .map(|(i, (s, d))| {
            if i == 0 {
                s.abs().max(mean_se)
            } else {
                // Fall back on the default magnitude when a warm start sits at 0.
                if s.abs() > 1e-3 * d.abs() {
                    s.abs()
                } else {
                    d.abs()
                }
            }
        })
        .collect();

    let mut objective = Objective::new(*spec, returns, backcast, scale.clone());
    let nm = NelderMeadOptions {
        initial_step: 0.05,
        tolerance: options.tolerance,
        max_iterations: options.max_iter_per_param * spec.n_params(),
    };
    let mut f = |z: &[f64]| {
        let theta = objective.unscale(z);
        objective.neg_loglik(&theta)
    };

    let z0: Vec<f64> = theta0.iter().zip(&scale).map(|(t, s)| t / s).collect();
    let mut best = nelder_mead(&mut f, &z0, &nm);
    let mut iterations = best.iterations;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.restarts {
        let mut candidate = best.x.clone();
        for _attempt in 0..10 {
            let jittered: Vec<f64> = best
                .x
                .iter()
                .map(|v| v + 0.01 * v.abs().max(0.1) * rng.gen_range(-1.0..1.0))
                .collect();
            if f(&jittered).is_finite() {
                candidate = jittered;
                break;
            }
        }
        let run = nelder_mead(&mut f, &candidate, &nm);
        iterations += run.iterations;
        if run.fx <= best.fx {
            best = run;
        }
    }
    if !best.fx.is_finite() {
        return Err(VolError::InvalidParameter(format!(
            "{}: optimizer found no feasible point",
            spec.label()
        )));
    }

    let theta: Vec<f64> = best.x.iter().zip(&scale).map(|(a, s)| a * s).collect();
    let params = GarchParams::from_vec(spec, &theta)?;
    let (residuals, path) = variance_path(spec, &params, returns, backcast)?;
    let ll = log_likelihood(&residuals, &path)?;
    let std_residuals = residuals.iter().zip(&path).map(|(u, s)| u / s.sqrt()).collect();
    Ok(FitResult {
        spec: *spec,
        params,
        log_likelihood: ll,
        aic: aic(ll, spec.n_params()),
        backcast,
        residuals,
        conditional_variance_path: path,
        std_residuals,
        converged: best.converged,
        iterations,
    })
}

/// One application of the family recursion after the end of the supplied
/// histories. `residuals` and `variances` are chronological and end at the
/// same date.
pub fn forecast_one_step(spec: &GarchSpec, params: &GarchParams, residuals: &[f64], variances: &[f64]) -> Result<f64> {
    params.validate(spec)?;
    let need = spec.max_lag();
    if residuals.len() < need || variances.len() < need {
        return Err(VolError::InsufficientData(format!(
            "{} forecast needs {need} trailing residuals and variances",
            spec.label()
        )));
    }
    let (nu, nv) = (residuals.len(), variances.len());
    let u = |lag: usize| residuals[nu - lag];
    let s = |lag: usize| variances[nv - lag];
    let value = match spec.family {
        Family::Garch => {
            let mut v = params.omega;
            for (i, a) in params.alpha.iter().enumerate() {
                v += a * u(i + 1) * u(i + 1);
            }
            for (j, b) in params.beta.iter().enumerate() {
                v += b * s(j + 1);
            }
            v
        }
        Family::Egarch => {
            let e_abs = abs_normal_mean();
            let z = |lag: usize| u(lag) / s(lag).sqrt();
            let mut l = params.omega;
            for (k, b) in params.beta.iter().enumerate() {
                l += b * s(k + 1).ln();
            }
            for (j, g) in params.gamma.iter().enumerate() {
                l += g * z(j + 1);
            }
            for (i, a) in params.alpha.iter().enumerate() {
                l += a * (z(i + 1).abs() - e_abs);
            }
            let v = l.exp();
            if !v.is_finite() || v <= 0.0 {
                return Err(VolError::NumericalOverflow { index: nu });
            }
            v
        }
    };
    Ok(value)
}
