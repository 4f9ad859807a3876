//! Synthetic GARCH/EGARCH return paths with known parameters.
//!
//! Normal draws come from [`NormalRng`]: a ChaCha8 stream (portable and
//! stable across platforms) fed through the Box-Muller transform,
//! using both outputs of each pair.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};
use crate::garch::{abs_normal_mean, Family, GarchParams, GarchSpec};
use crate::timeseries::ReturnSeries;

pub const DEFAULT_BURN_IN: usize = 1000;

/// Seeded standard-normal generator.
#[derive(Debug, Clone)]
pub struct NormalRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalRng {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: GarchSpec,
    pub params: GarchParams,
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(spec: GarchSpec, params: GarchParams, length: usize, burn_in: usize, seed: u64) -> Result<Self> {
        params.validate(&spec)?;
        if length < 1 {
            return Err(VolError::Config("simulation length must be >= 1".into()));
        }
        Ok(Self { spec, params, length, burn_in, seed })
    }
}

#[derive(Debug, Clone)]
pub struct SimPath {
    pub returns: ReturnSeries,
    pub innovations: Vec<f64>,
    pub true_variances: Vec<f64>,
}

/// Generates `burn_in + length` observations and keeps the last `length`.
///
/// The recursion starts at the unconditional variance (GARCH) or the
/// unconditional log variance (EGARCH), with pre-sample shocks at their
/// expected magnitude.
pub fn simulate(config: &SimConfig) -> Result<SimPath> {
    config.params.validate(&config.spec)?;
    let spec = &config.spec;
    let p = &config.params;
    let total = config.burn_in + config.length;
    let mut rng = NormalRng::new(config.seed);
    let mut u = Vec::with_capacity(total);
    let mut var = Vec::with_capacity(total);

    match spec.family {
        Family::Garch => {
            let start = p.unconditional_variance(Family::Garch)?;
            for t in 0..total {
                let mut s = p.omega;
                for i in 1..=spec.q {
                    s += p.alpha[i - 1] * if t >= i { u[t - i] * u[t - i] } else { start };
                }
                for j in 1..=spec.p {
                    s += p.beta[j - 1] * if t >= j { var[t - j] } else { start };
                }
                var.push(s);
                u.push(s.sqrt() * rng.sample());
            }
        }
        Family::Egarch => {
            let sum_beta: f64 = p.beta.iter().sum();
            let start_log = p.omega / (1.0 - sum_beta);
            let e_abs = abs_normal_mean();
            let mut logs: Vec<f64> = Vec::with_capacity(total);
            let mut z: Vec<f64> = Vec::with_capacity(total);
            for t in 0..total {
                let mut l = p.omega;
                for k in 1..=spec.p {
                    l += p.beta[k - 1] * if t >= k { logs[t - k] } else { start_log };
                }
                for j in 1..=spec.o {
                    if t >= j {
                        l += p.gamma[j - 1] * z[t - j];
                    }
                }
                for i in 1..=spec.q {
                    if t >= i {
                        l += p.alpha[i - 1] * (z[t - i].abs() - e_abs);
                    }
                }
                let s = l.exp();
                if !s.is_finite() || s <= 0.0 {
                    return Err(VolError::NumericalOverflow { index: t });
                }
                let v = rng.sample();
                logs.push(l);
                z.push(v);
                var.push(s);
                u.push(s.sqrt() * v);
            }
        }
    }

    let innovations = u.split_off(config.burn_in);
    let true_variances = var.split_off(config.burn_in);
    let values = innovations.iter().map(|x| p.mu + x).collect();
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let returns = ReturnSeries::with_daily_dates(format!("sim_{}", spec.id()), start, values)?;
    Ok(SimPath { returns, innovations, true_variances })
}
