//! Rolling-window one-step-ahead forecasts over the test segment.
//!
//! For test index `t` the model sees only observations `t - train_len .. t`;
//! the realized value at `t` is the squared return `r_t^2`.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ann::{predict_one, MlpModel};
use crate::error::{Result, VolError};
use crate::garch::{fit, forecast_one_step, variance_path, FitOptions, GarchParams, GarchSpec};
use crate::timeseries::{parse_date, variance_of, DatedSeries, ReturnSeries, SplitSpec};

pub const DEFAULT_REFIT_INTERVAL: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrack {
    pub model_id: String,
    pub dates: Vec<NaiveDate>,
    pub predicted: Vec<f64>,
    pub realized: Vec<f64>,
    /// `None` for models with frozen parameters.
    pub refit_interval: Option<usize>,
    /// Number of parameter estimations performed.
    pub refits: usize,
    /// Test steps whose scheduled refit failed; earlier parameters were reused.
    pub flagged_steps: Vec<usize>,
}

impl ForecastTrack {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    /// `date,predicted,realized` rows. Floats use the shortest exact
    /// representation, so reading the file back reproduces the track.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,predicted,realized")?;
        for ((d, p), r) in self.dates.iter().zip(&self.predicted).zip(&self.realized) {
            writeln!(w, "{},{},{}", d.format("%Y-%m-%d"), p, r)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(model_id: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| VolError::Parse { line: 1, message: e.to_string() })?.clone();
        let expected = ["date", "predicted", "realized"];
        if header.len() != 3 || header.iter().zip(expected).any(|(a, b)| !a.eq_ignore_ascii_case(b)) {
            return Err(VolError::Parse { line: 1, message: "expected header date,predicted,realized".into() });
        }
        let mut track = ForecastTrack {
            model_id: model_id.into(),
            dates: vec![],
            predicted: vec![],
            realized: vec![],
            refit_interval: None,
            refits: 0,
            flagged_steps: vec![],
        };
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| VolError::Parse { line, message: e.to_string() })?;
            if rec.len() != 3 {
                return Err(VolError::Parse { line, message: format!("expected 3 fields, got {}", rec.len()) });
            }
            let date = parse_date(&rec[0])
                .ok_or_else(|| VolError::Parse { line, message: format!("bad date `{}`", &rec[0]) })?;
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| VolError::Parse { line, message: format!("bad number `{s}`") })
            };
            track.dates.push(date);
            track.predicted.push(num(&rec[1])?);
            track.realized.push(num(&rec[2])?);
        }
        if track.is_empty() {
            return Err(VolError::InsufficientData("forecast file has no rows".into()));
        }
        Ok(track)
    }
}

fn check_split(n: usize, split: &SplitSpec) -> Result<()> {
    if split.total() != n || split.test_len == 0 {
        return Err(VolError::Config(format!(
            "split of {} + {} does not cover {n} observations",
            split.train_len, split.test_len
        )));
    }
    Ok(())
}

fn garch_step(spec: &GarchSpec, params: &GarchParams, window: &[f64]) -> Result<f64> {
    let backcast = variance_of(window)?;
    let (residuals, path) = variance_path(spec, params, window, backcast)?;
    forecast_one_step(spec, params, &residuals, &path)
}

/// Rolling GARCH/EGARCH forecasts with re-estimation every `refit_interval`
/// steps (the first step always estimates). Refits are warm-started at the
/// previous optimum; the first estimation uses `options` as given and later
/// ones at most one restart.
pub fn rolling_forecast_garch(
    series: &ReturnSeries,
    split: &SplitSpec,
    spec: &GarchSpec,
    refit_interval: usize,
    options: &FitOptions,
) -> Result<ForecastTrack> {
    let r = series.values();
    check_split(r.len(), split)?;
    if refit_interval < 1 {
        return Err(VolError::Config("refit interval must be >= 1".into()));
    }
    let w = split.train_len;
    let mut params: Option<GarchParams> = None;
    let mut refits = 0;
    let mut flagged = vec![];
    let mut predicted = Vec::with_capacity(split.test_len);
    for k in 0..split.test_len {
        let t = w + k;
        if k % refit_interval == 0 {
            let window = series.slice(t - w, t);
            let opts = match &params {
                None => options.clone(),
                Some(p) => FitOptions {
                    restarts: options.restarts.min(1),
                    seed: options.seed.wrapping_add(k as u64),
                    start: Some(p.clone()),
                    ..options.clone()
                },
            };
            refits += 1;
            match fit(&window, spec, &opts) {
                Ok(f) if f.converged || params.is_none() => {
                    if !f.converged {
                        flagged.push(k);
                    }
                    params = Some(f.params);
                }
                Ok(_) => flagged.push(k),
                Err(e) if params.is_none() => return Err(e),
                Err(_) => flagged.push(k),
            }
        }
        let p = params.as_ref().expect("estimated at step 0");
        predicted.push(garch_step(spec, p, &r[t - w..t])?);
    }
    Ok(ForecastTrack {
        model_id: spec.id(),
        dates: series.dates()[w..].to_vec(),
        predicted,
        realized: r[w..].iter().map(|x| x * x).collect(),
        refit_interval: Some(refit_interval),
        refits,
        flagged_steps: flagged,
    })
}

/// Rolling forecasts with parameters held fixed, e.g. at known true values.
pub fn rolling_forecast_garch_fixed(
    series: &ReturnSeries,
    split: &SplitSpec,
    spec: &GarchSpec,
    params: &GarchParams,
) -> Result<ForecastTrack> {
    let r = series.values();
    check_split(r.len(), split)?;
    params.validate(spec)?;
    let w = split.train_len;
    let predicted = (w..r.len()).map(|t| garch_step(spec, params, &r[t - w..t])).collect::<Result<Vec<_>>>()?;
    Ok(ForecastTrack {
        model_id: format!("{}_fixed", spec.id()),
        dates: series.dates()[w..].to_vec(),
        predicted,
        realized: r[w..].iter().map(|x| x * x).collect(),
        refit_interval: None,
        refits: 0,
        flagged_steps: vec![],
    })
}

/// ANN forecasts from the `lookback` true proxy values preceding each test
/// date, with frozen weights and scaler.
pub fn rolling_forecast_ann(proxy: &DatedSeries, split: &SplitSpec, model: &MlpModel) -> Result<ForecastTrack> {
    let v = &proxy.values;
    check_split(v.len(), split)?;
    let lb = model.lookback();
    let w = split.train_len;
    if w < lb {
        return Err(VolError::InsufficientData(format!("training segment shorter than lookback {lb}")));
    }
    let predicted = (w..v.len()).map(|t| predict_one(model, &v[t - lb..t])).collect::<Result<Vec<_>>>()?;
    Ok(ForecastTrack {
        model_id: model.id(),
        dates: proxy.dates[w..].to_vec(),
        predicted,
        realized: v[w..].to_vec(),
        refit_interval: None,
        refits: 0,
        flagged_steps: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::MinMaxScaler;
    use crate::garch::GarchParams;
    use crate::simulator::{simulate, SimConfig};
    use crate::timeseries::squared_return_proxy;

    fn sim(n: usize, seed: u64) -> (ReturnSeries, GarchSpec, GarchParams) {
        let spec = GarchSpec::garch(1, 1).unwrap();
        let p = GarchParams { mu: 0.0003, omega: 1e-5, alpha: vec![0.1], beta: vec![0.85], gamma: vec![] };
        let path = simulate(&SimConfig::new(spec, p.clone(), n, 500, seed).unwrap()).unwrap();
        (path.returns, spec, p)
    }

    #[test]
    fn fixed_track_shape_and_alignment() {
        let (s, spec, p) = sim(500, 1);
        let split = SplitSpec::new(500, 0.8).unwrap();
        let tr = rolling_forecast_garch_fixed(&s, &split, &spec, &p).unwrap();
        assert_eq!(tr.len(), 100);
        assert_eq!(tr.dates[0], s.dates()[400]);
        assert_eq!(tr.realized[0], s.values()[400].powi(2));
        assert!(tr.predicted.iter().all(|v| *v > 0.0));
        let window = &s.values()[0..400];
        assert_eq!(tr.predicted[0], garch_step(&spec, &p, window).unwrap());
    }

    #[test]
    fn single_estimation_when_interval_covers_test() {
        let (s, spec, _) = sim(600, 2);
        let split = SplitSpec::new(600, 0.9).unwrap();
        let tr = rolling_forecast_garch(&s, &split, &spec, 60, &FitOptions::default()).unwrap();
        assert_eq!(tr.refits, 1);
        assert_eq!(tr.len(), 60);
        let tr = rolling_forecast_garch(&s, &split, &spec, 1000, &FitOptions::default()).unwrap();
        assert_eq!(tr.refits, 1);
        let tr = rolling_forecast_garch(&s, &split, &spec, 25, &FitOptions::default()).unwrap();
        assert_eq!(tr.refits, 3);
    }

    #[test]
    fn bad_arguments() {
        let (s, spec, _) = sim(300, 3);
        let split = SplitSpec::new(200, 0.8).unwrap();
        assert!(matches!(
            rolling_forecast_garch(&s, &split, &spec, 20, &FitOptions::default()),
            Err(VolError::Config(_))
        ));
        let split = SplitSpec::new(300, 0.8).unwrap();
        assert!(rolling_forecast_garch(&s, &split, &spec, 0, &FitOptions::default()).is_err());
    }

    #[test]
    fn ann_window_alignment() {
        let (s, _, _) = sim(200, 4);
        let proxy = squared_return_proxy(&s);
        let split = SplitSpec::new(200, 0.8).unwrap();
        let scaler = MinMaxScaler::fit(&proxy.values[..160]).unwrap();
        let model = MlpModel::random(&[5, 12, 1], scaler, 5).unwrap();
        let tr = rolling_forecast_ann(&proxy, &split, &model).unwrap();
        assert_eq!(tr.len(), 40);
        assert_eq!(tr.predicted[0], predict_one(&model, &proxy.values[155..160]).unwrap());
        assert_eq!(tr.realized, proxy.values[160..].to_vec());
        assert_eq!(tr.model_id, "ann_5_12_1");
        assert!(tr.predicted.iter().all(|p| *p > scaler.min_val && *p < scaler.max_val));
    }

    #[test]
    fn csv_round_trip() {
        let (s, spec, p) = sim(300, 6);
        let split = SplitSpec::new(300, 0.8).unwrap();
        let tr = rolling_forecast_garch_fixed(&s, &split, &spec, &p).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = ForecastTrack::read_csv(tr.model_id.clone(), buf.as_slice()).unwrap();
        assert_eq!(back, tr);
        assert!(matches!(
            ForecastTrack::read_csv("x", "date,predicted,realized\n2020-01-01,abc,1\n".as_bytes()),
            Err(VolError::Parse { line: 2, .. })
        ));
    }
}
