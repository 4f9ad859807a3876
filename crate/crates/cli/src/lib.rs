//! `volcast` command-line front end.
//!
//! Every subcommand computes all of its artifacts in memory and writes them
//! only once everything succeeded. On failure the output directory receives
//! a single `error.json` record and the process exits with 2 (usage),
//! 3 (data) or 4 (numerical).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use volcast_core::ann::{self, predict_one, LearningCurve, MlpModel, TrainConfig, DEFAULT_LOOKBACK};
use volcast_core::diagnostics::{diagnose, DiagnosticsReport};
use volcast_core::forecaster::{rolling_forecast_ann, rolling_forecast_garch, ForecastTrack, DEFAULT_REFIT_INTERVAL};
use volcast_core::garch::{fit, Family, FitOptions, FitSummary, GarchParams, GarchSpec};
use volcast_core::metrics::{self, EvalReport};
use volcast_core::model_search::{self, SearchConfig, SearchReport};
use volcast_core::simulator::{simulate, SimConfig, DEFAULT_BURN_IN};
use volcast_core::timeseries::{
    compute_returns, describe, describe_partial, read_csv, split, squared_return_proxy, write_csv, ReturnSeries,
};
use volcast_core::{ErrorKind, Result, VolError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "volcast", version, about = "GARCH/EGARCH and neural-network volatility forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics of one full column (no split).
    Describe {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Jarque-Bera, Ljung-Box Q and Q^2, and ADF on the in-sample segment.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Fit one GARCH or EGARCH model to the in-sample segment.
    FitGarch {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Lag-order search over the in-sample segment.
    SearchGarch {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Train one network per hidden size on the in-sample squared returns.
    TrainAnn {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        ann: AnnArgs,
    },
    /// Rolling one-step-ahead forecasts over the test segment.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// `garch`, `egarch` or `ann`.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        order: ModelArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        ann: AnnArgs,
        #[command(flatten)]
        forecast: ForecastArgs,
        /// Saved network from `train-ann`; trains a fresh one when absent.
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
    /// Score forecast CSVs against their realized values.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// `forecast_<model>.csv` files; the model id is taken from the file name.
        #[arg(required = true)]
        tracks: Vec<PathBuf>,
    },
    /// Generate a GARCH or EGARCH return path.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Full flow per column: describe, diagnose, search, ANN sweep, forecasts, comparison.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        ann: AnnArgs,
        #[command(flatten)]
        forecast: ForecastArgs,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a `date` column followed by one column per series.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column(s) to use, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub column: Option<Vec<String>>,
    /// Values are percentages.
    #[arg(long)]
    pub percent: bool,
    /// Values are prices; returns are computed first.
    #[arg(long)]
    pub prices: bool,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `garch` or `egarch`.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub o: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Families to search, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    #[arg(long)]
    pub p_max: Option<usize>,
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long)]
    pub lb_lags: Option<usize>,
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnnArgs {
    /// Hidden-layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub ann_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub refit_interval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub sim_seed: Option<u64>,
    /// Column label in the written CSV.
    #[arg(long)]
    pub label: Option<String>,
}

const CONFIG_KEYS: &[&str] = &[
    "out",
    "input",
    "column",
    "percent",
    "prices",
    "train-fraction",
    "family",
    "p",
    "o",
    "q",
    "seed",
    "restarts",
    "families",
    "p-max",
    "q-max",
    "lb-lags",
    "significance",
    "hidden",
    "epochs",
    "learning-rate",
    "batch-size",
    "validation-fraction",
    "ann-seed",
    "refit-interval",
    "model",
    "model-file",
    "mu",
    "omega",
    "alpha",
    "beta",
    "gamma",
    "length",
    "burn-in",
    "sim-seed",
    "label",
];

/// Settings from a `key=value` file. Keys may use `-` or `_`; `#` starts a
/// comment.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| VolError::Usage(format!("config line {}: expected key=value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(VolError::Usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| VolError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|s| s.parse::<T>().map_err(|_| VolError::Usage(format!("config `{key}`: cannot parse `{s}`"))))
            .transpose()
    }

    /// Flag, else config value, else `None`.
    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.parsed(key),
        }
    }

    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.parsed::<bool>(key)?.unwrap_or(false))
    }

    pub fn list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| {
                s.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|_| VolError::Usage(format!("config `{key}`: cannot parse `{x}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn parse_family(s: &str) -> Result<Family> {
    match s.trim().to_ascii_lowercase().as_str() {
        "garch" => Ok(Family::Garch),
        "egarch" => Ok(Family::Egarch),
        other => Err(VolError::Usage(format!("unknown family `{other}` (expected garch or egarch)"))),
    }
}

/// Files produced by one run, written together at the end.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| VolError::Io(e.to_string()))?;
        s.push('\n');
        self.add(rel, s);
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `dir`; on failure removes what was written.
    pub fn commit(&self, dir: &Path) -> Result<()> {
        let mut written: Vec<PathBuf> = vec![];
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            let res = path.parent().map_or(Ok(()), fs::create_dir_all).and_then(|_| fs::write(&path, bytes));
            if let Err(e) = res {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(VolError::Io(format!("{}: {e}", path.display())));
            }
            written.push(path);
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub code: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &VolError) -> Self {
        let (kind, exit_code) = match e.kind() {
            ErrorKind::Usage => ("usage", EXIT_USAGE),
            ErrorKind::Data => ("data", EXIT_DATA),
            ErrorKind::Numerical => ("numerical", EXIT_NUMERICAL),
        };
        Self { status: "error", kind, code: e.code(), exit_code, message: e.to_string() }
    }
}

struct DataSettings {
    input: PathBuf,
    columns: Option<Vec<String>>,
    percent: bool,
    prices: bool,
    train_fraction: f64,
}

impl DataSettings {
    fn resolve(a: DataArgs, cfg: &ConfigFile) -> Result<Self> {
        let input = cfg
            .opt(a.input, "input")?
            .ok_or_else(|| VolError::Usage("--input is required".into()))?;
        let train_fraction = cfg.get(a.train_fraction, "train-fraction", 0.8)?;
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(VolError::Usage(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        let prices = cfg.switch(a.prices, "prices")?;
        Ok(Self {
            input,
            columns: cfg.list(a.column, "column")?,
            percent: cfg.switch(a.percent, "percent")?,
            prices,
            train_fraction,
        })
    }

    fn load_all(&self) -> Result<Vec<ReturnSeries>> {
        let file = fs::File::open(&self.input)
            .map_err(|e| VolError::Io(format!("cannot open {}: {e}", self.input.display())))?;
        let cols = read_csv(file, self.percent)?;
        let selected: Vec<_> = match &self.columns {
            None => cols,
            Some(names) => names
                .iter()
                .map(|n| {
                    cols.iter()
                        .find(|c| &c.label == n)
                        .cloned()
                        .ok_or_else(|| VolError::Usage(format!("no column `{n}` in {}", self.input.display())))
                })
                .collect::<Result<_>>()?,
        };
        selected
            .into_iter()
            .map(|c| if self.prices { compute_returns(&c) } else { ReturnSeries::new(c.label, c.dates, c.values) })
            .collect()
    }

    /// The selected column; the first one when none is named.
    fn load_one(&self) -> Result<ReturnSeries> {
        if self.columns.as_ref().is_some_and(|c| c.len() > 1) {
            return Err(VolError::Usage("this subcommand takes a single --column".into()));
        }
        Ok(self.load_all()?.remove(0))
    }
}

fn resolve_fit(a: FitArgs, cfg: &ConfigFile) -> Result<FitOptions> {
    Ok(FitOptions {
        seed: cfg.get(a.seed, "seed", 0)?,
        restarts: cfg.get(a.restarts, "restarts", FitOptions::default().restarts)?,
        ..FitOptions::default()
    })
}

fn resolve_spec(a: ModelArgs, cfg: &ConfigFile, family_override: Option<Family>) -> Result<GarchSpec> {
    let family = match family_override {
        Some(f) => f,
        None => parse_family(&cfg.get(a.family, "family", "garch".to_string())?)?,
    };
    let p = cfg.get(a.p, "p", 1)?;
    let q = cfg.get(a.q, "q", 1)?;
    let o = match family {
        Family::Garch => 0,
        Family::Egarch => cfg.get(a.o, "o", 1)?,
    };
    GarchSpec::new(family, p, o, q).map_err(|e| VolError::Usage(e.to_string()))
}

fn resolve_search(a: SearchArgs, cfg: &ConfigFile, fit_options: FitOptions) -> Result<SearchConfig> {
    let d = SearchConfig::default();
    let families = match cfg.list(a.families, "families")? {
        None => d.families,
        Some(names) => names.iter().map(|n| parse_family(n)).collect::<Result<_>>()?,
    };
    let c = SearchConfig {
        families,
        p_max: cfg.get(a.p_max, "p-max", d.p_max)?,
        q_max: cfg.get(a.q_max, "q-max", d.q_max)?,
        lb_lags: cfg.get(a.lb_lags, "lb-lags", d.lb_lags)?,
        significance: cfg.get(a.significance, "significance", d.significance)?,
        fit_options,
    };
    c.validate().map_err(|e| VolError::Usage(e.to_string()))?;
    Ok(c)
}

struct AnnSettings {
    hidden: Vec<usize>,
    train: TrainConfig,
}

fn resolve_ann(a: AnnArgs, cfg: &ConfigFile) -> Result<AnnSettings> {
    let d = TrainConfig::default();
    let hidden = cfg.list(a.hidden, "hidden")?.unwrap_or_else(|| ann::DEFAULT_HIDDEN_SIZES.to_vec());
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(VolError::Usage("hidden sizes must be positive".into()));
    }
    let train = TrainConfig {
        epochs: cfg.get(a.epochs, "epochs", d.epochs)?,
        learning_rate: cfg.get(a.learning_rate, "learning-rate", d.learning_rate)?,
        batch_size: cfg.get(a.batch_size, "batch-size", d.batch_size)?,
        validation_fraction: cfg.get(a.validation_fraction, "validation-fraction", d.validation_fraction)?,
        rng_seed: cfg.get(a.ann_seed, "ann-seed", d.rng_seed)?,
    };
    train.validate().map_err(|e| VolError::Usage(e.to_string()))?;
    Ok(AnnSettings { hidden, train })
}

fn resolve_refit(a: ForecastArgs, cfg: &ConfigFile) -> Result<usize> {
    let r = cfg.get(a.refit_interval, "refit-interval", DEFAULT_REFIT_INTERVAL)?;
    if r < 1 {
        return Err(VolError::Usage("refit interval must be >= 1".into()));
    }
    Ok(r)
}

#[derive(Debug, Serialize)]
struct DiagnosticsFile<'a> {
    series: &'a str,
    segment: &'static str,
    n: usize,
    lb_lags: usize,
    squared_returns: bool,
    #[serde(flatten)]
    report: DiagnosticsReport,
}

#[derive(Debug, Serialize)]
struct FitFile {
    series: String,
    n: usize,
    #[serde(flatten)]
    summary: FitSummary,
    backcast: f64,
    unconditional_variance: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AnnEntry {
    pub hidden: usize,
    pub model_id: String,
    /// Original units, training pairs excluding the validation tail.
    pub in_sample: EvalReport,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub curve_file: String,
}

#[derive(Debug, Serialize)]
pub struct AnnSweep {
    pub series: String,
    pub lookback: usize,
    pub config: TrainConfig,
    pub entries: Vec<AnnEntry>,
    pub selected: String,
    pub selection_rationale: String,
}

struct SweepOutput {
    sweep: AnnSweep,
    models: Vec<(MlpModel, LearningCurve)>,
    best: usize,
}

fn in_sample_report(model: &MlpModel, proxy: &[f64], validation_fraction: f64) -> Result<EvalReport> {
    let lb = model.lookback();
    let n_pairs = proxy.len() - lb;
    let n_train = ann::validation_split(n_pairs, validation_fraction);
    let predicted = (0..n_train).map(|k| predict_one(model, &proxy[k..k + lb])).collect::<Result<Vec<_>>>()?;
    EvalReport::evaluate(model.id(), &proxy[lb..lb + n_train], &predicted)
}

fn ann_sweep(train: &ReturnSeries, settings: &AnnSettings) -> Result<SweepOutput> {
    let proxy = squared_return_proxy(train).values;
    let mut entries = vec![];
    let mut models = vec![];
    for &h in &settings.hidden {
        let (model, curve) = ann::train_on_proxy(&proxy, DEFAULT_LOOKBACK, h, &settings.train)?;
        entries.push(AnnEntry {
            hidden: h,
            model_id: model.id(),
            in_sample: in_sample_report(&model, &proxy, settings.train.validation_fraction)?,
            final_train_loss: *curve.train_loss.last().expect("epochs >= 1"),
            final_val_loss: curve.val_loss.last().copied(),
            curve_file: format!("curve_{h}.csv"),
        });
        models.push((model, curve));
    }
    let best = (0..entries.len())
        .min_by(|&a, &b| {
            entries[a]
                .in_sample
                .rmse
                .total_cmp(&entries[b].in_sample.rmse)
                .then(entries[a].hidden.cmp(&entries[b].hidden))
        })
        .expect("at least one hidden size");
    let selection_rationale =
        format!("{}: lowest in-sample RMSE ({:.7})", entries[best].model_id, entries[best].in_sample.rmse);
    Ok(SweepOutput {
        sweep: AnnSweep {
            series: train.label().to_string(),
            lookback: DEFAULT_LOOKBACK,
            config: settings.train.clone(),
            selected: entries[best].model_id.clone(),
            selection_rationale,
            entries,
        },
        models,
        best,
    })
}

fn add_sweep(arts: &mut Artifacts, dir: &Path, out: &SweepOutput) -> Result<()> {
    arts.add_json(dir.join("ann_sweep.json"), &out.sweep)?;
    for (entry, (model, curve)) in out.sweep.entries.iter().zip(&out.models) {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        arts.add(dir.join(&entry.curve_file), buf);
        arts.add(dir.join(format!("{}.json", model.id())), model.to_json()? + "\n");
    }
    Ok(())
}

fn track_bytes(track: &ForecastTrack) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    track.write_csv(&mut buf)?;
    Ok(buf)
}

fn add_comparison(arts: &mut Artifacts, dir: &Path, title: &str, tracks: &[ForecastTrack]) -> Result<()> {
    let cmp = metrics::compare(tracks)?;
    arts.add_json(dir.join("compare.json"), &cmp)?;
    arts.add(dir.join("compare_table.txt"), metrics::render_table(title, &cmp));
    Ok(())
}

fn diagnostics_file(train: &ReturnSeries, lb_lags: usize) -> Result<DiagnosticsFile<'_>> {
    Ok(DiagnosticsFile {
        series: train.label(),
        segment: "in_sample",
        n: train.len(),
        lb_lags,
        squared_returns: true,
        report: diagnose(train.values(), lb_lags)?,
    })
}

/// Directory name for a column label.
pub fn column_dir(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "series".into()
    } else {
        s
    }
}

fn pipeline_one(
    arts: &mut Artifacts,
    series: &ReturnSeries,
    data: &DataSettings,
    search_cfg: &SearchConfig,
    ann_settings: &AnnSettings,
    refit_interval: usize,
) -> Result<()> {
    let dir = PathBuf::from(column_dir(series.label()));
    let (train, _, split_spec) = split(series, data.train_fraction)?;
    arts.add_json(dir.join("describe.json"), &describe(&train)?)?;
    arts.add_json(dir.join("diagnostics.json"), &diagnostics_file(&train, search_cfg.lb_lags)?)?;

    let report = model_search::search(&train, search_cfg)?;
    arts.add_json(dir.join("garch_search.json"), &report)?;
    arts.add(dir.join("garch_table.txt"), model_search::render_table(&report, 5));

    let sweep = ann_sweep(&train, ann_settings)?;
    add_sweep(arts, &dir, &sweep)?;

    let winner = report.winner_fit();
    let opts = FitOptions { start: Some(winner.params.clone()), ..search_cfg.fit_options.clone() };
    let garch_track = rolling_forecast_garch(series, &split_spec, &winner.spec, refit_interval, &opts)?;
    let proxy = squared_return_proxy(series);
    let ann_track = rolling_forecast_ann(&proxy, &split_spec, &sweep.models[sweep.best].0)?;
    for t in [&garch_track, &ann_track] {
        arts.add(dir.join(format!("forecast_{}.csv", t.model_id)), track_bytes(t)?);
    }
    add_comparison(arts, &dir, series.label(), &[garch_track, ann_track])
}

fn model_id_from_path(p: &Path) -> String {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("forecast_").map(str::to_string).unwrap_or(stem)
}

fn default_sim_params(spec: &GarchSpec) -> GarchParams {
    let (p, q, o) = (spec.p as f64, spec.q as f64, spec.o);
    match spec.family {
        Family::Garch => GarchParams {
            mu: 0.0,
            omega: 1e-5,
            alpha: vec![0.10 / q; spec.q],
            beta: vec![0.85 / p; spec.p],
            gamma: vec![],
        },
        Family::Egarch => GarchParams {
            mu: 0.0,
            omega: -0.3,
            alpha: vec![0.12 / q; spec.q],
            beta: vec![0.97 / p; spec.p],
            gamma: vec![-0.1; o],
        },
    }
}

fn execute(command: Command) -> Result<(PathBuf, Artifacts)> {
    let mut arts = Artifacts::default();
    let (common, body): (CommonArgs, Box<dyn FnOnce(&ConfigFile, &mut Artifacts) -> Result<()>>) = match command {
        Command::Describe { common, data } => (
            common,
            Box::new(move |cfg, arts| {
                let s = DataSettings::resolve(data, cfg)?.load_one()?;
                arts.add_json("describe.json", &describe_partial(&s)?)
            }),
        ),
        Command::Diagnose { common, data, search } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let sc = resolve_search(search, cfg, FitOptions::default())?;
                let s = d.load_one()?;
                let (train, _, _) = split(&s, d.train_fraction)?;
                arts.add_json("diagnostics.json", &diagnostics_file(&train, sc.lb_lags)?)
            }),
        ),
        Command::FitGarch { common, data, model, fit: fa } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let spec = resolve_spec(model, cfg, None)?;
                let opts = resolve_fit(fa, cfg)?;
                let s = d.load_one()?;
                let (train, _, _) = split(&s, d.train_fraction)?;
                let r = fit(&train, &spec, &opts)?;
                let file = FitFile {
                    series: train.label().to_string(),
                    n: train.len(),
                    summary: r.summary(),
                    backcast: r.backcast,
                    unconditional_variance: r.params.unconditional_variance(spec.family).ok(),
                };
                arts.add_json(format!("fit_{}.json", spec.id()), &file)
            }),
        ),
        Command::SearchGarch { common, data, search, fit: fa } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let sc = resolve_search(search, cfg, resolve_fit(fa, cfg)?)?;
                let s = d.load_one()?;
                let (train, _, _) = split(&s, d.train_fraction)?;
                let report: SearchReport = model_search::search(&train, &sc)?;
                arts.add_json("garch_search.json", &report)?;
                arts.add("garch_table.txt", model_search::render_table(&report, 5));
                Ok(())
            }),
        ),
        Command::TrainAnn { common, data, ann: aa } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let settings = resolve_ann(aa, cfg)?;
                let s = d.load_one()?;
                let (train, _, _) = split(&s, d.train_fraction)?;
                add_sweep(arts, Path::new(""), &ann_sweep(&train, &settings)?)
            }),
        ),
        Command::Forecast { common, data, model, order, fit: fa, ann: aa, forecast, model_file } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let kind = cfg.get(model, "model", "egarch".to_string())?.to_ascii_lowercase();
                let refit = resolve_refit(forecast, cfg)?;
                let s = d.load_one()?;
                let (train, _, split_spec) = split(&s, d.train_fraction)?;
                let track = if kind == "ann" {
                    let settings = resolve_ann(aa, cfg)?;
                    let net = match cfg.opt(model_file, "model-file")? {
                        Some(path) => {
                            let text = fs::read_to_string(&path)
                                .map_err(|e| VolError::Io(format!("cannot read {}: {e}", path.display())))?;
                            MlpModel::from_json(&text)?
                        }
                        None => {
                            let &[h] = settings.hidden.as_slice() else {
                                return Err(VolError::Usage("forecast --model ann takes one --hidden size".into()));
                            };
                            let proxy = squared_return_proxy(&train).values;
                            ann::train_on_proxy(&proxy, DEFAULT_LOOKBACK, h, &settings.train)?.0
                        }
                    };
                    rolling_forecast_ann(&squared_return_proxy(&s), &split_spec, &net)?
                } else {
                    let spec = resolve_spec(order, cfg, Some(parse_family(&kind)?))?;
                    rolling_forecast_garch(&s, &split_spec, &spec, refit, &resolve_fit(fa, cfg)?)?
                };
                arts.add(format!("forecast_{}.csv", track.model_id), track_bytes(&track)?);
                Ok(())
            }),
        ),
        Command::Compare { common, tracks } => (
            common,
            Box::new(move |_cfg, arts| {
                let loaded = tracks
                    .iter()
                    .map(|p| {
                        let f = fs::File::open(p).map_err(|e| VolError::Io(format!("cannot open {}: {e}", p.display())))?;
                        ForecastTrack::read_csv(model_id_from_path(p), f)
                    })
                    .collect::<Result<Vec<_>>>()?;
                add_comparison(arts, Path::new(""), "model", &loaded)
            }),
        ),
        Command::Simulate { common, model, sim } => (
            common,
            Box::new(move |cfg, arts| {
                let spec = resolve_spec(model, cfg, None)?;
                let d = default_sim_params(&spec);
                let params = GarchParams {
                    mu: cfg.get(sim.mu, "mu", d.mu)?,
                    omega: cfg.get(sim.omega, "omega", d.omega)?,
                    alpha: cfg.list(sim.alpha, "alpha")?.unwrap_or(d.alpha),
                    beta: cfg.list(sim.beta, "beta")?.unwrap_or(d.beta),
                    gamma: cfg.list(sim.gamma, "gamma")?.unwrap_or(d.gamma),
                };
                let length = cfg.get(sim.length, "length", 4000)?;
                let burn_in = cfg.get(sim.burn_in, "burn-in", DEFAULT_BURN_IN)?;
                let seed = cfg.get(sim.sim_seed, "sim-seed", 0)?;
                let sc = SimConfig::new(spec, params, length, burn_in, seed).map_err(|e| match e {
                    VolError::InvalidParameter(m) | VolError::Nonstationary(m) => VolError::Usage(m),
                    other => other,
                })?;
                let path = simulate(&sc)?;
                let label = cfg.get(sim.label, "label", path.returns.label().to_string())?;
                let returns = ReturnSeries::new(label, path.returns.dates().to_vec(), path.returns.values().to_vec())?;
                let variance = ReturnSeries::new("true_variance", returns.dates().to_vec(), path.true_variances)?;
                let mut buf = Vec::new();
                write_csv(&mut buf, &[&returns])?;
                arts.add("simulated.csv", buf);
                let mut buf = Vec::new();
                write_csv(&mut buf, &[&variance])?;
                arts.add("true_variance.csv", buf);
                arts.add_json("simulate.json", &sc)
            }),
        ),
        Command::Pipeline { common, data, search, fit: fa, ann: aa, forecast } => (
            common,
            Box::new(move |cfg, arts| {
                let d = DataSettings::resolve(data, cfg)?;
                let sc = resolve_search(search, cfg, resolve_fit(fa, cfg)?)?;
                let settings = resolve_ann(aa, cfg)?;
                let refit = resolve_refit(forecast, cfg)?;
                let all = d.load_all()?;
                let mut seen = std::collections::BTreeSet::new();
                for s in &all {
                    if !seen.insert(column_dir(s.label())) {
                        return Err(VolError::Usage(format!("column `{}` maps to a duplicate directory", s.label())));
                    }
                }
                for s in &all {
                    pipeline_one(arts, s, &d, &sc, &settings, refit)?;
                }
                Ok(())
            }),
        ),
    };
    let cfg = ConfigFile::load(common.config.as_deref());
    let out = match &cfg {
        Ok(c) => c.get(common.out.clone(), "out", PathBuf::from("."))?,
        Err(_) => common.out.clone().unwrap_or_else(|| PathBuf::from(".")),
    };
    match cfg.and_then(|c| body(&c, &mut arts)) {
        Ok(()) => Ok((out, arts)),
        Err(e) => {
            write_error_record(&out, &e);
            Err(e)
        }
    }
}

fn write_error_record(out: &Path, e: &VolError) {
    let record = ErrorRecord::from_error(e);
    let text = serde_json::to_string_pretty(&record).unwrap_or_default() + "\n";
    eprint!("{text}");
    if fs::create_dir_all(out).is_ok() {
        let _ = fs::write(out.join("error.json"), text);
    }
}

/// Best-effort `--out` lookup in raw arguments, for errors raised before
/// parsing completes.
fn out_from_argv(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--out" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--out=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn exit_code(e: &VolError) -> i32 {
    ErrorRecord::from_error(e).exit_code
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { EXIT_USAGE } else { 0 };
            }
            let err = VolError::Usage(e.render().to_string().trim().to_string());
            match out_from_argv(&argv) {
                Some(out) => write_error_record(&out, &err),
                None => eprintln!("{}", serde_json::to_string_pretty(&ErrorRecord::from_error(&err)).unwrap_or_default()),
            }
            return EXIT_USAGE;
        }
    };
    match execute(cli.command) {
        Ok((out, arts)) => match arts.commit(&out) {
            Ok(()) => {
                let _ = fs::remove_file(out.join("error.json"));
                let mut listing = String::new();
                for p in arts.paths() {
                    let _ = writeln!(listing, "{}", out.join(p).display());
                }
                print!("{listing}");
                0
            }
            Err(e) => {
                write_error_record(&out, &e);
                exit_code(&e)
            }
        },
        Err(e) => exit_code(&e),
    }
}
