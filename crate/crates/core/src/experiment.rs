//! Experiment harness behind the command-line front end: corpus generation,
//! seeded multi-run training and evaluation, and quantum/classical comparison.
//!
//! Every run writes a `manifest.toml` holding the full effective
//! configuration; feeding it back through `--config` reproduces all metrics
//! bitwise.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_lags, generate_corpus, ingest_csv, standardize, CorpusConfig, LagDataset, LagMode, SeriesRaw};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::qlstm::{
    lstm_param_count, matched_lstm_hidden, param_gap, train_model, GateCell, LstmCell, QlstmCell, QlstmConfig, Readout,
    SequenceModel,
};
use crate::reservoir::{
    fit_nn_readout, fit_ridge, predict_linear, reservoir_features, slice_rows, with_intercept, EsnConfig, EsnParams,
    Matrix, Mlp, MlpConfig, QrcConfig, QrcParams, Reservoir, ReservoirTrace, WASHOUT,
};
use crate::train::{pseudo_accuracy, rmse, rmse_per_channel, OptimizerConfig};

pub const CORPUS_FILE: &str = "corpus.csv";
pub const CORPUS_META_FILE: &str = "corpus.meta.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESULT_FILE: &str = "result.json";

/// Largest relative parameter-count gap accepted for a quantum/classical pair.
pub const MAX_PARAM_GAP: f64 = 0.1;

/// Writes via a sibling temp file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = || path.display().to_string();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(ctx(), e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(ctx(), e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(ctx(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(ctx(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lstm,
    #[default]
    Qlstm,
    Rc,
    Qrc,
    NnRc,
    NnQrc,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lstm,
        ModelKind::Qlstm,
        ModelKind::Rc,
        ModelKind::Qrc,
        ModelKind::NnRc,
        ModelKind::NnQrc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Qlstm => "qlstm",
            ModelKind::Rc => "rc",
            ModelKind::Qrc => "qrc",
            ModelKind::NnRc => "nn-rc",
            ModelKind::NnQrc => "nn-qrc",
        }
    }

    pub fn is_quantum(self) -> bool {
        matches!(self, ModelKind::Qlstm | ModelKind::Qrc | ModelKind::NnQrc)
    }

    pub fn is_reservoir(self) -> bool {
        !matches!(self, ModelKind::Lstm | ModelKind::Qlstm)
    }

    /// The other half of the quantum/classical pair.
    pub fn counterpart(self) -> ModelKind {
        match self {
            ModelKind::Lstm => ModelKind::Qlstm,
            ModelKind::Qlstm => ModelKind::Lstm,
            ModelKind::Rc => ModelKind::Qrc,
            ModelKind::Qrc => ModelKind::Rc,
            ModelKind::NnRc => ModelKind::NnQrc,
            ModelKind::NnQrc => ModelKind::NnRc,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Observations fed to a reservoir readout next to the reservoir state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutInputs {
    /// Reservoir state only.
    None,
    /// The most recent observation of each channel.
    #[default]
    Last,
    /// The whole lag window.
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub mode: LagMode,
    pub lag: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Corpus CSV to train on.
    pub data: PathBuf,
    /// Columns to use; empty picks the first one (univariate) or two (multivariate).
    pub series: Vec<String>,
    /// Leading months whose statistics standardize each series.
    pub standardize_months: usize,
    pub out: PathBuf,
    pub dump_trace: bool,
    /// Append a constant feature to the reservoir readout.
    pub intercept: bool,
    /// Raw observations appended to the reservoir state before the readout.
    pub readout_inputs: ReadoutInputs,
    /// LSTM hidden size; 0 picks the size whose parameter count best matches the QLSTM.
    pub lstm_hidden: usize,
    pub optimizer: OptimizerConfig,
    pub qlstm: QlstmConfig,
    pub qrc: QrcParams,
    pub esn: EsnParams,
    pub mlp: MlpConfig,
    pub corpus: CorpusConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Qlstm,
            mode: LagMode::Univariate,
            lag: 4,
            horizon: 1,
            seeds: (1..=5).collect(),
            data: PathBuf::from("corpus").join(CORPUS_FILE),
            series: Vec::new(),
            standardize_months: 60,
            out: PathBuf::from("results"),
            dump_trace: false,
            intercept: true,
            readout_inputs: ReadoutInputs::Last,
            lstm_hidden: 0,
            optimizer: OptimizerConfig::default(),
            qlstm: QlstmConfig::default(),
            qrc: QrcParams::default(),
            esn: EsnParams::default(),
            mlp: MlpConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 || self.horizon == 0 {
            return Err(Error::Config("lag and horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.standardize_months == 0 {
            return Err(Error::Config("standardize_months must be positive".into()));
        }
        match self.model {
            ModelKind::Lstm | ModelKind::Qlstm => self.optimizer.validate()?,
            ModelKind::Rc | ModelKind::Qrc => {}
            ModelKind::NnRc | ModelKind::NnQrc => self.mlp.optimizer.validate()?,
        }
        if self.model.is_reservoir() {
            self.qrc.validate()?;
            self.esn.validate()?;
        }
        Ok(())
    }

    fn channels(&self) -> usize {
        match self.mode {
            LagMode::Univariate => 1,
            LagMode::Multivariate => self.series.len().max(2),
        }
    }
}

/// Reads, standardizes and windows the configured series.
pub fn load_dataset(cfg: &ExperimentConfig, warnings: &mut Vec<String>) -> Result<LagDataset> {
    let mut raw = ingest_csv(&cfg.data, &cfg.series)?;
    let want = cfg.channels();
    if raw.len() < want {
        return Err(Error::Data(format!(
            "{} needs {want} series, {} has {}",
            cfg.mode_name(),
            cfg.data.display(),
            raw.len()
        )));
    }
    raw.truncate(want);
    let xs = raw
        .iter()
        .map(|s| standardized(s, cfg.standardize_months, warnings))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    build_lags(&refs, cfg.lag, cfg.horizon, cfg.mode)
}

impl ExperimentConfig {
    fn mode_name(&self) -> &'static str {
        match self.mode {
            LagMode::Univariate => "univariate mode",
            LagMode::Multivariate => "multivariate mode",
        }
    }
}

fn standardized(s: &SeriesRaw, months: usize, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    let window = 0..months.min(s.values.len());
    match standardize(s, window.clone()) {
        Ok(std) => Ok(std.x),
        Err(Error::ConstantSeries) => {
            warnings.push(format!("series {} is constant on its fit window; centered without scaling", s.name));
            let u: Vec<f64> = s.clipped().iter().map(|v| v.ln_1p()).collect();
            let mean = u[window.clone()].iter().sum::<f64>() / window.len() as f64;
            Ok(u.iter().map(|v| v - mean).collect())
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub train_pseudo_accuracy: f64,
    pub test_pseudo_accuracy: f64,
    pub test_rmse_per_channel: Vec<f64>,
    pub persistence_test_rmse: f64,
    /// Per-epoch training loss (MSE); empty for a ridge-only readout.
    pub loss_curve: Vec<f64>,
    /// Test-split predictions, row-major `rows x channels`.
    pub test_predictions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train_rmse: MeanStd,
    pub test_rmse: MeanStd,
    pub train_pseudo_accuracy: MeanStd,
    pub test_pseudo_accuracy: MeanStd,
    pub persistence_test_rmse: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelKind,
    /// Trainable parameters (for reservoirs: the readout).
    pub n_params: usize,
    /// Width of the representation fed to the readout.
    pub feature_width: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub per_seed: Vec<SeedResult>,
    pub summary: Summary,
    pub warnings: Vec<String>,
    /// Seconds per seed; excluded from reproducibility comparisons.
    pub wall_clock_seconds: Vec<f64>,
    pub config: ExperimentConfig,
}

impl RunResult {
    /// Everything except timing, for bitwise replay checks.
    pub fn metrics_equal(&self, other: &RunResult) -> bool {
        self.per_seed == other.per_seed
            && self.summary == other.summary
            && self.n_params == other.n_params
            && self.feature_width == other.feature_width
    }
}

/// What a single seed produces before metrics are attached.
struct Fitted {
    n_params: usize,
    feature_width: usize,
    predictions: Vec<f64>,
    loss_curve: Vec<f64>,
    trace: Option<ReservoirTrace>,
}

fn recurrent_fit<C: GateCell>(
    cell: C,
    data: &LagDataset,
    opt: &OptimizerConfig,
    seed: u64,
    exec: Execution,
) -> Result<Fitted> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let readout = Readout::random(cell.hidden_size(), data.channels(), &mut rng);
    let mut model = SequenceModel::new(cell, readout)?;
    let opt = OptimizerConfig { seed, ..opt.clone() };
    let report = train_model(&mut model, data, &opt, exec)?;
    let predictions = model.forecast_sequence(data, 0..data.rows(), exec)?;
    Ok(Fitted {
        n_params: model.n_params(),
        feature_width: model.cell.hidden_size(),
        predictions,
        loss_curve: report.loss_curve,
        trace: None,
    })
}

fn targets_matrix(data: &LagDataset) -> Matrix {
    Matrix {
        rows: data.rows(),
        cols: data.channels(),
        data: data.targets(0..data.rows()),
    }
}

fn reservoir_fit<R: Reservoir>(res: &R, cfg: &ExperimentConfig, ridge: f64, data: &LagDataset, seed: u64) -> Result<Fitted> {
    let raw = reservoir_features(res, data)?;
    let extra: Vec<Vec<f64>> = (0..data.rows())
        .map(|i| match cfg.readout_inputs {
            ReadoutInputs::None => Vec::new(),
            ReadoutInputs::Last => data.last_step(i),
            ReadoutInputs::Window => data.row(i).to_vec(),
        })
        .collect();
    let design = Matrix::from_rows(&(0..data.rows()).map(|i| [raw.row(i), &extra[i]].concat()).collect::<Vec<_>>())?;
    let features = if cfg.intercept { with_intercept(&design) } else { design };
    let y = targets_matrix(data);
    let split = data.split_index();
    if split <= WASHOUT {
        return Err(Error::Data(format!("only {split} training rows; washout needs more than {WASHOUT}")));
    }
    let fit = ReservoirTrace::new(slice_rows(&features, WASHOUT..split), slice_rows(&y, WASHOUT..split))?;
    let w = fit_ridge(&fit, ridge)?;
    let linear: Vec<Vec<f64>> = (0..data.rows())
        .map(|i| predict_linear(&w, features.row(i)))
        .collect::<Result<_>>()?;
    let mut n_params = w.features() * w.outputs();
    let mut predictions = linear.concat();
    let mut loss_curve = Vec::new();
    if matches!(cfg.model, ModelKind::NnRc | ModelKind::NnQrc) {
        let inputs = Matrix::from_rows(&linear)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x4e4e));
        let mut mlp = Mlp::random(data.channels(), cfg.mlp.hidden, data.channels(), &mut rng);
        let mlp_cfg = MlpConfig {
            optimizer: OptimizerConfig {
                seed,
                ..cfg.mlp.optimizer.clone()
            },
            ..cfg.mlp.clone()
        };
        loss_curve = fit_nn_readout(
            &mut mlp,
            &slice_rows(&inputs, WASHOUT..split),
            &slice_rows(&y, WASHOUT..split),
            &mlp_cfg,
        )?;
        n_params += mlp.n_params();
        predictions = linear
            .iter()
            .map(|r| mlp.forward(r))
            .collect::<Result<Vec<_>>>()?
            .concat();
    }
    Ok(Fitted {
        n_params,
        feature_width: res.state_dim(),
        predictions,
        loss_curve,
        trace: Some(ReservoirTrace::new(raw, y)?),
    })
}

fn qlstm_cell(cfg: &ExperimentConfig, inputs: usize, seed: u64) -> Result<QlstmCell> {
    QlstmCell::new(cfg.qlstm.clone(), inputs, seed)
}

/// LSTM hidden size used for `cfg`, matched to the QLSTM unless pinned.
pub fn lstm_hidden_for(cfg: &ExperimentConfig, inputs: usize, outputs: usize) -> Result<usize> {
    if cfg.lstm_hidden > 0 {
        return Ok(cfg.lstm_hidden);
    }
    let q = qlstm_param_count(cfg, inputs, outputs)?;
    Ok(matched_lstm_hidden(q, inputs, outputs))
}

pub fn qlstm_param_count(cfg: &ExperimentConfig, inputs: usize, outputs: usize) -> Result<usize> {
    let cell = qlstm_cell(cfg, inputs, 0)?;
    Ok(cell.n_params() + cell.hidden_size() * outputs + outputs)
}

fn fit_seed(cfg: &ExperimentConfig, data: &LagDataset, seed: u64, exec: Execution) -> Result<Fitted> {
    let d = data.channels();
    match cfg.model {
        ModelKind::Qlstm => recurrent_fit(qlstm_cell(cfg, d, seed)?, data, &cfg.optimizer, seed, exec),
        ModelKind::Lstm => {
            let h = lstm_hidden_for(cfg, d, d)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            recurrent_fit(LstmCell::random(h, d, &mut rng)?, data, &cfg.optimizer, seed, exec)
        }
        ModelKind::Qrc | ModelKind::NnQrc => {
            let res = QrcConfig::new(cfg.qrc.clone(), d, seed)?;
            reservoir_fit(&res, cfg, cfg.qrc.ridge, data, seed)
        }
        ModelKind::Rc | ModelKind::NnRc => {
            let res = EsnConfig::new(cfg.esn.clone(), d, seed)?;
            reservoir_fit(&res, cfg, cfg.esn.ridge, data, seed)
        }
    }
}

fn seed_result(data: &LagDataset, seed: u64, fitted: &Fitted) -> Result<SeedResult> {
    let m = data.channels();
    let split = data.split_index();
    let (train_pred, test_pred) = fitted.predictions.split_at(split * m);
    let train_rmse = rmse(train_pred, &data.targets(data.train_rows()))?;
    let test_actual = data.targets(data.test_rows());
    let test_rmse = rmse(test_pred, &test_actual)?;
    if !train_rmse.is_finite() || !test_rmse.is_finite() {
        return Err(Error::NanLoss {
            epoch: fitted.loss_curve.len(),
        });
    }
    Ok(SeedResult {
        seed,
        train_rmse,
        test_rmse,
        train_pseudo_accuracy: pseudo_accuracy(train_rmse)?,
        test_pseudo_accuracy: pseudo_accuracy(test_rmse)?,
        test_rmse_per_channel: rmse_per_channel(test_pred, &test_actual, m)?,
        persistence_test_rmse: rmse(&data.persistence(data.test_rows()), &test_actual)?,
        loss_curve: fitted.loss_curve.clone(),
        test_predictions: test_pred.to_vec(),
    })
}

/// Trains and evaluates every configured seed. Seeds run through `exec`.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<(RunResult, Vec<Option<ReservoirTrace>>)> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let data = load_dataset(cfg, &mut warnings)?;
    if data.test_rows().is_empty() || data.train_rows().is_empty() {
        return Err(Error::Data(format!("{} rows are too few for a train/test split", data.rows())));
    }
    if cfg.model == ModelKind::Lstm && cfg.lstm_hidden == 0 {
        let d = data.channels();
        let q = qlstm_param_count(cfg, d, d)?;
        let l = lstm_param_count(lstm_hidden_for(cfg, d, d)?, d, d);
        let gap = param_gap(q, l);
        if gap > MAX_PARAM_GAP {
            warnings.push(format!(
                "closest LSTM has {l} parameters vs {q} for the QLSTM ({:.1}% gap)",
                100.0 * gap
            ));
        }
    }
    let runs = exec.map(&cfg.seeds, |&seed| {
        let start = Instant::now();
        let fitted = fit_seed(cfg, &data, seed, exec).map_err(|e| seed_context(seed, e))?;
        let result = seed_result(&data, seed, &fitted)?;
        Ok::<_, Error>((fitted, result, start.elapsed().as_secs_f64()))
    });
    let mut per_seed = Vec::new();
    let mut traces = Vec::new();
    let mut timing = Vec::new();
    let mut shape = (0, 0);
    for run in runs {
        let (fitted, result, secs) = run?;
        shape = (fitted.n_params, fitted.feature_width);
        traces.push(fitted.trace);
        per_seed.push(result);
        timing.push(secs);
    }
    let col = |f: fn(&SeedResult) -> f64| MeanStd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    let summary = Summary {
        train_rmse: col(|s| s.train_rmse),
        test_rmse: col(|s| s.test_rmse),
        train_pseudo_accuracy: col(|s| s.train_pseudo_accuracy),
        test_pseudo_accuracy: col(|s| s.test_pseudo_accuracy),
        persistence_test_rmse: col(|s| s.persistence_test_rmse),
    };
    let result = RunResult {
        model: cfg.model,
        n_params: shape.0,
        feature_width: shape.1,
        train_rows: data.train_rows().len(),
        test_rows: data.test_rows().len(),
        per_seed,
        summary,
        warnings,
        wall_clock_seconds: timing,
        config: cfg.clone(),
    };
    Ok((result, traces))
}

fn seed_context(seed: u64, e: Error) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("seed {seed}: {m}")),
        Error::Config(m) => Error::Config(format!("seed {seed}: {m}")),
        other => other,
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Writes the corpus CSV and its metadata sidecar into `out`.
pub fn cmd_generate(cfg: &CorpusConfig, out: &Path, exec: Execution) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let corpus = generate_corpus(cfg, exec)?;
    let csv = out.join(CORPUS_FILE);
    let meta = out.join(CORPUS_META_FILE);
    write_atomic(&csv, corpus.to_csv()?.as_bytes())?;
    write_atomic(&meta, corpus.meta_toml()?.as_bytes())?;
    Ok(vec![csv, meta])
}

/// Runs the experiment and writes manifest, result, loss curves, predictions
/// and (on request, for reservoirs) state traces into `cfg.out`.
pub fn cmd_run(cfg: &ExperimentConfig, exec: Execution) -> Result<RunResult> {
    let (result, traces) = run_experiment(cfg, exec)?;
    write_run(&result, &traces)?;
    Ok(result)
}

fn write_run(result: &RunResult, traces: &[Option<ReservoirTrace>]) -> Result<()> {
    let cfg = &result.config;
    let out = &cfg.out;
    write_atomic(&out.join(MANIFEST_FILE), cfg.to_toml()?.as_bytes())?;
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::Serde(e.to_string()))?;
    write_atomic(&out.join(RESULT_FILE), json.as_bytes())?;
    let m = result.per_seed.first().map_or(1, |s| s.test_rmse_per_channel.len());
    let mut warnings = String::new();
    let mut data_warnings = Vec::new();
    let data = load_dataset(cfg, &mut data_warnings)?;
    for w in &result.warnings {
        let _ = writeln!(warnings, "{w}");
    }
    for (s, trace) in result.per_seed.iter().zip(traces) {
        let tag = format!("{}_seed{}", cfg.model, s.seed);
        let mut loss = String::from("epoch,loss\n");
        for (e, l) in s.loss_curve.iter().enumerate() {
            let _ = writeln!(loss, "{e},{}", fmt_f(*l));
        }
        write_atomic(&out.join(format!("loss_{tag}.csv")), loss.as_bytes())?;

        let mut pred = String::from("t,channel,actual,predicted\n");
        let actual = data.targets(data.test_rows());
        for (r, t) in data.test_rows().enumerate() {
            for c in 0..m {
                let k = r * m + c;
                let _ = writeln!(pred, "{t},{c},{},{}", fmt_f(actual[k]), fmt_f(s.test_predictions[k]));
            }
        }
        write_atomic(&out.join(format!("predictions_{tag}.csv")), pred.as_bytes())?;

        if cfg.dump_trace {
            if let Some(trace) = trace {
                write_atomic(&out.join(format!("trace_{tag}.csv")), trace.to_csv().as_bytes())?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub n_params: usize,
    pub feature_width: usize,
    pub train_rmse: MeanStd,
    pub test_rmse: MeanStd,
    pub test_pseudo_accuracy: MeanStd,
    pub persistence_test_rmse: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: ComparisonRow,
    pub b: ComparisonRow,
    /// `n_params(a) / n_params(b)`.
    pub param_ratio: f64,
    /// `|n_params(a) - n_params(b)| / n_params(b)`.
    pub param_gap: f64,
    pub params_matched: bool,
    pub delta_train_rmse: f64,
    pub delta_test_rmse: f64,
    /// Model with the lower mean test RMSE.
    pub lower_test_rmse: ModelKind,
    pub warnings: Vec<String>,
}

fn row(r: &RunResult) -> ComparisonRow {
    ComparisonRow {
        model: r.model,
        n_params: r.n_params,
        feature_width: r.feature_width,
        train_rmse: r.summary.train_rmse,
        test_rmse: r.summary.test_rmse,
        test_pseudo_accuracy: r.summary.test_pseudo_accuracy,
        persistence_test_rmse: r.summary.persistence_test_rmse,
    }
}

/// Side-by-side summary of two runs; a parameter gap above 10% is a warning.
pub fn compare(a: &RunResult, b: &RunResult) -> Comparison {
    let gap = param_gap(a.n_params, b.n_params.max(1));
    let mut warnings = Vec::new();
    if gap > MAX_PARAM_GAP {
        warnings.push(format!(
            "parameter counts differ by {:.1}% ({} vs {}), above the {:.0}% matching rule",
            100.0 * gap,
            a.n_params,
            b.n_params,
            100.0 * MAX_PARAM_GAP
        ));
    }
    if a.config.seeds != b.config.seeds {
        warnings.push("runs used different seed lists".into());
    }
    let lower = if a.summary.test_rmse.mean <= b.summary.test_rmse.mean { a.model } else { b.model };
    Comparison {
        a: row(a),
        b: row(b),
        param_ratio: a.n_params as f64 / b.n_params.max(1) as f64,
        param_gap: gap,
        params_matched: gap <= MAX_PARAM_GAP,
        delta_train_rmse: a.summary.train_rmse.mean - b.summary.train_rmse.mean,
        delta_test_rmse: a.summary.test_rmse.mean - b.summary.test_rmse.mean,
        lower_test_rmse: lower,
        warnings,
    }
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| model | params | feature width | train RMSE | test RMSE | test pseudo-acc | persistence RMSE |\n\
             |---|---|---|---|---|---|---|\n",
        );
        for r in [&self.a, &self.b] {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} |",
                r.model,
                r.n_params,
                r.feature_width,
                r.train_rmse.mean,
                r.train_rmse.std,
                r.test_rmse.mean,
                r.test_rmse.std,
                r.test_pseudo_accuracy.mean,
                r.test_pseudo_accuracy.std,
                r.persistence_test_rmse.mean
            );
        }
        let _ = writeln!(
            s,
            "\nparameter ratio {}/{} = {:.3} (gap {:.1}%, {})",
            self.a.model,
            self.b.model,
            self.param_ratio,
            100.0 * self.param_gap,
            if self.params_matched { "matched" } else { "NOT matched" }
        );
        let _ = writeln!(
            s,
            "delta test RMSE ({} - {}) = {:.4}; lower mean test RMSE: {}",
            self.a.model, self.b.model, self.delta_test_rmse, self.lower_test_rmse
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Runs `cfg.model` and its counterpart into `out/<model>` and writes the comparison.
pub fn cmd_compare(cfg: &ExperimentConfig, exec: Execution) -> Result<Comparison> {
    let mut results = Vec::new();
    for model in [cfg.model, cfg.model.counterpart()] {
        let sub = ExperimentConfig {
            model,
            out: cfg.out.join(model.name()),
            ..cfg.clone()
        };
        results.push(cmd_run(&sub, exec)?);
    }
    let cmp = compare(&results[0], &results[1]);
    write_comparison(&cfg.out, &cmp)?;
    Ok(cmp)
}

pub fn write_comparison(out: &Path, cmp: &Comparison) -> Result<()> {
    let json = serde_json::to_string_pretty(cmp).map_err(|e| Error::Serde(e.to_string()))?;
    write_atomic(&out.join("comparison.json"), json.as_bytes())?;
    write_atomic(&out.join("comparison.md"), cmp.to_markdown().as_bytes())
}

/// Loads `result.json` from a run directory (or the file itself).
pub fn load_result(path: &Path) -> Result<RunResult> {
    let file = if path.is_dir() { path.join(RESULT_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(file.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_corpus(dir: &Path) -> PathBuf {
        let s = SeriesRaw::new("flat", vec![40.0; 60]);
        let path = dir.join("flat.csv");
        write_atomic(&path, crate::data::write_series_csv(&[s]).unwrap().as_bytes()).unwrap();
        path
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig {
            model: ModelKind::NnQrc,
            mode: LagMode::Multivariate,
            seeds: vec![3, 9],
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        let partial = ExperimentConfig::from_toml("model = \"rc\"\nlag = 6\n").unwrap();
        assert_eq!((partial.model, partial.lag, partial.horizon), (ModelKind::Rc, 6, 1));
    }

    #[test]
    fn lstm_learns_a_constant_series() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            model: ModelKind::Lstm,
            data: constant_corpus(dir.path()),
            seeds: vec![1],
            out: dir.path().join("out"),
            ..ExperimentConfig::default()
        };
        let r = cmd_run(&cfg, Execution::Sequential).unwrap();
        assert!(r.summary.test_rmse.mean < 0.05, "{:?}", r.summary);
        assert!(r.warnings.iter().any(|w| w.contains("constant")));
        for f in [MANIFEST_FILE, RESULT_FILE, "loss_lstm_seed1.csv", "predictions_lstm_seed1.csv"] {
            assert!(cfg.out.join(f).exists(), "{f}");
        }
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            model: ModelKind::Rc,
            data: constant_corpus(dir.path()),
            seeds: vec![1, 2],
            out: dir.path().join("out"),
            ..ExperimentConfig::default()
        };
        let (r, _) = run_experiment(&cfg, Execution::Parallel).unwrap();
        let c = compare(&r, &r);
        assert_eq!((c.delta_test_rmse, c.delta_train_rmse, c.param_gap), (0.0, 0.0, 0.0));
        assert!(c.params_matched);
        assert!(c.to_markdown().contains("| rc |"));
    }

    #[test]
    fn missing_corpus_is_a_data_error() {
        let cfg = ExperimentConfig {
            data: PathBuf::from("/nonexistent/corpus.csv"),
            ..ExperimentConfig::default()
        };
        let e = run_experiment(&cfg, Execution::Sequential).unwrap_err();
        assert_eq!(e.class(), crate::ErrorClass::Data);
    }

    #[test]
    fn zero_continuation_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            continuation_months: 0,
            ..CorpusConfig::default()
        };
        let e = cmd_generate(&cfg, dir.path(), Execution::Sequential).unwrap_err();
        assert_eq!(e.class(), crate::ErrorClass::Usage);
        assert!(!dir.path().join(CORPUS_FILE).exists());
    }
}
