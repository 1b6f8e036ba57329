//! Monte Carlo comparison of the estimators on common trajectories.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleState, SamplerKind};
use crate::error::{Error, Result};
use crate::kalman::{linear_error_traces, KalmanState};
use crate::map::batch::{BatchMapFilter, BatchMapPlans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::map::{window1_init, Window1MapState};
use crate::model::{simulate_with_rng, InitialState, LtvModel, ModelDocument};
use crate::particle::{Likelihood, ParticleSet};
use crate::rng;
use crate::stats::mean_and_se;

pub const CSV_HEADER: &str = "estimator,k,mse,stderr,analytic_trace";

fn default_trials() -> usize {
    2000
}
fn default_ensemble_size() -> usize {
    200
}
fn default_particles() -> usize {
    1000
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// Model given as a path (relative to the config file) or inline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(Box<ModelDocument>),
}

/// Estimator selection and parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Linear,
    Randomized {
        #[serde(default = "default_ensemble_size")]
        ensemble_size: usize,
        #[serde(default)]
        sampler: SamplerKind,
    },
    Particle {
        #[serde(default = "default_particles")]
        particles: usize,
    },
    Map {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    MapW1,
}

impl EstimatorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EstimatorSpec::Linear => "linear",
            EstimatorSpec::Randomized { .. } => "randomized",
            EstimatorSpec::Particle { .. } => "particle",
            EstimatorSpec::Map { .. } => "map",
            EstimatorSpec::MapW1 => "map-w1",
        }
    }

    fn validate(&self, model: &LtvModel) -> Result<()> {
        match *self {
            EstimatorSpec::Randomized { ensemble_size: 0, .. } => {
                Err(Error::validation("ensemble_size", "must be at least 1"))
            }
            EstimatorSpec::Particle { particles: 0 } => {
                Err(Error::validation("particles", "must be at least 1"))
            }
            EstimatorSpec::Map { tol, max_iter } if !(tol > 0.0) || max_iter == 0 => Err(
                Error::validation("tol", "tol must be > 0 and max_iter at least 1"),
            ),
            EstimatorSpec::MapW1 => window1_init(model).map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimatorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: EstimatorSpec,
}

impl EstimatorConfig {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.spec.kind_name().to_string())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMode {
    Zero,
    #[default]
    Sample,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub model: ModelRef,
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub initial_state: InitialMode,
}

impl BenchmarkConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a config file; a relative model path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        if let ModelRef::Path(p) = &mut config.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn load_model(&self) -> Result<LtvModel> {
        match &self.model {
            ModelRef::Path(p) => crate::model::load_model(p),
            ModelRef::Inline(doc) => (**doc).clone().into_model(),
        }
    }

    pub fn validate(&self, model: &LtvModel) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::validation("horizon", "must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::validation("estimators", "at least one estimator is required"));
        }
        model.ensure_time(self.horizon)?;
        let mut labels = BTreeSet::new();
        for e in &self.estimators {
            if !labels.insert(e.label()) {
                return Err(Error::validation(
                    "estimators",
                    format!("duplicate label `{}`", e.label()),
                ));
            }
            e.spec.validate(model)?;
        }
        Ok(())
    }
}

/// Shared, data-independent precomputation for an estimator.
#[derive(Debug, Clone)]
pub enum Prepared {
    None,
    Map(Arc<BatchMapPlans>),
}

impl Prepared {
    pub fn new(spec: &EstimatorSpec, model: &LtvModel, horizon: usize) -> Result<Self> {
        Ok(match spec {
            EstimatorSpec::Map { .. } => Prepared::Map(Arc::new(BatchMapPlans::new(model, horizon)?)),
            _ => Prepared::None,
        })
    }
}

/// An online estimator driven one measurement at a time.
#[derive(Debug, Clone)]
pub enum Estimator {
    Linear(KalmanState),
    Randomized(EnsembleState),
    Particle(ParticleSet),
    Map(BatchMapFilter),
    MapW1(Window1MapState),
}

/// One step's output: estimate and, where defined, the analytic trace.
pub type StepOutput = (DVector<f64>, Option<f64>);

impl Estimator {
    pub fn new(spec: &EstimatorSpec, model: &LtvModel, prepared: &Prepared, seed: u64) -> Result<Self> {
        Ok(match (spec, prepared) {
            (EstimatorSpec::Linear, _) => Estimator::Linear(KalmanState::init(model)),
            (EstimatorSpec::Randomized { ensemble_size, sampler }, _) => {
                Estimator::Randomized(EnsembleState::new(model, *ensemble_size, *sampler, seed)?)
            }
            (EstimatorSpec::Particle { particles }, _) => {
                Estimator::Particle(ParticleSet::new(model, *particles, Likelihood::Laplace, seed)?)
            }
            (EstimatorSpec::Map { tol, max_iter }, Prepared::Map(plans)) => {
                Estimator::Map(BatchMapFilter::new(plans.clone(), *tol, *max_iter))
            }
            (EstimatorSpec::Map { .. }, Prepared::None) => {
                return Err(Error::Numerical("batch MAP requires prepared plans".into()))
            }
            (EstimatorSpec::MapW1, _) => Estimator::MapW1(window1_init(model)?),
        })
    }

    pub fn step(&mut self, model: &LtvModel, y: &DVector<f64>) -> Result<StepOutput> {
        match self {
            Estimator::Linear(s) => {
                s.linear_step(model, y)?;
                Ok((s.mean.clone(), Some(s.p_post.trace())))
            }
            Estimator::Randomized(e) => {
                let est = e.step(model, y)?;
                Ok((est.x_hat, Some(est.avg_trace)))
            }
            Estimator::Particle(p) => Ok((p.step(model, y)?, None)),
            Estimator::Map(f) => Ok((f.step(y)?.x_final, None)),
            Estimator::MapW1(w) => Ok((w.step(model, y[0])?, None)),
        }
    }
}

/// Per-estimator aggregate over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCurve {
    pub label: String,
    pub kind: &'static str,
    pub mse: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Linear: `Tr(P̌[k])`. Randomized: trial mean of `(1/I)Σ Tr(P̃ⁱ[k])`.
    pub analytic_trace: Option<Vec<f64>>,
    /// Standard error of the randomized trace mean.
    pub trace_stderr: Option<Vec<f64>>,
    /// Squared errors `‖x̂[k] − x[k]‖²` of each successful trial.
    pub per_trial: Vec<Vec<f64>>,
    /// Per-trial analytic traces (randomized and linear only).
    pub per_trial_trace: Vec<Vec<f64>>,
    /// Trial indices of the rows in `per_trial`.
    pub trial_ids: Vec<usize>,
    pub failures: usize,
}

impl EstimatorCurve {
    /// Mean and standard error of the per-trial average of squared errors
    /// over `k ∈ [lo, hi]`.
    pub fn window_mean(&self, lo: usize, hi: usize) -> (f64, f64) {
        let avgs: Vec<f64> = self
            .per_trial
            .iter()
            .map(|row| row[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64)
            .collect();
        mean_and_se(&avgs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub horizon: usize,
    pub trials: usize,
    pub curves: Vec<EstimatorCurve>,
}

impl BenchmarkResult {
    pub fn curve(&self, label: &str) -> Option<&EstimatorCurve> {
        self.curves.iter().find(|c| c.label == label)
    }
}

type TrialOutcome = Vec<Result<(Vec<f64>, Vec<f64>)>>;

/// Runs every estimator on `trials` simulated trajectories. Trial `t` uses
/// the stream `(seed, t, 0)` for the trajectory and `(seed, t, 1, j)` for
/// estimator `j`, so the result does not depend on the thread count.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    let model = config.load_model()?;
    run_benchmark_with_model(config, &model)
}

pub fn run_benchmark_with_model(config: &BenchmarkConfig, model: &LtvModel) -> Result<BenchmarkResult> {
    config.validate(model)?;
    let horizon = config.horizon;
    let prepared: Vec<Prepared> = config
        .estimators
        .iter()
        .map(|e| Prepared::new(&e.spec, model, horizon))
        .collect::<Result<_>>()?;
    let init = match config.initial_state {
        InitialMode::Zero => InitialState::Zero,
        InitialMode::Sample => InitialState::Sample,
    };

    let outcomes: Vec<Result<TrialOutcome>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut sim = rng::stream(config.seed, &[t as u64, 0]);
            let traj = simulate_with_rng(model, horizon, &mut sim, &init)?;
            Ok(config
                .estimators
                .iter()
                .zip(&prepared)
                .enumerate()
                .map(|(j, (e, prep))| {
                    let seed = rng::derive_seed(config.seed, &[t as u64, 1, j as u64]);
                    let mut est = Estimator::new(&e.spec, model, prep, seed)?;
                    let mut errs = Vec::with_capacity(horizon + 1);
                    let mut traces = Vec::new();
                    for (y, x) in traj.y.iter().zip(&traj.x) {
                        let (x_hat, trace) = est.step(model, y)?;
                        errs.push((x_hat - x).norm_squared());
                        traces.extend(trace);
                    }
                    Ok((errs, traces))
                })
                .collect())
        })
        .collect();

    let mut curves: Vec<EstimatorCurve> = config
        .estimators
        .iter()
        .map(|e| EstimatorCurve {
            label: e.label(),
            kind: e.spec.kind_name(),
            mse: Vec::new(),
            stderr: Vec::new(),
            analytic_trace: None,
            trace_stderr: None,
            per_trial: Vec::new(),
            per_trial_trace: Vec::new(),
            trial_ids: Vec::new(),
            failures: 0,
        })
        .collect();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        for (j, r) in outcome?.into_iter().enumerate() {
            match r {
                Ok((errs, traces)) => {
                    curves[j].per_trial.push(errs);
                    if !traces.is_empty() {
                        curves[j].per_trial_trace.push(traces);
                    }
                    curves[j].trial_ids.push(t);
                }
                Err(e) => {
                    log::warn!("trial {t}: estimator `{}` failed: {e}", curves[j].label);
                    curves[j].failures += 1;
                }
            }
        }
    }

    for (curve, e) in curves.iter_mut().zip(&config.estimators) {
        if curve.failures * 100 > config.trials || curve.per_trial.is_empty() {
            return Err(Error::TooManyFailures {
                estimator: curve.label.clone(),
                failed: curve.failures,
                total: config.trials,
            });
        }
        let columns = |rows: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
            (0..=horizon)
                .map(|k| mean_and_se(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
                .unzip()
        };
        let (mse, se) = columns(&curve.per_trial);
        curve.mse = mse;
        curve.stderr = se;
        match e.spec {
            EstimatorSpec::Linear => {
                curve.analytic_trace = Some(linear_error_traces(model, horizon)?);
            }
            EstimatorSpec::Randomized { .. } => {
                let (tr, tr_se) = columns(&curve.per_trial_trace);
                curve.analytic_trace = Some(tr);
                curve.trace_stderr = Some(tr_se);
            }
            _ => {}
        }
    }
    Ok(BenchmarkResult {
        horizon,
        trials: config.trials,
        curves,
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub estimator: String,
    pub k: usize,
    pub mse: f64,
    pub stderr: f64,
    pub analytic_trace: Option<f64>,
}

pub fn result_rows(result: &BenchmarkResult) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = result
        .curves
        .iter()
        .flat_map(|c| {
            (0..c.mse.len()).map(move |k| CsvRow {
                estimator: c.label.clone(),
                k,
                mse: c.mse[k],
                stderr: c.stderr[k],
                analytic_trace: c.analytic_trace.as_ref().map(|t| t[k]),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.estimator.cmp(&b.estimator).then(a.k.cmp(&b.k)));
    rows
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the CSV form of `result` (17 significant digits).
pub fn write_csv<W: std::io::Write>(result: &BenchmarkResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for row in result_rows(result) {
        w.write_record([
            row.estimator,
            row.k.to_string(),
            fmt_float(row.mse),
            fmt_float(row.stderr),
            row.analytic_trace.map(fmt_float).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(result: &BenchmarkResult, path: impl AsRef<Path>) -> Result<()> {
    write_csv(result, std::fs::File::create(path)?)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header `{headers}`")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
