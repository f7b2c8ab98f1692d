use serde::Serialize;

use super::metrics::{mutual_information, spatial_l2_error, spearman, ErrorMap};
use crate::datagen::{Dataset, FlowSequence, SimulationParams};
use crate::error::{Error, Result};
use crate::model::{generate, ArchitectureConfig, ModelWeights};
use crate::training::{train_with, EpochRecord, TrainConfig};

/// Anything that can produce a physical-unit sequence for given parameters.
pub trait Predictor: Sync {
    fn predict(&self, p: &SimulationParams, steps: usize) -> Result<FlowSequence>;
}

impl Predictor for ModelWeights<f32> {
    fn predict(&self, p: &SimulationParams, steps: usize) -> Result<FlowSequence> {
        let seq = generate(p, steps, self)?;
        Ok(self.normalization.to_physical(&seq))
    }
}

/// One Reynolds number of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub re: f64,
    /// Time-mean relative L2 error; `None` when prediction failed.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by Re.
    pub rows: Vec<SweepRow>,
    /// Rank correlation of Re against error over the successful rows;
    /// `None` when undefined (fewer than two rows or a constant column).
    pub spearman: Option<f64>,
}

/// Physical-unit copy of every sample.
pub fn physical(ds: &Dataset) -> Vec<FlowSequence> {
    match ds.normalization {
        Some(stats) => ds.samples.iter().map(|s| stats.to_physical(s)).collect(),
        None => ds.samples.clone(),
    }
}

impl SweepResult {
    /// Sorts rows by Re and ranks Re against error over the successful rows.
    pub fn from_rows(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.re.total_cmp(&b.re));
        let (res, errs): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.error.map(|e| (r.re, e))).unzip();
        let spearman = spearman(&res, &errs);
        SweepResult { rows, spearman }
    }
}

impl SweepRow {
    pub fn from_outcome(re: f64, outcome: &Result<ErrorMap>) -> Self {
        match outcome {
            Ok(map) => SweepRow {
                re,
                error: Some(map.mean_rel_l2()),
                failure: None,
            },
            Err(e) => SweepRow {
                re,
                error: None,
                failure: Some(e.to_string()),
            },
        }
    }
}

/// Predicts `truth.n_steps()` frames at its parameters and scores them.
pub fn predict_and_score(model: &dyn Predictor, truth: &FlowSequence) -> Result<(FlowSequence, ErrorMap)> {
    let pred = model.predict(&truth.params, truth.n_steps())?;
    let map = spatial_l2_error(&pred, truth)?;
    Ok((pred, map))
}

pub fn reynolds_sweep_eval(model: &dyn Predictor, ds: &Dataset) -> SweepResult {
    let rows = physical(ds)
        .iter()
        .map(|truth| {
            let outcome = predict_and_score(model, truth).map(|(_, map)| map);
            SweepRow::from_outcome(truth.params.re, &outcome)
        })
        .collect();
    SweepResult::from_rows(rows)
}

/// Probe positions as (column, row) fractions of the grid.
pub const PROBE_FRACTIONS: [(f64, f64); 3] = [(0.25, 0.25), (0.5, 0.5), (0.75, 0.25)];

/// Grid nodes `(i, j)` of the fixed probes.
pub fn probe_points(ny: usize, nx: usize) -> Vec<(usize, usize)> {
    PROBE_FRACTIONS
        .iter()
        .map(|&(fx, fy)| {
            let i = ((fx * (nx - 1) as f64).round() as usize).min(nx - 1);
            let j = ((fy * (ny - 1) as f64).round() as usize).min(ny - 1);
            (i, j)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRow {
    pub horizon: usize,
    pub eval_steps: usize,
    /// Mean squared error in physical units over samples, frames and nodes.
    pub mse: f64,
    /// Mutual information (nats) of probe series, averaged over probes and samples.
    pub mi: f64,
    /// `max_epochs`, `patience`, or `failed: <reason>`.
    pub stop_reason: String,
    pub epochs_run: usize,
}

impl HorizonRow {
    pub fn failed(&self) -> bool {
        self.stop_reason.starts_with("failed")
    }
}

#[derive(Debug, Clone)]
pub struct HorizonStudyResult {
    pub rows: Vec<HorizonRow>,
    /// The training configuration used for each row.
    pub configs: Vec<TrainConfig>,
}

impl HorizonStudyResult {
    fn successful(&self) -> impl Iterator<Item = &HorizonRow> {
        self.rows.iter().filter(|r| !r.failed() && r.mse.is_finite())
    }

    /// Horizon with the lowest MSE among successful rows.
    pub fn best_by_mse(&self) -> Option<usize> {
        self.successful()
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
            .map(|r| r.horizon)
    }

    /// Horizon with the highest MI among successful rows.
    pub fn best_by_mi(&self) -> Option<usize> {
        self.successful()
            .max_by(|a, b| a.mi.total_cmp(&b.mi))
            .map(|r| r.horizon)
    }
}

/// Scores a model rolled out for `eval_steps` against `truth` (physical units).
pub fn rollout_scores(model: &ModelWeights<f32>, truth: &[FlowSequence], eval_steps: usize) -> Result<(f64, f64)> {
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut mi_sum = 0.0;
    let mut mi_count = 0usize;
    for t in truth {
        let t = t.truncated(eval_steps);
        let pred = model.predict(&t.params, eval_steps)?;
        for (&p, &q) in pred.frames.iter().zip(&t.frames) {
            sq += (p as f64 - q as f64).powi(2);
        }
        count += t.frames.len();
        for (i, j) in probe_points(t.ny, t.nx) {
            let ps: Vec<f64> = pred.series(j, i).iter().map(|&v| v as f64).collect();
            let ts: Vec<f64> = t.series(j, i).iter().map(|&v| v as f64).collect();
            mi_sum += mutual_information(&ts, &ps, 3)?;
            mi_count += 1;
        }
    }
    Ok((sq / count.max(1) as f64, mi_sum / mi_count.max(1) as f64))
}

fn check_study(ds: &Dataset, eval: &Dataset, horizons: &[usize], eval_steps: usize) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::InvalidConfig("no horizons given".into()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::InvalidConfig(format!(
            "horizons {horizons:?} must be positive and strictly ascending"
        )));
    }
    let longest = *horizons.last().expect("non-empty");
    if longest > ds.n_steps {
        return Err(Error::InvalidConfig(format!(
            "horizon {longest} exceeds the {} stored steps",
            ds.n_steps
        )));
    }
    if eval_steps > eval.n_steps {
        return Err(Error::InvalidConfig(format!(
            "eval_steps {eval_steps} exceeds the {} stored truth steps",
            eval.n_steps
        )));
    }
    if eval_steps < super::metrics::MI_MIN_LEN {
        return Err(Error::SeriesTooShort {
            len: eval_steps,
            min: super::metrics::MI_MIN_LEN,
        });
    }
    Ok(())
}

/// Trains one model per horizon on `ds` with otherwise identical settings
/// and scores each over `eval_steps` recursive steps on its own samples.
pub fn horizon_study(
    ds: &Dataset,
    horizons: &[usize],
    eval_steps: usize,
    base_cfg: &TrainConfig,
    arch: &ArchitectureConfig,
) -> Result<HorizonStudyResult> {
    horizon_study_with(ds, ds, horizons, eval_steps, base_cfg, arch, &mut |_, _| {})
}

/// As [`horizon_study`] with a separate evaluation set and a per-epoch
/// observer receiving the current horizon.
pub fn horizon_study_with(
    train_ds: &Dataset,
    eval_ds: &Dataset,
    horizons: &[usize],
    eval_steps: usize,
    base_cfg: &TrainConfig,
    arch: &ArchitectureConfig,
    observer: &mut dyn FnMut(usize, &EpochRecord),
) -> Result<HorizonStudyResult> {
    check_study(train_ds, eval_ds, horizons, eval_steps)?;
    let truth = physical(eval_ds);
    let mut rows = Vec::with_capacity(horizons.len());
    let mut configs = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let cfg = TrainConfig {
            horizon_train: h,
            ..base_cfg.clone()
        };
        let arch_h = ArchitectureConfig {
            horizon_train: h,
            ..arch.clone()
        };
        let outcome = train_with(train_ds, &cfg, &arch_h, &mut |r| observer(h, r))
            .and_then(|out| rollout_scores(&out.best, &truth, eval_steps).map(|s| (s, out)));
        let row = match outcome {
            Ok(((mse, mi), out)) => HorizonRow {
                horizon: h,
                eval_steps,
                mse,
                mi,
                stop_reason: out.state.stop_reason.map(|r| r.to_string()).unwrap_or_default(),
                epochs_run: out.state.epoch,
            },
            Err(e) => HorizonRow {
                horizon: h,
                eval_steps,
                mse: f64::NAN,
                mi: f64::NAN,
                stop_reason: format!("failed: {e}"),
                epochs_run: 0,
            },
        };
        log::info!("horizon {h}: mse {:.4e}, mi {:.4}, {}", row.mse, row.mi, row.stop_reason);
        rows.push(row);
        configs.push(cfg);
    }
    Ok(HorizonStudyResult { rows, configs })
}

/// Mean over frames of the time-mean relative L2 error of `model` on `ds`.
pub fn mean_relative_error(model: &dyn Predictor, ds: &Dataset, steps: usize) -> Result<f64> {
    let truth = physical(ds);
    let mut total = 0.0;
    for t in &truth {
        let t = t.truncated(steps);
        let pred = model.predict(&t.params, t.n_steps())?;
        total += spatial_l2_error(&pred, &t)?.mean_rel_l2();
    }
    Ok(total / truth.len().max(1) as f64)
}
