use std::fs;
use std::path::Path;

use serde::Serialize;

use super::trainer::{EpochRecord, TrainOutcome};
use crate::error::{Error, Result};
use crate::model::save_checkpoint;

pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.json";

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Writes `config.json`, `history.csv`, `model.ckpt` (best) and
/// `model_last.ckpt` into `dir`.
pub fn write_run_dir(dir: &Path, config: &impl Serialize, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let json = serde_json::to_string_pretty(config).map_err(|e| Error::format(&cfg_path, e.to_string()))?;
    fs::write(&cfg_path, json + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    write_history_csv(&dir.join(HISTORY_FILE), &outcome.state.history)?;
    save_checkpoint(&outcome.best, dir.join("model.ckpt"))?;
    save_checkpoint(&outcome.last, dir.join("model_last.ckpt"))
}
