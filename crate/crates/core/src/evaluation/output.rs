//! CSV tables and PGM error images.

use std::fs;
use std::path::Path;

use super::metrics::{ErrorMap, PointTrajectory};
use super::studies::{HorizonStudyResult, SweepResult};
use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))
}

fn row<I, T>(w: &mut csv::Writer<fs::File>, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| Error::format(path, e.to_string()))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

/// `errors.csv`: one row per sample and frame.
pub fn write_errors_csv(path: &Path, maps: &[(usize, f64, &ErrorMap)]) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, path, ["sample_id", "re", "t", "rel_l2"])?;
    for &(id, re, map) in maps {
        for (t, e) in map.rel_l2.iter().enumerate() {
            row(&mut w, path, [id.to_string(), re.to_string(), t.to_string(), num(*e)])?;
        }
    }
    finish(w, path)
}

/// `points.csv`: one row per probe.
pub fn write_points_csv(path: &Path, points: &[PointTrajectory]) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, path, ["i", "j", "mse", "pearson_r", "undefined_flag"])?;
    for p in points {
        row(
            &mut w,
            path,
            [
                p.i.to_string(),
                p.j.to_string(),
                num(p.mse),
                num(p.pearson_r),
                (p.undefined as u8).to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// `sweep.csv`: `(re, error)` rows, failed rows with an empty error, then a
/// `spearman` summary row.
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, path, ["re", "error"])?;
    for r in &sweep.rows {
        let err = match (&r.error, &r.failure) {
            (Some(e), _) => num(*e),
            (None, Some(f)) => format!("failed: {f}"),
            (None, None) => String::new(),
        };
        row(&mut w, path, [r.re.to_string(), err])?;
    }
    let summary = sweep.spearman.map(num).unwrap_or_else(|| "undefined".into());
    row(&mut w, path, ["spearman".to_string(), summary])?;
    finish(w, path)
}

/// `horizon.csv`.
pub fn write_horizon_csv(path: &Path, study: &HorizonStudyResult) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, path, ["T_train", "eval_steps", "mse", "mi", "stop_reason", "epochs_run"])?;
    for r in &study.rows {
        row(
            &mut w,
            path,
            [
                r.horizon.to_string(),
                r.eval_steps.to_string(),
                num(r.mse),
                num(r.mi),
                r.stop_reason.clone(),
                r.epochs_run.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Writes a binary 8-bit PGM mapping `[0, max]` linearly onto `[0, 255]`
/// (row 0 of the field at the top) and records `max` in `<path>.max.txt`.
/// Returns the max used.
pub fn write_pgm(path: &Path, values: &[f64], ny: usize, nx: usize) -> Result<f64> {
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| {
        if max > 0.0 && v.is_finite() {
            ((v.max(0.0) / max) * 255.0).round().min(255.0) as u8
        } else {
            0
        }
    }));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, format!("{max:e}\n")).map_err(|e| Error::io(&side, e))?;
    Ok(max)
}

/// Writes a binary 8-bit PGM mapping `[min, max]` of a signed field onto
/// `[0, 255]` and records `min max` in `<path>.range.txt`.
pub fn write_field_pgm(path: &Path, values: &[f32], ny: usize, nx: usize) -> Result<(f64, f64)> {
    let (min, max) = values
        .iter()
        .map(|&v| v as f64)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (min, max) = if min <= max { (min, max) } else { (0.0, 0.0) };
    let span = max - min;
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| {
        let v = v as f64;
        if span > 0.0 && v.is_finite() {
            (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".range.txt");
    let side = path.with_file_name(name);
    fs::write(&side, format!("{min:e} {max:e}\n")).map_err(|e| Error::io(&side, e))?;
    Ok((min, max))
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".max.txt");
    path.with_file_name(name)
}
