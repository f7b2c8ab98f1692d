use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    load_config, write_config, ArchSettings, EvaluateConfig, GenDataConfig, Holdout, HorizonStudyConfig,
    PredictConfig, TrainRunConfig,
};
use super::{Cli, Command, EvaluateArgs, GenDataArgs, HorizonStudyArgs, PredictArgs, TrainArgs, TrainFlags};
use crate::datagen::{
    generate_dataset, load_dataset, normalize_dataset, save_dataset, Dataset, DatasetSpec, FieldKind,
    GeneratorKind, SimulationParams,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    horizon_study_with, physical, point_metrics, predict_and_score, write_errors_csv, write_field_pgm,
    write_horizon_csv, write_pgm, write_points_csv, write_sweep_csv, ErrorMap, Predictor, SweepResult, SweepRow,
};
use crate::model::{load_checkpoint, ModelWeights};
use crate::training::{train_with, write_run_dir, EpochRecord, LossWeights, TrainConfig};

pub(super) fn dispatch(cli: &Cli) -> Result<()> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a, load_config(file)?),
        Command::Train(a) => train(cli, a, load_config(file)?),
        Command::Predict(a) => predict(cli, a, load_config(file)?),
        Command::Evaluate(a) => evaluate(cli, a, load_config(file)?),
        Command::HorizonStudy(a) => horizon_study(cli, a, load_config(file)?),
    }
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("{what} is required (flag or config file)")))
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} {} does not exist", path.display())))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_data(path: &Path) -> Result<Dataset> {
    existing(path, "dataset directory")?;
    load_dataset(path)
}

fn load_model(path: &Path) -> Result<ModelWeights<f32>> {
    existing(path, "checkpoint")?;
    load_checkpoint(path)
}

fn apply_holdout(ds: &Dataset, h: Holdout, keep_held: bool) -> Result<Dataset> {
    if h.every == 0 {
        return Ok(ds.clone());
    }
    let (train, held) = ds.split_interleaved(h.every, h.offset);
    let out = if keep_held { held } else { train };
    if out.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "holdout every {} offset {} leaves no samples",
            h.every, h.offset
        )));
    }
    Ok(out)
}

fn gen_data(cli: &Cli, a: &GenDataArgs, mut cfg: GenDataConfig) -> Result<()> {
    set(&mut cfg.case, &a.case);
    set(&mut cfg.re_min, &a.re_min);
    set(&mut cfg.re_max, &a.re_max);
    set(&mut cfg.n_samples, &a.n_samples);
    set(&mut cfg.steps, &a.steps);
    set(&mut cfg.grid, &a.grid);
    set(&mut cfg.generator.wake.mode, &a.mode);
    if a.field.is_some() {
        cfg.field = a.field;
    }
    if a.dt.is_some() {
        cfg.dt = a.dt;
    }
    set(&mut cfg.seed, &cli.seed);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.resolve();
    let out = required(&cfg.out, "--out")?.clone();
    let grid = cfg.grid()?;
    let template = SimulationParams {
        re: cfg.re_min,
        dt: cfg.dt.expect("resolved"),
        n_steps: cfg.steps,
        field: cfg.field.expect("resolved"),
    };
    template.validate()?;
    let spec = DatasetSpec {
        kind: cfg.case.kind(),
        re_min: cfg.re_min,
        re_max: cfg.re_max,
        n_samples: cfg.n_samples,
        template,
        grid,
        seed: cfg.seed,
    };
    log::info!("generating {} {:?} samples on {}x{}", cfg.n_samples, cfg.case, grid.ny, grid.nx);
    let ds = generate_dataset(&spec, &cfg.generator)?;
    save_dataset(&ds, &out)?;
    write_config(&out.join("config.json"), &cfg)?;
    println!(
        "wrote {} {} samples ({}, {}x{}, {} steps, dt {}) for Re in [{}, {}] to {}",
        ds.len(),
        match ds.kind {
            GeneratorKind::Wake => "wake",
            GeneratorKind::Cavity => "cavity",
            GeneratorKind::External => "external",
        },
        ds.field.as_str(),
        grid.ny,
        grid.nx,
        ds.n_steps,
        ds.dt,
        cfg.re_min,
        cfg.re_max,
        out.display()
    );
    Ok(())
}

fn apply_train_flags(f: &TrainFlags, train: &mut TrainConfig, arch: &mut ArchSettings) -> Result<()> {
    if let Some(name) = &f.loss_preset {
        train.loss_weights = LossWeights::preset(name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown loss preset '{name}' (expected streamwise, transverse, transverse-transient or cavity)"
            ))
        })?;
    }
    set(&mut train.loss_weights.beta1, &f.beta1);
    set(&mut train.loss_weights.beta2, &f.beta2);
    set(&mut train.loss_weights.gamma, &f.gamma);
    set(&mut train.lr, &f.lr);
    set(&mut train.batch_size, &f.batch_size);
    set(&mut train.max_epochs, &f.max_epochs);
    set(&mut train.patience_epochs, &f.patience);
    set(&mut arch.latent_dim, &f.latent_dim);
    set(&mut arch.encoder_layers, &f.encoder_layers);
    set(&mut arch.dynamics_layers, &f.dynamics_layers);
    set(&mut arch.decoder_seed_channels, &f.decoder_seed_channels);
    let triple = |v: &Option<Vec<usize>>, what: &str| -> Result<Option<[usize; 3]>> {
        v.as_ref()
            .map(|v| {
                <[usize; 3]>::try_from(v.as_slice())
                    .map_err(|_| Error::InvalidConfig(format!("{what} takes exactly three values, got {}", v.len())))
            })
            .transpose()
    };
    set(&mut arch.decoder_channels, &triple(&f.decoder_channels, "--decoder-channels")?);
    set(&mut arch.disc_channels, &triple(&f.disc_channels, "--disc-channels")?);
    Ok(())
}

/// Logs every epoch at debug level and every 100th at info level.
fn progress(prefix: String) -> impl FnMut(&EpochRecord) {
    move |r| {
        let line = format!(
            "{prefix}epoch {}: pred {:.4e}, adv_g {:.4}, adv_d {:.4}",
            r.epoch, r.loss_pred, r.loss_adv_g, r.loss_adv_d
        );
        if r.epoch % 100 == 0 || r.epoch == 1 {
            log::info!("{line}");
        } else {
            log::debug!("{line}");
        }
    }
}

fn train(cli: &Cli, a: &TrainArgs, mut cfg: TrainRunConfig) -> Result<()> {
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    set(&mut cfg.train.horizon_train, &a.horizon);
    set(&mut cfg.train.seed, &cli.seed);
    set(&mut cfg.holdout.every, &a.holdout_every);
    set(&mut cfg.holdout.offset, &a.holdout_offset);
    apply_train_flags(&a.flags, &mut cfg.train, &mut cfg.architecture)?;
    cfg.train.validate()?;
    let out = required(&cfg.out, "--out")?.clone();
    let data = required(&cfg.data, "--data")?.clone();

    let ds = apply_holdout(&load_data(&data)?, cfg.holdout, false)?;
    let arch = cfg.architecture.resolve(ds.grid, cfg.train.horizon_train);
    arch.validate()?;
    let ds = normalize_dataset(&ds);
    log::info!(
        "training on {} samples, T = {}, weights {:?}",
        ds.len(),
        cfg.train.horizon_train,
        cfg.train.loss_weights
    );
    let outcome = train_with(&ds, &cfg.train, &arch, &mut progress(String::new()))?;
    write_run_dir(&out, &cfg, &outcome)?;
    let s = &outcome.state;
    println!(
        "trained {} epochs (stop: {}); best epoch {} with loss_pred {:.4e}; run directory {}",
        s.epoch,
        s.stop_reason.map(|r| r.to_string()).unwrap_or_default(),
        s.best_epoch,
        s.best_loss_pred,
        out.display()
    );
    Ok(())
}

/// Snapshot interval and field recorded at training time.
fn model_meta(w: &ModelWeights<f32>) -> (f64, FieldKind) {
    let dt = w.provenance.get("dt").and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let field = w
        .provenance
        .get("field")
        .and_then(|s| s.parse().ok())
        .unwrap_or(FieldKind::Vorticity);
    (dt, field)
}

fn check_snapshots(snapshots: &[usize], steps: usize) -> Result<()> {
    match snapshots.iter().find(|&&t| t >= steps) {
        Some(t) => Err(Error::IndexOutOfBounds(format!(
            "snapshot {t} outside the {steps} predicted steps (valid 0..{})",
            steps.saturating_sub(1)
        ))),
        None => Ok(()),
    }
}

fn predict(cli: &Cli, a: &PredictArgs, mut cfg: PredictConfig) -> Result<()> {
    if a.model.is_some() {
        cfg.model = a.model.clone();
    }
    if a.re.is_some() {
        cfg.re = a.re;
    }
    if a.steps.is_some() {
        cfg.steps = a.steps;
    }
    set(&mut cfg.snapshots, &a.snapshots);
    set(&mut cfg.seed, &cli.seed);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    let out = required(&cfg.out, "--out")?.clone();
    let re = *required(&cfg.re, "--re")?;
    let w = load_model(required(&cfg.model, "--model")?)?;
    let steps = *cfg.steps.get_or_insert(w.arch.horizon_train);
    if steps == 0 {
        return Err(Error::InvalidConfig("--steps must be >= 1".into()));
    }
    check_snapshots(&cfg.snapshots, steps)?;
    let (dt, field) = model_meta(&w);
    let params = SimulationParams {
        re,
        dt,
        n_steps: steps,
        field,
    };
    params.validate()?;
    if w.is_extrapolation(re) {
        log::warn!(
            "Re = {re} lies outside the training range [{}, {}]; the prediction is an extrapolation",
            w.re_range.0,
            w.re_range.1
        );
    }
    let seq = w.predict(&params, steps)?;
    let ds = Dataset {
        kind: GeneratorKind::External,
        grid: w.arch.grid,
        field,
        dt,
        n_steps: steps,
        re_range: (re, re),
        seed: cfg.seed,
        normalization: None,
        generator: None,
        samples: vec![seq],
    };
    save_dataset(&ds, &out)?;
    for &t in &cfg.snapshots {
        write_field_pgm(&out.join(format!("snapshot_t{t:03}.pgm")), ds.samples[0].frame(t), ds.grid.ny, ds.grid.nx)?;
    }
    write_config(&out.join("config.json"), &cfg)?;
    println!(
        "predicted {steps} frames at Re = {re} ({} snapshot images) into {}",
        cfg.snapshots.len(),
        out.display()
    );
    Ok(())
}

fn random_probes(ny: usize, nx: usize, seed: u64) -> Vec<[usize; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3).map(|_| [rng.random_range(0..nx), rng.random_range(0..ny)]).collect()
}

fn evaluate(cli: &Cli, a: &EvaluateArgs, mut cfg: EvaluateConfig) -> Result<()> {
    if a.model.is_some() {
        cfg.model = a.model.clone();
    }
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    set(&mut cfg.seed, &cli.seed);
    set(&mut cfg.points, &a.points);
    set(&mut cfg.snapshots, &a.snapshots);
    set(&mut cfg.holdout.every, &a.holdout_every);
    set(&mut cfg.holdout.offset, &a.holdout_offset);
    if a.point_sample.is_some() {
        cfg.point_sample = a.point_sample;
    }
    if a.steps.is_some() {
        cfg.steps = a.steps;
    }
    let out = required(&cfg.out, "--out")?.clone();
    let w = load_model(required(&cfg.model, "--model")?)?;
    let ds = apply_holdout(&load_data(required(&cfg.data, "--data")?)?, cfg.holdout, true)?;
    let (ny, nx) = (ds.grid.ny, ds.grid.nx);
    if (ny, nx) != (w.arch.ny(), w.arch.nx()) {
        return Err(Error::InvalidConfig(format!(
            "dataset grid {ny}x{nx} differs from the model grid {}x{}",
            w.arch.ny(),
            w.arch.nx()
        )));
    }
    let steps = *cfg.steps.get_or_insert(ds.n_steps);
    if steps == 0 || steps > ds.n_steps {
        return Err(Error::InvalidConfig(format!(
            "steps = {steps} must lie in 1..={} (dataset length)",
            ds.n_steps
        )));
    }
    if cfg.points.is_empty() {
        cfg.points = random_probes(ny, nx, cfg.seed);
    }
    if let Some(&[i, j]) = cfg.points.iter().find(|&&[i, j]| i >= nx || j >= ny) {
        return Err(Error::IndexOutOfBounds(format!(
            "probe ({i}, {j}) outside the {ny}x{nx} grid (column < {nx}, row < {ny})"
        )));
    }
    if cfg.snapshots.is_empty() {
        cfg.snapshots = vec![0, steps / 2, steps - 1];
        cfg.snapshots.dedup();
    }
    check_snapshots(&cfg.snapshots, steps)?;
    let point_sample = *cfg.point_sample.get_or_insert(ds.len() / 2);
    if point_sample >= ds.len() {
        return Err(Error::IndexOutOfBounds(format!(
            "point sample {point_sample} outside the {} evaluated samples",
            ds.len()
        )));
    }

    let truth: Vec<_> = physical(&ds).iter().map(|s| s.truncated(steps)).collect();
    let results: Vec<Result<(_, ErrorMap)>> = truth.iter().map(|t| predict_and_score(&w, t)).collect();
    create_dir(&out)?;
    let mut maps = Vec::new();
    let mut rows = Vec::new();
    for (id, (t, r)) in truth.iter().zip(&results).enumerate() {
        let re = t.params.re;
        match r {
            Ok((_, map)) => {
                maps.push((id, re, map));
                for &s in &cfg.snapshots {
                    write_pgm(&out.join(format!("err_s{id:03}_t{s:03}.pgm")), map.frame(s), ny, nx)?;
                }
                rows.push(SweepRow::from_outcome(re, &Ok(map.clone())));
            }
            Err(e) => {
                log::warn!("sample {id} (Re = {re}) failed: {e}");
                rows.push(SweepRow {
                    re,
                    error: None,
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    if maps.is_empty() {
        let first = results.iter().find_map(|r| r.as_ref().err()).expect("every sample failed");
        return Err(Error::AllFailed {
            count: truth.len(),
            first: first.to_string(),
        });
    }
    write_errors_csv(&out.join("errors.csv"), &maps)?;
    let sweep = SweepResult::from_rows(rows);
    write_sweep_csv(&out.join("sweep.csv"), &sweep)?;
    let probes: Vec<(usize, usize)> = cfg.points.iter().map(|&[i, j]| (i, j)).collect();
    match &results[point_sample] {
        Ok((pred, _)) => write_points_csv(&out.join("points.csv"), &point_metrics(pred, &truth[point_sample], &probes)?)?,
        Err(e) => log::warn!("no probe metrics: point sample {point_sample} failed ({e})"),
    }
    write_config(&out.join("config.json"), &cfg)?;
    let mean = maps.iter().map(|m| m.2.mean_rel_l2()).sum::<f64>() / maps.len() as f64;
    println!(
        "evaluated {} samples ({} failed): mean relative L2 error {:.4}, Spearman(Re, error) {}",
        truth.len(),
        truth.len() - maps.len(),
        mean,
        sweep.spearman.map(|s| format!("{s:.3}")).unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

fn horizon_study(cli: &Cli, a: &HorizonStudyArgs, mut cfg: HorizonStudyConfig) -> Result<()> {
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if a.eval_data.is_some() {
        cfg.eval_data = a.eval_data.clone();
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    set(&mut cfg.horizons, &a.horizons);
    set(&mut cfg.eval_steps, &a.eval_steps);
    set(&mut cfg.train.seed, &cli.seed);
    apply_train_flags(&a.flags, &mut cfg.train, &mut cfg.architecture)?;
    let out = required(&cfg.out, "--out")?.clone();
    let train_ds = load_data(required(&cfg.data, "--data")?)?;
    let eval_ds = match &cfg.eval_data {
        Some(p) => load_data(p)?,
        None => train_ds.clone(),
    };
    let first = cfg.horizons.first().copied().unwrap_or(1);
    cfg.train.horizon_train = first;
    cfg.train.validate()?;
    let arch = cfg.architecture.resolve(train_ds.grid, first);
    cfg.architecture.horizon_train = None;
    arch.validate()?;
    let train_ds = normalize_dataset(&train_ds);
    let mut log_epoch = |h: usize, r: &EpochRecord| progress(format!("T = {h}: "))(r);
    let study = horizon_study_with(&train_ds, &eval_ds, &cfg.horizons, cfg.eval_steps, &cfg.train, &arch, &mut log_epoch)?;
    create_dir(&out)?;
    write_horizon_csv(&out.join("horizon.csv"), &study)?;
    write_config(&out.join("config.json"), &cfg)?;
    let name = |h: Option<usize>| h.map(|h| h.to_string()).unwrap_or_else(|| "none".into());
    println!(
        "best horizon by MSE: {}; best horizon by MI: {} ({} of {} rows succeeded)",
        name(study.best_by_mse()),
        name(study.best_by_mi()),
        study.rows.iter().filter(|r| !r.failed()).count(),
        study.rows.len()
    );
    if study.rows.iter().all(|r| r.failed()) {
        return Err(Error::AllFailed {
            count: study.rows.len(),
            first: study.rows[0].stop_reason.clone(),
        });
    }
    Ok(())
}
