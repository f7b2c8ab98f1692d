use std::fs;
use std::path::Path;
use std::process::Command;

use dyncgan::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use dyncgan::datagen::load_dataset;
use dyncgan::model::load_checkpoint;
use dyncgan::training::read_history_csv;
use proptest::prelude::*;

const SMALL_NET: &[&str] = &[
    "--latent-dim",
    "4",
    "--encoder-layers",
    "4",
    "--dynamics-layers",
    "8",
    "--decoder-seed-channels",
    "4",
    "--decoder-channels",
    "4,4,2",
    "--disc-channels",
    "2,4,4",
];

fn dyncgan(args: &[&str]) -> i32 {
    run(std::iter::once("dyncgan").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Six wake samples, 16x32, 30 steps.
fn wake_data(dir: &Path) -> String {
    let d = dir.join("data");
    let code = dyncgan(&[
        "gen-data", "--case", "wake", "--n-samples", "6", "--steps", "30", "--grid", "16x32", "--out", p(&d),
        "--seed", "1",
    ]);
    assert_eq!(code, EXIT_OK);
    d.to_str().unwrap().to_string()
}

/// Trains the small network for 3 epochs; flags in `extra` replace the defaults.
fn train_small(data: &str, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["train", "--data", data, "--out", p(out)];
    let overridden = |flag: &str| extra.iter().any(|e| e.split('=').next() == Some(flag));
    let defaults = [["--horizon", "5"], ["--max-epochs", "3"], ["--lr", "1e-3"]];
    for pair in defaults.iter().map(|d| &d[..]).chain(SMALL_NET.chunks(2)) {
        if !overridden(pair[0]) {
            args.extend_from_slice(pair);
        }
    }
    args.extend_from_slice(extra);
    dyncgan(&args)
}

#[test]
fn gen_data_writes_manifest_and_rejects_bad_grids() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let ds = load_dataset(&data).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!((ds.grid.ny, ds.grid.nx, ds.n_steps), (16, 32, 30));
    assert_eq!(ds.reynolds_numbers()[0], 100.0);
    assert!(Path::new(&data).join("config.json").exists());

    let single = dir.path().join("one");
    assert_eq!(dyncgan(&["gen-data", "--n-samples", "1", "--steps", "3", "--grid", "16x16", "--out", p(&single)]), EXIT_OK);
    assert_eq!(load_dataset(&single).unwrap().reynolds_numbers(), vec![100.0]);

    let bad = dir.path().join("bad");
    assert_eq!(dyncgan(&["gen-data", "--grid", "50x96", "--out", p(&bad)]), EXIT_USAGE);
    assert!(!bad.exists());
    assert_eq!(dyncgan(&["gen-data", "--re-min", "300", "--re-max", "200", "--out", p(&bad)]), EXIT_USAGE);
    assert_eq!(dyncgan(&["gen-data", "--grid", "16x16"]), EXIT_USAGE, "--out is required");
}

#[test]
fn train_records_preset_and_reproduces_from_stored_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let run_dir = dir.path().join("R");
    assert_eq!(train_small(&data, &run_dir, &["--loss-preset", "streamwise", "--seed", "7"]), EXIT_OK);
    for f in ["config.json", "history.csv", "model.ckpt", "model_last.ckpt"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("config.json")).unwrap()).unwrap();
    let lw = &cfg["train"]["loss_weights"];
    assert_eq!((lw["beta1"].as_f64(), lw["beta2"].as_f64(), lw["gamma"].as_f64()), (Some(100.0), Some(10.0), Some(10.0)));
    assert_eq!(cfg["train"]["seed"].as_u64(), Some(7));

    let rerun = dir.path().join("R2");
    let cfg_path = run_dir.join("config.json");
    assert_eq!(dyncgan(&["train", "--config", p(&cfg_path), "--out", p(&rerun)]), EXIT_OK);
    let a = read_history_csv(&run_dir.join("history.csv")).unwrap();
    let b = read_history_csv(&rerun.join("history.csv")).unwrap();
    assert_eq!(a[0], b[0]);
    assert_eq!(a, b);
    assert_eq!(fs::read(run_dir.join("model.ckpt")).unwrap(), fs::read(rerun.join("model.ckpt")).unwrap());
}

#[test]
fn ablation_flags_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let cfg_path = dir.path().join("train.json");
    fs::write(&cfg_path, r#"{"train": {"lr": 0.5, "max_epochs": 2, "loss_weights": {"beta1": 1, "beta2": 1, "gamma": 1}}}"#)
        .unwrap();
    let out = dir.path().join("A");
    let code = train_small(&data, &out, &["--config", p(&cfg_path), "--beta2", "0", "--gamma", "0"]);
    assert_eq!(code, EXIT_OK);
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    // the flag wins over the file, the file over the defaults
    assert_eq!(cfg["train"]["lr"].as_f64(), Some(1e-3));
    assert_eq!(cfg["train"]["max_epochs"].as_u64(), Some(3));
    assert_eq!(cfg["train"]["loss_weights"]["beta1"].as_f64(), Some(1.0));
    assert_eq!(cfg["train"]["loss_weights"]["beta2"].as_f64(), Some(0.0));
    let hist = read_history_csv(&out.join("history.csv")).unwrap();
    assert!(hist.iter().all(|r| r.loss_adv_d == 0.0));

    fs::write(&cfg_path, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
    assert_eq!(train_small(&data, &dir.path().join("B"), &["--config", p(&cfg_path)]), EXIT_USAGE);
    assert_eq!(train_small(&data, &dir.path().join("C"), &["--loss-preset", "sideways"]), EXIT_USAGE);
    assert_eq!(train_small(&data, &dir.path().join("D"), &["--horizon", "31"]), EXIT_USAGE);
    let missing = dir.path().join("nowhere");
    assert_eq!(train_small(p(&missing), &dir.path().join("E"), &[]), EXIT_USAGE);
}

#[test]
fn predict_contract_extrapolation_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let run_dir = dir.path().join("R");
    assert_eq!(train_small(&data, &run_dir, &[]), EXIT_OK);
    let model = run_dir.join("model.ckpt");

    let out = dir.path().join("P");
    let code = dyncgan(&["predict", "--model", p(&model), "--re", "150", "--steps", "50", "--snapshots", "0,24,49", "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let ds = load_dataset(&out).unwrap();
    assert_eq!(ds.n_steps, 50);
    assert_eq!(ds.reynolds_numbers(), vec![150.0]);
    let w = load_checkpoint(&model).unwrap();
    assert_eq!(ds.dt, 0.25);
    assert_eq!(ds.grid, w.arch.grid);
    let pgms: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "pgm"))
        .collect();
    assert_eq!(pgms.len(), 3);
    assert!(fs::read(out.join("snapshot_t049.pgm")).unwrap().starts_with(b"P5\n32 16\n255\n"));

    let far = dir.path().join("P2");
    assert_eq!(dyncgan(&["predict", "--model", p(&model), "--re", "5000", "--steps", "4", "--out", p(&far)]), EXIT_OK);
    assert_eq!(
        dyncgan(&["predict", "--model", p(&model), "--re", "150", "--steps", "4", "--snapshots", "4", "--out", p(&far)]),
        EXIT_USAGE
    );
    assert_eq!(dyncgan(&["predict", "--model", p(&model), "--re=-3", "--out", p(&far)]), EXIT_USAGE);

    let junk = dir.path().join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(dyncgan(&["predict", "--model", p(&junk), "--re", "150", "--out", p(&far)]), EXIT_FAILURE);
}

#[test]
fn predict_reports_divergence_as_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let run_dir = dir.path().join("R");
    assert_eq!(train_small(&data, &run_dir, &[]), EXIT_OK);
    let mut w = load_checkpoint(run_dir.join("model.ckpt")).unwrap();
    // an expanding linear dynamics block: phi doubles every step
    let last = w.generator.dynamics.len() - 1;
    for (k, layer) in w.generator.dynamics.iter_mut().enumerate() {
        layer.bias.iter_mut().for_each(|b| *b = 0.0);
        layer.weight.iter_mut().for_each(|x| *x = 0.0);
        let scale = if k == last { 2.0 } else { 1.0 };
        for i in 0..layer.outputs.min(layer.inputs) {
            layer.weight[i * layer.inputs + i] = scale;
        }
    }
    let enc = w.generator.encoder.last_mut().unwrap();
    enc.weight.iter_mut().for_each(|x| *x = 0.0);
    enc.bias.iter_mut().for_each(|b| *b = 1.0);
    let bad = dir.path().join("diverging.ckpt");
    dyncgan::model::save_checkpoint(&w, &bad).unwrap();
    let out = dir.path().join("P");
    assert_eq!(dyncgan(&["predict", "--model", p(&bad), "--re", "150", "--steps", "40", "--out", p(&out)]), EXIT_FAILURE);
}

#[test]
fn evaluate_outputs_and_probe_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let run_dir = dir.path().join("R");
    assert_eq!(train_small(&data, &run_dir, &["--holdout-every", "3"]), EXIT_OK);
    let model = run_dir.join("model.ckpt");
    let out = dir.path().join("E");
    let code = dyncgan(&[
        "evaluate", "--model", p(&model), "--data", &data, "--holdout-every", "3", "--points", "10,10", "20,3", "5,15", "--out", p(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    for f in ["errors.csv", "points.csv", "sweep.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let points = fs::read_to_string(out.join("points.csv")).unwrap();
    let probes: Vec<(String, String)> = points
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let expected = [("10", "10"), ("20", "3"), ("5", "15")].map(|(a, b)| (a.to_string(), b.to_string()));
    assert_eq!(probes, expected);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // samples 0 and 3 are held out, plus the summary row
    assert_eq!(sweep.lines().count(), 1 + 2 + 1);
    assert!(sweep.lines().last().unwrap().starts_with("spearman,"));
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 2 * 30);
    assert!(out.join("err_s001_t029.pgm").exists());

    let bad = dyncgan(&["evaluate", "--model", p(&model), "--data", &data, "--points", "40,1", "--out", p(&out)]);
    assert_eq!(bad, EXIT_USAGE);
    let default_probes = dir.path().join("E2");
    assert_eq!(dyncgan(&["evaluate", "--model", p(&model), "--data", &data, "--seed", "5", "--out", p(&default_probes)]), EXIT_OK);
    assert_eq!(fs::read_to_string(default_probes.join("points.csv")).unwrap().lines().count(), 4);
}

#[test]
fn horizon_study_rows_summary_and_early_validation() {
    let dir = tempfile::tempdir().unwrap();
    let data = wake_data(dir.path());
    let out = dir.path().join("H");
    let mut args = vec!["horizon-study", "--data", &data, "--horizons", "2,4", "--eval-steps", "25", "--max-epochs", "2", "--out", p(&out)];
    args.extend_from_slice(SMALL_NET);
    assert_eq!(dyncgan(&args), EXIT_OK);
    let csv = fs::read_to_string(out.join("horizon.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "T_train,eval_steps,mse,mi,stop_reason,epochs_run");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("2,25,") && rows[2].starts_with("4,25,"));

    let single = dir.path().join("H1");
    let mut args = vec!["horizon-study", "--data", &data, "--horizons", "3", "--eval-steps", "20", "--max-epochs", "1", "--out", p(&single)];
    args.extend_from_slice(SMALL_NET);
    assert_eq!(dyncgan(&args), EXIT_OK);
    assert_eq!(fs::read_to_string(single.join("horizon.csv")).unwrap().lines().count(), 2);

    let never = dir.path().join("H2");
    let args = ["horizon-study", "--data", &data, "--horizons", "5", "--eval-steps", "200", "--out", p(&never)];
    assert_eq!(dyncgan(&args), EXIT_USAGE);
    assert!(!never.exists(), "nothing is written before validation passes");
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = wake_data(a.path());
    let db = wake_data(b.path());
    for f in ["manifest.json", "sample_0000.f32", "sample_0005.f32"] {
        assert_eq!(fs::read(Path::new(&da).join(f)).unwrap(), fs::read(Path::new(&db).join(f)).unwrap(), "{f}");
    }
    let (ra, rb) = (a.path().join("R"), b.path().join("R"));
    assert_eq!(train_small(&da, &ra, &[]), EXIT_OK);
    assert_eq!(train_small(&db, &rb, &[]), EXIT_OK);
    for f in ["history.csv", "model.ckpt", "model_last.ckpt"] {
        assert_eq!(fs::read(ra.join(f)).unwrap(), fs::read(rb.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dyncgan");
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["gen-data", "--grid", "50x96", "--out", p(dir.path())]), Some(2));
    assert_eq!(status(&["no-such-command"]), Some(2));
    let out = Command::new(bin).args(["gen-data", "--grid", "50x96", "--out", p(dir.path())]).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("divisible by 8"), "{stderr}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn grids_not_divisible_by_eight_exit_two(ny in 8usize..80, nx in 8usize..80) {
        prop_assume!(ny % 8 != 0 || nx % 8 != 0);
        let dir = tempfile::tempdir().unwrap();
        let grid = format!("{ny}x{nx}");
        let out = dir.path().join("d");
        prop_assert_eq!(dyncgan(&["gen-data", "--grid", &grid, "--steps", "2", "--n-samples", "2", "--out", p(&out)]), EXIT_USAGE);
    }

    #[test]
    fn invalid_numeric_flags_exit_two(which in 0usize..4, value in -5.0f64..0.0) {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x");
        let flag = format!("{}={value}", ["--lr", "--beta1", "--beta2", "--gamma"][which]);
        let data = dir.path().join("absent");
        prop_assert_eq!(train_small(p(&data), &out, &[&flag]), EXIT_USAGE);
    }

    #[test]
    fn nonpositive_reynolds_or_dt_exit_two(re in -100.0f64..=0.0, use_dt in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let flag = format!("{}={re}", if use_dt { "--dt" } else { "--re-min" });
        let args = ["gen-data", "--grid", "16x16", "--steps", "2", "--n-samples", "2", &flag, "--out", p(&out)];
        prop_assert_eq!(dyncgan(&args), EXIT_USAGE);
    }
}
