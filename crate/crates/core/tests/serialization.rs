mod common;

use std::fs;

use dyncgan::datagen::{load_dataset, save_dataset, FlowSequence, SimulationParams, Units};
use dyncgan::model::{read_checkpoint, save_checkpoint};
use dyncgan::Error;
use proptest::prelude::*;

fn is_format(e: &Error) -> bool {
    matches!(e, Error::Format { .. })
}

#[test]
fn dataset_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::wake_dataset(3, 6, 16, 24);
    save_dataset(&ds, dir.path().join("a")).unwrap();
    let back = load_dataset(dir.path().join("a")).unwrap();
    assert_eq!(back, ds);
    save_dataset(&back, dir.path().join("b")).unwrap();
    for f in ["manifest.json", "sample_0000.f32", "sample_0002.f32"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let w = common::small_model(11);
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&w, &a).unwrap();
    let (back, warnings) = read_checkpoint(&a).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(back, w);
    save_checkpoint(&back, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn every_dataset_corruption_is_a_format_error() {
    let ds = common::wake_dataset(3, 4, 16, 16);
    for (name, damage) in common::dataset_corruptions() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        damage(dir.path());
        match load_dataset(dir.path()) {
            Err(e) => assert!(is_format(&e), "{name}: {e}"),
            Ok(_) => panic!("{name}: loaded without error"),
        }
    }
}

#[test]
fn every_checkpoint_corruption_is_a_format_error() {
    let w = common::small_model(2);
    for (name, damage) in common::checkpoint_corruptions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&w, &path).unwrap();
        damage(&path);
        match read_checkpoint(&path) {
            Err(e) => assert!(is_format(&e), "{name}: {e}"),
            Ok(_) => panic!("{name}: loaded without error"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn any_finite_frames_survive_the_dataset_format(
        bits in prop::collection::vec(any::<u32>(), 2 * 8 * 8),
        re in 1.0f64..1e4,
    ) {
        let frames: Vec<f32> = bits
            .iter()
            .map(|&b| f32::from_bits(b))
            .map(|v| if v.is_finite() { v } else { -0.0 })
            .collect();
        let params = SimulationParams { re, dt: 0.1, n_steps: 2, field: dyncgan::datagen::FieldKind::Vorticity };
        let seq = FlowSequence::new(params, 8, 8, frames.clone()).unwrap();
        let mut ds = common::wake_dataset(1, 2, 8, 8);
        ds.normalization = None;
        ds.samples = vec![FlowSequence { units: Units::Physical, ..seq }];
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        let got: Vec<u32> = back.samples[0].frames.iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = frames.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(back.samples[0].params.re.to_bits(), re.to_bits());
    }
}
