//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use dyncgan::datagen::{generate_dataset, normalize_dataset, Dataset, DatasetSpec, FieldKind, GeneratorConfig, GeneratorKind, Grid, SimulationParams};
use dyncgan::model::{init_weights, ArchitectureConfig, ModelWeights};

/// A small normalized wake dataset.
pub fn wake_dataset(n: usize, steps: usize, ny: usize, nx: usize) -> Dataset {
    let spec = DatasetSpec {
        kind: GeneratorKind::Wake,
        re_min: 100.0,
        re_max: 200.0,
        n_samples: n,
        template: SimulationParams {
            re: 100.0,
            dt: 0.25,
            n_steps: steps,
            field: FieldKind::TransverseVelocity,
        },
        grid: Grid::new(ny, nx, 8.0, 8.0 * (nx - 1) as f64 / (ny - 1) as f64).unwrap(),
        seed: 3,
    };
    normalize_dataset(&generate_dataset(&spec, &GeneratorConfig::default()).unwrap())
}

pub fn small_model(seed: u64) -> ModelWeights<f32> {
    let mut arch = ArchitectureConfig::new(Grid::unit_square(16).unwrap(), 4);
    arch.latent_dim = 8;
    arch.encoder_layers = vec![8];
    arch.dynamics_layers = vec![16];
    let mut w = init_weights::<f32>(&arch, seed).unwrap();
    w.re_range = (100.0, 200.0);
    w.provenance.insert("seed".into(), seed.to_string());
    w
}

pub type Corruption = (&'static str, fn(&Path));

fn edit_text(path: &Path, f: impl Fn(String) -> String) {
    let text = fs::read_to_string(path).unwrap();
    fs::write(path, f(text)).unwrap();
}

fn edit_bytes(path: &Path, f: impl Fn(&mut Vec<u8>)) {
    let mut bytes = fs::read(path).unwrap();
    f(&mut bytes);
    fs::write(path, bytes).unwrap();
}

/// Damage applied to a saved dataset directory; each must fail to load with a format error.
pub fn dataset_corruptions() -> Vec<Corruption> {
    vec![
        ("manifest is not JSON", |d| fs::write(d.join("manifest.json"), "{ truncated").unwrap()),
        ("unknown format version", |d| {
            edit_text(&d.join("manifest.json"), |t| t.replace("\"format_version\": 1", "\"format_version\": 2"))
        }),
        ("n_samples disagrees with the entries", |d| {
            edit_text(&d.join("manifest.json"), |t| t.replace("\"n_samples\": 3", "\"n_samples\": 4"))
        }),
        ("sample file truncated", |d| edit_bytes(&d.join("sample_0001.f32"), |b| b.truncate(b.len() - 4))),
        ("sample file has trailing bytes", |d| edit_bytes(&d.join("sample_0002.f32"), |b| b.extend([0, 0]))),
        ("grid changed under the data", |d| {
            edit_text(&d.join("manifest.json"), |t| t.replacen("\"grid\": [\n    16,", "\"grid\": [\n    8,", 1))
        }),
        ("non-finite value", |d| edit_bytes(&d.join("sample_0000.f32"), |b| b[..4].copy_from_slice(&f32::NAN.to_le_bytes()))),
        ("duplicate Reynolds numbers", |d| {
            edit_text(&d.join("manifest.json"), |t| t.replace("\"re\": 150.0", "\"re\": 100.0"))
        }),
    ]
}

/// Damage applied to a saved checkpoint file; each must fail to load with a format error.
pub fn checkpoint_corruptions() -> Vec<Corruption> {
    vec![
        ("missing magic line", |p| edit_bytes(p, |b| b[0] = b'X')),
        ("header terminator missing", |p| {
            edit_bytes(p, |b| {
                let t = b"END-HEADER";
                let at = b.windows(t.len()).position(|w| w == t).unwrap();
                b[at] = b'#';
            })
        }),
        ("header is not JSON", |p| {
            edit_bytes(p, |b| {
                let at = b.iter().position(|&c| c == b'{').unwrap();
                b[at] = b'[';
            })
        }),
        ("schema version bumped", |p| edit_header(p, |t| t.replace("\"schema_version\": 1", "\"schema_version\": 9"))),
        ("tensor renamed", |p| edit_header(p, |t| t.replacen("generator.encoder.0.weight", "generator.encoder.0.w", 1))),
        ("blob truncated", |p| edit_bytes(p, |b| b.truncate(b.len() - 4))),
        ("blob has trailing bytes", |p| edit_bytes(p, |b| b.extend([1, 2, 3, 4]))),
        ("declared blob size wrong", |p| {
            edit_header(p, |t| {
                let at = t.find("\"blob_bytes\": ").unwrap() + "\"blob_bytes\": ".len();
                let end = at + t[at..].find(|c: char| !c.is_ascii_digit()).unwrap();
                let n: usize = t[at..end].parse().unwrap();
                format!("{}{}{}", &t[..at], n + 4, &t[end..])
            })
        }),
        ("architecture invalid", |p| edit_header(p, |t| t.replacen("\"latent_dim\": 8", "\"latent_dim\": 0", 1))),
    ]
}

/// Rewrites the JSON header of a checkpoint, keeping the blob.
fn edit_header(path: &Path, f: impl Fn(String) -> String) {
    let bytes = fs::read(path).unwrap();
    let t = b"\nEND-HEADER\n";
    let at = bytes.windows(t.len()).position(|w| w == t).unwrap();
    let header = String::from_utf8(bytes[..at].to_vec()).unwrap();
    let mut out = f(header).into_bytes();
    out.extend_from_slice(&bytes[at..]);
    fs::write(path, out).unwrap();
}
