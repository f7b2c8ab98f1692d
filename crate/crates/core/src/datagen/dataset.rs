use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cavity::{solve_cavity, SolverConfig};
use super::wake::{synth_cylinder_wake, WakeGeometry};
use super::{FieldKind, FlowSequence, Grid, SimulationParams, Units};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Cavity,
    Wake,
    /// Data produced elsewhere and dropped into the same layout.
    External,
}

/// Global affine map of a dataset onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl NormStats {
    pub fn from_range(min: f64, max: f64) -> Self {
        NormStats {
            min,
            max,
            degenerate: !(max > min),
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            self.min + 0.5 * (y + 1.0) * (self.max - self.min)
        }
    }

    /// Physical-unit copy of a normalized sequence; physical input is returned as is.
    pub fn to_physical(&self, seq: &FlowSequence) -> FlowSequence {
        if seq.units == Units::Physical {
            return seq.clone();
        }
        FlowSequence {
            frames: seq.frames.iter().map(|&y| self.denormalize(y as f64) as f32).collect(),
            units: Units::Physical,
            ..seq.clone()
        }
    }
}

/// Generator settings that are not part of the per-sample parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub solver: SolverConfig,
    pub wake: WakeGeometry,
}

/// What to generate: a Reynolds sweep over `[re_min, re_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub kind: GeneratorKind,
    pub re_min: f64,
    pub re_max: f64,
    pub n_samples: usize,
    pub template: SimulationParams,
    pub grid: Grid,
    pub seed: u64,
}

impl DatasetSpec {
    /// Evenly spaced Reynolds numbers, both endpoints included.
    pub fn reynolds_numbers(&self) -> Vec<f64> {
        let n = self.n_samples;
        if n == 1 {
            return vec![self.re_min];
        }
        let step = (self.re_max - self.re_min) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.re_max
                } else {
                    self.re_min + i as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: GeneratorKind,
    pub grid: Grid,
    pub field: FieldKind,
    pub dt: f64,
    pub n_steps: usize,
    pub re_range: (f64, f64),
    pub seed: u64,
    pub normalization: Option<NormStats>,
    pub generator: Option<GeneratorConfig>,
    pub samples: Vec<FlowSequence>,
}

/// Per-sample entry of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub id: usize,
    pub re: f64,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: GeneratorKind,
    field: FieldKind,
    grid: [usize; 2],
    dt: f64,
    n_steps: usize,
    n_samples: usize,
    re_range: [f64; 2],
    seed: u64,
    normalization: Option<NormStats>,
    samples: Vec<SampleInfo>,
    /// Physical `[ly, lx]`; optional so external data may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extent: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorConfig>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn reynolds_numbers(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.params.re).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (id, s) in self.samples.iter().enumerate() {
            if s.ny != self.grid.ny || s.nx != self.grid.nx {
                return Err(Error::ShapeMismatch(format!(
                    "sample {id} is {}x{}, dataset grid is {}x{}",
                    s.ny, s.nx, self.grid.ny, self.grid.nx
                )));
            }
            if s.params.field != self.field
                || s.params.dt != self.dt
                || s.params.n_steps != self.n_steps
            {
                return Err(Error::ShapeMismatch(format!(
                    "sample {id} disagrees with the dataset field/dt/n_steps"
                )));
            }
            s.check()?;
        }
        let mut res = self.reynolds_numbers();
        res.sort_by(f64::total_cmp);
        if res.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams(
                "dataset Reynolds numbers must be pairwise distinct".into(),
            ));
        }
        Ok(())
    }

    /// Dataset restricted to the given sample indices (in that order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    /// Splits off every `every`-th sample, starting at `offset`, as a held-out set.
    pub fn split_interleaved(&self, every: usize, offset: usize) -> (Dataset, Dataset) {
        let every = every.max(1);
        let (held, train): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|i| i % every == offset % every);
        (self.subset(&train), self.subset(&held))
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            grid: self.grid,
            field: self.field,
            dt: self.dt,
            n_steps: self.n_steps,
            re_range: self.re_range,
            seed: self.seed,
            normalization: self.normalization,
            generator: self.generator,
            samples: Vec::new(),
        }
    }

    fn map_values(&self, units: Units, f: impl Fn(f64) -> f64) -> Dataset {
        let samples = self
            .samples
            .iter()
            .map(|s| FlowSequence {
                frames: s.frames.iter().map(|&x| f(x as f64) as f32).collect(),
                units,
                ..s.clone()
            })
            .collect();
        Dataset {
            samples,
            ..self.clone_meta()
        }
    }

    /// Inverse of [`normalize_dataset`]; a no-op on physical data.
    pub fn denormalized(&self) -> Dataset {
        match self.normalization {
            None => self.clone(),
            Some(stats) => {
                let mut out = self.map_values(Units::Physical, |y| stats.denormalize(y));
                out.normalization = None;
                out
            }
        }
    }
}

fn generate_one(
    kind: GeneratorKind,
    params: &SimulationParams,
    grid: &Grid,
    gen: &GeneratorConfig,
    seed: u64,
) -> Result<FlowSequence> {
    match kind {
        GeneratorKind::Cavity => solve_cavity(params, grid, &gen.solver, seed),
        GeneratorKind::Wake => synth_cylinder_wake(params, grid, &gen.wake, seed),
        GeneratorKind::External => Err(Error::InvalidConfig(
            "external datasets are loaded, not generated".into(),
        )),
    }
}

/// Runs the chosen generator once per Reynolds number of the sweep.
///
/// Samples are independent tasks and may run concurrently; the result is
/// assembled in sweep order and is identical to a sequential run. The wake
/// generator receives the dataset seed for every sample, so all samples share
/// one initial shedding phase and differ only through Re.
pub fn generate_dataset(spec: &DatasetSpec, gen: &GeneratorConfig) -> Result<Dataset> {
    if !(spec.re_min < spec.re_max) {
        return Err(Error::InvalidParams(format!(
            "re_min = {} must be < re_max = {}",
            spec.re_min, spec.re_max
        )));
    }
    if spec.n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be >= 1".into()));
    }
    spec.grid.validate()?;
    spec.template.validate()?;

    let params: Vec<SimulationParams> = spec
        .reynolds_numbers()
        .into_iter()
        .map(|re| spec.template.with_re(re))
        .collect();
    let run = |p: &SimulationParams| {
        generate_one(spec.kind, p, &spec.grid, gen, spec.seed).map_err(|e| Error::Sample {
            re: p.re,
            source: Box::new(e),
        })
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<FlowSequence>> = {
        use rayon::prelude::*;
        params.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<FlowSequence>> = params.iter().map(run).collect();

    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let ds = Dataset {
        kind: spec.kind,
        grid: spec.grid,
        field: spec.template.field,
        dt: spec.template.dt,
        n_steps: spec.template.n_steps,
        re_range: (spec.re_min, spec.re_max),
        seed: spec.seed,
        normalization: None,
        generator: Some(*gen),
        samples,
    };
    ds.validate()?;
    Ok(ds)
}

/// Maps every frame onto `[-1, 1]` with the global min/max of the dataset.
/// A constant dataset maps to zeros and is flagged degenerate. Data that
/// already carries normalization stats is returned unchanged.
pub fn normalize_dataset(ds: &Dataset) -> Dataset {
    if ds.normalization.is_some() {
        return ds.clone();
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &ds.samples {
        for &x in &s.frames {
            lo = lo.min(x as f64);
            hi = hi.max(x as f64);
        }
    }
    if lo > hi {
        // no values at all
        lo = 0.0;
        hi = 0.0;
    }
    let stats = NormStats::from_range(lo, hi);
    let mut out = ds.map_values(Units::Normalized, |x| stats.normalize(x));
    out.normalization = Some(stats);
    out
}

fn sample_file(id: usize) -> String {
    format!("sample_{id:04}.f32")
}

pub(crate) fn write_f32_le(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!(
                "holds {} bytes, expected {} ({} float32 values)",
                bytes.len(),
                expected * 4,
                expected
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.len());
    for (id, s) in ds.samples.iter().enumerate() {
        let file = sample_file(id);
        write_f32_le(&dir.join(&file), &s.frames)?;
        entries.push(SampleInfo {
            id,
            re: s.params.re,
            file,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ds.kind,
        field: ds.field,
        grid: [ds.grid.ny, ds.grid.nx],
        dt: ds.dt,
        n_steps: ds.n_steps,
        n_samples: ds.len(),
        re_range: [ds.re_range.0, ds.re_range.1],
        seed: ds.seed,
        normalization: ds.normalization,
        samples: entries,
        extent: Some([ds.grid.ly, ds.grid.lx]),
        generator: ds.generator,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported format_version {}", m.format_version),
        ));
    }
    if m.samples.len() != m.n_samples {
        return Err(Error::format(
            &path,
            format!("n_samples = {} but {} sample entries", m.n_samples, m.samples.len()),
        ));
    }
    let [ny, nx] = m.grid;
    let [ly, lx] = m.extent.unwrap_or([1.0, 1.0]);
    let grid = Grid::new(ny, nx, ly, lx).map_err(|e| Error::format(&path, e.to_string()))?;
    let units = if m.normalization.is_some() {
        Units::Normalized
    } else {
        Units::Physical
    };
    let mut samples = Vec::with_capacity(m.samples.len());
    for entry in &m.samples {
        let frames = read_f32_le(&dir.join(&entry.file), m.n_steps * ny * nx)?;
        let params = SimulationParams {
            re: entry.re,
            dt: m.dt,
            n_steps: m.n_steps,
            field: m.field,
        };
        let mut seq = FlowSequence::new(params, ny, nx, frames)
            .map_err(|e| Error::format(dir.join(&entry.file), e.to_string()))?;
        seq.units = units;
        samples.push(seq);
    }
    let ds = Dataset {
        kind: m.kind,
        grid,
        field: m.field,
        dt: m.dt,
        n_steps: m.n_steps,
        re_range: (m.re_range[0], m.re_range[1]),
        seed: m.seed,
        normalization: m.normalization,
        generator: m.generator,
        samples,
    };
    ds.validate()
        .map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(re: f64, values: Vec<f32>) -> FlowSequence {
        let params = SimulationParams {
            re,
            dt: 1.0,
            n_steps: 1,
            field: FieldKind::StreamwiseVelocity,
        };
        FlowSequence::new(params, 8, 8, values).unwrap()
    }

    fn toy(values: &[Vec<f32>]) -> Dataset {
        Dataset {
            kind: GeneratorKind::External,
            grid: Grid::unit_square(8).unwrap(),
            field: FieldKind::StreamwiseVelocity,
            dt: 1.0,
            n_steps: 1,
            re_range: (100.0, 200.0),
            seed: 0,
            normalization: None,
            generator: None,
            samples: values
                .iter()
                .enumerate()
                .map(|(i, v)| seq(100.0 + i as f64, v.clone()))
                .collect(),
        }
    }

    #[test]
    fn affine_endpoints() {
        let mut v = vec![0.5f32; 64];
        v[0] = -2.0;
        v[1] = 3.0;
        let n = normalize_dataset(&toy(&[v]));
        let f = &n.samples[0].frames;
        assert_eq!(f[0], -1.0);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[2], 0.0);
        assert_eq!(n.samples[0].units, Units::Normalized);
    }

    #[test]
    fn constant_dataset_is_degenerate() {
        let n = normalize_dataset(&toy(&[vec![4.0; 64], vec![4.0; 64]]));
        let stats = n.normalization.unwrap();
        assert!(stats.degenerate);
        assert!(n.samples.iter().all(|s| s.frames.iter().all(|&x| x == 0.0)));
        assert!(n.denormalized().samples[0].frames.iter().all(|&x| x == 4.0));
    }

    #[test]
    fn normalize_roundtrip_and_idempotence() {
        let v: Vec<f32> = (0..64).map(|i| -2.0 + 5.0 * (i as f32 / 63.0).powi(2)).collect();
        let ds = toy(&[v]);
        let n = normalize_dataset(&ds);
        assert_eq!(normalize_dataset(&n), n);
        let back = n.denormalized();
        let err = back.samples[0]
            .frames
            .iter()
            .zip(&ds.samples[0].frames)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6, "roundtrip error {err}");
    }

    #[test]
    fn sweep_spacing_and_degenerate_sweep() {
        let spec = DatasetSpec {
            kind: GeneratorKind::Wake,
            re_min: 100.0,
            re_max: 200.0,
            n_samples: 100,
            template: SimulationParams {
                re: 1.0,
                dt: 0.5,
                n_steps: 1,
                field: FieldKind::StreamwiseVelocity,
            },
            grid: Grid::unit_square(8).unwrap(),
            seed: 0,
        };
        let res = spec.reynolds_numbers();
        assert_eq!(res.len(), 100);
        assert_eq!(res[0], 100.0);
        assert_eq!(res[99], 200.0);
        let gap = 100.0 / 99.0;
        for w in res.windows(2) {
            assert!(((w[1] - w[0]) - gap).abs() < 1e-9);
        }
        let one = DatasetSpec {
            n_samples: 1,
            ..spec
        };
        assert_eq!(one.reynolds_numbers(), vec![100.0]);
    }

    #[test]
    fn rejects_duplicate_reynolds_numbers() {
        let mut ds = toy(&[vec![0.0; 64], vec![1.0; 64]]);
        ds.samples[1].params.re = ds.samples[0].params.re;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn generator_errors_carry_the_reynolds_number() {
        let spec = DatasetSpec {
            kind: GeneratorKind::Cavity,
            re_min: 50.0,
            re_max: 150.0,
            n_samples: 3,
            template: SimulationParams {
                re: 1.0,
                dt: 0.1,
                n_steps: 1,
                field: FieldKind::Vorticity,
            },
            grid: Grid::unit_square(8).unwrap(),
            seed: 0,
        };
        match generate_dataset(&spec, &GeneratorConfig::default()) {
            Err(Error::Sample { re, .. }) => assert_eq!(re, 50.0),
            other => panic!("expected a sample error, got {other:?}"),
        }
    }

    #[test]
    fn interleaved_split_partitions_samples() {
        let ds = toy(&(0..10).map(|i| vec![i as f32; 64]).collect::<Vec<_>>());
        let (train, held) = ds.split_interleaved(5, 2);
        assert_eq!(train.len(), 8);
        assert_eq!(held.reynolds_numbers(), vec![102.0, 107.0]);
    }
}
