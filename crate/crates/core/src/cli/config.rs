//! Per-subcommand configuration files. Every struct rejects unknown keys and
//! is written back to the output directory fully resolved.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::{FieldKind, GeneratorConfig, GeneratorKind, Grid};
use crate::error::{Error, Result};
use crate::model::ArchitectureConfig;
use crate::training::TrainConfig;

pub const WAKE_HEIGHT: f64 = 8.0;
pub const WAKE_DT: f64 = 0.25;
pub const CAVITY_DT: f64 = 0.1;

/// Reads a JSON config, or the defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn write_config(path: &Path, cfg: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(cfg).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Wake,
    Cavity,
}

impl Case {
    pub fn kind(self) -> GeneratorKind {
        match self {
            Case::Wake => GeneratorKind::Wake,
            Case::Cavity => GeneratorKind::Cavity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub case: Case,
    pub re_min: f64,
    pub re_max: f64,
    pub n_samples: usize,
    pub steps: usize,
    /// `[ny, nx]`.
    pub grid: [usize; 2],
    /// Physical `[ly, lx]`; defaults to a unit square for the cavity and to a
    /// channel of height 8 diameters with square cells for the wake.
    pub extent: Option<[f64; 2]>,
    /// Defaults to `v` for the wake and `w` for the cavity.
    pub field: Option<FieldKind>,
    pub dt: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub generator: GeneratorConfig,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            case: Case::Wake,
            re_min: 100.0,
            re_max: 200.0,
            n_samples: 100,
            steps: 50,
            grid: [48, 96],
            extent: None,
            field: None,
            dt: None,
            seed: 0,
            out: None,
            generator: GeneratorConfig::default(),
        }
    }
}

impl GenDataConfig {
    /// Fills the case-dependent defaults.
    pub fn resolve(&mut self) {
        let [ny, nx] = self.grid;
        self.extent.get_or_insert(match self.case {
            Case::Cavity => [1.0, 1.0],
            Case::Wake => [WAKE_HEIGHT, WAKE_HEIGHT * nx.saturating_sub(1) as f64 / ny.saturating_sub(1).max(1) as f64],
        });
        self.field.get_or_insert(match self.case {
            Case::Wake => FieldKind::TransverseVelocity,
            Case::Cavity => FieldKind::Vorticity,
        });
        self.dt.get_or_insert(match self.case {
            Case::Wake => WAKE_DT,
            Case::Cavity => CAVITY_DT,
        });
    }

    pub fn grid(&self) -> Result<Grid> {
        let [ny, nx] = self.grid;
        if ny % 8 != 0 || nx % 8 != 0 {
            return Err(Error::InvalidGrid(format!(
                "{ny}x{nx}: both dimensions must be divisible by 8 (the decoder upsamples and the \
                 discriminator downsamples three times by 2)"
            )));
        }
        let [ly, lx] = self.extent.unwrap_or([1.0, 1.0]);
        Grid::new(ny, nx, ly, lx)
    }
}

/// Layer widths; the grid, horizon and parameter count follow from the data
/// and the training config and are recomputed on every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSettings {
    pub latent_dim: usize,
    pub encoder_layers: Vec<usize>,
    pub dynamics_layers: Vec<usize>,
    pub decoder_seed_channels: usize,
    pub decoder_channels: [usize; 3],
    pub disc_channels: [usize; 3],
    pub grid: Option<Grid>,
    pub horizon_train: Option<usize>,
    pub param_dim: Option<usize>,
}

impl Default for ArchSettings {
    fn default() -> Self {
        let d = ArchitectureConfig::new(Grid::unit_square(8).expect("valid grid"), 1);
        ArchSettings {
            latent_dim: d.latent_dim,
            encoder_layers: d.encoder_layers,
            dynamics_layers: d.dynamics_layers,
            decoder_seed_channels: d.decoder_seed_channels,
            decoder_channels: d.decoder_channels,
            disc_channels: d.disc_channels,
            grid: None,
            horizon_train: None,
            param_dim: None,
        }
    }
}

impl ArchSettings {
    /// Full architecture for `grid` and `horizon`; records both back.
    pub fn resolve(&mut self, grid: Grid, horizon: usize) -> ArchitectureConfig {
        self.grid = Some(grid);
        self.horizon_train = Some(horizon);
        self.param_dim = Some(1);
        ArchitectureConfig {
            latent_dim: self.latent_dim,
            encoder_layers: self.encoder_layers.clone(),
            dynamics_layers: self.dynamics_layers.clone(),
            decoder_seed_channels: self.decoder_seed_channels,
            decoder_channels: self.decoder_channels,
            disc_channels: self.disc_channels,
            grid,
            horizon_train: horizon,
            param_dim: 1,
        }
    }
}

/// Selects which samples of a dataset are held out: every `every`-th sample
/// starting at `offset`. `every = 0` holds out nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Holdout {
    pub every: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub holdout: Holdout,
    pub train: TrainConfig,
    pub architecture: ArchSettings,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub re: Option<f64>,
    /// Defaults to the training horizon stored in the checkpoint.
    pub steps: Option<usize>,
    pub snapshots: Vec<usize>,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Evaluate only the held-out part of `data`.
    pub holdout: Holdout,
    /// Probe nodes `[i, j]` (column, row); three seeded random nodes when empty.
    pub points: Vec<[usize; 2]>,
    /// Sample whose probe series go to `points.csv`; the middle sample when unset.
    pub point_sample: Option<usize>,
    /// Frames written as error images for every sample; first, middle and
    /// last when empty.
    pub snapshots: Vec<usize>,
    /// Predicted steps per sample; the dataset length when unset.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonStudyConfig {
    pub data: Option<PathBuf>,
    /// Scored against this dataset; `data` when unset.
    pub eval_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub horizons: Vec<usize>,
    pub eval_steps: usize,
    pub train: TrainConfig,
    pub architecture: ArchSettings,
}

impl Default for HorizonStudyConfig {
    fn default() -> Self {
        HorizonStudyConfig {
            data: None,
            eval_data: None,
            out: None,
            horizons: vec![5, 10, 25, 50],
            eval_steps: 200,
            train: TrainConfig::default(),
            architecture: ArchSettings::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"re_min": 120, "n_sample": 3}"#).unwrap();
        let err = load_config::<GenDataConfig>(Some(&path)).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("n_sample"));

        fs::write(&path, r#"{"train": {"lr": 0.001, "betas": 1}}"#).unwrap();
        assert!(load_config::<TrainRunConfig>(Some(&path)).is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"re_min": 120, "grid": [16, 32]}"#).unwrap();
        let mut cfg: GenDataConfig = load_config(Some(&path)).unwrap();
        assert_eq!(cfg.re_min, 120.0);
        assert_eq!(cfg.re_max, 200.0);
        cfg.resolve();
        assert_eq!(cfg.field, Some(FieldKind::TransverseVelocity));
        let [ly, lx] = cfg.extent.unwrap();
        assert_eq!(ly, WAKE_HEIGHT);
        // square cells
        assert!((ly / 15.0 - lx / 31.0).abs() < 1e-12);
    }

    #[test]
    fn resolved_configs_roundtrip() {
        let mut cfg = TrainRunConfig::default();
        cfg.architecture.resolve(Grid::unit_square(16).unwrap(), 10);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TrainRunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn grid_must_be_divisible_by_eight() {
        let cfg = GenDataConfig {
            grid: [50, 96],
            ..Default::default()
        };
        let err = cfg.grid().unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("divisible by 8"));
    }
}
