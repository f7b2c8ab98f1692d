use serde::{Deserialize, Serialize};

use crate::datagen::Grid;
use crate::error::{Error, Result};

/// Network topology. Layer widths are free choices; the grid must be
/// divisible by 8 because the decoder upsamples three times by 2 and the
/// discriminator downsamples three times by 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub latent_dim: usize,
    /// Hidden widths of the parameter encoder (and of the discriminator's
    /// parameter branch).
    pub encoder_layers: Vec<usize>,
    /// Hidden widths of the dynamics block; its output layer is linear.
    pub dynamics_layers: Vec<usize>,
    /// Channels of the `ny/8 x nx/8` decoder seed.
    pub decoder_seed_channels: usize,
    /// Output channels of the three upsample+conv stages.
    pub decoder_channels: [usize; 3],
    /// Channels of the three stride-2 discriminator convolutions.
    pub disc_channels: [usize; 3],
    pub grid: Grid,
    pub horizon_train: usize,
    pub param_dim: usize,
}

impl ArchitectureConfig {
    pub fn new(grid: Grid, horizon_train: usize) -> Self {
        ArchitectureConfig {
            latent_dim: 64,
            encoder_layers: vec![32, 64],
            dynamics_layers: vec![128, 128],
            decoder_seed_channels: 32,
            decoder_channels: [32, 16, 8],
            disc_channels: [16, 32, 64],
            grid,
            horizon_train,
            param_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (ny, nx) = (self.grid.ny, self.grid.nx);
        if ny % 8 != 0 || nx % 8 != 0 || ny == 0 || nx == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid {ny}x{nx} must be divisible by 8 in both directions"
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be >= 1".into()));
        }
        let widths = self
            .encoder_layers
            .iter()
            .chain(&self.dynamics_layers)
            .chain(&self.decoder_channels)
            .chain(&self.disc_channels)
            .chain(std::iter::once(&self.decoder_seed_channels));
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("all layer widths must be >= 1".into()));
        }
        if self.horizon_train == 0 {
            return Err(Error::InvalidConfig("horizon_train must be >= 1".into()));
        }
        if self.param_dim != 1 {
            return Err(Error::InvalidConfig(format!(
                "param_dim = {}: only the Reynolds number (d = 1) is supported",
                self.param_dim
            )));
        }
        Ok(())
    }

    pub fn ny(&self) -> usize {
        self.grid.ny
    }

    pub fn nx(&self) -> usize {
        self.grid.nx
    }

    pub fn frame_len(&self) -> usize {
        self.grid.ny * self.grid.nx
    }

    /// Spatial size of the decoder seed and of the last discriminator map.
    pub fn coarse_shape(&self) -> (usize, usize) {
        (self.grid.ny / 8, self.grid.nx / 8)
    }
}
