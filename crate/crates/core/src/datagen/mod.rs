//! Flow-field data: grids, sequences, generators and the dataset format.

mod cavity;
mod dataset;
mod poisson;
mod wake;

pub use cavity::{solve_cavity, vorticity_bc, BoundaryVorticity, SolverConfig};
pub use dataset::{
    generate_dataset, load_dataset, normalize_dataset, save_dataset, Dataset, DatasetSpec,
    GeneratorConfig, GeneratorKind, NormStats, SampleInfo,
};
pub use poisson::{poisson_residual, poisson_solve, PoissonSolution};
pub use wake::{roshko_strouhal, synth_cylinder_wake, wake_field_at, WakeGeometry, WakeMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node-centred grid. Index `(j, i)` is row `j` (y) and column `i` (x),
/// stored row-major with `j = 0` at the bottom wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ny: usize,
    pub nx: usize,
    pub ly: f64,
    pub lx: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(ny: usize, nx: usize, ly: f64, lx: f64) -> Result<Self> {
        let grid = Grid { ny, nx, ly, lx };
        grid.validate()?;
        Ok(grid)
    }

    /// Square grid on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ny < Self::MIN_CELLS || self.nx < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "{}x{} is smaller than the {m}x{m} minimum",
                self.ny,
                self.nx,
                m = Self::MIN_CELLS
            )));
        }
        if !(self.ly > 0.0 && self.lx > 0.0 && self.ly.is_finite() && self.lx.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "physical extent {} x {} must be positive",
                self.ly, self.lx
            )));
        }
        Ok(())
    }

    pub fn hy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn hx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, j: usize, i: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }
}

/// Which scalar field a sequence stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    StreamwiseVelocity,
    TransverseVelocity,
    Vorticity,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::StreamwiseVelocity => "streamwise_velocity",
            FieldKind::TransverseVelocity => "transverse_velocity",
            FieldKind::Vorticity => "vorticity",
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" | "streamwise" | "streamwise_velocity" => Ok(FieldKind::StreamwiseVelocity),
            "v" | "transverse" | "transverse_velocity" => Ok(FieldKind::TransverseVelocity),
            "w" | "omega" | "vorticity" => Ok(FieldKind::Vorticity),
            other => Err(Error::InvalidParams(format!(
                "unknown field '{other}' (expected u, v or w)"
            ))),
        }
    }
}

/// Physical parameters of one simulation plus snapshot metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub re: f64,
    /// Interval between stored snapshots.
    pub dt: f64,
    pub n_steps: usize,
    pub field: FieldKind,
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.re > 0.0 && self.re.is_finite()) {
            return Err(Error::InvalidParams(format!("re = {} must be > 0", self.re)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt = {} must be > 0", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParams("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_re(self, re: f64) -> Self {
        Self { re, ..self }
    }

    pub fn with_steps(self, n_steps: usize) -> Self {
        Self { n_steps, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Physical,
    Normalized,
}

/// A `[T, ny, nx]` stack of scalar snapshots produced for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub params: SimulationParams,
    pub ny: usize,
    pub nx: usize,
    pub frames: Vec<f32>,
    pub units: Units,
}

impl FlowSequence {
    pub fn new(params: SimulationParams, ny: usize, nx: usize, frames: Vec<f32>) -> Result<Self> {
        let seq = FlowSequence {
            params,
            ny,
            nx,
            frames,
            units: Units::Physical,
        };
        seq.check()?;
        Ok(seq)
    }

    pub fn check(&self) -> Result<()> {
        let expected = self.params.n_steps * self.ny * self.nx;
        if self.frames.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values stored for shape [{}, {}, {}]",
                self.frames.len(),
                self.params.n_steps,
                self.ny,
                self.nx
            )));
        }
        if let Some(pos) = self.frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup {
                stage: "frame value",
                index: pos,
                detail: "non-finite entry in flow sequence".into(),
            });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps
    }

    pub fn frame_len(&self) -> usize {
        self.ny * self.nx
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.frames[t * n..(t + 1) * n]
    }

    /// Initial condition `s^0`.
    pub fn initial(&self) -> &[f32] {
        self.frame(0)
    }

    /// Time series at grid node `(j, i)`.
    pub fn series(&self, j: usize, i: usize) -> Vec<f32> {
        let n = self.frame_len();
        (0..self.n_steps())
            .map(|t| self.frames[t * n + j * self.nx + i])
            .collect()
    }

    /// First `t` frames as a new sequence.
    pub fn truncated(&self, t: usize) -> FlowSequence {
        let t = t.min(self.n_steps());
        FlowSequence {
            params: self.params.with_steps(t),
            ny: self.ny,
            nx: self.nx,
            frames: self.frames[..t * self.frame_len()].to_vec(),
            units: self.units,
        }
    }

    pub fn same_shape(&self, other: &FlowSequence) -> bool {
        self.ny == other.ny && self.nx == other.nx && self.n_steps() == other.n_steps()
    }
}

/// Dense 2-D scalar field in `f64`, used inside the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(ny: usize, nx: usize) -> Self {
        Field2 {
            ny,
            nx,
            data: vec![0.0; ny * nx],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid.ny, grid.nx);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                out.data[j * grid.nx + i] = f(grid.x(i), grid.y(j));
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn at_mut(&mut self, j: usize, i: usize) -> &mut f64 {
        &mut self.data[j * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
