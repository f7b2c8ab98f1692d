//! Lid-driven cavity in vorticity/streamfunction form.
//!
//! `d(omega)/dt + u d(omega)/dx + v d(omega)/dy = nu lap(omega)`, `lap(psi) = -omega`,
//! with `u = d(psi)/dy`, `v = -d(psi)/dx`, `nu = U L / Re` and `L = 1`.
//! Explicit Euler in time, first-order upwind advection, central diffusion,
//! Thom's formula for wall vorticity and SOR for the streamfunction.

use serde::{Deserialize, Serialize};

use super::poisson::poisson_solve;
use super::{Field2, FieldKind, FlowSequence, Grid, SimulationParams};
use crate::error::{Error, Result};

pub const CAVITY_RE_MIN: f64 = 100.0;
pub const CAVITY_RE_MAX: f64 = 10_000.0;

const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
    pub sor_omega: f64,
    pub cfl_safety: f64,
    pub lid_velocity: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            poisson_tol: 1e-6,
            poisson_max_iter: 100_000,
            sor_omega: 1.8,
            cfl_safety: 0.5,
            lid_velocity: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sor_omega > 0.0 && self.sor_omega < 2.0) {
            return Err(Error::InvalidSolverConfig(format!(
                "sor_omega = {} must lie in (0, 2)",
                self.sor_omega
            )));
        }
        if !(self.poisson_tol > 0.0) {
            return Err(Error::InvalidSolverConfig(format!(
                "poisson_tol = {} must be > 0",
                self.poisson_tol
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidSolverConfig(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !self.lid_velocity.is_finite() {
            return Err(Error::InvalidSolverConfig("lid_velocity must be finite".into()));
        }
        Ok(())
    }
}

/// Wall vorticity on the four sides. `bottom`/`top` have `nx` entries,
/// `left`/`right` have `ny` entries (corners are overwritten by the
/// horizontal walls when applied).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryVorticity {
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BoundaryVorticity {
    pub fn apply(&self, omega: &mut Field2) {
        let (ny, nx) = (omega.ny, omega.nx);
        for j in 0..ny {
            *omega.at_mut(j, 0) = self.left[j];
            *omega.at_mut(j, nx - 1) = self.right[j];
        }
        for i in 0..nx {
            *omega.at_mut(0, i) = self.bottom[i];
            *omega.at_mut(ny - 1, i) = self.top[i];
        }
    }
}

/// Thom's first-order wall vorticity. The lid is the top wall (`j = ny - 1`)
/// moving in `+x` with `lid_velocity`; the other walls are at rest.
pub fn vorticity_bc(psi: &Field2, grid: &Grid, lid_velocity: f64) -> BoundaryVorticity {
    let (ny, nx) = (grid.ny, grid.nx);
    let (hx, hy) = (grid.hx(), grid.hy());
    let wall = |wall: f64, adj: f64, h: f64| 2.0 * (wall - adj) / (h * h);
    BoundaryVorticity {
        bottom: (0..nx)
            .map(|i| wall(psi.at(0, i), psi.at(1, i), hy))
            .collect(),
        top: (0..nx)
            .map(|i| wall(psi.at(ny - 1, i), psi.at(ny - 2, i), hy) - 2.0 * lid_velocity / hy)
            .collect(),
        left: (0..ny)
            .map(|j| wall(psi.at(j, 0), psi.at(j, 1), hx))
            .collect(),
        right: (0..ny)
            .map(|j| wall(psi.at(j, nx - 1), psi.at(j, nx - 2), hx))
            .collect(),
    }
}

/// Velocity recovered from the streamfunction: central differences inside,
/// wall values on the boundary (lid speed on the whole top row).
fn velocities(psi: &Field2, grid: &Grid, lid_velocity: f64, u: &mut Field2, v: &mut Field2) {
    let (ny, nx) = (grid.ny, grid.nx);
    let (hx, hy) = (grid.hx(), grid.hy());
    u.data.iter_mut().for_each(|x| *x = 0.0);
    v.data.iter_mut().for_each(|x| *x = 0.0);
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            *u.at_mut(j, i) = (psi.at(j + 1, i) - psi.at(j - 1, i)) / (2.0 * hy);
            *v.at_mut(j, i) = -(psi.at(j, i + 1) - psi.at(j, i - 1)) / (2.0 * hx);
        }
    }
    for i in 0..nx {
        *u.at_mut(ny - 1, i) = lid_velocity;
    }
}

fn validate_cavity(params: &SimulationParams, grid: &Grid) -> Result<()> {
    params.validate()?;
    grid.validate()?;
    if (grid.lx - 1.0).abs() > 1e-12 || (grid.ly - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidGrid(format!(
            "cavity requires the unit square, got {} x {}",
            grid.ly, grid.lx
        )));
    }
    if !(CAVITY_RE_MIN..=CAVITY_RE_MAX).contains(&params.re) {
        return Err(Error::InvalidParams(format!(
            "cavity Re = {} outside [{CAVITY_RE_MIN}, {CAVITY_RE_MAX}]",
            params.re
        )));
    }
    Ok(())
}

/// Integrates the cavity from rest and records `params.n_steps` snapshots,
/// one every `params.dt` of simulated time (the first after one `dt`).
///
/// The run is deterministic; `seed` is accepted so every generator shares one
/// signature, and does not influence the result.
pub fn solve_cavity(
    params: &SimulationParams,
    grid: &Grid,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<FlowSequence> {
    let _ = seed;
    validate_cavity(params, grid)?;
    cfg.validate()?;

    let (ny, nx) = (grid.ny, grid.nx);
    let (hx, hy) = (grid.hx(), grid.hy());
    let h = hx.min(hy);
    let nu = cfg.lid_velocity.abs().max(f64::MIN_POSITIVE) / params.re;
    let ihx2 = 1.0 / (hx * hx);
    let ihy2 = 1.0 / (hy * hy);

    let mut omega = Field2::zeros(ny, nx);
    let mut psi = Field2::zeros(ny, nx);
    let mut u = Field2::zeros(ny, nx);
    let mut v = Field2::zeros(ny, nx);
    let mut next = Field2::zeros(ny, nx);
    vorticity_bc(&psi, grid, cfg.lid_velocity).apply(&mut omega);

    let mut frames = Vec::with_capacity(params.n_steps * ny * nx);
    let mut t = 0.0f64;
    let mut step_index = 0usize;
    // previous streamfunction and the step that led from it to `psi`
    let mut prev: Option<(Field2, f64)> = None;

    for snap in 1..=params.n_steps {
        let t_target = snap as f64 * params.dt;
        loop {
            let remaining = t_target - t;
            if remaining <= 1e-12 * params.dt {
                break;
            }
            velocities(&psi, grid, cfg.lid_velocity, &mut u, &mut v);
            let umax = u.max_abs();
            let vmax = v.max_abs();
            let mut dt = h * h / (4.0 * nu);
            if umax > 0.0 {
                dt = dt.min(h / umax);
            }
            if vmax > 0.0 {
                dt = dt.min(h / vmax);
            }
            dt *= cfg.cfl_safety;
            let last = dt >= remaining;
            if last {
                dt = remaining;
            }

            next.data.copy_from_slice(&omega.data);
            let w = &omega.data;
            for j in 1..ny - 1 {
                let row = j * nx;
                for i in 1..nx - 1 {
                    let k = row + i;
                    let uk = u.data[k];
                    let vk = v.data[k];
                    let dwdx = if uk > 0.0 {
                        (w[k] - w[k - 1]) / hx
                    } else {
                        (w[k + 1] - w[k]) / hx
                    };
                    let dwdy = if vk > 0.0 {
                        (w[k] - w[k - nx]) / hy
                    } else {
                        (w[k + nx] - w[k]) / hy
                    };
                    let lap = (w[k - 1] - 2.0 * w[k] + w[k + 1]) * ihx2
                        + (w[k - nx] - 2.0 * w[k] + w[k + nx]) * ihy2;
                    next.data[k] = w[k] + dt * (nu * lap - uk * dwdx - vk * dwdy);
                }
            }
            std::mem::swap(&mut omega, &mut next);

            // linear extrapolation in time is a much closer start than psi^n
            let guess = match &prev {
                Some((older, dt_older)) => {
                    let r = dt / dt_older;
                    let mut g = psi.clone();
                    g.data.iter_mut().zip(&older.data).for_each(|(p, &o)| *p += r * (*p - o));
                    g
                }
                None => psi.clone(),
            };
            let solved = poisson_solve(&omega, grid, cfg, &guess)?;
            prev = Some((std::mem::replace(&mut psi, solved.psi), dt));
            vorticity_bc(&psi, grid, cfg.lid_velocity).apply(&mut omega);

            step_index += 1;
            if omega
                .data
                .iter()
                .any(|x| !x.is_finite() || x.abs() > BLOWUP_LIMIT)
            {
                return Err(Error::NumericalBlowup {
                    stage: "cavity solver step",
                    index: step_index,
                    detail: format!("vorticity exceeded {BLOWUP_LIMIT:e} at Re = {}", params.re),
                });
            }
            if last {
                t = t_target;
                break;
            }
            t += dt;
        }

        velocities(&psi, grid, cfg.lid_velocity, &mut u, &mut v);
        let src = match params.field {
            FieldKind::StreamwiseVelocity => &u,
            FieldKind::TransverseVelocity => &v,
            FieldKind::Vorticity => &omega,
        };
        if src.max_abs() > BLOWUP_LIMIT {
            return Err(Error::NumericalBlowup {
                stage: "cavity snapshot",
                index: snap,
                detail: format!("recorded field exceeded {BLOWUP_LIMIT:e}"),
            });
        }
        frames.extend(src.data.iter().map(|&x| x as f32));
    }

    FlowSequence::new(*params, ny, nx, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lid_vorticity_for_zero_streamfunction() {
        let n = 65;
        let grid = Grid::unit_square(n).unwrap();
        let psi = Field2::zeros(n, n);
        let bc = vorticity_bc(&psi, &grid, 1.0);
        assert!(bc.top.iter().all(|&w| (w + 128.0).abs() < 1e-9));
        assert!(bc.bottom.iter().chain(&bc.left).chain(&bc.right).all(|&w| w == 0.0));
    }

    #[test]
    fn stationary_wall_direct_substitution() {
        // h = 0.1 on an 11-node unit square; psi_adj = 0.01 next to the bottom wall
        let grid = Grid::unit_square(11).unwrap();
        let mut psi = Field2::zeros(11, 11);
        *psi.at_mut(1, 5) = 0.01;
        let bc = vorticity_bc(&psi, &grid, 1.0);
        assert!((bc.bottom[5] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_lid_velocity_uses_stationary_formula_everywhere() {
        let grid = Grid::unit_square(11).unwrap();
        let mut psi = Field2::zeros(11, 11);
        for j in 1..10 {
            for i in 1..10 {
                *psi.at_mut(j, i) = 0.001 * (i + j) as f64;
            }
        }
        let bc = vorticity_bc(&psi, &grid, 0.0);
        for i in 0..11 {
            let expected = 2.0 * (0.0 - psi.at(9, i)) / 0.01;
            assert!((bc.top[i] - expected).abs() < 1e-12);
        }
    }

    fn params(re: f64, dt: f64, n: usize, field: FieldKind) -> SimulationParams {
        SimulationParams {
            re,
            dt,
            n_steps: n,
            field,
        }
    }

    #[test]
    fn single_snapshot_after_one_dt() {
        let grid = Grid::unit_square(16).unwrap();
        let cfg = SolverConfig::default();
        let one = solve_cavity(&params(200.0, 0.1, 1, FieldKind::Vorticity), &grid, &cfg, 0).unwrap();
        let three =
            solve_cavity(&params(200.0, 0.1, 3, FieldKind::Vorticity), &grid, &cfg, 0).unwrap();
        assert_eq!(one.n_steps(), 1);
        assert_eq!(one.frame(0), three.frame(0));
    }

    #[test]
    fn wall_conditions_hold_at_every_snapshot() {
        let n = 20;
        let grid = Grid::unit_square(n).unwrap();
        let cfg = SolverConfig::default();
        let u = solve_cavity(&params(400.0, 0.25, 4, FieldKind::StreamwiseVelocity), &grid, &cfg, 0)
            .unwrap();
        let v = solve_cavity(&params(400.0, 0.25, 4, FieldKind::TransverseVelocity), &grid, &cfg, 0)
            .unwrap();
        for t in 0..4 {
            let (fu, fv) = (u.frame(t), v.frame(t));
            for i in 0..n {
                assert_eq!(fu[(n - 1) * n + i], 1.0);
                assert_eq!(fu[i], 0.0);
                assert_eq!(fv[i], 0.0);
                assert_eq!(fv[(n - 1) * n + i], 0.0);
            }
            for j in 0..n - 1 {
                assert_eq!(fu[j * n], 0.0);
                assert_eq!(fu[j * n + n - 1], 0.0);
                assert_eq!(fv[j * n], 0.0);
                assert_eq!(fv[j * n + n - 1], 0.0);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_reynolds_and_non_square_domain() {
        let grid = Grid::unit_square(16).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(
            solve_cavity(&params(50.0, 0.1, 1, FieldKind::Vorticity), &grid, &cfg, 0),
            Err(Error::InvalidParams(_))
        ));
        let wide = Grid::new(16, 16, 1.0, 2.0).unwrap();
        assert!(matches!(
            solve_cavity(&params(500.0, 0.1, 1, FieldKind::Vorticity), &wide, &cfg, 0),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn deterministic_runs_are_bit_identical() {
        let grid = Grid::unit_square(16).unwrap();
        let cfg = SolverConfig::default();
        let p = params(1000.0, 0.2, 3, FieldKind::Vorticity);
        let a = solve_cavity(&p, &grid, &cfg, 1).unwrap();
        let b = solve_cavity(&p, &grid, &cfg, 99).unwrap();
        assert_eq!(a.frames, b.frames);
    }
}
