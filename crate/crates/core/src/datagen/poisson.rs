use super::{cavity::SolverConfig, Field2, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub psi: Field2,
    pub iterations: usize,
    pub residual: f64,
}

/// Max-norm of `lap(psi) + rhs` over interior nodes (5-point Laplacian).
pub fn poisson_residual(psi: &Field2, rhs: &Field2, grid: &Grid) -> f64 {
    let (ny, nx) = (grid.ny, grid.nx);
    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let ihy2 = 1.0 / (grid.hy() * grid.hy());
    let p = &psi.data;
    let mut worst = 0.0f64;
    for j in 1..ny - 1 {
        let row = j * nx;
        for i in 1..nx - 1 {
            let k = row + i;
            let lap = (p[k - 1] - 2.0 * p[k] + p[k + 1]) * ihx2
                + (p[k - nx] - 2.0 * p[k] + p[k + nx]) * ihy2;
            let r = (lap + rhs.data[k]).abs();
            if !(r <= worst) {
                // NaN propagates as the residual
                worst = r;
            }
        }
    }
    worst
}

/// Sweeps between residual evaluations.
const RESIDUAL_EVERY: usize = 4;

/// Solves `lap(psi) = -rhs` with homogeneous Dirichlet walls by successive
/// over-relaxation (lexicographic Gauss-Seidel sweeps, factor `cfg.sor_omega`).
/// Convergence is tested every few sweeps, so the returned residual can be
/// below the tolerance by more than one sweep's worth.
pub fn poisson_solve(
    rhs: &Field2,
    grid: &Grid,
    cfg: &SolverConfig,
    initial_guess: &Field2,
) -> Result<PoissonSolution> {
    cfg.validate()?;
    let (ny, nx) = (grid.ny, grid.nx);
    if rhs.ny != ny || rhs.nx != nx || initial_guess.ny != ny || initial_guess.nx != nx {
        return Err(Error::ShapeMismatch(format!(
            "Poisson inputs must be {ny}x{nx} (rhs {}x{}, guess {}x{})",
            rhs.ny, rhs.nx, initial_guess.ny, initial_guess.nx
        )));
    }
    if rhs.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup {
            stage: "Poisson right-hand side",
            index: 0,
            detail: "non-finite value".into(),
        });
    }

    let mut psi = initial_guess.clone();
    for i in 0..nx {
        *psi.at_mut(0, i) = 0.0;
        *psi.at_mut(ny - 1, i) = 0.0;
    }
    for j in 0..ny {
        *psi.at_mut(j, 0) = 0.0;
        *psi.at_mut(j, nx - 1) = 0.0;
    }

    let ihx2 = 1.0 / (grid.hx() * grid.hx());
    let ihy2 = 1.0 / (grid.hy() * grid.hy());
    let inv_diag = 1.0 / (2.0 * ihx2 + 2.0 * ihy2);
    let omega = cfg.sor_omega;

    let mut residual = poisson_residual(&psi, rhs, grid);
    let mut iterations = 0;
    while !(residual <= cfg.poisson_tol) {
        if iterations >= cfg.poisson_max_iter {
            return Err(Error::IterationLimitExceeded {
                iterations,
                residual,
            });
        }
        let p = &mut psi.data;
        for j in 1..ny - 1 {
            let row = j * nx;
            for i in 1..nx - 1 {
                let k = row + i;
                let gs = ((p[k - 1] + p[k + 1]) * ihx2 + (p[k - nx] + p[k + nx]) * ihy2
                    + rhs.data[k])
                    * inv_diag;
                p[k] += omega * (gs - p[k]);
            }
        }
        iterations += 1;
        // the residual pass costs as much as a sweep, so test it periodically
        if iterations % RESIDUAL_EVERY != 0 && iterations < cfg.poisson_max_iter {
            continue;
        }
        residual = poisson_residual(&psi, rhs, grid);
        if !residual.is_finite() {
            return Err(Error::NumericalBlowup {
                stage: "Poisson sweep",
                index: iterations,
                detail: "residual became non-finite".into(),
            });
        }
    }
    Ok(PoissonSolution {
        psi,
        iterations,
        residual,
    })
}
