//! WebAssembly bindings for the browser demo: the analytic wake, a small
//! lid-driven cavity run, and the KSG mutual-information estimator.
//!
//! Each export is a thin wrapper over a plain function that also builds and
//! is tested on native targets.

use dyncgan::datagen::{
    solve_cavity, synth_cylinder_wake, FieldKind, Grid, SimulationParams, SolverConfig, WakeGeometry,
};
use dyncgan::evaluation::mutual_information;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

/// Channel height of the wake domain in cylinder diameters.
const WAKE_HEIGHT: f64 = 8.0;
/// Largest grid side the demo accepts, to keep the page responsive.
const MAX_SIDE: usize = 256;

fn check_side(name: &str, n: usize) -> Result<(), String> {
    if (2..=MAX_SIDE).contains(&n) {
        Ok(())
    } else {
        Err(format!("{name} = {n} must lie in [2, {MAX_SIDE}]"))
    }
}

/// `steps` wake frames of `ny x nx` (row-major, frame after frame), sampled
/// every `dt` on a channel of height 8 with square cells.
pub fn wake(re: f64, steps: usize, dt: f64, ny: usize, nx: usize, transverse: bool, seed: u64) -> Result<Vec<f32>, String> {
    check_side("ny", ny)?;
    check_side("nx", nx)?;
    let grid = Grid::new(ny, nx, WAKE_HEIGHT, WAKE_HEIGHT * (nx - 1) as f64 / (ny - 1) as f64).map_err(|e| e.to_string())?;
    let field = if transverse { FieldKind::TransverseVelocity } else { FieldKind::StreamwiseVelocity };
    let params = SimulationParams { re, dt, n_steps: steps, field };
    let seq = synth_cylinder_wake(&params, &grid, &WakeGeometry::default(), seed).map_err(|e| e.to_string())?;
    Ok(seq.frames)
}

/// Vorticity snapshots of the unit lid-driven cavity on an `n x n` grid,
/// started from rest, one every `dt`.
pub fn cavity(re: f64, n: usize, snapshots: usize, dt: f64) -> Result<Vec<f32>, String> {
    check_side("n", n)?;
    let grid = Grid::unit_square(n).map_err(|e| e.to_string())?;
    let params = SimulationParams { re, dt, n_steps: snapshots, field: FieldKind::Vorticity };
    let seq = solve_cavity(&params, &grid, &SolverConfig::default(), 0).map_err(|e| e.to_string())?;
    Ok(seq.frames)
}

/// KSG estimate on `n` draws of a standard bivariate normal with correlation
/// `rho`, returned with the exact value `-ln(1 - rho^2) / 2`.
pub fn gaussian_mi(rho: f64, n: usize, k: usize, seed: u64) -> Result<[f64; 2], String> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(format!("rho = {rho} must lie in (-1, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        x.push(a);
        y.push(rho * a + c * b);
    }
    let estimate = mutual_information(&x, &y, k).map_err(|e| e.to_string())?;
    Ok([estimate, -0.5 * (1.0 - rho * rho).ln()])
}

// Seeds are u32 on the JS side so they stay plain numbers rather than BigInt.

#[wasm_bindgen(js_name = wakeFrames)]
pub fn wake_frames(
    re: f64,
    steps: usize,
    dt: f64,
    ny: usize,
    nx: usize,
    transverse: bool,
    seed: u32,
) -> Result<Vec<f32>, JsError> {
    wake(re, steps, dt, ny, nx, transverse, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = cavityVorticity)]
pub fn cavity_vorticity(re: f64, n: usize, snapshots: usize, dt: f64) -> Result<Vec<f32>, JsError> {
    cavity(re, n, snapshots, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gaussianMutualInformation)]
pub fn gaussian_mutual_information(rho: f64, n: usize, k: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    gaussian_mi(rho, n, k, seed.into()).map(|v| v.to_vec()).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wake_has_requested_shape_and_is_finite() {
        let f = wake(150.0, 3, 0.25, 16, 32, true, 1).unwrap();
        assert_eq!(f.len(), 3 * 16 * 32);
        assert!(f.iter().all(|v| v.is_finite()));
        assert!(f.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn cavity_snapshots_have_requested_shape() {
        let f = cavity(100.0, 17, 2, 0.05).unwrap();
        assert_eq!(f.len(), 2 * 17 * 17);
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gaussian_mi_is_close_to_exact() {
        let [est, exact] = gaussian_mi(0.8, 2000, 3, 4).unwrap();
        assert!((exact - 0.5108).abs() < 1e-4);
        assert!((est - exact).abs() < 0.1, "{est} vs {exact}");
    }

    #[test]
    fn invalid_inputs_are_reported() {
        assert!(wake(150.0, 3, 0.25, 1, 32, true, 1).is_err());
        assert!(wake(10.0, 3, 0.25, 16, 32, true, 1).is_err());
        assert!(cavity(100.0, 1000, 1, 0.1).is_err());
        assert!(gaussian_mi(1.0, 100, 3, 0).is_err());
        assert!(gaussian_mi(0.5, 5, 3, 0).is_err());
    }
}
