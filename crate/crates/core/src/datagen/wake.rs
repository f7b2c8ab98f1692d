//! Analytic Reynolds-parameterized Kármán vortex street.
//!
//! Two staggered rows of Lamb-Oseen vortices of opposite sign are advected
//! downstream at `0.85 u_inf` and shed at `f = St(Re) u_inf / D` with
//! `St(Re) = 0.198 (1 - 19.7 / Re)`. The street fades in smoothly over a
//! formation length behind the cylinder centre. Each vortex contributes
//! through a window symmetric in `x_vortex - x`, which keeps the transverse
//! kernel odd so the time-averaged transverse velocity vanishes at every
//! point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{FieldKind, FlowSequence, Grid, SimulationParams};
use crate::error::{Error, Result};

pub const WAKE_RE_MIN: f64 = 50.0;

const ADVECTION_RATIO: f64 = 0.85;
const CORE_RATIO: f64 = 0.3;
/// Row separation over streamwise vortex spacing (von Kármán's stable street).
const ROW_SPACING_RATIO: f64 = 0.281;
const FORMATION_LENGTH: f64 = 2.0;
/// Half-width of the influence window in units of the vortex spacing.
const WINDOW_SPACINGS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeMode {
    /// Saturated periodic shedding (post-transient limit cycle).
    Steady,
    /// Shedding grows from a uniform stream with envelope `1 - exp(-t / tau)`.
    Transient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeGeometry {
    pub u_inf: f64,
    pub cylinder_diameter: f64,
    pub vortex_strength_scale: f64,
    pub transient_tau_scale: f64,
    pub mode: WakeMode,
}

impl Default for WakeGeometry {
    fn default() -> Self {
        WakeGeometry {
            u_inf: 1.0,
            cylinder_diameter: 1.0,
            vortex_strength_scale: 1.5,
            transient_tau_scale: 8.0,
            mode: WakeMode::Steady,
        }
    }
}

impl WakeGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.cylinder_diameter > 0.0 && self.cylinder_diameter.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "cylinder_diameter = {} must be > 0",
                self.cylinder_diameter
            )));
        }
        if !(self.u_inf > 0.0 && self.u_inf.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "u_inf = {} must be > 0",
                self.u_inf
            )));
        }
        if !self.vortex_strength_scale.is_finite() {
            return Err(Error::InvalidGeometry("vortex_strength_scale must be finite".into()));
        }
        if self.mode == WakeMode::Transient && !(self.transient_tau_scale > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "transient_tau_scale = {} must be > 0 in transient mode",
                self.transient_tau_scale
            )));
        }
        Ok(())
    }

    /// Shedding frequency `St(Re) u_inf / D`.
    pub fn shedding_frequency(&self, re: f64) -> f64 {
        roshko_strouhal(re) * self.u_inf / self.cylinder_diameter
    }

    pub fn transient_tau(&self) -> f64 {
        self.transient_tau_scale * self.cylinder_diameter / self.u_inf
    }
}

/// Roshko's laminar-range Strouhal correlation.
pub fn roshko_strouhal(re: f64) -> f64 {
    0.198 * (1.0 - 19.7 / re)
}

/// Initial shedding phase in `[0, 1)` derived from a seed.
pub fn shedding_phase(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random::<f64>()
}

/// Precomputed street layout for one Reynolds number.
#[derive(Debug, Clone, Copy)]
struct Street {
    u_inf: f64,
    x_c: f64,
    y_c: f64,
    diameter: f64,
    /// Advection speed.
    c: f64,
    /// Streamwise spacing of same-sign vortices.
    a: f64,
    /// Row separation.
    h: f64,
    gamma: f64,
    core2: f64,
    phase: f64,
    envelope_tau: Option<f64>,
}

impl Street {
    fn new(re: f64, geom: &WakeGeometry, grid: &Grid, phase: f64) -> Self {
        let d = geom.cylinder_diameter;
        let c = ADVECTION_RATIO * geom.u_inf;
        let f = geom.shedding_frequency(re);
        let a = c / f;
        Street {
            u_inf: geom.u_inf,
            x_c: grid.lx / 8.0,
            y_c: grid.ly / 2.0,
            diameter: d,
            c,
            a,
            h: ROW_SPACING_RATIO * a,
            gamma: geom.vortex_strength_scale * geom.u_inf * d,
            core2: (CORE_RATIO * d).powi(2),
            phase,
            envelope_tau: match geom.mode {
                WakeMode::Steady => None,
                WakeMode::Transient => Some(geom.transient_tau()),
            },
        }
    }

    fn envelope(&self, t: f64) -> f64 {
        match self.envelope_tau {
            None => 1.0,
            Some(tau) => 1.0 - (-t / tau).exp(),
        }
    }

    fn fade_in(&self, x: f64) -> f64 {
        let s = ((x - self.x_c) / (FORMATION_LENGTH * self.diameter)).clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    }

    /// Perturbation velocity of the fully developed street at `(x, y, t)`.
    fn street_velocity(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        // Vortex k was shed at t_k = (k + phase) P / 2 and sits at
        // x_k = x_c + c t - (k + phase) a / 2; even k on the upper row.
        let half = 0.5 * self.a;
        let window = WINDOW_SPACINGS * self.a;
        let centre = (self.x_c + self.c * t - x) / half - self.phase;
        let k_lo = (centre - window / half).ceil() as i64;
        let k_hi = (centre + window / half).floor() as i64;
        let (mut u, mut v) = (0.0, 0.0);
        for k in k_lo..=k_hi {
            let xk = self.x_c + self.c * t - (k as f64 + self.phase) * half;
            let dx = x - xk;
            let s = dx.abs() / window;
            if s >= 1.0 {
                continue;
            }
            let taper = 0.5 * (1.0 + (PI * s).cos());
            let (yk, gamma) = if k.rem_euclid(2) == 0 {
                (self.y_c + 0.5 * self.h, -self.gamma)
            } else {
                (self.y_c - 0.5 * self.h, self.gamma)
            };
            let dy = y - yk;
            let r2 = dx * dx + dy * dy;
            let q = r2 / self.core2;
            let factor = if q < 1e-12 {
                gamma / (2.0 * PI * self.core2)
            } else if q > 40.0 {
                gamma / (2.0 * PI * r2)
            } else {
                gamma * (1.0 - (-q).exp()) / (2.0 * PI * r2)
            };
            u -= taper * factor * dy;
            v += taper * factor * dx;
        }
        (u, v)
    }

    fn velocity(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let amp = self.envelope(t) * self.fade_in(x);
        if amp == 0.0 {
            return (self.u_inf, 0.0);
        }
        let (du, dv) = self.street_velocity(x, y, t);
        (self.u_inf + amp * du, amp * dv)
    }
}

/// Velocity `(u, v)` of the wake model at a point.
pub fn wake_field_at(
    x: f64,
    y: f64,
    t: f64,
    re: f64,
    geom: &WakeGeometry,
    grid: &Grid,
    seed: u64,
) -> (f64, f64) {
    Street::new(re, geom, grid, shedding_phase(seed)).velocity(x, y, t)
}

/// Samples the wake model on `grid` at `t_k = k dt`, `k = 0..n_steps`.
/// Frame 0 is the initial condition.
pub fn synth_cylinder_wake(
    params: &SimulationParams,
    grid: &Grid,
    geom: &WakeGeometry,
    seed: u64,
) -> Result<FlowSequence> {
    params.validate()?;
    grid.validate()?;
    geom.validate()?;
    if params.re < WAKE_RE_MIN {
        return Err(Error::InvalidParams(format!(
            "wake model needs Re >= {WAKE_RE_MIN}, got {}",
            params.re
        )));
    }
    let want_u = match params.field {
        FieldKind::StreamwiseVelocity => true,
        FieldKind::TransverseVelocity => false,
        FieldKind::Vorticity => {
            return Err(Error::InvalidParams(
                "wake model provides streamwise or transverse velocity only".into(),
            ))
        }
    };

    let street = Street::new(params.re, geom, grid, shedding_phase(seed));
    let mut frames = Vec::with_capacity(params.n_steps * grid.len());
    for k in 0..params.n_steps {
        let t = k as f64 * params.dt;
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                let (u, v) = street.velocity(grid.x(i), y, t);
                frames.push(if want_u { u } else { v } as f32);
            }
        }
    }
    FlowSequence::new(*params, grid.ny, grid.nx, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(24, 48, 8.0, 16.0).unwrap()
    }

    fn params(re: f64, n: usize, field: FieldKind) -> SimulationParams {
        SimulationParams {
            re,
            dt: 0.5,
            n_steps: n,
            field,
        }
    }

    #[test]
    fn transient_initial_frame_is_uniform_stream() {
        let geom = WakeGeometry {
            mode: WakeMode::Transient,
            ..WakeGeometry::default()
        };
        let u = synth_cylinder_wake(&params(150.0, 3, FieldKind::StreamwiseVelocity), &grid(), &geom, 3)
            .unwrap();
        let v = synth_cylinder_wake(&params(150.0, 3, FieldKind::TransverseVelocity), &grid(), &geom, 3)
            .unwrap();
        assert!(u.frame(0).iter().all(|&x| x == 1.0));
        assert!(v.frame(0).iter().all(|&x| x == 0.0));
        assert!(v.frame(2).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn identical_inputs_give_identical_frames() {
        let g = WakeGeometry::default();
        let p = params(120.0, 5, FieldKind::TransverseVelocity);
        let a = synth_cylinder_wake(&p, &grid(), &g, 11).unwrap();
        let b = synth_cylinder_wake(&p, &grid(), &g, 11).unwrap();
        assert_eq!(a.frames, b.frames);
        let c = synth_cylinder_wake(&p, &grid(), &g, 12).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn strouhal_correlation_at_re_150() {
        assert!((roshko_strouhal(150.0) - 0.172).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_geometry_and_vorticity() {
        let bad = WakeGeometry {
            cylinder_diameter: 0.0,
            ..WakeGeometry::default()
        };
        assert!(matches!(
            synth_cylinder_wake(&params(150.0, 2, FieldKind::StreamwiseVelocity), &grid(), &bad, 0),
            Err(Error::InvalidGeometry(_))
        ));
        let slow = WakeGeometry {
            u_inf: -1.0,
            ..WakeGeometry::default()
        };
        assert!(matches!(
            synth_cylinder_wake(&params(150.0, 2, FieldKind::StreamwiseVelocity), &grid(), &slow, 0),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(synth_cylinder_wake(
            &params(150.0, 2, FieldKind::Vorticity),
            &grid(),
            &WakeGeometry::default(),
            0
        )
        .is_err());
        assert!(synth_cylinder_wake(
            &params(40.0, 2, FieldKind::StreamwiseVelocity),
            &grid(),
            &WakeGeometry::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn upstream_of_cylinder_is_free_stream() {
        let g = grid();
        let geom = WakeGeometry::default();
        for t in [0.0, 3.3, 10.0] {
            let (u, v) = wake_field_at(0.5, 4.0, t, 150.0, &geom, &g, 0);
            assert_eq!((u, v), (1.0, 0.0));
        }
    }

    #[test]
    fn steady_transverse_mean_vanishes_over_whole_periods() {
        let g = grid();
        let geom = WakeGeometry::default();
        let re = 170.0;
        let period = 1.0 / geom.shedding_frequency(re);
        let samples = 64;
        for &(x, y) in &[(5.0, 4.0), (7.3, 4.9), (11.0, 2.5), (3.1, 6.0)] {
            let mean: f64 = (0..2 * samples)
                .map(|k| wake_field_at(x, y, k as f64 * period / samples as f64, re, &geom, &g, 5).1)
                .sum::<f64>()
                / (2 * samples) as f64;
            assert!(mean.abs() < 1e-3, "mean v = {mean} at ({x}, {y})");
        }
    }
}
