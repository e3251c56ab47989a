//! Hybrid time marching: the surrogate supplies every flow-path velocity for
//! the step, then the finite-difference mass balance advances the levels.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::autodiff::MlpModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fdm::{mass_step, momentum_ode_endpoint, step_count, FdmConfig, Trajectory};
use crate::napinn::predict_velocity;
use crate::tank::{path_conditions, SystemState, TankNetworkConfig};

/// Anything that can advance a single flow-path velocity over one step with
/// the head held fixed.
pub trait MomentumSurrogate {
    /// Largest step the surrogate is valid for, s.
    fn max_step(&self) -> f64;

    /// Velocity after `dt` starting from `v0` under head `dh`.
    fn advance(&self, dh: f64, v0: f64, dt: f64) -> f64;
}

impl MomentumSurrogate for MlpModel {
    fn max_step(&self) -> f64 {
        self.bounds.window
    }

    fn advance(&self, dh: f64, v0: f64, dt: f64) -> f64 {
        predict_velocity(self, dh, v0, dt)
    }
}

/// Sub-stepped reference integration standing in for the network, used to
/// check the coupling logic independently of training quality.
#[derive(Debug, Clone)]
pub struct OracleSurrogate {
    pub physics: TankNetworkConfig,
    pub fdm: FdmConfig,
    pub window: f64,
}

impl MomentumSurrogate for OracleSurrogate {
    fn max_step(&self) -> f64 {
        self.window
    }

    fn advance(&self, dh: f64, v0: f64, dt: f64) -> f64 {
        momentum_ode_endpoint(v0, dh, dt, &self.physics, &self.fdm)
    }
}

/// One hybrid step of size `dt`.
///
/// Heads and void fractions come from the start-of-step levels. Flow paths
/// are evaluated upstream to downstream; a path with a dry upstream tank is
/// advanced with zero head. The level update then uses the new velocities
/// with the start-of-step void fractions.
pub fn p2f_step<S: MomentumSurrogate + ?Sized>(
    state: &SystemState,
    dt: f64,
    surrogate: &S,
    cfg: &TankNetworkConfig,
) -> Result<SystemState> {
    if dt > surrogate.max_step() {
        return Err(Error::TimeStepExceedsWindow {
            dt,
            window: surrogate.max_step(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let (heads, voids) = path_conditions(state, cfg);
    let velocities: Vec<f64> = heads
        .iter()
        .zip(&voids)
        .zip(&state.velocities)
        .map(|((&dh, &alpha), &v)| {
            let head = if alpha > 0.0 { 0.0 } else { dh };
            surrogate.advance(head, v, dt)
        })
        .collect();
    let levels = mass_step(&state.levels, &velocities, &voids, dt, cfg);
    Ok(SystemState {
        time: state.time + dt,
        levels,
        velocities,
    })
}

/// Repeats [`p2f_step`] `⌊t_end / dt⌋` times, feeding each state back as the
/// initial condition of the next step.
pub fn p2f_simulate<S: MomentumSurrogate + ?Sized>(
    initial: &SystemState,
    dt: f64,
    t_end: f64,
    surrogate: &S,
    cfg: &TankNetworkConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    initial.check(cfg)?;
    if dt > surrogate.max_step() {
        return Err(Error::TimeStepExceedsWindow {
            dt,
            window: surrogate.max_step(),
        });
    }
    let mut traj = Trajectory::new(initial.clone());
    let mut state = initial.clone();
    for n in 1..=step_count(t_end, dt) {
        let mut next = p2f_step(&state, dt, surrogate, cfg)?;
        // Times are multiples of dt, not a running sum.
        next.time = initial.time + n as f64 * dt;
        traj.push(next.clone());
        state = next;
    }
    Ok(traj)
}

/// Hex SHA-256 of a model file's bytes.
pub fn model_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Plain-text record of a simulation run, written next to its trajectory.
/// Holds nothing that varies between identical runs.
pub fn run_manifest(
    solver: &str,
    dt: f64,
    t_end: f64,
    initial: &SystemState,
    model: Option<(&str, &[u8])>,
    config: &RunConfig,
) -> String {
    let levels: Vec<String> = initial.levels.iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "solver = {solver}");
    let _ = writeln!(out, "dt = {dt}");
    let _ = writeln!(out, "t_end = {t_end}");
    let _ = writeln!(out, "steps = {}", step_count(t_end, dt));
    let _ = writeln!(out, "initial_levels = {}", levels.join(","));
    if let Some((path, bytes)) = model {
        let _ = writeln!(out, "model = {path}");
        let _ = writeln!(out, "model_sha256 = {}", model_digest(bytes));
    }
    out.push_str("\n# configuration\n");
    out.push_str(&config.to_text());
    out
}
