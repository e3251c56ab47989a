//! Parameterized flow-path surrogate: one network maps
//! `(head, time, initial velocity)` to the velocity of any flow path.
//!
//! The initial condition is built into the output,
//! `v̂(t) = v0 + t · NN(dh/dh_train, t/T, v0/v0_max)`, so `v̂(0) = v0` for
//! every parameter vector and the training loss is the momentum residual
//! alone.

mod collocation;
mod train;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use collocation::{sample_collocation, CollocationSet};
pub use train::{train, AdamConfig, LogEntry, TrainConfig, TrainOutcome};

use crate::autodiff::MlpModel;
use crate::tank::TankNetworkConfig;

/// Velocity and its time derivative under the hard initial condition.
pub fn hard_ic_velocity(model: &MlpModel, dh: f64, t: f64, v0: f64) -> (f64, f64) {
    let b = model.bounds;
    let (nn, nn_dt) = model.forward_dual(dh / b.dh_train, t, v0 / b.v0_max);
    (v0 + t * nn, nn + t * nn_dt)
}

/// `L ∂v/∂t - g dh + (K*/2)|v| v`.
pub fn momentum_residual(v: f64, v_dt: f64, dh: f64, cfg: &TankNetworkConfig) -> f64 {
    cfg.inertial_length * v_dt - cfg.gravity * dh + 0.5 * cfg.loss_coeff * v.abs() * v
}

/// Residual with its partials with respect to `v` and `∂v/∂t`.
pub fn momentum_residual_partials(v: f64, v_dt: f64, dh: f64, cfg: &TankNetworkConfig) -> (f64, f64, f64) {
    (
        momentum_residual(v, v_dt, dh, cfg),
        cfg.loss_coeff * v.abs(),
        cfg.inertial_length,
    )
}

static OUT_OF_RANGE_WARNINGS: AtomicUsize = AtomicUsize::new(0);

/// Number of inference calls whose inputs had to be clamped into the
/// training box since the process started.
pub fn out_of_range_count() -> usize {
    OUT_OF_RANGE_WARNINGS.load(Ordering::Relaxed)
}

/// Velocity after time `t` from `v0` under head `dh`, clamped at zero.
///
/// Inputs outside the training box are clamped into it (with a warning)
/// instead of extrapolating.
pub fn predict_velocity(model: &MlpModel, dh: f64, v0: f64, t: f64) -> f64 {
    let b = model.bounds;
    let dh_c = dh.clamp(0.0, b.dh_train);
    let v0_c = v0.clamp(0.0, b.v0_max);
    let t_c = t.clamp(0.0, b.window);
    if dh_c != dh || v0_c != v0 || t_c != t {
        OUT_OF_RANGE_WARNINGS.fetch_add(1, Ordering::Relaxed);
        log::warn!("surrogate input (dh={dh}, v0={v0}, t={t}) outside training box; clamped");
    }
    let nn = model.forward(model.normalize(dh_c, t_c, v0_c));
    (v0_c + t_c * nn).max(0.0)
}
