//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use p2f::autodiff::{loss, loss_and_gradient, MlpModel};
use p2f::napinn::CollocationSet;
use p2f::tank::TankNetworkConfig;

/// Closed-form solution of `L v' = g dh - (K/2) v|v|` for `v0 >= 0`.
pub fn exact_velocity(v0: f64, dh: f64, t: f64, c: &TankNetworkConfig) -> f64 {
    let (l, k, g) = (c.inertial_length, c.loss_coeff, c.gravity);
    if dh == 0.0 {
        return v0 / (1.0 + k * v0 * t / (2.0 * l));
    }
    let ve = (2.0 * g * dh / k).sqrt();
    let a = k * ve / (2.0 * l);
    if v0 < ve {
        ve * (a * t + (v0 / ve).atanh()).tanh()
    } else if v0 == ve {
        ve
    } else {
        ve / (a * t + 0.5 * ((v0 + ve) / (v0 - ve)).ln()).tanh()
    }
}

/// Largest deviation of the analytic gradient from central differences,
/// relative to the gradient magnitude (absolute below unit size).
pub fn gradient_fd_error(model: &MlpModel, batch: &CollocationSet, physics: &TankNetworkConfig) -> f64 {
    let (_, grad) = loss_and_gradient(model, batch, physics).unwrap();
    let mut worst = 0.0f64;
    for i in 0..model.n_params() {
        let p = model.params()[i];
        let h = 1e-6 * p.abs().max(1.0);
        let mut m = model.clone();
        m.params_mut()[i] = p + h;
        let up = loss(&m, batch, physics).unwrap();
        m.params_mut()[i] = p - h;
        let down = loss(&m, batch, physics).unwrap();
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0));
    }
    worst
}

/// Largest relative deviation of `forward_dual`'s time derivative from a
/// central difference of `forward`.
pub fn time_derivative_fd_error(model: &MlpModel, points: &[(f64, f64, f64)]) -> f64 {
    let w = model.bounds.window;
    let mut worst = 0.0f64;
    for &(dh_bar, t, v0_bar) in points {
        let (_, d) = model.forward_dual(dh_bar, t, v0_bar);
        let h = 1e-5 * w;
        let f = |tt: f64| model.forward([dh_bar, tt / w, v0_bar]);
        let fd = (f(t + h) - f(t - h)) / (2.0 * h);
        worst = worst.max((d - fd).abs() / d.abs().max(1.0));
    }
    worst
}
