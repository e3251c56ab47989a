//! Browser bindings for the demo page in `www/`.
//!
//! Trajectories cross the boundary as flat `Float64Array`s, one row per
//! recorded time: `t, h1..hN, v1..vN-1`.

use p2f::autodiff::MlpModel;
use p2f::coupler::p2f_simulate;
use p2f::fdm::{fdm_simulate, momentum_ode_oracle, FdmConfig, Trajectory};
use p2f::napinn::predict_velocity;
use p2f::tank::{SystemState, TankNetworkConfig};
use p2f::verify::compare_trajectories;
use wasm_bindgen::prelude::*;

fn flatten(traj: &Trajectory) -> Vec<f64> {
    let mut out = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        out.push(*t);
        out.extend_from_slice(&s.levels);
        out.extend_from_slice(&s.velocities);
    }
    out
}

fn initial_state(levels: &[f64], cfg: &TankNetworkConfig) -> p2f::Result<SystemState> {
    let s = SystemState::at_rest(levels.to_vec());
    s.check(cfg)?;
    Ok(s)
}

fn js_err(e: p2f::Error) -> JsError {
    JsError::new(&e.to_string())
}

pub fn run_fdm(levels: &[f64], dt: f64, t_end: f64) -> p2f::Result<Trajectory> {
    let cfg = TankNetworkConfig::default();
    let fdm = FdmConfig {
        dt,
        t_end,
        ..Default::default()
    };
    fdm_simulate(&initial_state(levels, &cfg)?, &cfg, &fdm)
}

/// Values per trajectory row for the default six-tank network.
#[wasm_bindgen(js_name = rowWidth)]
pub fn row_width() -> usize {
    let n = TankNetworkConfig::default().n_tanks;
    1 + n + (n - 1)
}

/// Reference finite-difference run from rest.
#[wasm_bindgen(js_name = simulateFdm)]
pub fn simulate_fdm(levels: &[f64], dt: f64, t_end: f64) -> Result<Vec<f64>, JsError> {
    run_fdm(levels, dt, t_end).map(|t| flatten(&t)).map_err(js_err)
}

/// A trained surrogate loaded from its model file text.
#[wasm_bindgen]
pub struct Surrogate {
    model: MlpModel,
    physics: TankNetworkConfig,
}

impl Surrogate {
    pub fn parse(text: &str) -> p2f::Result<Self> {
        Ok(Self {
            model: MlpModel::from_text(text)?,
            physics: TankNetworkConfig::default(),
        })
    }

    /// Rows of `t, surrogate, reference` over the training window.
    pub fn curve(&self, dh: f64, v0: f64, samples: usize) -> Vec<f64> {
        let fdm = FdmConfig {
            substeps_per_dt: samples.max(1),
            ..Default::default()
        };
        momentum_ode_oracle(v0, dh, self.model.bounds.window, &self.physics, &fdm)
            .into_iter()
            .flat_map(|(t, v)| [t, predict_velocity(&self.model, dh, v0, t), v])
            .collect()
    }

    pub fn run(&self, levels: &[f64], dt: f64, t_end: f64) -> p2f::Result<Trajectory> {
        let s = initial_state(levels, &self.physics)?;
        p2f_simulate(&s, dt, t_end, &self.model, &self.physics)
    }
}

#[wasm_bindgen]
impl Surrogate {
    #[wasm_bindgen(constructor)]
    pub fn new(text: &str) -> Result<Surrogate, JsError> {
        Self::parse(text).map_err(js_err)
    }

    /// Longest usable step, s.
    #[wasm_bindgen(getter)]
    pub fn window(&self) -> f64 {
        self.model.bounds.window
    }

    /// Velocity after time t under a fixed head, from the network and from
    /// a finely sub-stepped integration, as `t, v_net, v_ref` triples.
    #[wasm_bindgen(js_name = velocityCurve)]
    pub fn velocity_curve(&self, dh: f64, v0: f64, samples: usize) -> Vec<f64> {
        self.curve(dh, v0, samples)
    }

    /// Hybrid run: network velocities, finite-difference levels.
    pub fn simulate(&self, levels: &[f64], dt: f64, t_end: f64) -> Result<Vec<f64>, JsError> {
        self.run(levels, dt, t_end).map(|t| flatten(&t)).map_err(js_err)
    }

    /// Pooled level and velocity MAE of the hybrid run against the reference
    /// run from the same state: `[level_mae, velocity_mae]`.
    pub fn compare(&self, levels: &[f64], dt: f64, t_end: f64) -> Result<Vec<f64>, JsError> {
        let hybrid = self.run(levels, dt, t_end).map_err(js_err)?;
        let reference = run_fdm(levels, dt, t_end).map_err(js_err)?;
        let s = compare_trajectories(&hybrid, &reference).map_err(js_err)?;
        Ok(vec![s.level_mae, s.velocity_mae])
    }
}
