//! Geometry of the tank cascade and the per-flow-path state kernels shared by
//! both the reference solver and the hybrid coupler.
//!
//! Flow paths are indexed from zero: path `j` drains control volume `j` into
//! control volume `j + 1`. Flow direction is fixed, so no sign is stored.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Geometry and physical constants of an `n_tanks` open-tank cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct TankNetworkConfig {
    pub n_tanks: usize,
    /// Tank cross-section, m².
    pub tank_area: f64,
    /// Tank height, m. Levels are clamped to `[0, tank_height]`.
    pub tank_height: f64,
    /// Flow path diameter, m.
    pub fp_diameter: f64,
    /// Inertial length of each flow path, m.
    pub inertial_length: f64,
    /// Elevation drop between successive tanks, m. Not used by the dynamics:
    /// the driving head is the level difference alone.
    pub elevation_drop: f64,
    /// Open fraction of each flow path area, in (0, 1].
    pub open_fraction: f64,
    /// Net form and wall loss coefficient.
    pub loss_coeff: f64,
    pub gravity: f64,
    pub density: f64,
    /// Level below which a tank counts as empty, m.
    pub dry_threshold: f64,
}

impl Default for TankNetworkConfig {
    fn default() -> Self {
        Self {
            n_tanks: 6,
            tank_area: 50.0,
            tank_height: 2.0,
            fp_diameter: 0.2,
            inertial_length: 0.1,
            elevation_drop: 1.8,
            open_fraction: 1.0,
            loss_coeff: 1.0,
            gravity: 9.81,
            density: 1000.0,
            dry_threshold: 1e-9,
        }
    }
}

impl TankNetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tanks < 2 {
            return Err(Error::Config(format!(
                "n_tanks must be at least 2, got {}",
                self.n_tanks
            )));
        }
        let positive = [
            ("tank_area", self.tank_area),
            ("tank_height", self.tank_height),
            ("fp_diameter", self.fp_diameter),
            ("inertial_length", self.inertial_length),
            ("elevation_drop", self.elevation_drop),
            ("open_fraction", self.open_fraction),
            ("loss_coeff", self.loss_coeff),
            ("gravity", self.gravity),
            ("density", self.density),
            ("dry_threshold", self.dry_threshold),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        if self.open_fraction > 1.0 {
            return Err(Error::Config(format!(
                "open_fraction must lie in (0, 1], got {}",
                self.open_fraction
            )));
        }
        Ok(())
    }

    pub fn n_paths(&self) -> usize {
        self.n_tanks - 1
    }

    /// Flow path cross-section π(d/2)², m².
    pub fn fp_area(&self) -> f64 {
        let r = 0.5 * self.fp_diameter;
        PI * r * r
    }

    /// Level change in a tank per unit velocity per unit time, `A_p F / A_t`.
    pub fn transfer_coeff(&self) -> f64 {
        self.fp_area() * self.open_fraction / self.tank_area
    }

    /// Steady velocity at which friction balances a head `dh`:
    /// `g dh = (K*/2) v²`.
    pub fn equilibrium_velocity(&self, dh: f64) -> f64 {
        (2.0 * self.gravity * dh.max(0.0) / self.loss_coeff).sqrt()
    }

    fn check_path(&self, j: usize) -> Result<()> {
        if j >= self.n_paths() {
            return Err(Error::FlowPathIndex {
                index: j,
                n_paths: self.n_paths(),
            });
        }
        Ok(())
    }
}

/// Levels and velocities of the whole network at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    /// Water level per tank, m.
    pub levels: Vec<f64>,
    /// Velocity per flow path, m/s (never negative).
    pub velocities: Vec<f64>,
}

impl SystemState {
    /// State at `t = 0` with the given levels and all flow paths at rest.
    pub fn at_rest(levels: Vec<f64>) -> Self {
        let n_paths = levels.len().saturating_sub(1);
        Self {
            time: 0.0,
            levels,
            velocities: vec![0.0; n_paths],
        }
    }

    pub fn check(&self, cfg: &TankNetworkConfig) -> Result<()> {
        if self.levels.len() != cfg.n_tanks {
            return Err(Error::Shape(format!(
                "expected {} levels, got {}",
                cfg.n_tanks,
                self.levels.len()
            )));
        }
        if self.velocities.len() != cfg.n_paths() {
            return Err(Error::Shape(format!(
                "expected {} velocities, got {}",
                cfg.n_paths(),
                self.velocities.len()
            )));
        }
        if let Some(h) = self
            .levels
            .iter()
            .find(|h| !(h.is_finite() && (0.0..=cfg.tank_height).contains(*h)))
        {
            return Err(Error::Config(format!(
                "level {h} outside [0, {}]",
                cfg.tank_height
            )));
        }
        if let Some(v) = self
            .velocities
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Config(format!("velocity {v} is negative or not finite")));
        }
        Ok(())
    }

    pub fn total_level(&self) -> f64 {
        self.levels.iter().sum()
    }
}

/// Training box of the surrogate's parametric inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBounds {
    /// Upper bound of the driving head, m.
    pub dh_train: f64,
    /// Upper bound of the initial velocity, m/s.
    pub v0_max: f64,
    /// Training time window, s. Also the largest step the coupler accepts.
    pub window: f64,
}

impl Default for DomainBounds {
    fn default() -> Self {
        Self {
            dh_train: 2.0,
            v0_max: 8.0,
            window: 1.0,
        }
    }
}

impl DomainBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("dh_train", self.dh_train),
            ("v0_max", self.v0_max),
            ("window", self.window),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Clamped level difference `max(h_j - h_{j+1}, 0)` across flow path `j`.
pub fn driving_head(state: &SystemState, j: usize, cfg: &TankNetworkConfig) -> Result<f64> {
    cfg.check_path(j)?;
    Ok((state.levels[j] - state.levels[j + 1]).max(0.0))
}

/// Binary void fraction of flow path `j`: 1 when its upstream tank is dry.
pub fn void_fraction(state: &SystemState, j: usize, cfg: &TankNetworkConfig) -> Result<f64> {
    cfg.check_path(j)?;
    Ok(if state.levels[j] <= cfg.dry_threshold {
        1.0
    } else {
        0.0
    })
}

/// Driving heads and void fractions for every flow path at once.
pub fn path_conditions(state: &SystemState, cfg: &TankNetworkConfig) -> (Vec<f64>, Vec<f64>) {
    (0..cfg.n_paths())
        .map(|j| {
            let dh = (state.levels[j] - state.levels[j + 1]).max(0.0);
            let alpha = if state.levels[j] <= cfg.dry_threshold {
                1.0
            } else {
                0.0
            };
            (dh, alpha)
        })
        .unzip()
}
