//! Reference finite-difference solver.
//!
//! Each step first updates every flow-path velocity from the start-of-step
//! levels with a semi-implicit momentum update, then advances the levels with
//! the explicit mass balance. The same mass update is used by the hybrid
//! coupler, so both solvers share their conservation behaviour exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tank::{path_conditions, SystemState, TankNetworkConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FdmConfig {
    /// Time step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub t_end: f64,
    /// Relative tolerance of the friction linearization loop.
    pub friction_iter_tol: f64,
    pub friction_iter_max: usize,
    /// Sub-intervals per `dt` used by [`momentum_ode_oracle`].
    pub substeps_per_dt: usize,
}

impl Default for FdmConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            t_end: 400.0,
            friction_iter_tol: 1e-10,
            friction_iter_max: 50,
            substeps_per_dt: 2000,
        }
    }
}

impl FdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Config(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.friction_iter_tol > 0.0) {
            return Err(Error::Config("friction_iter_tol must be positive".into()));
        }
        if self.friction_iter_max == 0 || self.substeps_per_dt == 0 {
            return Err(Error::Config(
                "friction_iter_max and substeps_per_dt must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Number of whole steps of size `dt` that fit in `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    // Guard against 10.0 / 0.1 landing just under an integer.
    (t_end / dt * (1.0 + 1e-12)).floor() as usize
}

/// Result of one semi-implicit momentum update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumUpdate {
    pub velocity: f64,
    pub iterations: usize,
    /// False when the linearization hit `friction_iter_max` before the
    /// relative change dropped below `friction_iter_tol`.
    pub converged: bool,
}

/// Advances one flow-path velocity by `dt` under a fixed head `dh`.
///
/// Solves `L (v' - v) / dt = g dh - (K*/2) |v'| v'` by repeatedly linearizing
/// the friction term about the latest iterate `v_k`
/// (`|v'| v' ≈ |v_k| (2 v' - v_k)`), starting from `v_k = v_n`. Each pass is
/// a linear solve for `v'`. The result is clamped at zero.
pub fn momentum_step_reference(
    v_n: f64,
    dh: f64,
    dt: f64,
    cfg: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> MomentumUpdate {
    let inertia = cfg.inertial_length / dt;
    let drive = inertia * v_n + cfg.gravity * dh;
    let half_k = 0.5 * cfg.loss_coeff;

    let mut v_k = v_n;
    for it in 1..=fdm.friction_iter_max {
        let a = v_k.abs();
        let v_next = (drive + half_k * a * v_k) / (inertia + cfg.loss_coeff * a);
        let change = (v_next - v_k).abs();
        v_k = v_next;
        if change <= fdm.friction_iter_tol * v_next.abs() || change == 0.0 {
            return MomentumUpdate {
                velocity: v_k.max(0.0),
                iterations: it,
                converged: true,
            };
        }
    }
    MomentumUpdate {
        velocity: v_k.max(0.0),
        iterations: fdm.friction_iter_max,
        converged: false,
    }
}

/// Fine-grained reference solution of the single-path momentum equation with
/// the head held at `dh` over `[0, window]`.
///
/// Uses `substeps_per_dt * max(1, window / dt)` sub-intervals of
/// [`momentum_step_reference`] and returns every `(t, v)` pair including
/// `t = 0`.
pub fn momentum_ode_oracle(
    v0: f64,
    dh: f64,
    window: f64,
    cfg: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> Vec<(f64, f64)> {
    let per_dt = (window / fdm.dt).round().max(1.0) as usize;
    let n = fdm.substeps_per_dt * per_dt;
    let h = window / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut v = v0;
    out.push((0.0, v));
    for i in 1..=n {
        v = momentum_step_reference(v, dh, h, cfg, fdm).velocity;
        out.push((i as f64 * h, v));
    }
    out
}

/// Value of the sub-stepped reference at exactly `t` (the last sample).
pub fn momentum_ode_endpoint(
    v0: f64,
    dh: f64,
    t: f64,
    cfg: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> f64 {
    if t <= 0.0 {
        return v0;
    }
    let h = t / fdm.substeps_per_dt as f64;
    (0..fdm.substeps_per_dt).fold(v0, |v, _| {
        momentum_step_reference(v, dh, h, cfg, fdm).velocity
    })
}

/// Explicit mass balance for one step.
///
/// Flow path `j` moves `dt A_p F / A_t v_j (1 - α_j)` of level from tank `j`
/// to tank `j + 1`. Transfers are applied upstream first; a transfer that
/// would empty its source below zero is reduced to exactly what the source
/// holds, and one that would overfill its receiver is reduced to the spare
/// height. Every transfer leaves one tank and enters the next, so the level
/// sum is conserved up to rounding.
pub fn mass_step(
    levels: &[f64],
    velocities: &[f64],
    voids: &[f64],
    dt: f64,
    cfg: &TankNetworkConfig,
) -> Vec<f64> {
    debug_assert_eq!(levels.len(), velocities.len() + 1);
    debug_assert_eq!(velocities.len(), voids.len());
    let coeff = dt * cfg.transfer_coeff();
    let mut next = levels.to_vec();
    for j in 0..velocities.len() {
        let wanted = coeff * velocities[j] * (1.0 - voids[j]);
        let spare = (cfg.tank_height - next[j + 1]).max(0.0);
        let moved = wanted.min(next[j]).min(spare).max(0.0);
        next[j] -= moved;
        next[j + 1] += moved;
    }
    next
}

/// Time series of network states, one snapshot per stored step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    /// Momentum updates whose friction loop did not converge.
    pub momentum_warnings: usize,
}

impl Trajectory {
    pub fn new(initial: SystemState) -> Self {
        Self {
            times: vec![initial.time],
            states: vec![initial],
            momentum_warnings: 0,
        }
    }

    pub fn push(&mut self, state: SystemState) {
        self.times.push(state.time);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&SystemState> {
        self.states.last()
    }

    /// Level history of tank `i`.
    pub fn level_series(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.levels[i]).collect()
    }

    /// Velocity history of flow path `j`.
    pub fn velocity_series(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.velocities[j]).collect()
    }

    /// CSV with header `t,h1..hN,v1..vN-1` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.states.first() else {
            return out;
        };
        out.push('t');
        for i in 1..=first.levels.len() {
            let _ = write!(out, ",h{i}");
        }
        for j in 1..=first.velocities.len() {
            let _ = write!(out, ",v{j}");
        }
        out.push('\n');
        for s in &self.states {
            let _ = write!(out, "{:.16e}", s.time);
            for x in s.levels.iter().chain(&s.velocities) {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Parses the format written by [`Trajectory::to_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: "<trajectory>".into(),
            line,
            message,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let n_levels = cols.iter().filter(|c| c.starts_with('h')).count();
        let n_vel = cols.iter().filter(|c| c.starts_with('v')).count();
        if cols.first() != Some(&"t") || n_levels + n_vel + 1 != cols.len() {
            return Err(parse_err(1, format!("unexpected header `{header}`")));
        }
        let mut traj = Trajectory::default();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(k + 2, e.to_string()))?;
            if vals.len() != cols.len() {
                return Err(parse_err(
                    k + 2,
                    format!("expected {} fields, got {}", cols.len(), vals.len()),
                ));
            }
            traj.push(SystemState {
                time: vals[0],
                levels: vals[1..=n_levels].to_vec(),
                velocities: vals[n_levels + 1..].to_vec(),
            });
        }
        Ok(traj)
    }
}

/// Advances the network with the reference solver.
///
/// Velocities are updated from start-of-step heads; a path whose upstream tank
/// is dry is updated with zero head, so it decays under friction while its
/// mass flux is gated off.
pub fn fdm_simulate(
    initial: &SystemState,
    cfg: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    fdm.validate()?;
    initial.check(cfg)?;

    let mut traj = Trajectory::new(initial.clone());
    let mut state = initial.clone();
    let t0 = initial.time;
    for n in 1..=step_count(fdm.t_end, fdm.dt) {
        let (heads, voids) = path_conditions(&state, cfg);
        let mut velocities = Vec::with_capacity(heads.len());
        for (j, (&dh, &alpha)) in heads.iter().zip(&voids).enumerate() {
            let head = if alpha > 0.0 { 0.0 } else { dh };
            let upd = momentum_step_reference(state.velocities[j], head, fdm.dt, cfg, fdm);
            if !upd.converged {
                traj.momentum_warnings += 1;
                log::warn!(
                    "friction linearization did not converge at path {} step {n}",
                    j + 1
                );
            }
            velocities.push(upd.velocity);
        }
        let levels = mass_step(&state.levels, &velocities, &voids, fdm.dt, cfg);
        state = SystemState {
            time: t0 + n as f64 * fdm.dt,
            levels,
            velocities,
        };
        traj.push(state.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TankNetworkConfig {
        TankNetworkConfig::default()
    }

    /// Closed-form solution of `L v' = g dh - (K/2) v²`, `v(0) = v0 >= 0`.
    fn exact_velocity(v0: f64, dh: f64, t: f64, c: &TankNetworkConfig) -> f64 {
        let (l, k, g) = (c.inertial_length, c.loss_coeff, c.gravity);
        if dh == 0.0 {
            return v0 / (1.0 + k * v0 * t / (2.0 * l));
        }
        let ve = (2.0 * g * dh / k).sqrt();
        let rate = k * ve / (2.0 * l);
        if v0 < ve {
            ve * (rate * t + (v0 / ve).atanh()).tanh()
        } else if v0 == ve {
            ve
        } else {
            ve / (rate * t + 0.5 * ((v0 + ve) / (v0 - ve)).ln()).tanh()
        }
    }

    #[test]
    fn momentum_at_rest_stays_at_rest() {
        let u = momentum_step_reference(0.0, 0.0, 1.0, &cfg(), &FdmConfig::default());
        assert_eq!(u.velocity, 0.0);
        assert!(u.converged);
    }

    #[test]
    fn momentum_equilibrium_is_fixed_point() {
        let c = cfg();
        let f = FdmConfig::default();
        let v_eq = (2.0f64 * 9.81 / 1.0).sqrt();
        assert!((v_eq - 4.429446918).abs() < 1e-9);
        for dt in [0.01, 0.2, 1.0, 50.0] {
            let u = momentum_step_reference(v_eq, 1.0, dt, &c, &f);
            assert!((u.velocity - v_eq).abs() <= 1e-10 * v_eq, "dt={dt}");
        }
    }

    #[test]
    fn momentum_large_step_reaches_equilibrium() {
        let c = cfg();
        let f = FdmConfig::default();
        let u = momentum_step_reference(0.0, 1.0, 1e6, &c, &f);
        assert!((u.velocity - 4.429446918).abs() < 1e-6);
        assert!(u.converged);
    }

    #[test]
    fn momentum_step_solves_the_implicit_equation() {
        let c = cfg();
        let f = FdmConfig::default();
        for &(vn, dh, dt) in &[(0.0, 2.0, 1.0), (6.0, 1.0, 0.2), (3.0, 0.1, 0.5), (8.0, 0.0, 1.0)] {
            let v = momentum_step_reference(vn, dh, dt, &c, &f).velocity;
            let lhs = c.inertial_length * (v - vn) / dt;
            let rhs = c.gravity * dh - 0.5 * c.loss_coeff * v.abs() * v;
            assert!((lhs - rhs).abs() < 1e-9, "{vn} {dh} {dt}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn nonconvergence_is_flagged_not_fatal() {
        let f = FdmConfig {
            friction_iter_max: 1,
            ..Default::default()
        };
        let u = momentum_step_reference(0.0, 2.0, 1.0, &cfg(), &f);
        assert!(!u.converged);
        assert!(u.velocity.is_finite() && u.velocity >= 0.0);
    }

    #[test]
    fn oracle_zero_case() {
        let series = momentum_ode_oracle(0.0, 0.0, 1.0, &cfg(), &FdmConfig::default());
        assert!(series.iter().all(|&(_, v)| v == 0.0));
        assert_eq!(series.len(), 2001);
    }

    #[test]
    fn oracle_decelerates_from_overspeed() {
        let c = cfg();
        let v_eq = c.equilibrium_velocity(1.0);
        let series = momentum_ode_oracle(6.0, 1.0, 1.0, &c, &FdmConfig::default());
        // strictly decreasing until it reaches equilibrium to round-off
        assert!(series
            .windows(2)
            .all(|w| w[1].1 < w[0].1 || (w[1].1 == w[0].1 && w[0].1 - v_eq < 1e-12)));
        assert!(series.last().unwrap().1 > 4.4294);
    }

    #[test]
    fn oracle_rises_concavely_from_rest() {
        let c = cfg();
        let series = momentum_ode_oracle(0.0, 1.0, 1.0, &c, &FdmConfig::default());
        let v: Vec<f64> = series.iter().map(|p| p.1).collect();
        assert!(v
            .windows(2)
            .all(|w| w[1] > w[0] || (w[1] == w[0] && 4.429446918 - w[0] < 1e-8)));
        // concave: increments shrink
        assert!(v.windows(3).all(|w| (w[2] - w[1]) <= (w[1] - w[0]) + 1e-15));
        assert!(*v.last().unwrap() <= c.equilibrium_velocity(1.0));
        assert!((v.last().unwrap() - 4.429446918).abs() < 1e-6);
    }

    #[test]
    fn oracle_matches_closed_form() {
        let c = cfg();
        let f = FdmConfig::default();
        for &(dh, v0, tol) in &[
            (1.0, 0.0, 1.5e-3),
            (2.0, 3.0, 1.5e-3),
            (1.0, 6.0, 1.5e-3),
            (0.01, 0.5, 1.5e-3),
            (0.0, 8.0, 5e-3),
        ] {
            let series = momentum_ode_oracle(v0, dh, 1.0, &c, &f);
            let mae = series
                .iter()
                .map(|&(t, v)| (v - exact_velocity(v0, dh, t, &c)).abs())
                .sum::<f64>()
                / series.len() as f64;
            assert!(mae < tol, "({dh}, {v0}): oracle MAE {mae}");
        }
    }

    #[test]
    fn mass_step_hand_example() {
        let c = cfg();
        let h = mass_step(
            &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0; 5],
            1.0,
            &c,
        );
        // 0.031415926535.../50
        assert!((h[0] - 1.999_371_681_469_282).abs() < 1e-14);
        assert!((h[1] - 0.000_628_318_530_718).abs() < 1e-14);
        assert!(h[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mass_step_without_flow_is_identity() {
        let levels = [1.0, 0.5, 0.3, 0.2, 0.0, 0.0];
        assert_eq!(mass_step(&levels, &[0.0; 5], &[0.0; 5], 1.0, &cfg()), levels);
    }

    #[test]
    fn mass_step_limits_drain_to_zero() {
        let c = cfg();
        let h = mass_step(&[1e-5, 0.0, 0.0], &[5.0, 0.0], &[0.0, 1.0], 1.0, &TankNetworkConfig {
            n_tanks: 3,
            ..c
        });
        assert_eq!(h[0], 0.0);
        assert_eq!(h[1], 1e-5);
    }

    #[test]
    fn dry_path_carries_no_mass() {
        let h = mass_step(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], &[3.0, 0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 0.0], 1.0, &cfg());
        assert_eq!(h, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_zero_initial_state_stays_zero() {
        let c = cfg();
        let f = FdmConfig {
            t_end: 20.0,
            ..Default::default()
        };
        let traj = fdm_simulate(&SystemState::at_rest(vec![0.0; 6]), &c, &f).unwrap();
        assert_eq!(traj.len(), 21);
        for s in &traj.states {
            assert!(s.levels.iter().chain(&s.velocities).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn coarse_and_fine_steps_agree() {
        let c = cfg();
        let init = SystemState::at_rest(vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let coarse = fdm_simulate(&init, &c, &FdmConfig { dt: 1.0, ..Default::default() }).unwrap();
        let fine = fdm_simulate(&init, &c, &FdmConfig { dt: 0.05, ..Default::default() }).unwrap();
        let (a, b) = (coarse.last().unwrap(), fine.last().unwrap());
        assert!((a.time - b.time).abs() < 1e-9);
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert!((x - y).abs() < 1e-2, "{x} vs {y}");
        }
    }

    #[test]
    fn halving_the_step_halves_the_error() {
        let c = cfg();
        let init = SystemState::at_rest(vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let t_end = 200.0;
        let run = |dt: f64| {
            fdm_simulate(&init, &c, &FdmConfig { dt, t_end, ..Default::default() }).unwrap()
        };
        let reference = run(1.0 / 64.0);
        let err = |dt: f64| {
            let traj = run(dt);
            let stride = (dt * 64.0).round() as usize;
            let mut e = 0.0f64;
            for (n, s) in traj.states.iter().enumerate() {
                let r = &reference.states[n * stride];
                for (x, y) in s.levels.iter().zip(&r.levels) {
                    e = e.max((x - y).abs());
                }
            }
            e
        };
        let (e1, e2, e4) = (err(1.0), err(0.5), err(0.25));
        let (r1, r2) = (e1 / e2, e2 / e4);
        assert!((1.5..=2.5).contains(&r1), "ratio {r1} ({e1}, {e2})");
        assert!((1.5..=2.5).contains(&r2), "ratio {r2} ({e2}, {e4})");
    }

    #[test]
    fn csv_header_and_precision() {
        let c = cfg();
        let traj = fdm_simulate(
            &SystemState::at_rest(vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            &c,
            &FdmConfig { t_end: 10.0, ..Default::default() },
        )
        .unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,h1,h2,h3,h4,h5,h6,v1,v2,v3,v4,v5");
        assert_eq!(csv.lines().count(), 12);
        let back = Trajectory::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(back.states, traj.states);
    }

    proptest! {
        #[test]
        fn momentum_is_monotone_in_head(vn in 0.0f64..8.0, dh in 0.0f64..2.0, extra in 0.0f64..1.0, dt in 0.01f64..1.0) {
            let c = cfg();
            let f = FdmConfig::default();
            let lo = momentum_step_reference(vn, dh, dt, &c, &f).velocity;
            let hi = momentum_step_reference(vn, dh + extra, dt, &c, &f).velocity;
            prop_assert!(hi >= lo - 1e-12);
        }

        #[test]
        fn mass_step_conserves_and_bounds(
            levels in prop::collection::vec(0.0f64..2.0, 6),
            vel in prop::collection::vec(0.0f64..8.0, 5),
            dt in 0.01f64..1.0,
        ) {
            let c = cfg();
            let voids: Vec<f64> = levels[..5].iter().map(|&h| if h <= c.dry_threshold { 1.0 } else { 0.0 }).collect();
            let next = mass_step(&levels, &vel, &voids, dt, &c);
            let before: f64 = levels.iter().sum();
            let after: f64 = next.iter().sum();
            prop_assert!((before - after).abs() <= 1e-14 * before.max(1.0));
            prop_assert!(next.iter().all(|&h| (0.0..=c.tank_height).contains(&h)));
        }
    }
}
