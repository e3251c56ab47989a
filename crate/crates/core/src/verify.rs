//! Error metrics, the fixed scenario catalog and the three verification
//! suites: standalone surrogate accuracy, the nominal transient at several
//! step sizes (with solver timing), and generalization across initial
//! conditions.

use std::fmt::Write as _;
use std::time::Instant;

use crate::autodiff::MlpModel;
use crate::coupler::p2f_simulate;
use crate::error::{Error, Result};
use crate::fdm::{fdm_simulate, momentum_ode_oracle, FdmConfig, Trajectory};
use crate::napinn::predict_velocity;
use crate::tank::{SystemState, TankNetworkConfig};

/// Pooled errors: every level sample over all tanks and recorded times, and
/// every velocity sample over all flow paths and recorded times.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub level_mae: f64,
    pub level_mse: f64,
    pub velocity_mae: f64,
    pub velocity_mse: f64,
}

fn check_grids(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    for (k, (&ta, &tb)) in a.times.iter().zip(&b.times).enumerate() {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("sample {k}: t = {ta} vs {tb}")));
        }
    }
    for (k, (sa, sb)) in a.states.iter().zip(&b.states).enumerate() {
        if sa.levels.len() != sb.levels.len() || sa.velocities.len() != sb.velocities.len() {
            return Err(Error::GridMismatch(format!("sample {k}: network sizes differ")));
        }
    }
    Ok(())
}

fn pooled(pairs: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in pairs {
        let e = x - y;
        abs += e.abs();
        sq += e * e;
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (abs / n as f64, sq / n as f64)
    }
}

/// Pooled level and velocity errors of `a` against `b` on a shared grid.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory) -> Result<ErrorStats> {
    check_grids(a, b)?;
    let (level_mae, level_mse) = pooled(
        a.states
            .iter()
            .zip(&b.states)
            .flat_map(|(x, y)| x.levels.iter().copied().zip(y.levels.iter().copied())),
    );
    let (velocity_mae, velocity_mse) = pooled(a.states.iter().zip(&b.states).flat_map(|(x, y)| {
        x.velocities
            .iter()
            .copied()
            .zip(y.velocities.iter().copied())
    }));
    Ok(ErrorStats {
        level_mae,
        level_mse,
        velocity_mae,
        velocity_mse,
    })
}

/// Level MAE over the first and second halves of the recorded samples.
pub fn half_split_level_mae(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    check_grids(a, b)?;
    let mid = a.len() / 2;
    let part = |r: std::ops::Range<usize>| {
        pooled(r.flat_map(|k| {
            a.states[k]
                .levels
                .iter()
                .copied()
                .zip(b.states[k].levels.iter().copied())
        }))
        .0
    };
    Ok((part(0..mid), part(mid..a.len())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: &'static str,
    pub levels: [f64; 6],
}

impl Scenario {
    pub fn initial_state(&self) -> SystemState {
        SystemState::at_rest(self.levels.to_vec())
    }
}

/// Only the first tank is filled.
pub const NOMINAL: Scenario = Scenario {
    id: "nominal",
    levels: [2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
};

pub const GENERALIZATION_CASES: [Scenario; 5] = [
    Scenario {
        id: "case1",
        levels: [1.5, 0.5, 0.0, 0.0, 0.0, 0.0],
    },
    Scenario {
        id: "case2",
        levels: [1.0, 0.5, 0.5, 0.0, 0.0, 0.0],
    },
    Scenario {
        id: "case3",
        levels: [1.3, 0.7, 0.0, 0.0, 0.0, 0.0],
    },
    Scenario {
        id: "case4",
        levels: [0.5, 0.5, 0.5, 0.5, 0.0, 0.0],
    },
    Scenario {
        id: "case5",
        levels: [1.0, 0.5, 0.3, 0.2, 0.0, 0.0],
    },
];

/// Head and initial velocity of the three standalone conditions, with their
/// MAE pass bands in m/s.
pub const STANDALONE_CONDITIONS: [(f64, f64, f64); 3] =
    [(1.0, 0.0, 1.5e-2), (2.0, 3.0, 1.5e-2), (1.0, 6.0, 1.0e-2)];

pub const STEP_SIZES: [f64; 3] = [0.2, 0.5, 1.0];
pub const LEVEL_MAE_BAND: f64 = 5e-4;
pub const NOMINAL_VELOCITY_MAE_BAND: f64 = 1.5e-2;
pub const CASE_VELOCITY_MAE_BAND: f64 = 2e-2;
pub const CASE_SPREAD_BAND: f64 = 10.0;

/// One pass/fail comparison of a measured value against an upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
        }
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.limit
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (limit {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.limit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandaloneRow {
    pub dh: f64,
    pub v0: f64,
    pub mae: f64,
    pub mse: f64,
    pub limit: f64,
}

/// Surrogate velocity curves against the sub-stepped reference over the
/// training window.
#[derive(Debug, Clone, PartialEq)]
pub struct StandaloneReport {
    pub rows: Vec<StandaloneRow>,
}

/// Error and solver wall-clock for one scenario at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub scenario: String,
    pub dt: f64,
    pub stats: ErrorStats,
    pub fdm_seconds: f64,
    pub p2f_seconds: f64,
}

impl ErrorReport {
    /// Reference solver time over hybrid solver time; above 1 means the
    /// hybrid solver is faster.
    pub fn speedup(&self) -> f64 {
        self.fdm_seconds / self.p2f_seconds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalReport {
    pub rows: Vec<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CasesReport {
    pub rows: Vec<ErrorReport>,
}

impl CasesReport {
    /// Largest over smallest level MAE across the cases.
    pub fn level_mae_spread(&self) -> f64 {
        let maes = self.rows.iter().map(|r| r.stats.level_mae);
        let max = maes.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = maes.fold(f64::INFINITY, f64::min);
        max / min
    }
}

pub fn run_standalone(
    model: &MlpModel,
    physics: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> StandaloneReport {
    let window = model.bounds.window;
    let rows = STANDALONE_CONDITIONS
        .iter()
        .map(|&(dh, v0, limit)| {
            let reference = momentum_ode_oracle(v0, dh, window, physics, fdm);
            let (mae, mse) = pooled(
                reference
                    .iter()
                    .map(|&(t, v)| (predict_velocity(model, dh, v0, t), v)),
            );
            StandaloneRow {
                dh,
                v0,
                mae,
                mse,
                limit,
            }
        })
        .collect();
    StandaloneReport { rows }
}

/// Runs both solvers from `scenario` at step `dt` and compares them.
pub fn run_scenario(
    model: &MlpModel,
    scenario: &Scenario,
    dt: f64,
    physics: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> Result<(ErrorReport, Trajectory, Trajectory)> {
    let initial = scenario.initial_state();
    let fdm_cfg = FdmConfig { dt, ..fdm.clone() };
    let clock = Instant::now();
    let reference = fdm_simulate(&initial, physics, &fdm_cfg)?;
    let fdm_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let hybrid = p2f_simulate(&initial, dt, fdm.t_end, model, physics)?;
    let p2f_seconds = clock.elapsed().as_secs_f64();
    let stats = compare_trajectories(&hybrid, &reference)?;
    let report = ErrorReport {
        scenario: scenario.id.to_string(),
        dt,
        stats,
        fdm_seconds,
        p2f_seconds,
    };
    Ok((report, hybrid, reference))
}

pub fn run_nominal(
    model: &MlpModel,
    physics: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> Result<NominalReport> {
    let rows = STEP_SIZES
        .iter()
        .map(|&dt| run_scenario(model, &NOMINAL, dt, physics, fdm).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(NominalReport { rows })
}

pub fn run_cases(
    model: &MlpModel,
    physics: &TankNetworkConfig,
    fdm: &FdmConfig,
) -> Result<CasesReport> {
    let rows = GENERALIZATION_CASES
        .iter()
        .map(|s| run_scenario(model, s, 1.0, physics, fdm).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(CasesReport { rows })
}

impl StandaloneReport {
    pub fn checks(&self) -> Vec<Check> {
        self.rows
            .iter()
            .map(|r| Check::new(format!("standalone dh={} v0={} MAE", r.dh, r.v0), r.mae, r.limit))
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Δh (m) | v0 (m/s) | MAE (m/s) | MSE (m²/s²) | band | result |\n|---|---|---|---|---|---|\n",
        );
        for (r, c) in self.rows.iter().zip(self.checks()) {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3e} | {:.3e} | {:.1e} | {} |",
                r.dh,
                r.v0,
                r.mae,
                r.mse,
                r.limit,
                verdict(&c)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dh,v0,mae,mse,limit,pass\n");
        for (r, c) in self.rows.iter().zip(self.checks()) {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:e},{}",
                r.dh,
                r.v0,
                r.mae,
                r.mse,
                r.limit,
                c.passed()
            );
        }
        out
    }
}

fn verdict(c: &Check) -> &'static str {
    if c.passed() {
        "pass"
    } else {
        "FAIL"
    }
}

fn error_rows_markdown(rows: &[ErrorReport], velocity_band: f64) -> String {
    let mut out = String::from(
        "| scenario | Δt (s) | level MAE (m) | level MSE (m²) | velocity MAE (m/s) | velocity MSE (m²/s²) | result |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let ok = row_checks(r, velocity_band).iter().all(Check::passed);
        let _ = writeln!(
            out,
            "| {} | {} | {:.3e} | {:.3e} | {:.3e} | {:.3e} | {} |",
            r.scenario,
            r.dt,
            r.stats.level_mae,
            r.stats.level_mse,
            r.stats.velocity_mae,
            r.stats.velocity_mse,
            if ok { "pass" } else { "FAIL" }
        );
    }
    out
}

/// Timing columns are kept apart from the error tables so that the latter
/// are reproducible byte for byte.
fn error_rows_csv(rows: &[ErrorReport], velocity_band: f64) -> String {
    let mut out =
        String::from("scenario,dt,level_mae,level_mse,velocity_mae,velocity_mse,pass\n");
    for r in rows {
        let ok = row_checks(r, velocity_band).iter().all(Check::passed);
        let _ = writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.scenario,
            r.dt,
            r.stats.level_mae,
            r.stats.level_mse,
            r.stats.velocity_mae,
            r.stats.velocity_mse,
            ok
        );
    }
    out
}

fn row_checks(r: &ErrorReport, velocity_band: f64) -> [Check; 2] {
    [
        Check::new(
            format!("{} dt={} level MAE", r.scenario, r.dt),
            r.stats.level_mae,
            LEVEL_MAE_BAND,
        ),
        Check::new(
            format!("{} dt={} velocity MAE", r.scenario, r.dt),
            r.stats.velocity_mae,
            velocity_band,
        ),
    ]
}

impl NominalReport {
    pub fn checks(&self) -> Vec<Check> {
        self.rows
            .iter()
            .flat_map(|r| row_checks(r, NOMINAL_VELOCITY_MAE_BAND))
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        error_rows_markdown(&self.rows, NOMINAL_VELOCITY_MAE_BAND)
    }

    pub fn to_csv(&self) -> String {
        error_rows_csv(&self.rows, NOMINAL_VELOCITY_MAE_BAND)
    }

    /// Wall-clock of both solvers per step size.
    pub fn timing_markdown(&self) -> String {
        let mut out = String::from(
            "| Δt (s) | FDM (s) | P2F (s) | speedup |\n|---|---|---|---|\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {:.2}x |",
                r.dt,
                r.fdm_seconds,
                r.p2f_seconds,
                r.speedup()
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("dt,fdm_seconds,p2f_seconds,speedup\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6e},{:.6e},{:.6e}",
                r.dt,
                r.fdm_seconds,
                r.p2f_seconds,
                r.speedup()
            );
        }
        out
    }
}

impl CasesReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut checks: Vec<Check> = self
            .rows
            .iter()
            .flat_map(|r| row_checks(r, CASE_VELOCITY_MAE_BAND))
            .collect();
        checks.push(Check::new(
            "level MAE max/min across cases",
            self.level_mae_spread(),
            CASE_SPREAD_BAND,
        ));
        checks
    }

    pub fn to_markdown(&self) -> String {
        let mut out = error_rows_markdown(&self.rows, CASE_VELOCITY_MAE_BAND);
        let _ = writeln!(
            out,
            "\nLevel MAE max/min across cases: {:.3} (band {CASE_SPREAD_BAND})",
            self.level_mae_spread()
        );
        out
    }

    pub fn to_csv(&self) -> String {
        error_rows_csv(&self.rows, CASE_VELOCITY_MAE_BAND)
    }
}

/// Whichever suites were run, plus the settings they ran with.
#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub t_end: f64,
    pub standalone: Option<StandaloneReport>,
    pub nominal: Option<NominalReport>,
    pub cases: Option<CasesReport>,
}

impl VerificationReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut all = Vec::new();
        if let Some(r) = &self.standalone {
            all.extend(r.checks());
        }
        if let Some(r) = &self.nominal {
            all.extend(r.checks());
        }
        if let Some(r) = &self.cases {
            all.extend(r.checks());
        }
        all
    }

    pub fn failures(&self) -> Vec<Check> {
        self.checks().into_iter().filter(|c| !c.passed()).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Verification report\n\n");
        let _ = writeln!(out, "Simulation horizon: {} s\n", self.t_end);
        if let Some(r) = &self.standalone {
            let _ = writeln!(out, "## Standalone surrogate\n\n{}", r.to_markdown());
        }
        if let Some(r) = &self.nominal {
            let _ = writeln!(out, "## Nominal transient\n\n{}", r.to_markdown());
            let _ = writeln!(out, "## Computational cost\n\n{}", r.timing_markdown());
        }
        if let Some(r) = &self.cases {
            let _ = writeln!(out, "## Initial-condition cases\n\n{}", r.to_markdown());
        }
        let failures = self.failures();
        if failures.is_empty() {
            out.push_str("All bands met.\n");
        } else {
            out.push_str("Failures:\n\n");
            for c in failures {
                let _ = writeln!(out, "- {c}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tank::DomainBounds;

    fn traj(levels: &[[f64; 3]], velocities: &[[f64; 2]]) -> Trajectory {
        let mut states = levels.iter().zip(velocities).enumerate().map(|(k, (h, v))| SystemState {
            time: k as f64,
            levels: h.to_vec(),
            velocities: v.to_vec(),
        });
        let mut t = Trajectory::new(states.next().unwrap());
        states.for_each(|s| t.push(s));
        t
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let a = traj(&[[1.0, 0.5, 0.0], [0.9, 0.6, 0.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(compare_trajectories(&a, &a).unwrap(), ErrorStats::default());
    }

    #[test]
    fn constant_offset() {
        let a = traj(&[[1.0, 0.5, 0.0], [0.9, 0.6, 0.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        let b = traj(
            &[[1.001, 0.501, 0.001], [0.901, 0.601, 0.001]],
            &[[0.0, 0.0], [1.0, 0.0]],
        );
        let s = compare_trajectories(&b, &a).unwrap();
        assert!((s.level_mae - 1e-3).abs() < 1e-15);
        assert!((s.level_mse - 1e-6).abs() < 1e-17);
        assert_eq!(s.velocity_mae, 0.0);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = traj(&[[1.0, 0.5, 0.0], [0.9, 0.6, 0.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        let b = traj(&[[1.0, 0.5, 0.0]], &[[0.0, 0.0]]);
        assert!(matches!(compare_trajectories(&a, &b), Err(Error::GridMismatch(_))));
        let mut c = a.clone();
        c.times[1] = 1.5;
        assert!(compare_trajectories(&a, &c).is_err());
    }

    #[test]
    fn half_split() {
        let a = traj(&[[0.0; 3]; 4], &[[0.0; 2]; 4]);
        let mut b = a.clone();
        b.states[3].levels = vec![3.0, 3.0, 3.0];
        let (first, second) = half_split_level_mae(&b, &a).unwrap();
        assert_eq!(first, 0.0);
        assert_eq!(second, 1.5);
    }

    #[test]
    fn catalog_states_are_admissible() {
        let cfg = TankNetworkConfig::default();
        for s in std::iter::once(&NOMINAL).chain(&GENERALIZATION_CASES) {
            s.initial_state().check(&cfg).unwrap();
        }
    }

    #[test]
    fn check_display_and_verdict() {
        let ok = Check::new("x", 1e-4, 5e-4);
        assert!(ok.passed());
        assert!(ok.to_string().starts_with("PASS x"));
        assert!(!Check::new("y", f64::NAN, 1.0).passed());
    }

    #[test]
    fn untrained_model_fails_the_bands() {
        let physics = TankNetworkConfig::default();
        let fdm = FdmConfig {
            t_end: 20.0,
            substeps_per_dt: 100,
            ..Default::default()
        };
        let model = MlpModel::zeros(&[3, 4, 1], DomainBounds::default()).unwrap();
        let report = VerificationReport {
            t_end: fdm.t_end,
            standalone: Some(run_standalone(&model, &physics, &fdm)),
            nominal: Some(run_nominal(&model, &physics, &fdm).unwrap()),
            cases: None,
        };
        assert_eq!(report.checks().len(), 3 + 6);
        assert!(!report.failures().is_empty());
        let md = report.to_markdown();
        assert!(md.contains("Failures:"));
        let rows = report.nominal.as_ref().unwrap();
        assert!(rows.rows.iter().all(|r| r.speedup() > 0.0));
        assert_eq!(rows.to_csv().lines().count(), 4);
        assert_eq!(rows.timing_csv().lines().count(), 4);
        assert!(md.contains("## Computational cost"));
    }
}
