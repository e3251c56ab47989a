use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use p2f::autodiff::MlpModel;
use p2f::config::RunConfig;
use p2f::coupler::{p2f_simulate, run_manifest};
use p2f::fdm::{fdm_simulate, FdmConfig};
use p2f::tank::SystemState;
use p2f::verify::{run_cases, run_nominal, run_standalone, VerificationReport};
use p2f::Error;

#[derive(Parser)]
#[command(name = "p2f", version, about = "Tank-cascade solver with a trained momentum surrogate")]
struct Cli {
    /// Run configuration (flat key = value file). Defaults apply when absent.
    #[arg(long, env = "P2F_CONFIG", global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the flow-path surrogate and write the model file.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Training-log CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run one solver from an initial condition and write its trajectory.
    Simulate {
        #[arg(long, value_enum)]
        solver: Solver,
        /// Comma-separated initial levels in metres, one per tank.
        #[arg(long, default_value = "2,0,0,0,0,0")]
        ic: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Trained model; required for the hybrid solver.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run manifest; defaults to `<out>.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Check a trained model against the reference solver.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// Suites to run: 1 standalone, 2 nominal transient, 3 IC cases.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        tables: Vec<u8>,
        /// Directory for `report.md` and per-suite CSV files.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Fdm,
    P2f,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TimeStepExceedsWindow { .. } => 3,
            Error::Config(_) | Error::Parse { .. } | Error::Shape(_) => 2,
            _ => 1,
        };
        Self::new(code, e.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::new(2, format!("cannot read config {}: {e}", p.display())))?;
            Ok(RunConfig::parse(&text, p)?)
        }
    }
}

/// Model plus its raw bytes for hashing.
fn load_model(path: &Path) -> Result<(MlpModel, Vec<u8>), Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::new(2, format!("cannot read model {}: {e}", path.display())))?;
    let model = MlpModel::read(bytes.as_slice(), path).map_err(|e| Failure::new(2, e.to_string()))?;
    Ok((model, bytes))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(cfg: RunConfig, out: &Path, seed: Option<u64>, log: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = cfg;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let outcome = cfg.run_training()?;
    write(out, &outcome.model.to_text())?;
    let log_path = log.map_or_else(|| with_suffix(out, ".log.csv"), Path::to_path_buf);
    write(&log_path, &outcome.log_csv())?;
    eprintln!(
        "best validation loss {:.4e} at epoch {}; model written to {}",
        outcome.best_val_loss,
        outcome.best_epoch,
        out.display()
    );
    if let Some(epoch) = outcome.aborted_at {
        return Err(Failure::new(
            1,
            format!("training stopped at epoch {epoch} on a non-finite loss"),
        ));
    }
    Ok(())
}

fn parse_ic(ic: &str, n_tanks: usize) -> Result<SystemState, Failure> {
    let levels = ic
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::new(2, format!("cannot parse initial levels `{ic}`")))?;
    if levels.len() != n_tanks {
        return Err(Failure::new(
            2,
            format!("expected {n_tanks} initial levels, got {}", levels.len()),
        ));
    }
    Ok(SystemState::at_rest(levels))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cfg: RunConfig,
    solver: Solver,
    ic: &str,
    dt: Option<f64>,
    t_end: Option<f64>,
    model_path: Option<&Path>,
    out: &Path,
    manifest: Option<&Path>,
) -> Result<(), Failure> {
    let initial = parse_ic(ic, cfg.physics.n_tanks)?;
    initial.check(&cfg.physics)?;
    let dt = dt.unwrap_or(cfg.fdm.dt);
    let t_end = t_end.unwrap_or(cfg.fdm.t_end);
    let (name, traj, model) = match solver {
        Solver::Fdm => {
            let fdm = FdmConfig {
                dt,
                t_end,
                ..cfg.fdm.clone()
            };
            ("fdm", fdm_simulate(&initial, &cfg.physics, &fdm)?, None)
        }
        Solver::P2f => {
            let path = model_path.ok_or_else(|| Failure::new(2, "--solver p2f requires --model"))?;
            let (model, bytes) = load_model(path)?;
            let traj = p2f_simulate(&initial, dt, t_end, &model, &cfg.physics)?;
            ("p2f", traj, Some((path.display().to_string(), bytes)))
        }
    };
    write(out, &traj.to_csv())?;
    let text = run_manifest(
        name,
        dt,
        t_end,
        &initial,
        model.as_ref().map(|(p, b)| (p.as_str(), b.as_slice())),
        &cfg,
    );
    let manifest = manifest.map_or_else(|| with_suffix(out, ".manifest"), Path::to_path_buf);
    write(&manifest, &text)?;
    if traj.momentum_warnings > 0 {
        log::warn!(
            "{} momentum steps hit the iteration limit",
            traj.momentum_warnings
        );
    }
    Ok(())
}

fn cmd_verify(cfg: RunConfig, model_path: &Path, tables: &[u8], report_dir: Option<&Path>) -> Result<(), Failure> {
    if let Some(t) = tables.iter().find(|t| !(1..=3).contains(*t)) {
        return Err(Failure::new(2, format!("unknown table {t}; expected 1, 2 or 3")));
    }
    let (model, _) = load_model(model_path)?;
    let mut report = VerificationReport {
        t_end: cfg.fdm.t_end,
        ..Default::default()
    };
    if tables.contains(&1) {
        report.standalone = Some(run_standalone(&model, &cfg.physics, &cfg.fdm));
    }
    if tables.contains(&2) {
        report.nominal = Some(run_nominal(&model, &cfg.physics, &cfg.fdm)?);
    }
    if tables.contains(&3) {
        report.cases = Some(run_cases(&model, &cfg.physics, &cfg.fdm)?);
    }
    let markdown = report.to_markdown();
    print!("{markdown}");
    if let Some(dir) = report_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::new(1, format!("cannot create {}: {e}", dir.display())))?;
        write(&dir.join("report.md"), &markdown)?;
        if let Some(r) = &report.standalone {
            write(&dir.join("table1.csv"), &r.to_csv())?;
        }
        if let Some(r) = &report.nominal {
            write(&dir.join("table2.csv"), &r.to_csv())?;
            write(&dir.join("timing.csv"), &r.timing_csv())?;
        }
        if let Some(r) = &report.cases {
            write(&dir.join("table3.csv"), &r.to_csv())?;
        }
    }
    let failures = report.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        let lines: Vec<String> = failures.iter().map(|c| c.to_string()).collect();
        Err(Failure::new(1, lines.join("\n")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train { out, seed, log } => cmd_train(cfg, &out, seed, log.as_deref()),
        Command::Simulate {
            solver,
            ic,
            dt,
            t_end,
            model,
            out,
            manifest,
        } => cmd_simulate(
            cfg,
            solver,
            &ic,
            dt,
            t_end,
            model.as_deref(),
            &out,
            manifest.as_deref(),
        ),
        Command::Verify {
            model,
            tables,
            report_dir,
        } => cmd_verify(cfg, &model, &tables, report_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
