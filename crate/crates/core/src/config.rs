//! Flat `key = value` run configuration. One key per line, `#` starts a
//! comment, unknown keys are rejected. Every key is optional and falls back
//! to its default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::MlpModel;
use crate::error::{Error, Result};
use crate::fdm::FdmConfig;
use crate::napinn::{sample_collocation, train, CollocationSet, TrainConfig, TrainOutcome};
use crate::tank::{DomainBounds, TankNetworkConfig};

/// Collocation sizes and boundary-enrichment ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub r_h0: f64,
    pub r_v0: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_val: 1000,
            r_h0: 0.1,
            r_v0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub physics: TankNetworkConfig,
    pub fdm: FdmConfig,
    pub bounds: DomainBounds,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

/// `epoch:rate` pairs separated by commas.
fn parse_schedule(v: &str) -> std::result::Result<Vec<(usize, f64)>, String> {
    v.split(',')
        .map(|item| {
            let (e, r) = item
                .split_once(':')
                .ok_or_else(|| format!("schedule entry `{item}` is not epoch:rate"))?;
            Ok((parse_num(e.trim())?, parse_num(r.trim())?))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// `path` is only used to label errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: PathBuf::from(path),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let p = &mut self.physics;
        let f = &mut self.fdm;
        let b = &mut self.bounds;
        let t = &mut self.train;
        let s = &mut self.sampling;
        match key {
            "n_tanks" => p.n_tanks = parse_num(v)?,
            "tank_area" => p.tank_area = parse_num(v)?,
            "tank_height" => p.tank_height = parse_num(v)?,
            "fp_diameter" => p.fp_diameter = parse_num(v)?,
            "inertial_length" => p.inertial_length = parse_num(v)?,
            "elevation_drop" => p.elevation_drop = parse_num(v)?,
            "open_fraction" => p.open_fraction = parse_num(v)?,
            "loss_coeff" => p.loss_coeff = parse_num(v)?,
            "gravity" => p.gravity = parse_num(v)?,
            "density" => p.density = parse_num(v)?,
            "dry_threshold" => p.dry_threshold = parse_num(v)?,
            "dt" => f.dt = parse_num(v)?,
            "t_end" => f.t_end = parse_num(v)?,
            "friction_iter_tol" => f.friction_iter_tol = parse_num(v)?,
            "friction_iter_max" => f.friction_iter_max = parse_num(v)?,
            "substeps_per_dt" => f.substeps_per_dt = parse_num(v)?,
            "dh_train" => b.dh_train = parse_num(v)?,
            "v0_max" => b.v0_max = parse_num(v)?,
            "window" => b.window = parse_num(v)?,
            "layer_sizes" => t.layer_sizes = parse_list(v)?,
            "n_epochs" => t.n_epochs = parse_num(v)?,
            "lr_schedule" => t.lr_schedule = parse_schedule(v)?,
            "clip_norm" => t.clip_norm = parse_num(v)?,
            "val_every" => t.val_every = parse_num(v)?,
            "seed" => t.seed = parse_num(v)?,
            "adam_beta1" => t.adam.beta1 = parse_num(v)?,
            "adam_beta2" => t.adam.beta2 = parse_num(v)?,
            "adam_eps" => t.adam.eps = parse_num(v)?,
            "shards" => t.shards = parse_num(v)?,
            "n_train" => s.n_train = parse_num(v)?,
            "n_val" => s.n_val = parse_num(v)?,
            "r_h0" => s.r_h0 = parse_num(v)?,
            "r_v0" => s.r_v0 = parse_num(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.fdm.validate()?;
        self.bounds.validate()?;
        self.train.validate()?;
        let s = &self.sampling;
        if s.n_train == 0 || s.n_val == 0 {
            return Err(Error::Config("n_train and n_val must be positive".into()));
        }
        if !((0.0..1.0).contains(&s.r_h0) && (0.0..1.0).contains(&s.r_v0)) {
            return Err(Error::Config("r_h0 and r_v0 must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Training and validation sets. Both derive their seeds from the
    /// training seed so one number fixes the whole run.
    pub fn collocation_sets(&self) -> Result<(CollocationSet, CollocationSet)> {
        let s = &self.sampling;
        let seed = self.train.seed;
        let tr = sample_collocation(s.n_train, &self.bounds, s.r_h0, s.r_v0, seed.wrapping_mul(2).wrapping_add(1))?;
        let va = sample_collocation(s.n_val, &self.bounds, s.r_h0, s.r_v0, seed.wrapping_mul(2).wrapping_add(2))?;
        Ok((tr, va))
    }

    /// Samples, initializes and trains a model from this configuration.
    pub fn run_training(&self) -> Result<TrainOutcome> {
        self.validate()?;
        let (tr, va) = self.collocation_sets()?;
        let init = MlpModel::init(&self.train.layer_sizes, self.bounds, self.train.seed)?;
        train(init, &tr, &va, &self.train, &self.physics)
    }

    /// Every key with its current value, in a form [`RunConfig::parse`]
    /// reads back to an identical config.
    pub fn to_text(&self) -> String {
        let p = &self.physics;
        let f = &self.fdm;
        let b = &self.bounds;
        let t = &self.train;
        let s = &self.sampling;
        let sizes: Vec<String> = t.layer_sizes.iter().map(|n| n.to_string()).collect();
        let sched: Vec<String> = t
            .lr_schedule
            .iter()
            .map(|(e, r)| format!("{e}:{r:e}"))
            .collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("n_tanks", p.n_tanks.to_string());
        kv("tank_area", format!("{:e}", p.tank_area));
        kv("tank_height", format!("{:e}", p.tank_height));
        kv("fp_diameter", format!("{:e}", p.fp_diameter));
        kv("inertial_length", format!("{:e}", p.inertial_length));
        kv("elevation_drop", format!("{:e}", p.elevation_drop));
        kv("open_fraction", format!("{:e}", p.open_fraction));
        kv("loss_coeff", format!("{:e}", p.loss_coeff));
        kv("gravity", format!("{:e}", p.gravity));
        kv("density", format!("{:e}", p.density));
        kv("dry_threshold", format!("{:e}", p.dry_threshold));
        kv("dt", format!("{:e}", f.dt));
        kv("t_end", format!("{:e}", f.t_end));
        kv("friction_iter_tol", format!("{:e}", f.friction_iter_tol));
        kv("friction_iter_max", f.friction_iter_max.to_string());
        kv("substeps_per_dt", f.substeps_per_dt.to_string());
        kv("dh_train", format!("{:e}", b.dh_train));
        kv("v0_max", format!("{:e}", b.v0_max));
        kv("window", format!("{:e}", b.window));
        kv("layer_sizes", sizes.join(","));
        kv("n_epochs", t.n_epochs.to_string());
        kv("lr_schedule", sched.join(","));
        kv("clip_norm", format!("{:e}", t.clip_norm));
        kv("val_every", t.val_every.to_string());
        kv("seed", t.seed.to_string());
        kv("adam_beta1", format!("{:e}", t.adam.beta1));
        kv("adam_beta2", format!("{:e}", t.adam.beta2));
        kv("adam_eps", format!("{:e}", t.adam.eps));
        kv("shards", t.shards.to_string());
        kv("n_train", s.n_train.to_string());
        kv("n_val", s.n_val.to_string());
        kv("r_h0", format!("{:e}", s.r_h0));
        kv("r_v0", format!("{:e}", s.r_v0));
        out
    }
}
