use std::fmt::Write as _;

use crate::autodiff::{loss, loss_and_gradient_sharded, MlpModel};
use crate::error::{Error, Result};
use crate::napinn::CollocationSet;
use crate::tank::TankNetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    pub n_epochs: usize,
    /// `(first epoch, learning rate)` pairs; the first milestone is epoch 1.
    pub lr_schedule: Vec<(usize, f64)>,
    /// Bound on the global 2-norm of each gradient.
    pub clip_norm: f64,
    pub val_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Contiguous batch shards evaluated in parallel per epoch.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![3, 32, 32, 32, 1],
            n_epochs: 40_000,
            lr_schedule: vec![(1, 1e-2), (16_001, 3e-3), (28_001, 1e-3), (36_001, 1e-4)],
            clip_norm: 1.0,
            val_every: 500,
            seed: 0,
            adam: AdamConfig::default(),
            shards: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_epochs == 0 || self.val_every == 0 || self.shards == 0 {
            return Err(Error::Config(
                "n_epochs, val_every and shards must be at least 1".into(),
            ));
        }
        match self.lr_schedule.first() {
            Some(&(1, _)) => {}
            _ => {
                return Err(Error::Config(
                    "learning-rate schedule must start at epoch 1".into(),
                ))
            }
        }
        if self
            .lr_schedule
            .windows(2)
            .any(|w| w[1].0 <= w[0].0)
        {
            return Err(Error::Config(
                "learning-rate milestones must be strictly increasing".into(),
            ));
        }
        if self
            .lr_schedule
            .iter()
            .any(|&(_, lr)| !(lr.is_finite() && lr > 0.0))
        {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("invalid Adam parameters".into()));
        }
        Ok(())
    }

    /// Learning rate active at `epoch` (1-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .take_while(|&&(start, _)| start <= epoch)
            .last()
            .map_or(self.lr_schedule[0].1, |&(_, lr)| lr)
    }
}

/// One row of the training log. `val_loss` refers to the parameters after
/// the epoch's update; `train_loss` to those before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub model: MlpModel,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    /// Parameters after the last completed update.
    pub final_model: MlpModel,
    pub log: Vec<LogEntry>,
    /// Epoch at which a non-finite loss stopped training, if any.
    pub aborted_at: Option<usize>,
}

impl TrainOutcome {
    /// CSV `epoch,train_loss,val_loss,lr`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.log {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                e.epoch, e.train_loss, e.val_loss, e.lr
            );
        }
        out
    }
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Full-batch training on a fixed collocation set.
///
/// Each epoch evaluates the loss and its gradient on all of `train_set`,
/// clips the gradient to `clip_norm`, and applies one Adam step at the
/// scheduled rate. Every `val_every` epochs (and after the last one) the
/// validation loss is evaluated and the best parameters so far are kept.
pub fn train(
    init: MlpModel,
    train_set: &CollocationSet,
    val_set: &CollocationSet,
    cfg: &TrainConfig,
    physics: &TankNetworkConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    physics.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyBatch);
    }

    let mut model = init;
    let mut adam = Adam::new(cfg.adam, model.n_params());
    let mut best = model.clone();
    let mut best_val = loss(&model, val_set, physics)?;
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut aborted_at = None;

    for epoch in 1..=cfg.n_epochs {
        let lr = cfg.learning_rate(epoch);
        let (train_loss, mut grad) =
            match loss_and_gradient_sharded(&model, train_set, physics, cfg.shards) {
                Ok(r) => r,
                Err(Error::NonFiniteLoss { index }) => {
                    log::error!("non-finite training loss at epoch {epoch}, point {index}");
                    aborted_at = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            };
        clip(&mut grad, cfg.clip_norm);
        adam.update(model.params_mut(), &grad, lr);

        if epoch == 1 || epoch % cfg.val_every == 0 || epoch == cfg.n_epochs {
            let val_loss = match loss(&model, val_set, physics) {
                Ok(l) => l,
                Err(Error::NonFiniteLoss { .. }) => {
                    aborted_at = Some(epoch);
                    break;
                }
                Err(e) => return Err(e),
            };
            if val_loss < best_val {
                best_val = val_loss;
                best = model.clone();
                best_epoch = epoch;
            }
            log::debug!("epoch {epoch}: train {train_loss:.4e} val {val_loss:.4e} lr {lr:.1e}");
            log.push(LogEntry {
                epoch,
                train_loss,
                val_loss,
                lr,
            });
        }
    }

    Ok(TrainOutcome {
        model: best,
        best_val_loss: best_val,
        best_epoch,
        final_model: model,
        log,
        aborted_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::napinn::sample_collocation;
    use crate::tank::DomainBounds;

    fn small_config() -> TrainConfig {
        TrainConfig {
            layer_sizes: vec![3, 8, 8, 1],
            n_epochs: 200,
            lr_schedule: vec![(1, 1e-2), (150, 1e-3)],
            val_every: 20,
            ..Default::default()
        }
    }

    #[test]
    fn schedule_lookup() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(1), 1e-2);
        assert_eq!(cfg.learning_rate(16_000), 1e-2);
        assert_eq!(cfg.learning_rate(16_001), 3e-3);
        assert_eq!(cfg.learning_rate(40_000), 1e-4);
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = small_config();
        cfg.lr_schedule = vec![(2, 1e-3)];
        assert!(cfg.validate().is_err());
        cfg.lr_schedule = vec![(1, 1e-3), (1, 1e-4)];
        assert!(cfg.validate().is_err());
        cfg.lr_schedule = vec![(1, 1e-3)];
        cfg.clip_norm = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        clip(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn short_run_makes_progress_and_keeps_best() {
        let bounds = DomainBounds::default();
        let physics = TankNetworkConfig::default();
        let cfg = small_config();
        let tr = sample_collocation(256, &bounds, 0.1, 0.1, 1).unwrap();
        let va = sample_collocation(64, &bounds, 0.1, 0.1, 2).unwrap();
        let init = MlpModel::init(&cfg.layer_sizes, bounds, cfg.seed).unwrap();
        let out = train(init, &tr, &va, &cfg, &physics).unwrap();
        assert!(out.aborted_at.is_none());
        let first = out.log.first().unwrap();
        let last = out.log.last().unwrap();
        assert_eq!(first.epoch, 1);
        assert_eq!(last.epoch, cfg.n_epochs);
        assert!(last.train_loss < first.train_loss);
        let best_val = loss(&out.model, &va, &physics).unwrap();
        let final_val = loss(&out.final_model, &va, &physics).unwrap();
        assert_eq!(best_val, out.best_val_loss);
        assert!(best_val <= final_val);
        assert!(out.log_csv().starts_with("epoch,train_loss,val_loss,lr\n1,"));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let bounds = DomainBounds::default();
        let physics = TankNetworkConfig::default();
        let cfg = TrainConfig {
            n_epochs: 30,
            ..small_config()
        };
        let tr = sample_collocation(64, &bounds, 0.1, 0.1, 1).unwrap();
        let va = sample_collocation(16, &bounds, 0.1, 0.1, 2).unwrap();
        let run = || {
            let init = MlpModel::init(&cfg.layer_sizes, bounds, 5).unwrap();
            train(init, &tr, &va, &cfg, &physics).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }
}
