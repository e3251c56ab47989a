use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tank::DomainBounds;

/// Fixed collocation points `(dh, t, v0)`, stored column-wise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationSet {
    pub dh: Vec<f64>,
    pub t: Vec<f64>,
    pub v0: Vec<f64>,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.dh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dh.is_empty()
    }
}

/// Draws `n` points uniformly over the training box, then pins
/// `⌈n r_h0⌉` heads and `⌈n r_v0⌉` initial velocities (chosen independently
/// at random) to exactly zero.
pub fn sample_collocation(n: usize, bounds: &DomainBounds, r_h0: f64, r_v0: f64, seed: u64) -> Result<CollocationSet> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    for (name, r) in [("r_h0", r_h0), ("r_v0", r_v0)] {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Config(format!("{name} must lie in [0, 1), got {r}")));
        }
    }
    bounds.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dh: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=bounds.dh_train)).collect();
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=bounds.window)).collect();
    let mut v0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=bounds.v0_max)).collect();

    let pinned = |r: f64| (n as f64 * r).ceil() as usize;
    for i in index::sample(&mut rng, n, pinned(r_h0)) {
        dh[i] = 0.0;
    }
    for i in index::sample(&mut rng, n, pinned(r_v0)) {
        v0[i] = 0.0;
    }
    Ok(CollocationSet { dh, t, v0 })
}
