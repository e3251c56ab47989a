//! Exact parameter gradient of the residual loss.
//!
//! The residual needs `∂v̂/∂t`, so every activation carries a time tangent
//! (forward mode). The loss is then differentiated with respect to every
//! weight and bias by sweeping backwards through the tangent-augmented
//! computation (reverse mode), treating values and tangents alike as nodes.
//! For a tanh layer `a = tanh(z)`, `ȧ = s ż` with `s = 1 - a²`; its adjoints
//! are `ż̄ = s ǡ` and `z̄ = s (ā - 2 a ⊙ ǡ ⊙ ż)`.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use super::mlp::MlpModel;
use crate::error::{Error, Result};
use crate::napinn::{momentum_residual_partials, CollocationSet};
use crate::tank::TankNetworkConfig;

/// Sum of squared residuals and the gradient of that sum.
struct ShardResult {
    sq_sum: f64,
    grad: Vec<f64>,
}

struct Tape {
    /// Inputs to each weight layer: `acts[0]` is the normalized input.
    acts: Vec<Array2<f64>>,
    /// Time tangents of `acts`.
    tangents: Vec<Array2<f64>>,
    /// Pre-activation tangents of the hidden layers.
    z_tangents: Vec<Array2<f64>>,
    out: Array1<f64>,
    out_dt: Array1<f64>,
}

fn inputs(model: &MlpModel, dh: ArrayView1<f64>, t: ArrayView1<f64>, v0: ArrayView1<f64>) -> Array2<f64> {
    let b = model.bounds;
    let mut x = Array2::zeros((dh.len(), 3));
    Zip::from(x.rows_mut())
        .and(&dh)
        .and(&t)
        .and(&v0)
        .for_each(|mut row, &h, &tt, &v| {
            row[0] = h / b.dh_train;
            row[1] = tt / b.window;
            row[2] = v / b.v0_max;
        });
    x
}

fn forward_tape(model: &MlpModel, x: Array2<f64>) -> Tape {
    let n = x.nrows();
    let mut x_dt = Array2::zeros((n, 3));
    x_dt.column_mut(1).fill(1.0 / model.bounds.window);

    let last = model.n_layers() - 1;
    let mut acts = vec![x];
    let mut tangents = vec![x_dt];
    let mut z_tangents = Vec::with_capacity(last);
    for k in 0..last {
        let w = model.weights(k);
        let mut a = acts[k].dot(&w.t());
        a += &model.biases(k);
        let z_dt = tangents[k].dot(&w.t());
        a.mapv_inplace(f64::tanh);
        let mut a_dt = z_dt.clone();
        Zip::from(&mut a_dt).and(&a).for_each(|d, &y| *d *= 1.0 - y * y);
        acts.push(a);
        tangents.push(a_dt);
        z_tangents.push(z_dt);
    }
    let w = model.weights(last);
    let bias = model.biases(last)[0];
    let out = acts[last].dot(&w.row(0)) + bias;
    let out_dt = tangents[last].dot(&w.row(0));
    Tape {
        acts,
        tangents,
        z_tangents,
        out,
        out_dt,
    }
}

fn shard(model: &MlpModel, batch: &CollocationSet, range: std::ops::Range<usize>, physics: &TankNetworkConfig) -> Result<ShardResult> {
    let dh = ArrayView1::from(&batch.dh[range.clone()]);
    let t = ArrayView1::from(&batch.t[range.clone()]);
    let v0 = ArrayView1::from(&batch.v0[range.clone()]);
    let tape = forward_tape(model, inputs(model, dh, t, v0));
    let n = dh.len();

    // Hard-IC wrapper and residual, then their adjoints.
    let mut g_out = Array1::zeros(n);
    let mut g_out_dt = Array1::zeros(n);
    let mut sq_sum = 0.0;
    for i in 0..n {
        let (nn, nn_dt, ti) = (tape.out[i], tape.out_dt[i], t[i]);
        let v = v0[i] + ti * nn;
        let v_dt = nn + ti * nn_dt;
        let (r, dr_dv, dr_dvdt) = momentum_residual_partials(v, v_dt, dh[i], physics);
        if !r.is_finite() {
            return Err(Error::NonFiniteLoss {
                index: range.start + i,
            });
        }
        sq_sum += r * r;
        let g_v = 2.0 * r * dr_dv;
        let g_vdt = 2.0 * r * dr_dvdt;
        g_out[i] = g_vdt + ti * g_v;
        g_out_dt[i] = ti * g_vdt;
    }

    let mut grad = vec![0.0; model.n_params()];
    let last = model.n_layers() - 1;
    let mut g_z = g_out.insert_axis(Axis(1));
    let mut g_zdt = g_out_dt.insert_axis(Axis(1));
    for k in (0..=last).rev() {
        let w = model.weights(k);
        let (n_out, n_in) = w.dim();
        let off = model.layer_offset(k);
        let mut g_w = g_z.t().dot(&tape.acts[k]);
        g_w += &g_zdt.t().dot(&tape.tangents[k]);
        let g_b = g_z.sum_axis(Axis(0));
        grad[off..off + n_out * n_in]
            .iter_mut()
            .zip(g_w.iter())
            .for_each(|(dst, &src)| *dst = src);
        grad[off + n_out * n_in..off + n_out * n_in + n_out]
            .iter_mut()
            .zip(g_b.iter())
            .for_each(|(dst, &src)| *dst = src);
        if k == 0 {
            break;
        }
        let g_a = g_z.dot(&w);
        let g_adt = g_zdt.dot(&w);
        let a = &tape.acts[k];
        let z_dt = &tape.z_tangents[k - 1];
        let mut next_z = Array2::zeros(a.raw_dim());
        let mut next_zdt = Array2::zeros(a.raw_dim());
        Zip::from(&mut next_z)
            .and(&mut next_zdt)
            .and(a)
            .and(z_dt)
            .and(&g_a)
            .and(&g_adt)
            .for_each(|gz, gzdt, &y, &zd, &ga, &gadt| {
                let sl = 1.0 - y * y;
                *gzdt = sl * gadt;
                *gz = sl * (ga - 2.0 * y * gadt * zd);
            });
        g_z = next_z;
        g_zdt = next_zdt;
    }
    Ok(ShardResult { sq_sum, grad })
}

/// Mean squared momentum residual over `batch` and its exact gradient with
/// respect to the flat parameter vector.
pub fn loss_and_gradient(model: &MlpModel, batch: &CollocationSet, physics: &TankNetworkConfig) -> Result<(f64, Vec<f64>)> {
    loss_and_gradient_sharded(model, batch, physics, 1)
}

/// As [`loss_and_gradient`], splitting the batch into `shards` contiguous
/// pieces evaluated on scoped threads. Partial sums are reduced in shard
/// order, so the result depends only on the inputs and the shard count.
pub fn loss_and_gradient_sharded(
    model: &MlpModel,
    batch: &CollocationSet,
    physics: &TankNetworkConfig,
    shards: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let shards = shards.clamp(1, n);
    let chunk = n.div_ceil(shards);
    let ranges: Vec<_> = (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();

    let parts: Vec<Result<ShardResult>> = if ranges.len() == 1 {
        vec![shard(model, batch, 0..n, physics)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .cloned()
                .map(|r| scope.spawn(move || shard(model, batch, r, physics)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient shard panicked"))
                .collect()
        })
    };

    let mut sq_sum = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for part in parts {
        let part = part?;
        sq_sum += part.sq_sum;
        grad.iter_mut().zip(&part.grad).for_each(|(g, p)| *g += p);
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((sq_sum * inv, grad))
}

/// Mean squared momentum residual only (no gradient).
pub fn loss(model: &MlpModel, batch: &CollocationSet, physics: &TankNetworkConfig) -> Result<f64> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let dh = ArrayView1::from(&batch.dh[..]);
    let t = ArrayView1::from(&batch.t[..]);
    let v0 = ArrayView1::from(&batch.v0[..]);
    let tape = forward_tape(model, inputs(model, dh, t, v0));
    let mut sq_sum = 0.0;
    for i in 0..n {
        let v = v0[i] + t[i] * tape.out[i];
        let v_dt = tape.out[i] + t[i] * tape.out_dt[i];
        let (r, _, _) = momentum_residual_partials(v, v_dt, dh[i], physics);
        if !r.is_finite() {
            return Err(Error::NonFiniteLoss { index: i });
        }
        sq_sum += r * r;
    }
    Ok(sq_sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::napinn::{hard_ic_velocity, momentum_residual, sample_collocation};
    use crate::tank::DomainBounds;

    /// Loss evaluated point by point through the scalar forward path.
    fn pointwise_loss(model: &MlpModel, batch: &CollocationSet, physics: &TankNetworkConfig) -> f64 {
        let sum: f64 = (0..batch.len())
            .map(|i| {
                let (v, v_dt) = hard_ic_velocity(model, batch.dh[i], batch.t[i], batch.v0[i]);
                momentum_residual(v, v_dt, batch.dh[i], physics).powi(2)
            })
            .sum();
        sum / batch.len() as f64
    }

    #[test]
    fn zero_model_on_quiescent_batch_has_zero_loss_and_gradient() {
        let model = MlpModel::zeros(&[3, 5, 4, 1], DomainBounds::default()).unwrap();
        let batch = CollocationSet {
            dh: vec![0.0; 4],
            t: vec![0.0, 0.3, 0.6, 1.0],
            v0: vec![0.0; 4],
        };
        let (l, g) = loss_and_gradient(&model, &batch, &TankNetworkConfig::default()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn batched_loss_matches_pointwise_path() {
        let physics = TankNetworkConfig::default();
        let bounds = DomainBounds::default();
        let model = MlpModel::init(&[3, 7, 5, 1], bounds, 4).unwrap();
        let batch = sample_collocation(50, &bounds, 0.1, 0.1, 9).unwrap();
        let (l, _) = loss_and_gradient(&model, &batch, &physics).unwrap();
        let reference = pointwise_loss(&model, &batch, &physics);
        assert!((l - reference).abs() <= 1e-12 * reference);
        assert!((loss(&model, &batch, &physics).unwrap() - l).abs() <= 1e-14 * l);
    }

    #[test]
    fn duplicated_batch_gives_same_loss_and_gradient() {
        let physics = TankNetworkConfig::default();
        let bounds = DomainBounds::default();
        let model = MlpModel::init(&[3, 6, 1], bounds, 2).unwrap();
        let batch = sample_collocation(16, &bounds, 0.1, 0.1, 5).unwrap();
        let doubled = CollocationSet {
            dh: [batch.dh.clone(), batch.dh.clone()].concat(),
            t: [batch.t.clone(), batch.t.clone()].concat(),
            v0: [batch.v0.clone(), batch.v0.clone()].concat(),
        };
        let (l1, g1) = loss_and_gradient(&model, &batch, &physics).unwrap();
        let (l2, g2) = loss_and_gradient(&model, &doubled, &physics).unwrap();
        assert!((l1 - l2).abs() <= 1e-13 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
        }
    }

    #[test]
    fn sharding_is_deterministic_and_consistent() {
        let physics = TankNetworkConfig::default();
        let bounds = DomainBounds::default();
        let model = MlpModel::init(&[3, 6, 6, 1], bounds, 2).unwrap();
        let batch = sample_collocation(101, &bounds, 0.1, 0.1, 5).unwrap();
        let one = loss_and_gradient_sharded(&model, &batch, &physics, 1).unwrap();
        let three_a = loss_and_gradient_sharded(&model, &batch, &physics, 3).unwrap();
        let three_b = loss_and_gradient_sharded(&model, &batch, &physics, 3).unwrap();
        assert_eq!(three_a, three_b);
        assert!((one.0 - three_a.0).abs() <= 1e-12 * one.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = MlpModel::zeros(&[3, 2, 1], DomainBounds::default()).unwrap();
        let batch = CollocationSet::default();
        assert!(matches!(
            loss_and_gradient(&model, &batch, &TankNetworkConfig::default()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn non_finite_input_names_the_point() {
        let model = MlpModel::init(&[3, 4, 1], DomainBounds::default(), 1).unwrap();
        let batch = CollocationSet {
            dh: vec![0.1, f64::NAN, 0.2],
            t: vec![0.1, 0.2, 0.3],
            v0: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(
            loss_and_gradient(&model, &batch, &TankNetworkConfig::default()),
            Err(Error::NonFiniteLoss { index: 1 })
        ));
    }
}
