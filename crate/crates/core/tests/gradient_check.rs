mod common;

use p2f::autodiff::MlpModel;
use p2f::napinn::sample_collocation;
use p2f::tank::{DomainBounds, TankNetworkConfig};

#[test]
fn loss_gradient_matches_central_differences() {
    let bounds = DomainBounds::default();
    let physics = TankNetworkConfig::default();
    for seed in 0..10 {
        let model = MlpModel::init(&[3, 8, 8, 1], bounds, seed).unwrap();
        let batch = sample_collocation(8, &bounds, 0.1, 0.1, 100 + seed).unwrap();
        let err = common::gradient_fd_error(&model, &batch, &physics);
        assert!(err <= 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn gradient_check_on_a_deeper_network() {
    let bounds = DomainBounds::default();
    let physics = TankNetworkConfig::default();
    let model = MlpModel::init(&[3, 5, 4, 6, 1], bounds, 77).unwrap();
    let batch = sample_collocation(8, &bounds, 0.25, 0.25, 3).unwrap();
    assert!(common::gradient_fd_error(&model, &batch, &physics) <= 1e-5);
}

#[test]
fn time_derivative_matches_central_differences() {
    let model = MlpModel::init(&[3, 16, 16, 1], DomainBounds::default(), 4).unwrap();
    let pts: Vec<_> = (0..20)
        .map(|i| {
            let s = i as f64 / 20.0;
            (s, 0.05 + 0.9 * s, 1.0 - s)
        })
        .collect();
    assert!(common::time_derivative_fd_error(&model, &pts) <= 1e-7);
}
