use iccss::airmodel::ScenarioConfig;
use iccss::numerics::{ComplexMatrix, RngStream};
use iccss::simplified::{
    network_forward, sensor_features, simplified_statistic, verify_proposition3, zeta_from_kernel, SimplifiedModel,
};
use proptest::prelude::*;

fn uncorrelated(k: usize, m: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default().with_k(k);
    cfg.m = m;
    cfg.n = 40;
    cfg.rho = 0.0;
    cfg.set_snr_sense_db(-8.0);
    cfg
}

fn mixed_sign(m: usize, stream: &mut RngStream) -> SimplifiedModel {
    let kernel: Vec<f64> = (0..3 * 9).map(|_| 2.0 * stream.uniform() - 1.0).collect();
    let theta: Vec<f64> = (0..3).map(|_| stream.uniform() - 0.5).collect();
    SimplifiedModel::new(m, 3, kernel, theta).unwrap()
}

#[test]
fn statistic_increases_with_energy() {
    let cfg = uncorrelated(4, 8);
    let model = SimplifiedModel::random(8, 3, 4, &cfg, &mut RngStream::new(1, 0)).unwrap();
    assert!(model.phi() > 0.0);
    let grid: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
    let t: Vec<f64> = grid.iter().map(|&e| simplified_statistic(&model, &[e, 0.5, 0.25])).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn stored_zeta_matches_recomputation() {
    let mut s = RngStream::new(2, 0);
    for _ in 0..20 {
        let model = mixed_sign(9, &mut s);
        let z = zeta_from_kernel(9, 3, &model.kernel);
        for (a, b) in z.iter().zip(model.zeta()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let phi: f64 = model.theta.iter().zip(model.zeta()).map(|(t, z)| t * z).sum();
        assert!((phi - model.phi()).abs() <= 1e-12);
    }
}

#[test]
fn network_matches_closed_form_on_scaled_identity() {
    let cfg = uncorrelated(5, 10);
    let mut s = RngStream::new(3, 0);
    for trial in 0..50 {
        let model = SimplifiedModel::random(10, 3, 4, &cfg, &mut s).unwrap().with_varpi(1.0 + 0.01 * trial as f64);
        assert!(model.is_homogeneous());
        let energies: Vec<f64> = (0..5).map(|_| 0.1 + 3.0 * s.uniform()).collect();
        let inputs: Vec<ComplexMatrix> =
            energies.iter().map(|&e| ComplexMatrix::identity(10).scale(e)).collect();
        let net = network_forward(&model, &inputs).unwrap();
        let formula = simplified_statistic(&model, &energies);
        assert!((net - formula).abs() <= 1e-10, "{net} vs {formula}");
    }
}

#[test]
fn pooled_features_scale_with_input_power() {
    let cfg = uncorrelated(1, 7);
    let mut s = RngStream::new(4, 0);
    for _ in 0..20 {
        let model = SimplifiedModel::random(7, 3, 3, &cfg, &mut s).unwrap();
        let sigma2 = 0.2 + 4.0 * s.uniform();
        let f = sensor_features(&model, &ComplexMatrix::identity(7).scale(sigma2)).unwrap();
        for (got, z) in f.iter().zip(model.zeta()) {
            assert!((got - z * sigma2).abs() <= 1e-12 * (1.0 + got.abs()));
        }
    }
}

#[test]
fn mixed_sign_kernels_scale_only_at_unit_power() {
    let mut s = RngStream::new(5, 0);
    let mut saw_gap = false;
    for _ in 0..20 {
        let model = mixed_sign(7, &mut s);
        let unit = sensor_features(&model, &ComplexMatrix::identity(7)).unwrap();
        for (got, z) in unit.iter().zip(model.zeta()) {
            assert!((got - z).abs() <= 1e-12);
        }
        if !model.is_homogeneous() {
            let f = sensor_features(&model, &ComplexMatrix::identity(7).scale(3.0)).unwrap();
            let worst = f.iter().zip(model.zeta()).map(|(g, z)| (g - 3.0 * z).abs()).fold(0.0, f64::max);
            saw_gap |= worst > 1e-3;
        }
    }
    assert!(saw_gap, "negative pre-activations should break the linear scaling");
}

#[test]
fn ranks_agree_exactly_with_energy_fusion() {
    let cfg = uncorrelated(4, 8);
    let model = SimplifiedModel::random(8, 3, 4, &cfg, &mut RngStream::new(6, 0)).unwrap();
    let report = verify_proposition3(&model, &cfg, 4000, &RngStream::new(7, 0)).unwrap();
    assert_eq!(report.spearman_simplified_ed, 1.0);
    assert_eq!(report.spearman_ed_ec, 1.0);
    assert_eq!(report.spearman_simplified_ec, 1.0);
    assert!(!report.inverted);
    assert!(report.roc_identical);
    assert!(report.passed());
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["simplified_ed_exact"], true);
}

#[test]
fn negative_phi_inverts_the_ranking() {
    let cfg = uncorrelated(3, 6);
    let base = SimplifiedModel::random(6, 3, 2, &cfg, &mut RngStream::new(8, 0)).unwrap();
    let flipped = SimplifiedModel::new(6, 3, base.kernel.clone(), base.theta.iter().map(|t| -t).collect()).unwrap();
    let report = verify_proposition3(&flipped, &cfg, 2000, &RngStream::new(9, 0)).unwrap();
    assert!(report.inverted);
    assert_eq!(report.spearman_simplified_ed, -1.0);
    assert!(report.simplified_ed_exact);
    assert!(report.roc_identical);
}

#[test]
fn correlated_channel_is_rejected() {
    let mut cfg = uncorrelated(3, 6);
    cfg.rho = 0.5;
    let model = SimplifiedModel::random(6, 3, 2, &cfg, &mut RngStream::new(10, 0)).unwrap();
    assert!(verify_proposition3(&model, &cfg, 100, &RngStream::new(11, 0)).is_err());
}

proptest! {
    #[test]
    fn monotone_transforms_keep_every_decision(
        stats in prop::collection::vec(-5.0f64..5.0, 1..200),
        q in 0usize..200,
    ) {
        let gamma = stats[q % stats.len()];
        let maps: [fn(f64) -> f64; 3] = [f64::exp, |x| x * x * x, |x| 1.0 / (1.0 + (-x).exp())];
        for f in maps {
            let fg = f(gamma);
            for &t in &stats {
                prop_assert_eq!(t > gamma, f(t) > fg);
            }
        }
    }
}
