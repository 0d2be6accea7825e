mod common;

use common::{random_psd, spearman};
use iccss::airmodel::{ScenarioConfig, SensingModel};
use iccss::detectors::{statistic, DetectorKind, DetectorName, EcPrior};
use iccss::numerics::{ComplexMatrix, RngStream};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn scale_behaviour_on_random_matrices() {
    let mut stream = RngStream::new(31, 0);
    let ed = DetectorKind::Ed { noise_power: 0.7 };
    let med = DetectorKind::Med { noise_power: 0.7 };
    for trial in 0..200 {
        let m = 2 + trial % 7;
        // Keep the spectrum well conditioned so MMED is stable to 1e-12.
        let r = random_psd(m, &mut stream).add(&ComplexMatrix::identity(m).scale(m as f64)).unwrap();
        let c = 0.1 + 5.0 * stream.uniform();
        let rc = r.scale(c);
        for kind in [&ed, &med] {
            assert!(close(statistic(kind, &rc).unwrap(), c * statistic(kind, &r).unwrap()));
        }
        for kind in [DetectorKind::Mmed, DetectorKind::Cav] {
            assert!(close(statistic(&kind, &rc).unwrap(), statistic(&kind, &r).unwrap()));
        }
    }
}

#[test]
fn ec_with_white_prior_ranks_like_ed() {
    let mut cfg = ScenarioConfig::default().with_k(1);
    cfg.m = 6;
    cfg.n = 30;
    cfg.rho = 0.0;
    cfg.set_snr_sense_db(-5.0);
    let model = SensingModel::new(&cfg).unwrap();
    let ed = DetectorKind::for_scenario(DetectorName::Ed, &cfg).unwrap();
    let ec = DetectorKind::for_scenario(DetectorName::Ec, &cfg).unwrap();

    let mut stream = RngStream::new(32, 0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..10_000 {
        let slot = model.generate_slot(i % 2 == 0, &mut stream);
        let r = &slot.covariances[0];
        xs.push(statistic(&ed, r).unwrap());
        ys.push(statistic(&ec, r).unwrap());
    }
    assert_eq!(spearman(&xs, &ys), 1.0);
}

#[test]
fn ec_weight_matches_direct_inverse_on_two_by_two() {
    // R_s = [[2,1],[1,2]], sigma^2 = 1: W = R_s (R_s + I)^{-1} = [[5/8, 1/8],[1/8, 5/8]].
    let r_s = ComplexMatrix::from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
    let w = EcPrior::new(&r_s, 1.0).unwrap();
    let expect = ComplexMatrix::from_real(2, 2, &[0.625, 0.125, 0.125, 0.625]).unwrap();
    assert!(w.weight().sub(&expect).unwrap().max_abs() < 1e-14);
}

#[test]
fn statistics_rise_under_h1() {
    let mut cfg = ScenarioConfig::default().with_k(1);
    cfg.m = 8;
    cfg.n = 200;
    cfg.set_snr_sense_db(0.0);
    let model = SensingModel::new(&cfg).unwrap();
    let mut stream = RngStream::new(33, 0);
    for name in DetectorName::ALL {
        let kind = DetectorKind::for_scenario(name, &cfg).unwrap();
        let mut h0 = 0.0;
        let mut h1 = 0.0;
        for _ in 0..200 {
            h0 += statistic(&kind, &model.generate_slot(false, &mut stream).covariances[0]).unwrap();
            h1 += statistic(&kind, &model.generate_slot(true, &mut stream).covariances[0]).unwrap();
        }
        assert!(h1 > h0, "{name}: mean under H1 {h1} not above H0 {h0}");
    }
}

proptest! {
    #[test]
    fn statistics_finite_on_psd(seed in 0u64..10_000, m in 2usize..8) {
        let mut stream = RngStream::new(seed, 1);
        // Full-rank with probability one once N >= M.
        let r = random_psd(m, &mut stream).add(&ComplexMatrix::identity(m).scale(1e-3)).unwrap();
        let cfg = { let mut c = ScenarioConfig::default(); c.m = m; c };
        for name in DetectorName::ALL {
            let kind = DetectorKind::for_scenario(name, &cfg).unwrap();
            let s = statistic(&kind, &r).unwrap();
            prop_assert!(s.is_finite() && s > 0.0);
        }
    }
}
