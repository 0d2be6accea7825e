mod common;

use common::binomial_std_err;
use iccss::airmodel::{
    apply_aircomp, bpsk_channel, draw_reporting_fade, generate_slot, report_orthogonal,
    ReportingDraws, ScenarioConfig, SensingModel,
};
use iccss::numerics::{q_function, Complex64, ComplexMatrix, RngStream};
use proptest::prelude::*;

fn ideal_reporting(mut cfg: ScenarioConfig, snr_report_db: f64) -> ScenarioConfig {
    cfg.iota = 1.0;
    cfg.k_factor_db = f64::INFINITY;
    cfg.set_snr_report_db(snr_report_db);
    cfg
}

#[test]
fn sensing_channel_covariance_matches_exponential_model() {
    let mut cfg = ScenarioConfig::default().with_k(1);
    cfg.m = 3;
    cfg.rho = 0.5;
    let model = SensingModel::new(&cfg).unwrap();
    let mut s = RngStream::new(10, 0);
    let draws = 100_000;
    let mut acc = ComplexMatrix::zeros(3, 3);
    for _ in 0..draws {
        let h = &model.draw_channels(&mut s)[0];
        for p in 0..3 {
            for q in 0..3 {
                acc[(p, q)] += h[p] * h[q].conj();
            }
        }
    }
    let emp = acc.scale(1.0 / draws as f64);
    let target = ComplexMatrix::exponential_correlation(3, 0.5);
    assert!(emp.sub(&target).unwrap().max_abs() <= 0.02, "{emp:?}");
}

#[test]
fn idle_slot_concentrates_on_noise_floor() {
    let mut cfg = ScenarioConfig::default().with_k(2);
    cfg.m = 4;
    cfg.n = 100_000;
    cfg.set_snr_sense_db(-5.0);
    let sigma2 = cfg.sigma_u2_sense;
    let slot = generate_slot(&cfg, false, &mut RngStream::new(11, 0)).unwrap();
    let bound = 5.0 * sigma2 / (cfg.n as f64).sqrt();
    for r in &slot.covariances {
        let dev = r.sub(&ComplexMatrix::identity(4).scale(sigma2)).unwrap().max_abs();
        assert!(dev <= bound, "{dev} > {bound}");
    }
}

#[test]
fn busy_slot_mean_power_matches_expectation() {
    let mut cfg = ScenarioConfig::default().with_k(2);
    cfg.m = 4;
    cfg.n = 200;
    cfg.rho = 1e-9;
    cfg.set_snr_sense_db(0.0);
    let model = SensingModel::new(&cfg).unwrap();
    let mut s = RngStream::new(12, 0);
    let slots = 4000;
    let mut values = Vec::new();
    for _ in 0..slots {
        for r in model.generate_slot(true, &mut s).covariances {
            values.push(r.trace().re / 4.0);
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = cfg.sigma_h2 * cfg.sigma_s2 + cfg.sigma_u2_sense;
    assert!((mean - expected).abs() <= 4.0 * (var / n).sqrt(), "{mean} vs {expected}");
}

#[test]
fn rician_fade_has_unit_power() {
    let mut cfg = ScenarioConfig::default();
    cfg.k_factor_db = 0.0;
    let mut s = RngStream::new(13, 0);
    let n = 1_000_000;
    let p = (0..n).map(|_| draw_reporting_fade(&cfg, &mut s).norm_sqr()).sum::<f64>() / n as f64;
    assert!((p - 1.0).abs() <= 0.005, "{p}");
}

#[test]
fn orthogonal_received_energy() {
    let mut cfg = ideal_reporting(ScenarioConfig::default().with_k(1), 3.0);
    cfg.k_factor_db = 0.0;
    let d = 8;
    let y = vec![vec![Complex64::new(1.0, 0.0); d]];
    let mut s = RngStream::new(14, 0);
    let trials = 100_000;
    let mut energy = 0.0;
    for _ in 0..trials {
        let z = report_orthogonal(&y, &cfg, &mut s).unwrap().per_sensor.unwrap();
        energy += z[0].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    let mean = energy / trials as f64;
    let expected = d as f64 * (1.0 + cfg.sigma_u2_report);
    assert!((mean / expected - 1.0).abs() <= 0.01, "{mean} vs {expected}");
}

#[test]
fn bpsk_flip_rate_at_3db() {
    let cfg = ideal_reporting(ScenarioConfig::default(), 3.0);
    let n = 1_000_000;
    let bits: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let out = bpsk_channel(&bits, &cfg, &mut RngStream::new(15, 0)).unwrap();
    let flips = bits.iter().zip(&out).filter(|(a, b)| a != b).count() as f64 / n as f64;
    assert!((flips - 0.0229).abs() <= 3.0 * binomial_std_err(0.0229, n), "{flips}");
}

#[test]
fn bpsk_flip_rate_at_minus_3db() {
    let cfg = ideal_reporting(ScenarioConfig::default(), -3.0);
    let expected = q_function((2.0 * 10f64.powf(-0.3)).sqrt());
    assert!((expected - 0.1584).abs() < 5e-5);
    let n = 1_000_000;
    let bits: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let out = bpsk_channel(&bits, &cfg, &mut RngStream::new(16, 0)).unwrap();
    let flips = bits.iter().zip(&out).filter(|(a, b)| a != b).count() as f64 / n as f64;
    assert!((flips - expected).abs() <= 3.0 * binomial_std_err(expected, n), "{flips}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aircomp_is_linear_for_fixed_draws(seed in any::<u64>(), k in 1usize..6, a_re in -2.0f64..2.0, a_im in -2.0f64..2.0) {
        let cfg = ScenarioConfig::default().with_k(k);
        let mut s = RngStream::new(seed, 1);
        let draws = ReportingDraws::sample(&cfg, k, &mut s).unwrap();
        let y: Vec<Vec<Complex64>> = (0..k).map(|_| (0..8).map(|_| s.standard_complex()).collect()).collect();
        let w: Vec<Vec<Complex64>> = (0..k).map(|_| (0..8).map(|_| s.standard_complex()).collect()).collect();
        let a = Complex64::new(a_re, a_im);
        let combo: Vec<Vec<Complex64>> = y.iter().zip(&w)
            .map(|(yk, wk)| yk.iter().zip(wk).map(|(p, q)| a * p + q).collect())
            .collect();
        let lhs = apply_aircomp(&combo, &draws, &cfg, None);
        let zy = apply_aircomp(&y, &draws, &cfg, None);
        let zw = apply_aircomp(&w, &draws, &cfg, None);
        let scale = draws.links.iter().map(|l| l.gain.norm()).fold(1.0, f64::max);
        for i in 0..8 {
            prop_assert!((lhs[i] - (a * zy[i] + zw[i])).norm() <= 1e-12 * scale * 10.0);
        }
    }
}
