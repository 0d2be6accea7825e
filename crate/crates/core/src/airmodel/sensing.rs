use num_complex::Complex64;

use super::ScenarioConfig;
use crate::error::Result;
use crate::numerics::{cholesky, sample_with_factor, ComplexMatrix, RngStream};

/// One labeled sensing slot: the K sample covariance matrices and the PU state.
#[derive(Clone, Debug)]
pub struct CovarianceSample {
    pub covariances: Vec<ComplexMatrix>,
    /// `true` when the primary user is transmitting (H1).
    pub label: bool,
}

impl CovarianceSample {
    pub fn label_bit(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Cached factors for drawing sensing channels and slots under one scenario.
#[derive(Clone, Debug)]
pub struct SensingModel {
    cfg: ScenarioConfig,
    /// Cholesky factor of `sigma_h2 * R_h`.
    channel_factor: ComplexMatrix,
}

impl SensingModel {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let r_h = ComplexMatrix::exponential_correlation(cfg.m, cfg.rho).scale(cfg.sigma_h2);
        Ok(Self { cfg: cfg.clone(), channel_factor: cholesky(&r_h)? })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// K independent channel vectors `h_k ~ CN(0, sigma_h2 R_h)`.
    pub fn draw_channels(&self, stream: &mut RngStream) -> Vec<Vec<Complex64>> {
        let zero = vec![Complex64::new(0.0, 0.0); self.cfg.m];
        (0..self.cfg.k)
            .map(|_| sample_with_factor(stream, &zero, &self.channel_factor))
            .collect()
    }

    /// Simulates one sensing slot and returns the K sample covariances.
    ///
    /// Under H1 the PU samples `s(n)` are shared by all sensors; the noise is
    /// independent per sensor, antenna and sample.
    pub fn generate_slot(&self, label: bool, stream: &mut RngStream) -> CovarianceSample {
        let (k, m, n) = (self.cfg.k, self.cfg.m, self.cfg.n);
        let (channels, signal) = if label {
            let channels = self.draw_channels(stream);
            let signal: Vec<Complex64> =
                (0..n).map(|_| stream.complex_gaussian(self.cfg.sigma_s2)).collect();
            (channels, signal)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut covariances = Vec::with_capacity(k);
        let mut x = vec![Complex64::new(0.0, 0.0); m];
        for sensor in 0..k {
            let noise_sd = self.cfg.sense_noise_power(sensor).sqrt();
            let mut acc = ComplexMatrix::zeros(m, m);
            for t in 0..n {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = stream.standard_complex() * noise_sd;
                    if label {
                        *xa += channels[sensor][a] * signal[t];
                    }
                }
                accumulate_outer_upper(&mut acc, &x);
            }
            covariances.push(finish_covariance(acc, n));
        }
        CovarianceSample { covariances, label }
    }
}

/// Adds `x x^H` into the upper triangle of `acc`.
fn accumulate_outer_upper(acc: &mut ComplexMatrix, x: &[Complex64]) {
    let m = x.len();
    let data = acc.as_mut_slice();
    for p in 0..m {
        let xp = x[p];
        let row = &mut data[p * m..(p + 1) * m];
        for q in p..m {
            row[q] += xp * x[q].conj();
        }
    }
}

/// Scales by `1/n` and mirrors the upper triangle so the result is exactly Hermitian.
fn finish_covariance(mut acc: ComplexMatrix, n: usize) -> ComplexMatrix {
    let m = acc.rows();
    let inv = 1.0 / n as f64;
    for p in 0..m {
        acc[(p, p)] = Complex64::new(acc[(p, p)].re * inv, 0.0);
        for q in p + 1..m {
            let v = acc[(p, q)] * inv;
            acc[(p, q)] = v;
            acc[(q, p)] = v.conj();
        }
    }
    acc
}

/// Sample covariance `(1/N) sum_n x(n) x(n)^H` of a set of observation vectors.
pub fn sample_covariance(observations: &[Vec<Complex64>]) -> ComplexMatrix {
    let m = observations.first().map_or(0, Vec::len);
    let mut acc = ComplexMatrix::zeros(m, m);
    for x in observations {
        accumulate_outer_upper(&mut acc, x);
    }
    finish_covariance(acc, observations.len().max(1))
}

/// K sensing channels under `cfg`; see [`SensingModel::draw_channels`].
pub fn draw_sensing_channel(cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<Vec<Vec<Complex64>>> {
    Ok(SensingModel::new(cfg)?.draw_channels(stream))
}

/// One labeled slot under `cfg`; see [`SensingModel::generate_slot`].
pub fn generate_slot(cfg: &ScenarioConfig, label: bool, stream: &mut RngStream) -> Result<CovarianceSample> {
    Ok(SensingModel::new(cfg)?.generate_slot(label, stream))
}
