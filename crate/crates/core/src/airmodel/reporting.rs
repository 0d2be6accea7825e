use num_complex::Complex64;

use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Estimates below this magnitude trigger a fade redraw.
pub const DEEP_FADE_GUARD: f64 = 1e-12;

/// Rician small-scale fade with unit mean power: line-of-sight component with
/// uniform phase plus a CN(0,1) scattered component.
pub fn draw_reporting_fade(cfg: &ScenarioConfig, stream: &mut RngStream) -> Complex64 {
    let kr = cfg.k_factor_linear();
    let theta = stream.uniform_phase();
    let w = stream.standard_complex();
    let (los, nlos) = if kr.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kr / (kr + 1.0)).sqrt(), (1.0 / (kr + 1.0)).sqrt())
    };
    Complex64::from_polar(los, theta) + w * nlos
}

/// A channel estimate together with the error term that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelEstimate {
    pub estimate: Complex64,
    pub error: Complex64,
}

/// Solves `h = iota * estimate + sqrt(1 - iota^2) * error` for the estimate
/// given a fixed error term.
pub fn estimate_from_error(h_true: Complex64, iota: f64, error: Complex64) -> Result<Complex64> {
    if !(iota > 0.0 && iota <= 1.0) {
        return Err(Error::DegenerateEstimate(iota));
    }
    Ok((h_true - error * (1.0 - iota * iota).sqrt()) / iota)
}

/// Draws the estimation error `v ~ CN(0,1)` and returns the implied estimate.
pub fn estimate_channel(h_true: Complex64, iota: f64, stream: &mut RngStream) -> Result<ChannelEstimate> {
    let error = stream.standard_complex();
    Ok(ChannelEstimate { estimate: estimate_from_error(h_true, iota, error)?, error })
}

/// Realized reporting link of one sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorLink {
    /// True small-scale fade.
    pub fade: Complex64,
    /// Fade estimate available at the sensor.
    pub estimate: Complex64,
    /// Estimation error term.
    pub estimation_error: Complex64,
    /// Precoding scalar computed from the estimate.
    pub precoder: Complex64,
    /// Composite gain `d^{-nu/2} * fade * precoder` seen by the transmitted symbols.
    pub gain: Complex64,
    /// How many deep fades were discarded before this one.
    pub redraws: u32,
}

impl SensorLink {
    /// Draws a fade and estimate, redrawing while the estimate is in a deep fade.
    pub fn sample(cfg: &ScenarioConfig, sensor: usize, stream: &mut RngStream) -> Result<Self> {
        let mut redraws = 0;
        loop {
            let fade = draw_reporting_fade(cfg, stream);
            let est = estimate_channel(fade, cfg.iota, stream)?;
            if est.estimate.norm() < DEEP_FADE_GUARD {
                redraws += 1;
                log::debug!("deep fade on sensor {sensor} (|h_est| = {:e}), redrawing", est.estimate.norm());
                continue;
            }
            return Ok(Self::from_parts(cfg, sensor, fade, est, redraws));
        }
    }

    pub fn from_parts(
        cfg: &ScenarioConfig,
        sensor: usize,
        fade: Complex64,
        est: ChannelEstimate,
        redraws: u32,
    ) -> Self {
        let d = cfg.distances.get(sensor).copied().unwrap_or(1.0);
        let half_loss = d.powf(cfg.nu / 2.0);
        let precoder = est.estimate.conj() * (half_loss * cfg.kappa.sqrt()) / est.estimate.norm_sqr();
        let gain = fade * precoder / half_loss;
        SensorLink {
            fade,
            estimate: est.estimate,
            estimation_error: est.error,
            precoder,
            gain,
            redraws,
        }
    }
}

/// The fades drawn for one reporting round.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportingDraws {
    pub links: Vec<SensorLink>,
}

impl ReportingDraws {
    pub fn sample(cfg: &ScenarioConfig, sensors: usize, stream: &mut RngStream) -> Result<Self> {
        let links = (0..sensors)
            .map(|k| SensorLink::sample(cfg, k, stream))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { links })
    }

    /// Every link with composite gain exactly `sqrt(kappa)`.
    pub fn ideal(cfg: &ScenarioConfig, sensors: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let links = (0..sensors)
            .map(|k| {
                SensorLink::from_parts(
                    cfg,
                    k,
                    one,
                    ChannelEstimate { estimate: one, error: Complex64::new(0.0, 0.0) },
                    0,
                )
            })
            .collect();
        Self { links }
    }

    pub fn gains(&self) -> Vec<Complex64> {
        self.links.iter().map(|l| l.gain).collect()
    }

    pub fn total_redraws(&self) -> u32 {
        self.links.iter().map(|l| l.redraws).sum()
    }
}

/// What the fusion center receives in one reporting round.
#[derive(Clone, Debug)]
pub struct ReportedSymbols {
    /// Orthogonal mode: one received vector per sensor.
    pub per_sensor: Option<Vec<Vec<Complex64>>>,
    /// AirComp mode: the single superposed vector.
    pub aggregated: Option<Vec<Complex64>>,
    pub channel_draws: ReportingDraws,
}

impl ReportedSymbols {
    /// Number of complex channel uses consumed.
    pub fn subchannels(&self) -> usize {
        match (&self.per_sensor, &self.aggregated) {
            (Some(v), _) => v.iter().map(Vec::len).sum(),
            (_, Some(z)) => z.len(),
            _ => 0,
        }
    }
}

fn check_lengths(y: &[Vec<Complex64>], cfg: &ScenarioConfig) -> Result<usize> {
    if y.is_empty() {
        return Err(Error::EmptyInput("no sensor symbols to report"));
    }
    if y.len() != cfg.k {
        return Err(Error::DimensionMismatch(format!("{} sensor vectors for k = {}", y.len(), cfg.k)));
    }
    let d = y[0].len();
    if y.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch("sensor symbol vectors differ in length".into()));
    }
    Ok(d)
}

fn noise_vec(d: usize, variance: f64, stream: &mut RngStream) -> Vec<Complex64> {
    (0..d).map(|_| stream.complex_gaussian(variance)).collect()
}

/// Orthogonal reporting with given draws; `noise` of `None` means noiseless.
pub fn apply_orthogonal(
    y: &[Vec<Complex64>],
    draws: &ReportingDraws,
    cfg: &ScenarioConfig,
    noise: Option<&mut RngStream>,
) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = y
        .iter()
        .zip(&draws.links)
        .map(|(yk, link)| yk.iter().map(|&s| link.gain * s).collect())
        .collect();
    if let Some(stream) = noise {
        for zk in out.iter_mut() {
            for (z, u) in zk.iter_mut().zip(noise_vec(y[0].len(), cfg.sigma_u2_report, stream)) {
                *z += u;
            }
        }
    }
    out
}

/// Over-the-air superposition `(1/K) sum_k gain_k y_k + u` with given draws.
/// The noise is added once, outside the average.
pub fn apply_aircomp(
    y: &[Vec<Complex64>],
    draws: &ReportingDraws,
    cfg: &ScenarioConfig,
    noise: Option<&mut RngStream>,
) -> Vec<Complex64> {
    let d = y[0].len();
    let inv_k = 1.0 / y.len() as f64;
    let mut z = vec![Complex64::new(0.0, 0.0); d];
    for (yk, link) in y.iter().zip(&draws.links) {
        for (zi, &s) in z.iter_mut().zip(yk) {
            *zi += link.gain * s;
        }
    }
    for zi in z.iter_mut() {
        *zi *= inv_k;
    }
    if let Some(stream) = noise {
        for (zi, u) in z.iter_mut().zip(noise_vec(d, cfg.sigma_u2_report, stream)) {
            *zi += u;
        }
    }
    z
}

/// Each sensor reports over its own subchannel with fresh fades.
pub fn report_orthogonal(
    y: &[Vec<Complex64>],
    cfg: &ScenarioConfig,
    stream: &mut RngStream,
) -> Result<ReportedSymbols> {
    check_lengths(y, cfg)?;
    let draws = ReportingDraws::sample(cfg, y.len(), stream)?;
    let per_sensor = apply_orthogonal(y, &draws, cfg, Some(stream));
    Ok(ReportedSymbols { per_sensor: Some(per_sensor), aggregated: None, channel_draws: draws })
}

/// All sensors transmit simultaneously on the same subchannels with fresh fades.
pub fn report_aircomp(
    y: &[Vec<Complex64>],
    cfg: &ScenarioConfig,
    stream: &mut RngStream,
) -> Result<ReportedSymbols> {
    check_lengths(y, cfg)?;
    let draws = ReportingDraws::sample(cfg, y.len(), stream)?;
    let z = apply_aircomp(y, &draws, cfg, Some(stream));
    Ok(ReportedSymbols { per_sensor: None, aggregated: Some(z), channel_draws: draws })
}

/// Sends bits as BPSK symbols (+1 for a one) over one precoded fading link
/// and detects them by the sign of the real part. One fade realization
/// covers the whole word.
pub fn bpsk_channel(bits: &[bool], cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<Vec<bool>> {
    let link = SensorLink::sample(cfg, 0, stream)?;
    let noise_sd = (cfg.sigma_u2_report / 2.0).sqrt();
    Ok(bits
        .iter()
        .map(|&b| {
            let x = if b { 1.0 } else { -1.0 };
            (link.gain * x).re + noise_sd * stream.standard_normal() > 0.0
        })
        .collect())
}

/// Importance-sampled BPSK bit error rate estimate.
#[derive(Clone, Copy, Debug)]
pub struct BerEstimate {
    pub ber: f64,
    pub std_err: f64,
    pub samples: usize,
    /// Plain Monte Carlo bit count that would give the same standard error.
    pub equivalent_bits: f64,
}

/// Estimates the BPSK error rate by simulating transmissions with the noise
/// mean shifted onto the decision boundary and reweighting by the likelihood
/// ratio. Each sample draws a fresh fade, a random bit and the shifted noise.
pub fn bpsk_ber_importance_sampled(cfg: &ScenarioConfig, samples: usize, stream: &mut RngStream) -> Result<BerEstimate> {
    let s2 = cfg.sigma_u2_report / 2.0;
    if s2 == 0.0 {
        return Ok(BerEstimate { ber: 0.0, std_err: 0.0, samples, equivalent_bits: f64::INFINITY });
    }
    let sd = s2.sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let link = SensorLink::sample(cfg, 0, stream)?;
        let bit = stream.uniform() < 0.5;
        let x = if bit { 1.0 } else { -1.0 };
        let clean = (link.gain * x).re;
        // Proposal N(-clean, s2) centers the noise on the decision boundary.
        let shift = -clean;
        let n = shift + sd * stream.standard_normal();
        let detected = clean + n > 0.0;
        if detected != bit {
            // Likelihood ratio N(n; 0, s2) / N(n; shift, s2).
            let w = ((shift * shift - 2.0 * n * shift) / (2.0 * s2)).exp();
            sum += w;
            sum_sq += w * w;
        }
    }
    let n = samples as f64;
    let ber = sum / n;
    let var = (sum_sq / n - ber * ber).max(0.0) / n;
    let std_err = var.sqrt();
    let equivalent_bits = if var > 0.0 { ber * (1.0 - ber) / var } else { f64::INFINITY };
    Ok(BerEstimate { ber, std_err, samples, equivalent_bits })
}
