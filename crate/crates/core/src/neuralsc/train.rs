use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use super::model::{covariance_to_input, Gradients, Mode, ModelParams, Updates};
use crate::airmodel::{CovarianceSample, ReportingDraws, ScenarioConfig, SensingModel};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Predictions are clipped to `[eps, 1 - eps]` inside the loss.
pub const BCE_EPSILON: f64 = 1e-7;

const DATA_TAG: u64 = 1;
const SHUFFLE_TAG: u64 = 2;
const CHANNEL_TAG: u64 = 3;
const INIT_TAG: u64 = 4;

/// Optimizer and data settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Number of labeled slots generated once before training (I).
    pub dataset_size: usize,
    pub train_snr_sense_db: f64,
    pub train_snr_report_db: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 512,
            epochs: 300,
            dataset_size: 20_000,
            train_snr_sense_db: -15.0,
            train_snr_report_db: -10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            problems.push(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.dataset_size < self.batch_size.max(2) {
            problems.push(format!(
                "dataset_size {} is smaller than one batch of {}",
                self.dataset_size, self.batch_size
            ));
        }
        for (name, v) in [("train_snr_sense_db", self.train_snr_sense_db), ("train_snr_report_db", self.train_snr_report_db)] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                problems.push(format!("{name} must be a number above -inf, got {v}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean binary cross-entropy (natural log) with clipping.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> f64 {
    let n = predictions.len().max(1) as f64;
    predictions
        .iter()
        .zip(labels)
        .map(|(&h, &e)| {
            let h = h.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(e * h.ln() + (1.0 - e) * (1.0 - h).ln())
        })
        .sum::<f64>()
        / n
}

/// One slot's reporting channel, frozen: composite gains per sensor and the
/// receiver noise per symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotChannel {
    pub gains: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl SlotChannel {
    pub fn sample(cfg: &ScenarioConfig, sensors: usize, symbols: usize, stream: &mut RngStream) -> Result<Self> {
        let gains = ReportingDraws::sample(cfg, sensors, stream)?.gains();
        let noise = (0..symbols).map(|_| stream.complex_gaussian(cfg.sigma_u2_report)).collect();
        Ok(Self { gains, noise })
    }

    /// Perfect CSI, no fading and no noise: every gain is `sqrt(kappa) d^0`.
    pub fn ideal(cfg: &ScenarioConfig, sensors: usize, symbols: usize) -> Self {
        Self { gains: ReportingDraws::ideal(cfg, sensors).gains(), noise: vec![Complex64::new(0.0, 0.0); symbols] }
    }

    /// `(1/K) sum_k g_k y_k + u`.
    pub fn aggregate(&self, y: &[Vec<Complex64>]) -> Vec<Complex64> {
        let inv_k = 1.0 / y.len() as f64;
        let mut z = self.noise.clone();
        for (yk, g) in y.iter().zip(&self.gains) {
            for (zi, s) in z.iter_mut().zip(yk) {
                *zi += g * s * inv_k;
            }
        }
        z
    }
}

/// Result of one training-mode forward and backward pass.
#[derive(Clone, Debug)]
pub struct TrainStep {
    pub loss: f64,
    pub gradients: Gradients,
    updates: Updates,
}

impl TrainStep {
    /// Folds this batch's statistics into the model's running averages.
    pub fn commit_running_stats(&self, model: &mut ModelParams) {
        model.apply_updates(self.updates.clone());
    }
}

fn check_batch(model: &ModelParams, slots: &[&CovarianceSample], channels: &[SlotChannel]) -> Result<usize> {
    let first = slots.first().ok_or(Error::EmptyInput("training batch"))?;
    let k = first.covariances.len();
    let d = model.arch().symbols;
    if slots.len() != channels.len() {
        return Err(Error::DimensionMismatch(format!("{} slots with {} channel draws", slots.len(), channels.len())));
    }
    if k == 0 || slots.iter().any(|s| s.covariances.len() != k) {
        return Err(Error::DimensionMismatch("every slot in a batch needs the same nonzero sensor count".into()));
    }
    if channels.iter().any(|c| c.gains.len() != k || c.noise.len() != d) {
        return Err(Error::DimensionMismatch(format!("channel draws must carry {k} gains and {d} noise samples")));
    }
    let m = model.arch().m;
    if slots.iter().flat_map(|s| &s.covariances).any(|r| r.rows() != m || r.cols() != m) {
        return Err(Error::DimensionMismatch(format!("model expects {m}x{m} covariances")));
    }
    Ok(k)
}

fn run_batch(
    model: &ModelParams,
    slots: &[&CovarianceSample],
    channels: &[SlotChannel],
    with_grad: bool,
) -> Result<(f64, Gradients, Updates)> {
    let k = check_batch(model, slots, channels)?;
    let d2 = 2 * model.arch().symbols;
    let b = slots.len();
    let inv_k = 1.0 / k as f64;

    let mut x = Vec::with_capacity(b * k * model.input_len());
    for s in slots {
        for r in &s.covariances {
            x.extend(covariance_to_input(r));
        }
    }
    let mut updates = Vec::new();
    let (y, enc_cache) = model.encoder_forward(x, Mode::Train, &mut updates)?;

    let mut z = vec![0.0; b * d2];
    for (bi, ch) in channels.iter().enumerate() {
        let zb = &mut z[bi * d2..(bi + 1) * d2];
        for (kk, g) in ch.gains.iter().enumerate() {
            let yk = &y[(bi * k + kk) * d2..(bi * k + kk + 1) * d2];
            for i in 0..d2 / 2 {
                let (yr, yi) = (yk[2 * i], yk[2 * i + 1]);
                zb[2 * i] += (g.re * yr - g.im * yi) * inv_k;
                zb[2 * i + 1] += (g.re * yi + g.im * yr) * inv_k;
            }
        }
        for (i, u) in ch.noise.iter().enumerate() {
            zb[2 * i] += u.re;
            zb[2 * i + 1] += u.im;
        }
    }

    let (logits, dec_cache) = model.decoder_forward(z, Mode::Train, &mut updates)?;
    let labels: Vec<f64> = slots.iter().map(|s| s.label_bit()).collect();
    let preds: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let loss = bce_loss(&preds, &labels);
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: "loss".into() });
    }
    let mut grads = Gradients::new();
    if !with_grad {
        return Ok((loss, grads, updates));
    }

    let dlogits: Vec<f64> = preds
        .iter()
        .zip(&labels)
        .map(|(&h, &e)| {
            if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&h) {
                0.0
            } else {
                (h - e) / b as f64
            }
        })
        .collect();
    let dz = model.decoder_backward(&dec_cache, &dlogits, &mut grads);

    // dL/dy_k = (1/K) conj(g_k) dL/dz; the noise passes the gradient through unchanged.
    let mut dy = vec![0.0; y.len()];
    for (bi, ch) in channels.iter().enumerate() {
        let dzb = &dz[bi * d2..(bi + 1) * d2];
        for (kk, g) in ch.gains.iter().enumerate() {
            let dyk = &mut dy[(bi * k + kk) * d2..(bi * k + kk + 1) * d2];
            for i in 0..d2 / 2 {
                let (gr, gi) = (dzb[2 * i], dzb[2 * i + 1]);
                dyk[2 * i] = (g.re * gr + g.im * gi) * inv_k;
                dyk[2 * i + 1] = (-g.im * gr + g.re * gi) * inv_k;
            }
        }
    }
    model.encoder_backward(&enc_cache, &dy, &mut grads);
    Ok((loss, grads, updates))
}

/// Training-mode loss and gradients with the given frozen channels.
pub fn loss_and_gradients(model: &ModelParams, slots: &[CovarianceSample], channels: &[SlotChannel]) -> Result<TrainStep> {
    let refs: Vec<&CovarianceSample> = slots.iter().collect();
    let (loss, gradients, updates) = run_batch(model, &refs, channels, true)?;
    Ok(TrainStep { loss, gradients, updates })
}

/// Training-mode loss only (batch statistics, no state change).
pub fn batch_loss(model: &ModelParams, slots: &[CovarianceSample], channels: &[SlotChannel]) -> Result<f64> {
    let refs: Vec<&CovarianceSample> = slots.iter().collect();
    Ok(run_batch(model, &refs, channels, false)?.0)
}

/// Draws fresh reporting channels for every slot and runs one training pass.
pub fn forward_train(
    model: &ModelParams,
    batch: &[CovarianceSample],
    cfg: &ScenarioConfig,
    stream: &mut RngStream,
) -> Result<TrainStep> {
    let k = batch.first().ok_or(Error::EmptyInput("training batch"))?.covariances.len();
    let d = model.arch().symbols;
    let channels = batch
        .iter()
        .map(|_| SlotChannel::sample(cfg, k, d, stream))
        .collect::<Result<Vec<_>>>()?;
    loss_and_gradients(model, batch, &channels)
}

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&self, model: &mut ModelParams, grads: &Gradients) {
        let mut state = std::mem::take(model.optimizer_mut());
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let Some(p) = model.param_mut(name) else { continue };
            let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        *model.optimizer_mut() = state;
    }
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    /// Trailing moving average over `window` epochs.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.epoch_losses.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                let s = &self.epoch_losses[lo..=i];
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect()
    }

    /// Whether the mean of the last `window` epochs is strictly below the
    /// mean of the first `window`.
    pub fn decreased(&self, window: usize) -> bool {
        let n = self.epoch_losses.len();
        let w = window.clamp(1, n.max(1));
        if n < 2 {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        mean(&self.epoch_losses[n - w..]) < mean(&self.epoch_losses[..w])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Trains `model` on freshly generated slots; see [`train_with_progress`].
pub fn train(model: &ModelParams, tcfg: &TrainConfig, scfg: &ScenarioConfig) -> Result<(ModelParams, TrainLog)> {
    train_with_progress(model, tcfg, scfg, |_, _| {})
}

/// Generates `dataset_size` equiprobable labeled slots at the training SNRs,
/// then runs shuffled mini-batch Adam for `epochs` epochs with fresh
/// reporting channels for every batch. `on_epoch(epoch, mean_loss)` is
/// called after each epoch (1-based).
pub fn train_with_progress(
    model: &ModelParams,
    tcfg: &TrainConfig,
    scfg: &ScenarioConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ModelParams, TrainLog)> {
    tcfg.validate()?;
    let mut cfg = scfg.clone();
    cfg.set_snr_sense_db(tcfg.train_snr_sense_db);
    cfg.set_snr_report_db(tcfg.train_snr_report_db);
    cfg.validate()?;
    if cfg.m != model.arch().m {
        return Err(Error::DimensionMismatch(format!(
            "scenario has m = {} but the model expects m = {}",
            cfg.m,
            model.arch().m
        )));
    }

    if tcfg.epochs == 0 {
        return Ok((model.clone(), TrainLog::default()));
    }

    let root = RngStream::new(tcfg.seed, 0);
    let sensing = SensingModel::new(&cfg)?;
    let data: Vec<CovarianceSample> = (0..tcfg.dataset_size as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = root.derive_path(&[DATA_TAG, i]);
            let label = s.uniform() < 0.5;
            sensing.generate_slot(label, &mut s)
        })
        .collect();

    let mut model = model.clone();
    let adam = Adam::new(tcfg.learning_rate);
    let d = model.arch().symbols;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut root.derive_path(&[SHUFFLE_TAG, epoch as u64]));
        let mut total = 0.0;
        let mut seen = 0usize;
        for (bi, idx) in order.chunks(tcfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let slots: Vec<&CovarianceSample> = idx.iter().map(|&i| &data[i]).collect();
            let mut cs = root.derive_path(&[CHANNEL_TAG, epoch as u64, bi as u64]);
            let channels = slots
                .iter()
                .map(|_| SlotChannel::sample(&cfg, cfg.k, d, &mut cs))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads, updates) = run_batch(&model, &slots, &channels, true)?;
            adam.step(&mut model, &grads);
            model.apply_updates(updates);
            total += loss * idx.len() as f64;
            seen += idx.len();
        }
        let mean = total / seen as f64;
        log::info!("epoch {}/{}: mean loss {mean:.6}", epoch + 1, tcfg.epochs);
        log.epoch_losses.push(mean);
        on_epoch(epoch + 1, mean);
    }
    Ok((model, log))
}

impl ModelParams {
    /// Fresh weights drawn from a stream tied to a training seed.
    pub fn init_seeded(arch: &super::Arch, seed: u64) -> Result<Self> {
        Self::init(arch, &mut RngStream::new(seed, 0).derive(INIT_TAG))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_hand_values() {
        assert!((bce_loss(&[0.5, 0.5], &[1.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        let expect = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((bce_loss(&[0.9, 0.2], &[1.0, 0.0]) - expect).abs() < 1e-15);
        assert!((expect - 0.16425).abs() < 1e-5);
        assert!(bce_loss(&[1.0], &[1.0]) < 1e-6);
        assert!(bce_loss(&[0.0], &[1.0]).is_finite());
    }

    #[test]
    fn log_smoothing_and_csv() {
        let log = TrainLog { epoch_losses: vec![4.0, 2.0, 3.0, 1.0] };
        assert_eq!(log.smoothed(2), vec![4.0, 3.0, 2.5, 2.0]);
        assert!(log.decreased(2));
        assert_eq!(log.to_csv(), "epoch,mean_loss\n1,4\n2,2\n3,3\n4,1\n");
    }

    #[test]
    fn single_sensor_ideal_channel_is_plain_composition() {
        let mut cfg = ScenarioConfig::default().with_k(1);
        cfg.m = 8;
        cfg.n = 16;
        cfg.kappa = 2.0;
        cfg.set_snr_report_db(f64::INFINITY);
        let model = ModelParams::init(&super::super::Arch::miniature(8), &mut RngStream::new(7, 0)).unwrap();
        let sensing = SensingModel::new(&cfg).unwrap();
        let mut s = RngStream::new(7, 1);
        let slots: Vec<CovarianceSample> = (0..6).map(|i| sensing.generate_slot(i % 2 == 0, &mut s)).collect();
        let channels: Vec<SlotChannel> = slots.iter().map(|_| SlotChannel::ideal(&cfg, 1, 2)).collect();
        let step = loss_and_gradients(&model, &slots, &channels).unwrap();

        let x: Vec<f64> = slots.iter().flat_map(|s| covariance_to_input(&s.covariances[0])).collect();
        let (y, _) = model.encoder_forward(x, Mode::Train, &mut Vec::new()).unwrap();
        let z: Vec<f64> = y.iter().map(|v| cfg.kappa.sqrt() * v).collect();
        let (logits, _) = model.decoder_forward(z, Mode::Train, &mut Vec::new()).unwrap();
        let preds: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let labels: Vec<f64> = slots.iter().map(|s| s.label_bit()).collect();
        assert_eq!(step.loss, bce_loss(&preds, &labels));
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig { batch_size: 1, learning_rate: -1.0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(p)) if p.len() == 2));
        assert!(TrainConfig::from_json(r#"{"epochs": 3, "dataset_size": 600}"#).is_ok());
        assert!(TrainConfig::from_json(r#"{"epoch": 3}"#).is_err());
    }
}
