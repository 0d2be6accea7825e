//! Monte Carlo threshold calibration, ROC curves, parameter sweeps and the
//! constellation / no-AirComp exports.
//!
//! Every trial owns a stream derived from the caller's root stream and its
//! index, and results are gathered in index order, so the output does not
//! depend on the size of the rayon pool.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::airmodel::{bpsk_channel, report_aircomp, report_orthogonal, ScenarioConfig, SensingModel};
use crate::detectors::{statistic, DetectorKind, DetectorName};
use crate::error::{Error, Result};
use crate::fusion::{hdf_fuse, quantize_transmit, sdf_fuse, QuantizerSpec};
use crate::neuralsc::ModelParams;
use crate::numerics::{Complex64, ComplexMatrix, RngStream};
use crate::simplified::{network_forward, SimplifiedModel};

/// Mixed H0/H1 slots used to fit the SDF quantizer range.
pub const QUANTIZER_CALIBRATION_SLOTS: usize = 2000;

// Stream tags under the root stream.
const TAG_CAL_H0: u64 = 0;
const TAG_EVAL_H0: u64 = 1;
const TAG_EVAL_H1: u64 = 2;
const TAG_QUANTIZER: u64 = 3;
const TAG_SIMPLIFIED: u64 = 4;

/// Order statistic `sorted[ceil((1 - pfa) n) - 1]`; decisions use strict `>`.
/// An index of zero (`pfa = 1`) gives `-inf`, below every statistic.
pub fn calibrate_threshold(statistics_h0: &[f64], target_pfa: f64) -> Result<f64> {
    if statistics_h0.is_empty() {
        return Err(Error::EmptyInput("no H0 statistics to calibrate on"));
    }
    if !(0.0..=1.0).contains(&target_pfa) {
        return Err(Error::InvalidConfig(vec![format!("target P_fa must lie in [0, 1], got {target_pfa}")]));
    }
    let n = statistics_h0.len();
    if target_pfa > 0.0 && (n as f64) < 10.0 / target_pfa {
        log::warn!("{n} H0 samples are few for a target P_fa of {target_pfa}");
    }
    // The small slack keeps e.g. (1 - 0.2) * 10 from rounding up to 9.
    let idx = (((1.0 - target_pfa) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if idx == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut s = statistics_h0.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[idx.min(n) - 1])
}

/// Fraction of statistics strictly above `threshold`.
pub fn exceedance(statistics: &[f64], threshold: f64) -> f64 {
    if statistics.is_empty() {
        return 0.0;
    }
    statistics.iter().filter(|&&t| t > threshold).count() as f64 / statistics.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Hdf(DetectorName),
    Sdf(DetectorName),
    Icc,
    IccNoAirComp,
    Simplified,
}

impl Method {
    pub fn needs_checkpoint(self) -> bool {
        matches!(self, Method::Icc | Method::IccNoAirComp)
    }

    /// Every baseline detector under both fusion rules.
    pub fn baselines() -> Vec<Method> {
        DetectorName::BASELINES
            .iter()
            .chain(std::iter::once(&DetectorName::Ec))
            .flat_map(|&d| [Method::Hdf(d), Method::Sdf(d)])
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Hdf(d) => write!(f, "{d}-hdf"),
            Method::Sdf(d) => write!(f, "{d}-sdf"),
            Method::Icc => f.write_str("icc"),
            Method::IccNoAirComp => f.write_str("icc-no-aircomp"),
            Method::Simplified => f.write_str("simplified"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "icc" => return Ok(Method::Icc),
            "icc-no-aircomp" => return Ok(Method::IccNoAirComp),
            "simplified" => return Ok(Method::Simplified),
            _ => {}
        }
        let bad = || Error::InvalidConfig(vec![format!("unknown method `{s}`")]);
        let (det, fusion) = s.rsplit_once('-').ok_or_else(bad)?;
        let det: DetectorName = det.parse().map_err(|_| bad())?;
        match fusion {
            "hdf" => Ok(Method::Hdf(det)),
            "sdf" => Ok(Method::Sdf(det)),
            _ => Err(bad()),
        }
    }
}

/// A method plus whatever trained state it needs.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub method: Method,
    model: Option<Arc<ModelParams>>,
    simplified: Option<SimplifiedModel>,
}

impl Pipeline {
    /// A baseline or the simplified model (a random one is drawn per scenario).
    pub fn baseline(method: Method) -> Result<Self> {
        if method.needs_checkpoint() {
            return Err(Error::InvalidConfig(vec![format!("method `{method}` needs a checkpoint")]));
        }
        Ok(Self { method, model: None, simplified: None })
    }

    pub fn with_model(method: Method, model: Arc<ModelParams>) -> Self {
        Self { method, model: Some(model), simplified: None }
    }

    pub fn with_simplified(model: SimplifiedModel) -> Self {
        Self { method: Method::Simplified, model: None, simplified: Some(model) }
    }

    /// Builds a pipeline for `method`, requiring `model` exactly when the method is learned.
    pub fn new(method: Method, model: Option<Arc<ModelParams>>) -> Result<Self> {
        match (method.needs_checkpoint(), model) {
            (true, Some(m)) => Ok(Self::with_model(method, m)),
            (true, None) => Err(Error::InvalidConfig(vec![format!("method `{method}` needs a checkpoint")])),
            (false, _) => Self::baseline(method),
        }
    }

    fn model(&self) -> Result<&ModelParams> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(vec![format!("method `{}` needs a checkpoint", self.method)]))
    }
}

/// Scenario-bound state shared by every trial of one run.
struct Prepared<'a> {
    pipeline: &'a Pipeline,
    cfg: &'a ScenarioConfig,
    sensing: SensingModel,
    detector: Option<DetectorKind>,
    quantizer: Option<QuantizerSpec>,
    simplified: Option<SimplifiedModel>,
}

/// Per-trial output: a scalar fused statistic, or for HDF the local
/// statistics and the bit each sensor's report would arrive as for a sent
/// 0 and a sent 1 under the same channel draw.
enum TrialOutput {
    Scalar(f64),
    Votes { local: Vec<f64>, rx0: Vec<bool>, rx1: Vec<bool> },
}

fn local_stats(kind: &DetectorKind, covariances: &[ComplexMatrix]) -> Result<Vec<f64>> {
    covariances.iter().map(|r| statistic(kind, r)).collect()
}

impl<'a> Prepared<'a> {
    fn new(pipeline: &'a Pipeline, cfg: &'a ScenarioConfig, root: &RngStream) -> Result<Self> {
        let sensing = SensingModel::new(cfg)?;
        let detector = match pipeline.method {
            Method::Hdf(d) | Method::Sdf(d) => Some(DetectorKind::for_scenario(d, cfg)?),
            _ => None,
        };
        let quantizer = match (&pipeline.method, &detector) {
            (Method::Sdf(_), Some(kind)) => Some(calibrate_quantizer(kind, &sensing, &root.derive(TAG_QUANTIZER))?),
            _ => None,
        };
        let simplified = match pipeline.method {
            Method::Simplified => Some(match &pipeline.simplified {
                Some(m) => m.clone(),
                None => SimplifiedModel::random(cfg.m, 3, 4, cfg, &mut root.derive(TAG_SIMPLIFIED))?,
            }),
            _ => None,
        };
        if pipeline.method.needs_checkpoint() {
            let m = pipeline.model()?.arch().m;
            if m != cfg.m {
                return Err(Error::DimensionMismatch(format!("checkpoint expects m = {m}, scenario has m = {}", cfg.m)));
            }
        }
        Ok(Self { pipeline, cfg, sensing, detector, quantizer, simplified })
    }

    fn trial(&self, label: bool, stream: &mut RngStream) -> Result<TrialOutput> {
        let slot = self.sensing.generate_slot(label, stream);
        let cfg = self.cfg;
        match self.pipeline.method {
            Method::Hdf(_) => {
                let local = local_stats(self.detector.as_ref().expect("detector"), &slot.covariances)?;
                let mut rx0 = Vec::with_capacity(cfg.k);
                let mut rx1 = Vec::with_capacity(cfg.k);
                for _ in 0..cfg.k {
                    let mut twin = stream.clone();
                    rx0.push(bpsk_channel(&[false], cfg, &mut twin)?[0]);
                    rx1.push(bpsk_channel(&[true], cfg, stream)?[0]);
                }
                Ok(TrialOutput::Votes { local, rx0, rx1 })
            }
            Method::Sdf(_) => {
                let local = local_stats(self.detector.as_ref().expect("detector"), &slot.covariances)?;
                let q = self.quantizer.as_ref().expect("quantizer");
                let received = local
                    .iter()
                    .map(|&t| Ok(quantize_transmit(t, q, cfg, stream)?.value))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(TrialOutput::Scalar(sdf_fuse(&received)))
            }
            Method::Icc => {
                let model = self.pipeline.model()?;
                let y = model.encode_batch(&slot.covariances)?;
                let z = report_aircomp(&y, cfg, stream)?.aggregated.expect("aircomp output");
                Ok(TrialOutput::Scalar(model.decode_logit(&z)?))
            }
            Method::IccNoAirComp => {
                let model = self.pipeline.model()?;
                let y = model.encode_batch(&slot.covariances)?;
                let per = report_orthogonal(&y, cfg, stream)?.per_sensor.expect("orthogonal output");
                Ok(TrialOutput::Scalar(model.decode_logit(&average(&per))?))
            }
            Method::Simplified => {
                Ok(TrialOutput::Scalar(network_forward(self.simplified.as_ref().expect("model"), &slot.covariances)?))
            }
        }
    }

    fn run(&self, label: bool, tag: u64, trials: usize, root: &RngStream) -> Result<Vec<TrialOutput>> {
        (0..trials)
            .into_par_iter()
            .map(|i| self.trial(label, &mut root.derive_path(&[tag, i as u64])))
            .collect()
    }
}

/// Digital averaging of the per-sensor received vectors.
fn average(per_sensor: &[Vec<Complex64>]) -> Vec<Complex64> {
    let inv_k = 1.0 / per_sensor.len() as f64;
    let mut z = vec![Complex64::new(0.0, 0.0); per_sensor[0].len()];
    for v in per_sensor {
        for (a, b) in z.iter_mut().zip(v) {
            *a += b;
        }
    }
    z.iter().map(|a| a * inv_k).collect()
}

fn calibrate_quantizer(kind: &DetectorKind, sensing: &SensingModel, root: &RngStream) -> Result<QuantizerSpec> {
    let pooled: Vec<Vec<f64>> = (0..QUANTIZER_CALIBRATION_SLOTS)
        .into_par_iter()
        .map(|i| local_stats(kind, &sensing.generate_slot(i % 2 == 1, &mut root.derive(i as u64)).covariances))
        .collect::<Result<_>>()?;
    QuantizerSpec::calibrate(&pooled.concat())
}

fn scalars(out: Vec<TrialOutput>) -> Vec<f64> {
    out.into_iter()
        .map(|o| match o {
            TrialOutput::Scalar(t) => t,
            TrialOutput::Votes { .. } => unreachable!("HDF trials have no scalar statistic"),
        })
        .collect()
}

/// Global majority decisions for local threshold `lambda`.
fn hdf_decisions(trials: &[TrialOutput], lambda: f64) -> Vec<bool> {
    trials
        .iter()
        .map(|o| match o {
            TrialOutput::Votes { local, rx0, rx1 } => {
                let bits: Vec<bool> =
                    local.iter().enumerate().map(|(k, &t)| if t > lambda { rx1[k] } else { rx0[k] }).collect();
                hdf_fuse(&bits)
            }
            TrialOutput::Scalar(_) => unreachable!("scalar trials have no votes"),
        })
        .collect()
}

fn rate(decisions: &[bool]) -> f64 {
    decisions.iter().filter(|&&d| d).count() as f64 / decisions.len().max(1) as f64
}

/// Smallest local threshold (among the pooled H0 local statistics, plus
/// `+inf`) whose induced global P_fa on `cal` does not exceed the target.
fn hdf_local_threshold(cal: &[TrialOutput], target_pfa: f64) -> f64 {
    let mut cands: Vec<f64> = cal
        .iter()
        .flat_map(|o| match o {
            TrialOutput::Votes { local, .. } => local.clone(),
            TrialOutput::Scalar(_) => Vec::new(),
        })
        .collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    cands.push(f64::INFINITY);
    let pfa = |i: usize| rate(&hdf_decisions(cal, cands[i]));
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    if pfa(lo) <= target_pfa {
        return cands[lo];
    }
    // Invariant: pfa(lo) > target, and hi is the best candidate seen so far.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pfa(mid) <= target_pfa {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    cands[hi]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    pub target_pfa: f64,
    /// The fused-statistic threshold, or the local one for HDF.
    pub threshold: f64,
    pub empirical_pfa: f64,
    pub empirical_pd: f64,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RocCurve {
    pub method: String,
    pub points: Vec<RocPoint>,
    pub scenario: serde_json::Value,
    /// Indices `i` where `P_d` drops from point `i - 1` to `i` by more than
    /// three standard errors although `P_fa` did not decrease.
    pub monotonicity_violations: Vec<usize>,
}

pub const ROC_HEADER: &str = "target_pfa,threshold,empirical_pfa,empirical_pd,trials_h0,trials_h1";

impl RocPoint {
    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.target_pfa, self.threshold, self.empirical_pfa, self.empirical_pd, self.trials_h0, self.trials_h1
        )
    }

    /// Binomial standard error of `P_d`.
    pub fn pd_std_err(&self) -> f64 {
        (self.empirical_pd * (1.0 - self.empirical_pd) / self.trials_h1.max(1) as f64).sqrt()
    }
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{ROC_HEADER}\n");
        for p in &self.points {
            let _ = writeln!(out, "{}", p.csv_fields());
        }
        out
    }
}

fn violations(points: &[RocPoint]) -> Vec<usize> {
    (1..points.len())
        .filter(|&i| {
            let (a, b) = (&points[i - 1], &points[i]);
            let se = (a.pd_std_err().powi(2) + b.pd_std_err().powi(2)).sqrt();
            b.empirical_pfa >= a.empirical_pfa && a.empirical_pd - b.empirical_pd > 3.0 * se
        })
        .collect()
}

/// Simulates `trials` H0 slots for calibration, `trials` further H0 slots and
/// `trials` H1 slots for evaluation, and reports one point per target P_fa.
pub fn run_roc(pipeline: &Pipeline, cfg: &ScenarioConfig, pfa_grid: &[f64], trials: usize, stream: &RngStream) -> Result<RocCurve> {
    if trials == 0 {
        return Err(Error::EmptyInput("no trials requested"));
    }
    if pfa_grid.is_empty() {
        return Err(Error::EmptyInput("empty P_fa grid"));
    }
    let mut grid = pfa_grid.to_vec();
    if let Some(bad) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidConfig(vec![format!("target P_fa must lie in [0, 1], got {bad}")]));
    }
    grid.sort_by(f64::total_cmp);

    let prep = Prepared::new(pipeline, cfg, stream)?;
    let cal = prep.run(false, TAG_CAL_H0, trials, stream)?;
    let h0 = prep.run(false, TAG_EVAL_H0, trials, stream)?;
    let h1 = prep.run(true, TAG_EVAL_H1, trials, stream)?;

    let point = |target_pfa, threshold, empirical_pfa, empirical_pd| RocPoint {
        target_pfa,
        threshold,
        empirical_pfa,
        empirical_pd,
        trials_h0: trials,
        trials_h1: trials,
    };
    let points: Vec<RocPoint> = if let Method::Hdf(_) = pipeline.method {
        grid.iter()
            .map(|&p| {
                if p >= 1.0 {
                    // Deciding H1 unconditionally; no local threshold reaches this through noisy bits.
                    return point(p, f64::NEG_INFINITY, 1.0, 1.0);
                }
                let lambda = hdf_local_threshold(&cal, p);
                point(p, lambda, rate(&hdf_decisions(&h0, lambda)), rate(&hdf_decisions(&h1, lambda)))
            })
            .collect()
    } else {
        let (cal, h0, h1) = (scalars(cal), scalars(h0), scalars(h1));
        grid.iter()
            .map(|&p| {
                let gamma = calibrate_threshold(&cal, p)?;
                Ok(point(p, gamma, exceedance(&h0, gamma), exceedance(&h1, gamma)))
            })
            .collect::<Result<_>>()?
    };
    Ok(RocCurve {
        method: pipeline.method.to_string(),
        monotonicity_violations: violations(&points),
        points,
        scenario: cfg.to_json_value(),
    })
}

/// The swept scenario parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrSenseDb,
    SnrReportDb,
    NSamples,
    KSensors,
    /// Two-column grid of `(k_factor_db, iota)` pairs.
    KFactorIota,
}

impl SweepAxis {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            SweepAxis::SnrSenseDb => &["snr_sense_db"],
            SweepAxis::SnrReportDb => &["snr_report_db"],
            SweepAxis::NSamples => &["n_samples"],
            SweepAxis::KSensors => &["k_sensors"],
            SweepAxis::KFactorIota => &["k_factor_db", "iota"],
        }
    }

    /// The scenario at one axis value (one number, or a pair for the grid).
    pub fn apply(self, cfg: &ScenarioConfig, value: &[f64]) -> Result<ScenarioConfig> {
        if value.len() != self.columns().len() {
            return Err(Error::InvalidConfig(vec![format!(
                "axis {} takes {} number(s) per value, got {value:?}",
                self.columns().join(","),
                self.columns().len()
            )]));
        }
        let count = |v: f64, what: &str| {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(vec![format!("{what} must be a positive integer, got {v}")]))
            }
        };
        let mut c = cfg.clone();
        match self {
            SweepAxis::SnrSenseDb => c.set_snr_sense_db(value[0]),
            SweepAxis::SnrReportDb => c.set_snr_report_db(value[0]),
            SweepAxis::NSamples => c.n = count(value[0], "n_samples")?,
            SweepAxis::KSensors => c.set_k(count(value[0], "k_sensors")?),
            SweepAxis::KFactorIota => {
                c.k_factor_db = value[0];
                c.iota = value[1];
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "snr_sense_db" => SweepAxis::SnrSenseDb,
            "snr_report_db" => SweepAxis::SnrReportDb,
            "n_samples" => SweepAxis::NSamples,
            "k_sensors" => SweepAxis::KSensors,
            "k_factor_iota" | "k_factor_db,iota" => SweepAxis::KFactorIota,
            _ => return Err(Error::InvalidConfig(vec![format!("unknown sweep axis `{s}`")])),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: Vec<f64>,
    pub method: String,
    pub point: RocPoint,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},method,{ROC_HEADER}\n", self.axis.columns().join(","));
        for r in &self.rows {
            let vals: Vec<String> = r.value.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{},{},{}", vals.join(","), r.method, r.point.csv_fields());
        }
        out
    }
}

/// Re-calibrates and evaluates every method at each axis value. Every value
/// reuses the same root stream, so a one-value sweep equals `run_roc` there.
pub fn run_sweep(
    pipelines: &[Pipeline],
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[Vec<f64>],
    target_pfa: f64,
    trials: usize,
    stream: &RngStream,
) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(values.len() * pipelines.len());
    for value in values {
        let c = axis.apply(cfg, value)?;
        for p in pipelines {
            let roc = run_roc(p, &c, &[target_pfa], trials, stream)?;
            rows.push(SweepRow { value: value.clone(), method: roc.method, point: roc.points[0].clone() });
        }
    }
    Ok(SweepTable { axis, rows })
}

pub const CONSTELLATION_HEADER: &str = "slot,sensor,symbol_index,re,im,label";

/// Transmitted symbols of every sensor over `slots` slots (odd slots are H1).
pub fn export_constellation(model: &ModelParams, cfg: &ScenarioConfig, slots: usize, stream: &RngStream) -> Result<String> {
    let sensing = SensingModel::new(cfg)?;
    let per_slot: Vec<(bool, Vec<Vec<Complex64>>)> = (0..slots)
        .into_par_iter()
        .map(|i| {
            let label = i % 2 == 1;
            let slot = sensing.generate_slot(label, &mut stream.derive(i as u64));
            Ok((label, model.encode_batch(&slot.covariances)?))
        })
        .collect::<Result<_>>()?;
    let mut out = format!("{CONSTELLATION_HEADER}\n");
    for (i, (label, y)) in per_slot.iter().enumerate() {
        for (k, yk) in y.iter().enumerate() {
            for (d, s) in yk.iter().enumerate() {
                let _ = writeln!(out, "{i},{k},{d},{},{},{}", s.re, s.im, u8::from(*label));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub aircomp: RocCurve,
    pub orthogonal: RocCurve,
    /// Complex channel uses per slot with superposition (D).
    pub subchannels_aircomp: usize,
    /// Complex channel uses per slot with one subchannel set per sensor (K D).
    pub subchannels_orthogonal: usize,
}

/// Compares the checkpoint with and without over-the-air aggregation on
/// identical trials.
pub fn run_ablation_no_aircomp(
    model: Arc<ModelParams>,
    cfg: &ScenarioConfig,
    pfa_grid: &[f64],
    trials: usize,
    stream: &RngStream,
) -> Result<AblationReport> {
    let d = model.arch().symbols;
    let aircomp = run_roc(&Pipeline::with_model(Method::Icc, model.clone()), cfg, pfa_grid, trials, stream)?;
    let orthogonal = run_roc(&Pipeline::with_model(Method::IccNoAirComp, model), cfg, pfa_grid, trials, stream)?;
    Ok(AblationReport { aircomp, orthogonal, subchannels_aircomp: d, subchannels_orthogonal: cfg.k * d })
}
