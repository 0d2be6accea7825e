//! Degenerate one-layer version of the transceiver: a bank of `L x L`
//! valid convolutions on the real part of each covariance, ELU, global
//! average pooling, noiseless superposition across sensors, and a linear
//! read-out into a sigmoid. On scaled-identity inputs it collapses to a
//! logistic function of the summed sensor energies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airmodel::{ScenarioConfig, SensingModel};
use crate::detectors::{statistic, DetectorKind, DetectorName};
use crate::error::{Error, Result};
use crate::numerics::{spearman, ComplexMatrix, RngStream};

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec")]
pub struct SimplifiedModel {
    /// Input side length `M`.
    pub m: usize,
    /// Kernel side length `L`.
    pub kernel_size: usize,
    /// `Lambda` kernels stored as `[lambda][row][col]`, flattened.
    pub kernel: Vec<f64>,
    /// Read-out weights, one per kernel.
    pub theta: Vec<f64>,
    /// Multiplicative noise constant; 1 in the noiseless mode.
    pub varpi: f64,
    zeta: Vec<f64>,
    phi: f64,
}

/// On-disk form; the derived constants are recomputed on load.
#[derive(Deserialize)]
struct ModelSpec {
    m: usize,
    kernel_size: usize,
    kernel: Vec<f64>,
    theta: Vec<f64>,
    #[serde(default = "one")]
    varpi: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ModelSpec> for SimplifiedModel {
    type Error = Error;

    fn try_from(s: ModelSpec) -> Result<Self> {
        Ok(Self::new(s.m, s.kernel_size, s.kernel, s.theta)?.with_varpi(s.varpi))
    }
}

impl SimplifiedModel {
    pub fn new(m: usize, kernel_size: usize, kernel: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        if kernel_size == 0 || kernel_size > m {
            problems.push(format!("kernel size {kernel_size} must lie in 1..={m}"));
        }
        if theta.is_empty() {
            problems.push("theta must be nonempty".to_string());
        }
        if kernel.len() != theta.len() * kernel_size * kernel_size {
            problems.push(format!(
                "kernel has {} weights, expected {} x {kernel_size} x {kernel_size}",
                kernel.len(),
                theta.len()
            ));
        }
        if kernel.iter().chain(&theta).any(|v| !v.is_finite()) {
            problems.push("weights must be finite".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let zeta = zeta_from_kernel(m, kernel_size, &kernel);
        let phi = theta.iter().zip(&zeta).map(|(t, z)| t * z).sum();
        Ok(Self { m, kernel_size, kernel, theta, varpi: 1.0, zeta, phi })
    }

    /// Random nonnegative kernels with `theta` scaled so that
    /// `phi * k * noise_power = 1`, which keeps the sigmoid away from saturation
    /// around the noise floor.
    pub fn random(m: usize, kernel_size: usize, kernels: usize, cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<Self> {
        let kernel: Vec<f64> = (0..kernels * kernel_size * kernel_size).map(|_| stream.uniform()).collect();
        let theta: Vec<f64> = (0..kernels).map(|_| 0.5 + stream.uniform()).collect();
        let raw = Self::new(m, kernel_size, kernel.clone(), theta.clone())?;
        let scale_target = cfg.k as f64 * cfg.sigma_u2_sense;
        if raw.phi <= 0.0 || scale_target <= 0.0 || !scale_target.is_finite() {
            return Ok(raw);
        }
        let s = 1.0 / (raw.phi * scale_target);
        Self::new(m, kernel_size, kernel, theta.iter().map(|t| t * s).collect())
    }

    pub fn with_varpi(mut self, varpi: f64) -> Self {
        self.varpi = varpi;
        self
    }

    pub fn kernels(&self) -> usize {
        self.theta.len()
    }

    /// ELU-averaged identity response of each kernel.
    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Pre-activation of kernel `lambda` at output position `(i, j)` for the identity input.
    pub fn eta(&self, i: usize, j: usize, lambda: usize) -> f64 {
        eta(self.kernel_size, &self.kernel, i, j, lambda)
    }

    /// True when every identity pre-activation is nonnegative, so the ELU
    /// acts linearly and the identity response scales with the input.
    pub fn is_homogeneous(&self) -> bool {
        let p = self.m - self.kernel_size + 1;
        (0..self.kernels()).all(|l| (0..p).all(|i| (0..p).all(|j| self.eta(i, j, l) >= 0.0)))
    }
}

fn eta(l: usize, kernel: &[f64], i: usize, j: usize, lambda: usize) -> f64 {
    // Identity input: only taps with i + a == j + b see a one.
    let base = lambda * l * l;
    (0..l).filter_map(|a| (i + a).checked_sub(j).filter(|&b| b < l).map(|b| kernel[base + a * l + b])).sum()
}

/// Mean of `ELU(eta)` over all valid output positions, per kernel.
pub fn zeta_from_kernel(m: usize, l: usize, kernel: &[f64]) -> Vec<f64> {
    let p = m - l + 1;
    let kernels = kernel.len() / (l * l);
    (0..kernels)
        .map(|lambda| {
            let mut acc = 0.0;
            for i in 0..p {
                for j in 0..p {
                    acc += elu(eta(l, kernel, i, j, lambda));
                }
            }
            acc / (p * p) as f64
        })
        .collect()
}

/// `T = 1 / (1 + varpi * exp(-phi * sum_k energies_k))`.
pub fn simplified_statistic(model: &SimplifiedModel, energies: &[f64]) -> f64 {
    let total: f64 = energies.iter().sum();
    sigmoid(model.phi * total - model.varpi.ln())
}

/// Per-sensor energy `trace(R) / M`.
pub fn energy(r: &ComplexMatrix) -> f64 {
    r.trace().re / r.rows() as f64
}

/// Pooled feature vector of one sensor (conv, ELU, global average pool).
pub fn sensor_features(model: &SimplifiedModel, r: &ComplexMatrix) -> Result<Vec<f64>> {
    let (m, l) = (model.m, model.kernel_size);
    if r.rows() != m || r.cols() != m {
        return Err(Error::DimensionMismatch(format!("{}x{} input for m = {m}", r.rows(), r.cols())));
    }
    let p = m - l + 1;
    Ok((0..model.kernels())
        .map(|lambda| {
            let w = &model.kernel[lambda * l * l..(lambda + 1) * l * l];
            let mut acc = 0.0;
            for i in 0..p {
                for j in 0..p {
                    let mut s = 0.0;
                    for a in 0..l {
                        for b in 0..l {
                            s += w[a * l + b] * r[(i + a, j + b)].re;
                        }
                    }
                    acc += elu(s);
                }
            }
            acc / (p * p) as f64
        })
        .collect())
}

/// Runs the network itself: per-sensor features, noiseless sum across
/// sensors, linear read-out with bias `-ln varpi`, sigmoid.
pub fn network_forward(model: &SimplifiedModel, covariances: &[ComplexMatrix]) -> Result<f64> {
    if covariances.is_empty() {
        return Err(Error::EmptyInput("no sensor covariances"));
    }
    let mut pooled = vec![0.0; model.kernels()];
    for r in covariances {
        for (acc, f) in pooled.iter_mut().zip(sensor_features(model, r)?) {
            *acc += f;
        }
    }
    let logit: f64 = model.theta.iter().zip(&pooled).map(|(t, s)| t * s).sum::<f64>() - model.varpi.ln();
    Ok(sigmoid(logit))
}

/// Monte Carlo estimate of `E[exp(-sum theta_lambda n_lambda)]` for real
/// Gaussian feature noise of variance `noise_power / 2` per kernel.
pub fn estimate_varpi(model: &SimplifiedModel, noise_power: f64, samples: usize, stream: &mut RngStream) -> Result<f64> {
    if samples == 0 {
        return Err(Error::EmptyInput("no samples for the noise constant"));
    }
    if noise_power == 0.0 {
        return Ok(1.0);
    }
    let sd = (noise_power / 2.0).sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let x: f64 = model.theta.iter().map(|t| t * sd * stream.standard_normal()).sum();
        acc += (-x).exp();
    }
    Ok(acc / samples as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub target_pfa: f64,
    pub simplified: (f64, f64),
    pub ed_sdf: (f64, f64),
    pub ec_sdf: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop3Report {
    pub trials: usize,
    pub phi: f64,
    /// `phi < 0`: the simplified statistic decreases with energy, so its
    /// decisions are taken on `-T`.
    pub inverted: bool,
    pub spearman_simplified_ed: f64,
    pub spearman_ed_ec: f64,
    pub spearman_simplified_ec: f64,
    pub simplified_ed_exact: bool,
    pub ed_ec_exact: bool,
    pub roc: Vec<RocPoint>,
    pub roc_identical: bool,
}

impl Prop3Report {
    /// Both rank identities hold exactly (up to the sign of `phi`) and the ROC points coincide.
    pub fn passed(&self) -> bool {
        self.simplified_ed_exact && self.ed_ec_exact && self.roc_identical
    }
}

const PROP3_PFA_GRID: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];

fn threshold_at(h0: &[f64], pfa: f64) -> f64 {
    let mut s = h0.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((1.0 - pfa) * s.len() as f64).ceil() as usize;
    s[idx.clamp(1, s.len()) - 1]
}

fn roc_pair(stat: &[f64], labels: &[bool], pfa: f64) -> (f64, f64) {
    let h0: Vec<f64> = stat.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let gamma = threshold_at(&h0, pfa);
    let (mut fa, mut n0, mut det, mut n1) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in stat.iter().zip(labels) {
        if l {
            n1 += 1;
            det += usize::from(s > gamma);
        } else {
            n0 += 1;
            fa += usize::from(s > gamma);
        }
    }
    (fa as f64 / n0.max(1) as f64, det as f64 / n1.max(1) as f64)
}

/// Compares the simplified statistic with equal-gain ED and EC fusion over
/// `trials` slots (alternating H0/H1). Requires the uncorrelated channel.
pub fn verify_proposition3(
    model: &SimplifiedModel,
    cfg: &ScenarioConfig,
    trials: usize,
    stream: &RngStream,
) -> Result<Prop3Report> {
    if cfg.rho != 0.0 {
        return Err(Error::InvalidConfig(vec![format!("the rank identity needs rho = 0, got {}", cfg.rho)]));
    }
    if cfg.m != model.m {
        return Err(Error::DimensionMismatch(format!("model m = {}, scenario m = {}", model.m, cfg.m)));
    }
    if trials < 2 {
        return Err(Error::EmptyInput("at least two trials are needed"));
    }
    let sensing = SensingModel::new(cfg)?;
    let ed = DetectorKind::for_scenario(DetectorName::Ed, cfg)?;
    let ec = DetectorKind::for_scenario(DetectorName::Ec, cfg)?;
    let noiseless = model.clone().with_varpi(1.0);
    let rows: Vec<(bool, f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let label = i % 2 == 1;
            let slot = sensing.generate_slot(label, &mut stream.derive(i as u64));
            let energies: Vec<f64> = slot.covariances.iter().map(energy).collect();
            let mut t_ed = 0.0;
            let mut t_ec = 0.0;
            for r in &slot.covariances {
                t_ed += statistic(&ed, r)?;
                t_ec += statistic(&ec, r)?;
            }
            Ok((label, simplified_statistic(&noiseless, &energies), t_ed, t_ec))
        })
        .collect::<Result<_>>()?;

    let labels: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let inverted = model.phi < 0.0;
    let sense = if inverted { -1.0 } else { 1.0 };
    let t_sim: Vec<f64> = rows.iter().map(|r| sense * r.1).collect();
    let t_ed: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let t_ec: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let raw_sim: Vec<f64> = rows.iter().map(|r| r.1).collect();

    let s_sim_ed = spearman(&raw_sim, &t_ed);
    let s_ed_ec = spearman(&t_ed, &t_ec);
    let s_sim_ec = spearman(&raw_sim, &t_ec);
    let roc: Vec<RocPoint> = PROP3_PFA_GRID
        .iter()
        .map(|&p| RocPoint {
            target_pfa: p,
            simplified: roc_pair(&t_sim, &labels, p),
            ed_sdf: roc_pair(&t_ed, &labels, p),
            ec_sdf: roc_pair(&t_ec, &labels, p),
        })
        .collect();
    let roc_identical = roc.iter().all(|p| p.simplified == p.ed_sdf && p.ed_sdf == p.ec_sdf);
    Ok(Prop3Report {
        trials,
        phi: model.phi,
        inverted,
        spearman_simplified_ed: s_sim_ed,
        spearman_ed_ec: s_ed_ec,
        spearman_simplified_ec: s_sim_ec,
        simplified_ed_exact: s_sim_ed == sense,
        ed_ec_exact: s_ed_ec == 1.0,
        roc,
        roc_identical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(kernel: Vec<f64>, theta: Vec<f64>) -> SimplifiedModel {
        SimplifiedModel::new(5, 2, kernel, theta).unwrap()
    }

    #[test]
    fn sigmoid_at_zero_energy() {
        let m = model(vec![1.0; 4], vec![1.0]);
        assert_eq!(simplified_statistic(&m, &[0.0, 0.0]), 0.5);
    }

    #[test]
    fn zeta_of_identity_kernel() {
        // The diagonal taps of a 2x2 all-ones kernel see two ones on the
        // main diagonal, one one on the first off-diagonals and zero elsewhere.
        let m = model(vec![1.0; 4], vec![1.0]);
        assert_eq!(m.eta(0, 0, 0), 2.0);
        assert_eq!(m.eta(0, 1, 0), 1.0);
        assert_eq!(m.eta(1, 0, 0), 1.0);
        assert_eq!(m.eta(0, 2, 0), 0.0);
        // 4 positions at 2, 6 at 1, 6 at 0 over a 4x4 grid.
        assert!((m.zeta()[0] - (4.0 * 2.0 + 6.0) / 16.0).abs() < 1e-15);
        assert!((m.phi() - m.zeta()[0]).abs() < 1e-15);
    }

    #[test]
    fn mixed_sign_is_flagged() {
        assert!(model(vec![1.0; 4], vec![1.0]).is_homogeneous());
        assert!(!model(vec![-1.0, 0.0, 0.0, -1.0], vec![1.0]).is_homogeneous());
    }

    #[test]
    fn json_round_trip_recomputes_constants() {
        let m = model(vec![0.5, -1.0, 2.0, 0.25], vec![1.5]).with_varpi(1.2);
        let back: SimplifiedModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"m": 2, "kernel_size": 3, "kernel": [1,1,1,1,1,1,1,1,1], "theta": [1]}"#;
        assert!(serde_json::from_str::<SimplifiedModel>(bad).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SimplifiedModel::new(5, 2, vec![1.0; 3], vec![1.0]).is_err());
        assert!(SimplifiedModel::new(2, 3, vec![1.0; 9], vec![1.0]).is_err());
    }

    #[test]
    fn varpi_matches_log_normal_mean() {
        let m = model(vec![1.0; 8], vec![0.3, -0.2]);
        let est = estimate_varpi(&m, 1.0, 200_000, &mut RngStream::new(3, 0)).unwrap();
        let exact = (0.5 * 0.5 * (0.09 + 0.04) as f64).exp();
        assert!((est - exact).abs() < 5e-3, "{est} vs {exact}");
        assert_eq!(estimate_varpi(&m, 0.0, 1, &mut RngStream::new(3, 0)).unwrap(), 1.0);
    }
}
