//! Per-sensor test statistics computed from a sample covariance matrix.
//!
//! Every statistic grows with PU presence. ED and MED assume the noise
//! power is known exactly; MMED and CAV need no prior; the
//! estimator-correlator (EC) needs the full signal and noise covariances.

use std::fmt;
use std::str::FromStr;

use crate::airmodel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, ComplexMatrix};

/// Relative eigenvalue floor below which MMED is undefined.
pub const MMED_DEGENERACY: f64 = 1e-14;

/// Detector family without its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorName {
    Ed,
    Med,
    Mmed,
    Cav,
    Ec,
}

impl DetectorName {
    pub const ALL: [DetectorName; 5] =
        [DetectorName::Ed, DetectorName::Med, DetectorName::Mmed, DetectorName::Cav, DetectorName::Ec];

    /// The four baselines that need no signal prior.
    pub const BASELINES: [DetectorName; 4] =
        [DetectorName::Ed, DetectorName::Med, DetectorName::Mmed, DetectorName::Cav];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorName::Ed => "ed",
            DetectorName::Med => "med",
            DetectorName::Mmed => "mmed",
            DetectorName::Cav => "cav",
            DetectorName::Ec => "ec",
        }
    }
}

impl fmt::Display for DetectorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ed" => Ok(DetectorName::Ed),
            "med" => Ok(DetectorName::Med),
            "mmed" => Ok(DetectorName::Mmed),
            "cav" => Ok(DetectorName::Cav),
            "ec" => Ok(DetectorName::Ec),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

/// Signal/noise prior of the estimator-correlator, stored as its weight
/// matrix `W = R_s (R_s + sigma^2 I)^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EcPrior {
    weight: ComplexMatrix,
}

impl EcPrior {
    pub fn new(signal_cov: &ComplexMatrix, noise_power: f64) -> Result<Self> {
        if !(noise_power > 0.0) {
            return Err(Error::InvalidConfig(vec![format!(
                "estimator-correlator needs positive noise power, got {noise_power}"
            )]));
        }
        // R_s and R_s + sigma^2 I share eigenvectors, so W = V diag(l / (l + sigma^2)) V^H.
        let eig = hermitian_eig(signal_cov)?;
        let weight = eig.reconstruct_with(|l| l / (l + noise_power));
        Ok(Self { weight })
    }

    /// Prior matching a scenario: `R_s = sigma_s2 sigma_h2 R_h`.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        let r_s = ComplexMatrix::exponential_correlation(cfg.m, cfg.rho).scale(cfg.sigma_s2 * cfg.sigma_h2);
        Self::new(&r_s, cfg.sigma_u2_sense)
    }

    pub fn weight(&self) -> &ComplexMatrix {
        &self.weight
    }
}

/// A local detector with whatever prior it needs.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectorKind {
    /// Energy detection, normalized by the known noise power.
    Ed { noise_power: f64 },
    /// Maximum eigenvalue over the known noise power.
    Med { noise_power: f64 },
    /// Ratio of the extreme eigenvalues.
    Mmed,
    /// Covariance absolute value.
    Cav,
    /// Estimator-correlator `trace(W R)`.
    Ec(EcPrior),
}

impl DetectorKind {
    /// Builds the named detector with priors taken from the scenario (the
    /// noise power estimate is exact).
    pub fn for_scenario(name: DetectorName, cfg: &ScenarioConfig) -> Result<Self> {
        let noise_power = cfg.sigma_u2_sense;
        Ok(match name {
            DetectorName::Ed => DetectorKind::Ed { noise_power },
            DetectorName::Med => DetectorKind::Med { noise_power },
            DetectorName::Mmed => DetectorKind::Mmed,
            DetectorName::Cav => DetectorKind::Cav,
            DetectorName::Ec => DetectorKind::Ec(EcPrior::for_scenario(cfg)?),
        })
    }

    pub fn name(&self) -> DetectorName {
        match self {
            DetectorKind::Ed { .. } => DetectorName::Ed,
            DetectorKind::Med { .. } => DetectorName::Med,
            DetectorKind::Mmed => DetectorName::Mmed,
            DetectorKind::Cav => DetectorName::Cav,
            DetectorKind::Ec(_) => DetectorName::Ec,
        }
    }
}

pub fn statistic(kind: &DetectorKind, r: &ComplexMatrix) -> Result<f64> {
    if !r.is_square() {
        return Err(Error::NotSquare { rows: r.rows(), cols: r.cols() });
    }
    let m = r.rows();
    match kind {
        DetectorKind::Ed { noise_power } => Ok(r.trace().re / (m as f64 * noise_power)),
        DetectorKind::Med { noise_power } => Ok(hermitian_eig(r)?.max() / noise_power),
        DetectorKind::Mmed => {
            let eig = hermitian_eig(r)?;
            let (lmax, lmin) = (eig.max(), eig.min());
            if lmin <= MMED_DEGENERACY * lmax {
                return Err(Error::DegenerateCovariance { lambda_min: lmin, lambda_max: lmax });
            }
            Ok(lmax / lmin)
        }
        DetectorKind::Cav => {
            let total: f64 = r.as_slice().iter().map(|z| z.norm()).sum();
            let diag: f64 = (0..m).map(|p| r[(p, p)].norm()).sum();
            Ok(total / diag)
        }
        DetectorKind::Ec(prior) => {
            let w = prior.weight();
            if w.rows() != m {
                return Err(Error::DimensionMismatch(format!(
                    "estimator-correlator prior is {}x{}, covariance is {m}x{m}",
                    w.rows(),
                    w.cols()
                )));
            }
            let mut acc = 0.0;
            for p in 0..m {
                for q in 0..m {
                    acc += (w[(p, q)] * r[(q, p)]).re;
                }
            }
            Ok(acc)
        }
    }
}

/// One-bit local decision: `true` iff the statistic strictly exceeds the threshold.
pub fn local_decision(kind: &DetectorKind, r: &ComplexMatrix, threshold: f64) -> Result<bool> {
    Ok(statistic(kind, r)? > threshold)
}
