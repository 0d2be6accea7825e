//! Decision fusion at the FC: majority-rule HDF, equal-gain SDF over an
//! 8-bit BPSK link, and the closed-form majority detection probability.

use crate::airmodel::{bpsk_channel, ScenarioConfig};
use crate::error::{Error, Result};
use crate::numerics::{binomial, bpsk_ber, RngStream};

/// Lower and upper percentile used to calibrate a quantizer range.
pub const QUANTIZER_PERCENTILES: (f64, f64) = (0.001, 0.999);

/// Uniform scalar quantizer for reporting a local statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub lo: f64,
    pub hi: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        let q = Self { bits, lo, hi };
        q.validate()?;
        Ok(q)
    }

    /// 8-bit quantizer spanning the [0.1%, 99.9%] percentiles of `samples`.
    pub fn calibrate(samples: &[f64]) -> Result<Self> {
        Self::calibrate_with(8, samples, QUANTIZER_PERCENTILES)
    }

    pub fn calibrate_with(bits: u32, samples: &[f64], (p_lo, p_hi): (f64, f64)) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("quantizer calibration samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        let (lo, mut hi) = (at(p_lo), at(p_hi));
        if hi <= lo {
            // Constant statistic: widen to a unit cell so the range is valid.
            hi = lo + lo.abs().max(1.0) * 1e-6;
        }
        Self::new(bits, lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=32).contains(&self.bits) {
            problems.push(format!("quantizer bits must be in 1..=32, got {}", self.bits));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            problems.push(format!("quantizer range needs finite lo < hi, got [{}, {}]", self.lo, self.hi));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels() as f64
    }

    /// Code for `t` and whether it had to be clamped into `[lo, hi]`.
    pub fn encode(&self, t: f64) -> (u64, bool) {
        let clamped = !(self.lo..=self.hi).contains(&t);
        let x = t.clamp(self.lo, self.hi);
        let code = ((x - self.lo) / self.step()).floor() as u64;
        (code.min(self.levels() - 1), clamped)
    }

    /// Center of cell `code`.
    pub fn decode(&self, code: u64) -> f64 {
        self.lo + (code as f64 + 0.5) * self.step()
    }

    /// Most significant bit first.
    pub fn to_bits(&self, code: u64) -> Vec<bool> {
        (0..self.bits).rev().map(|i| (code >> i) & 1 == 1).collect()
    }

    pub fn from_bits(&self, bits: &[bool]) -> u64 {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }
}

/// Minimum number of ones for a majority decision among `k` votes.
pub fn majority_threshold(k: usize) -> usize {
    (k + 2) / 2
}

/// Majority rule: 1 iff at least `ceil((K+1)/2)` votes are 1.
pub fn hdf_fuse(bits_received: &[bool]) -> bool {
    let ones = bits_received.iter().filter(|&&b| b).count();
    !bits_received.is_empty() && ones >= majority_threshold(bits_received.len())
}

/// Equal-gain combining.
pub fn sdf_fuse(statistics_received: &[f64]) -> f64 {
    statistics_received.iter().sum()
}

/// Outcome of sending one statistic over the quantized BPSK link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizedReport {
    pub value: f64,
    pub code_sent: u64,
    pub code_received: u64,
    pub clamped: bool,
}

pub fn quantize_transmit(
    t: f64,
    q: &QuantizerSpec,
    cfg: &ScenarioConfig,
    stream: &mut RngStream,
) -> Result<QuantizedReport> {
    let (code_sent, clamped) = q.encode(t);
    let received = bpsk_channel(&q.to_bits(code_sent), cfg, stream)?;
    let code_received = q.from_bits(&received);
    Ok(QuantizedReport { value: q.decode(code_received), code_sent, code_received, clamped })
}

/// Majority-rule detection probability over `k` sensors whose local vote is
/// correct with probability `p_local` and whose reports cross an ideal BPSK
/// link at `snr_report_db`.
pub fn hdf_theoretical_pd(p_local: f64, snr_report_db: f64, k: usize) -> f64 {
    let pe = bpsk_ber(snr_report_db);
    majority_pd(p_local * (1.0 - pe) + (1.0 - p_local) * pe, k)
}

/// Probability that at least a majority of `k` independent Bernoulli(`p`) votes are 1.
pub fn majority_pd(p: f64, k: usize) -> f64 {
    (majority_threshold(k)..=k)
        .map(|x| binomial(k, x) * p.powi(x as i32) * (1.0 - p).powi((k - x) as i32))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_votes() {
        assert!(!hdf_fuse(&[true, true, true, false, false, false]));
        assert!(hdf_fuse(&[true, true, true, true, false, false]));
        assert!(hdf_fuse(&[true]));
        assert!(!hdf_fuse(&[false]));
        assert!(!hdf_fuse(&[]));
    }

    #[test]
    fn sdf_sums() {
        assert_eq!(sdf_fuse(&[1.0; 6]), 6.0);
        assert_eq!(sdf_fuse(&[2.5]), 2.5);
    }

    #[test]
    fn hdf_closed_form_anchors() {
        assert!((hdf_theoretical_pd(1.0, -3.0, 6) - 0.9454).abs() < 1e-4);
        assert!((hdf_theoretical_pd(0.3, f64::NEG_INFINITY, 6) - 22.0 / 64.0).abs() < 1e-12);
        assert_eq!(hdf_theoretical_pd(1.0, f64::INFINITY, 6), 1.0);
    }

    #[test]
    fn bits_round_trip_msb_first() {
        let q = QuantizerSpec::new(8, 0.0, 1.0).unwrap();
        assert_eq!(q.to_bits(0b1000_0001), vec![true, false, false, false, false, false, false, true]);
        for code in 0..256 {
            assert_eq!(q.from_bits(&q.to_bits(code)), code);
        }
    }

    #[test]
    fn encode_clamps_and_centers_round_trip() {
        let q = QuantizerSpec::new(8, -1.0, 3.0).unwrap();
        assert_eq!(q.encode(-5.0), (0, true));
        assert_eq!(q.encode(10.0), (255, true));
        assert_eq!(q.encode(3.0), (255, false));
        for code in 0..256 {
            assert_eq!(q.encode(q.decode(code)).0, code);
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(QuantizerSpec::new(8, 1.0, 1.0).is_err());
        assert!(QuantizerSpec::new(0, 0.0, 1.0).is_err());
        assert!(QuantizerSpec::new(8, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn calibration_uses_percentiles() {
        let samples: Vec<f64> = (0..=1000).map(f64::from).collect();
        let q = QuantizerSpec::calibrate(&samples).unwrap();
        assert_eq!((q.lo, q.hi), (1.0, 999.0));
        let flat = QuantizerSpec::calibrate(&[2.0; 10]).unwrap();
        assert!(flat.hi > flat.lo);
    }
}
