//! Physical-layer simulation: the PU signal and correlated sensing channel,
//! per-sensor sample covariances, and the two reporting-channel variants
//! (orthogonal subchannels and over-the-air superposition) with Rician
//! fading, imperfect CSI and precoding.

mod config;
mod reporting;
mod sensing;

pub use config::ScenarioConfig;
pub use reporting::{
    apply_aircomp, apply_orthogonal, bpsk_ber_importance_sampled, bpsk_channel, draw_reporting_fade,
    estimate_channel, estimate_from_error, report_aircomp, report_orthogonal, BerEstimate,
    ChannelEstimate, ReportedSymbols, ReportingDraws, SensorLink, DEEP_FADE_GUARD,
};
pub use sensing::{draw_sensing_channel, generate_slot, sample_covariance, CovarianceSample, SensingModel};
