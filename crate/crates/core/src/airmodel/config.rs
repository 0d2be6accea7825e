use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{db_to_linear, linear_to_db};

/// Physical-layer parameters of one cooperative sensing scenario.
///
/// The sensing SNR satisfies `snr_sense_db = 10 lg(sigma_h2 * sigma_s2 / sigma_u2_sense)`
/// and the reporting SNR satisfies `snr_report_db = 10 lg(kappa / sigma_u2_report)`.
/// Use the `set_*` methods to keep both sides in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Number of sensors.
    pub k: usize,
    /// Antennas per sensor.
    pub m: usize,
    /// Samples per sensing slot.
    pub n: usize,
    pub sigma_s2: f64,
    pub sigma_h2: f64,
    pub sigma_u2_sense: f64,
    pub rho: f64,
    pub snr_sense_db: f64,
    pub snr_report_db: f64,
    pub kappa: f64,
    pub sigma_u2_report: f64,
    /// Rician K-factor of the reporting fade in dB (`+inf` is pure line of sight).
    pub k_factor_db: f64,
    /// Correlation between the true and estimated reporting channel.
    pub iota: f64,
    /// Large-scale path-loss exponent.
    pub nu: f64,
    /// Sensor-to-fusion-center distances, one per sensor.
    pub distances: Vec<f64>,
    /// Optional per-sensor sensing SNRs overriding `snr_sense_db`.
    pub snr_sense_db_per_sensor: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    /// Six 28-antenna sensors, 100 samples, -15 dB sensing SNR, 0 dB reporting
    /// SNR over a 0 dB Rician fade with iota = 0.9.
    fn default() -> Self {
        let mut cfg = ScenarioConfig {
            k: 6,
            m: 28,
            n: 100,
            sigma_s2: 1.0,
            sigma_h2: 1.0,
            sigma_u2_sense: 1.0,
            rho: 0.5,
            snr_sense_db: 0.0,
            snr_report_db: 0.0,
            kappa: 1.0,
            sigma_u2_report: 1.0,
            k_factor_db: 0.0,
            iota: 0.9,
            nu: 3.0,
            distances: vec![1.0; 6],
            snr_sense_db_per_sensor: None,
        };
        cfg.set_snr_sense_db(-15.0);
        cfg.set_snr_report_db(0.0);
        cfg
    }
}

fn noise_power_for(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / db_to_linear(snr_db)
    }
}

fn snr_db_for(signal_power: f64, noise_power: f64) -> f64 {
    if noise_power == 0.0 {
        f64::INFINITY
    } else {
        linear_to_db(signal_power / noise_power)
    }
}

impl ScenarioConfig {
    /// Sets the sensing SNR with `sigma_h2 = sigma_s2 = 1` and derives the noise power.
    pub fn set_snr_sense_db(&mut self, db: f64) {
        self.sigma_h2 = 1.0;
        self.sigma_s2 = 1.0;
        self.snr_sense_db = db;
        self.sigma_u2_sense = noise_power_for(1.0, db);
    }

    /// Sets the reporting SNR with `kappa = 1` and derives the noise power.
    pub fn set_snr_report_db(&mut self, db: f64) {
        self.kappa = 1.0;
        self.snr_report_db = db;
        self.sigma_u2_report = noise_power_for(1.0, db);
    }

    /// Changes the sensor count, keeping distances (new sensors at distance 1).
    pub fn set_k(&mut self, k: usize) {
        self.k = k;
        self.distances.resize(k, 1.0);
        if let Some(per) = &mut self.snr_sense_db_per_sensor {
            let fill = self.snr_sense_db;
            per.resize(k, fill);
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.set_k(k);
        self
    }

    /// Sensing noise power for sensor `k`, honoring the per-sensor override.
    pub fn sense_noise_power(&self, k: usize) -> f64 {
        match &self.snr_sense_db_per_sensor {
            Some(per) => noise_power_for(self.sigma_h2 * self.sigma_s2, per[k]),
            None => self.sigma_u2_sense,
        }
    }

    /// Rician K-factor as a linear ratio (may be 0 or infinite).
    pub fn k_factor_linear(&self) -> f64 {
        if self.k_factor_db == f64::INFINITY {
            f64::INFINITY
        } else {
            db_to_linear(self.k_factor_db)
        }
    }

    /// Checks every invariant, collecting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [("k", self.k), ("m", self.m), ("n", self.n)] {
            if v == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        // rho = 0 is accepted as the uncorrelated limit.
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            problems.push(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.iota > 0.0 && self.iota <= 1.0) {
            problems.push(format!("iota must lie in (0, 1], got {}", self.iota));
        }
        for (name, v) in [("sigma_s2", self.sigma_s2), ("sigma_h2", self.sigma_h2), ("kappa", self.kappa)] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("sigma_u2_sense", self.sigma_u2_sense), ("sigma_u2_report", self.sigma_u2_report)] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be nonnegative and finite, got {v}"));
            }
        }
        if self.snr_report_db == f64::NEG_INFINITY || self.snr_sense_db == f64::NEG_INFINITY {
            problems.push("SNRs of -inf dB are not simulable; use a large negative finite value".into());
        }
        if self.k_factor_db.is_nan() {
            problems.push("k_factor_db must not be NaN".into());
        }
        if !self.nu.is_finite() {
            problems.push(format!("nu must be finite, got {}", self.nu));
        }
        if self.distances.len() != self.k {
            problems.push(format!("distances has {} entries for k = {}", self.distances.len(), self.k));
        }
        if self.distances.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            problems.push("distances must be positive and finite".into());
        }
        if let Some(per) = &self.snr_sense_db_per_sensor {
            if per.len() != self.k {
                problems.push(format!("snr_sense_db_per_sensor has {} entries for k = {}", per.len(), self.k));
            }
            if per.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                problems.push("snr_sense_db_per_sensor entries must be finite or +inf".into());
            }
        }
        let sense = snr_db_for(self.sigma_h2 * self.sigma_s2, self.sigma_u2_sense);
        if !snr_consistent(sense, self.snr_sense_db) {
            problems.push(format!(
                "snr_sense_db = {} disagrees with 10 lg(sigma_h2 sigma_s2 / sigma_u2_sense) = {sense}",
                self.snr_sense_db
            ));
        }
        let report = snr_db_for(self.kappa, self.sigma_u2_report);
        if !snr_consistent(report, self.snr_report_db) {
            problems.push(format!(
                "snr_report_db = {} disagrees with 10 lg(kappa / sigma_u2_report) = {report}",
                self.snr_report_db
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        let cfg = doc.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioDoc::from(self)).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ScenarioDoc::from(self)).expect("scenario serializes")
    }
}

fn snr_consistent(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        a == b
    } else {
        (a - b).abs() <= 1e-9
    }
}

/// The on-disk form: every field optional, unknown keys rejected. Infinite
/// values are written as the strings `"inf"` / `"-inf"`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    sigma_s2: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    sigma_h2: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    sigma_u2_sense: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    snr_sense_db: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    snr_report_db: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    sigma_u2_report: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    k_factor_db: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    iota: Option<f64>,
    #[serde(default, with = "ext_f64::opt", skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distances: Option<Vec<f64>>,
    #[serde(default, with = "ext_f64::opt_vec", skip_serializing_if = "Option::is_none")]
    snr_sense_db_per_sensor: Option<Vec<f64>>,
}

impl From<&ScenarioConfig> for ScenarioDoc {
    fn from(c: &ScenarioConfig) -> Self {
        ScenarioDoc {
            k: Some(c.k),
            m: Some(c.m),
            n: Some(c.n),
            sigma_s2: Some(c.sigma_s2),
            sigma_h2: Some(c.sigma_h2),
            sigma_u2_sense: Some(c.sigma_u2_sense),
            rho: Some(c.rho),
            snr_sense_db: Some(c.snr_sense_db),
            snr_report_db: Some(c.snr_report_db),
            kappa: Some(c.kappa),
            sigma_u2_report: Some(c.sigma_u2_report),
            k_factor_db: Some(c.k_factor_db),
            iota: Some(c.iota),
            nu: Some(c.nu),
            distances: Some(c.distances.clone()),
            snr_sense_db_per_sensor: c.snr_sense_db_per_sensor.clone(),
        }
    }
}

impl ScenarioDoc {
    /// Fills absent fields from the defaults and derives whichever side of each
    /// SNR relation was left out. When both sides are given they must agree,
    /// which `validate` checks afterwards.
    fn resolve(self) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.k = self.k.unwrap_or(cfg.k);
        cfg.m = self.m.unwrap_or(cfg.m);
        cfg.n = self.n.unwrap_or(cfg.n);
        cfg.rho = self.rho.unwrap_or(cfg.rho);
        cfg.k_factor_db = self.k_factor_db.unwrap_or(cfg.k_factor_db);
        cfg.iota = self.iota.unwrap_or(cfg.iota);
        cfg.nu = self.nu.unwrap_or(cfg.nu);
        cfg.distances = self.distances.unwrap_or_else(|| vec![1.0; cfg.k]);
        cfg.snr_sense_db_per_sensor = self.snr_sense_db_per_sensor;

        cfg.sigma_s2 = self.sigma_s2.unwrap_or(1.0);
        cfg.sigma_h2 = self.sigma_h2.unwrap_or(1.0);
        let signal = cfg.sigma_s2 * cfg.sigma_h2;
        match (self.snr_sense_db, self.sigma_u2_sense) {
            (Some(db), Some(u)) => {
                cfg.snr_sense_db = db;
                cfg.sigma_u2_sense = u;
            }
            (Some(db), None) => {
                cfg.snr_sense_db = db;
                cfg.sigma_u2_sense = noise_power_for(signal, db);
            }
            (None, Some(u)) => {
                cfg.sigma_u2_sense = u;
                cfg.snr_sense_db = snr_db_for(signal, u);
            }
            (None, None) => {
                cfg.sigma_u2_sense = noise_power_for(signal, cfg.snr_sense_db);
            }
        }

        cfg.kappa = self.kappa.unwrap_or(1.0);
        match (self.snr_report_db, self.sigma_u2_report) {
            (Some(db), Some(u)) => {
                cfg.snr_report_db = db;
                cfg.sigma_u2_report = u;
            }
            (Some(db), None) => {
                cfg.snr_report_db = db;
                cfg.sigma_u2_report = noise_power_for(cfg.kappa, db);
            }
            (None, Some(u)) => {
                cfg.sigma_u2_report = u;
                cfg.snr_report_db = snr_db_for(cfg.kappa, u);
            }
            (None, None) => {
                cfg.sigma_u2_report = noise_power_for(cfg.kappa, cfg.snr_report_db);
            }
        }
        cfg
    }
}

/// Serde helpers for floats that may be infinite.
pub(crate) mod ext_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"+inf\", \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(transparent)]
    struct Wrapped(#[serde(with = "super::ext_f64")] f64);

    pub mod opt {
        use super::Wrapped;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(Wrapped).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
        }
    }

    pub mod opt_vec {
        use super::Wrapped;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|xs| xs.iter().copied().map(Wrapped).collect::<Vec<_>>()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
            Ok(Option::<Vec<Wrapped>>::deserialize(d)?.map(|v| v.into_iter().map(|w| w.0).collect()))
        }
    }
}
