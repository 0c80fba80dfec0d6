use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

/// Hour-of-day traffic multipliers, tiled over the simulated horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiurnalProfile(pub Vec<f64>);

impl DiurnalProfile {
    /// Smooth day curve with flat plateaus around `peak_hour` and `trough_hour`.
    ///
    /// The curve is a half-cosine rise from trough to peak and a half-cosine fall back,
    /// amplified by `PLATEAU_GAIN` and clipped, so that the highest and lowest four hours sit
    /// exactly at the plateau values. Plateau values have ratio `peak_to_trough`; the
    /// profile is normalized to mean 1.
    pub fn plateau_sinusoid(peak_hour: usize, trough_hour: usize, peak_to_trough: f64) -> Self {
        const PLATEAU_GAIN: f64 = 1.6;
        assert!(peak_hour < HOURS_PER_DAY && trough_hour < HOURS_PER_DAY && peak_hour != trough_hour);
        assert!(peak_to_trough >= 1.0);
        let amp = (peak_to_trough - 1.0) / (peak_to_trough + 1.0);
        let rise = (peak_hour + HOURS_PER_DAY - trough_hour) % HOURS_PER_DAY;
        let fall = HOURS_PER_DAY - rise;
        let raw: Vec<f64> = (0..HOURS_PER_DAY)
            .map(|h| {
                let since_trough = (h + HOURS_PER_DAY - trough_hour) % HOURS_PER_DAY;
                let shape = if since_trough <= rise {
                    -(std::f64::consts::PI * since_trough as f64 / rise as f64).cos()
                } else {
                    let since_peak = since_trough - rise;
                    (std::f64::consts::PI * since_peak as f64 / fall as f64).cos()
                };
                1.0 + amp * (PLATEAU_GAIN * shape).clamp(-1.0, 1.0)
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / HOURS_PER_DAY as f64;
        DiurnalProfile(raw.into_iter().map(|v| v / mean).collect())
    }

    pub fn flat() -> Self {
        DiurnalProfile(vec![1.0; HOURS_PER_DAY])
    }

    /// Multiplier for the hour containing simulated time `seconds`.
    pub fn at_seconds(&self, seconds: f64) -> f64 {
        let hour = (seconds / 3600.0).floor() as usize;
        self.0[hour % self.0.len()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.len() != HOURS_PER_DAY {
            return Err(Error::Config(format!(
                "diurnal profile needs {HOURS_PER_DAY} entries, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("diurnal multipliers must be finite and ≥ 0".into()));
        }
        let mean = self.0.iter().sum::<f64>() / HOURS_PER_DAY as f64;
        if (mean - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("diurnal profile mean must be 1, got {mean}")));
        }
        Ok(())
    }
}

impl Default for DiurnalProfile {
    fn default() -> Self {
        DiurnalProfile::plateau_sinusoid(20, 4, 4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficScenario {
    pub id: u32,
    pub ue_count: usize,
    /// Mean of the log-normal request size, bits.
    pub packet_size_mean_bits: f64,
    /// Shape σ of the log-normal request size.
    pub packet_size_sigma: f64,
    /// Mean of the exponential inter-request time, seconds.
    pub request_interval_mean_s: f64,
    #[serde(default)]
    pub diurnal_profile: DiurnalProfile,
    /// UE speeds are drawn uniformly from this range (m/s) and never change.
    pub speed_range: [f64; 2],
    /// Probability of each carrier being a UE's initial camping priority. Empty = uniform.
    #[serde(default)]
    pub carrier_mix: Vec<f64>,
}

impl TrafficScenario {
    /// The four built-in scenarios. They differ in UE population, request sizes and
    /// request intervals.
    pub fn builtin(id: u32) -> Result<Self> {
        let (ue_count, size_mbit, interval) = match id {
            1 => (840, 20.0, 80.0),
            2 => (1050, 12.0, 60.0),
            3 => (630, 40.0, 120.0),
            4 => (840, 10.0, 35.0),
            other => {
                return Err(Error::Config(format!("unknown built-in scenario {other}")));
            }
        };
        Ok(Self {
            id,
            ue_count,
            packet_size_mean_bits: size_mbit * 1e6,
            packet_size_sigma: 1.0,
            request_interval_mean_s: interval,
            diurnal_profile: DiurnalProfile::default(),
            speed_range: [0.0, 0.0],
            carrier_mix: vec![0.4, 0.3, 0.2, 0.1],
        })
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scenario: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ue_count == 0 {
            return Err(Error::Config("ue_count must be positive".into()));
        }
        if !(self.packet_size_mean_bits > 0.0)
            || !(self.packet_size_sigma >= 0.0)
            || !(self.request_interval_mean_s > 0.0)
        {
            return Err(Error::Config("traffic distribution parameters must be positive".into()));
        }
        if !(self.speed_range[0] >= 0.0 && self.speed_range[1] >= self.speed_range[0]) {
            return Err(Error::Config(format!("invalid speed range {:?}", self.speed_range)));
        }
        if self.carrier_mix.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("carrier_mix entries must be ≥ 0".into()));
        }
        if !self.carrier_mix.is_empty() && !(self.carrier_mix.iter().sum::<f64>() > 0.0) {
            return Err(Error::Config("carrier_mix must have positive mass".into()));
        }
        self.diurnal_profile.validate()
    }

    /// Mean offered load per UE over a day, bits per second.
    pub fn offered_bps_per_ue(&self) -> f64 {
        self.packet_size_mean_bits / self.request_interval_mean_s
    }
}
