use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Constant-amplitude sine whose frequency rises linearly in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub rate_hz_per_min: f64,
    pub amplitude_n: f64,
    pub sample_rate_hz: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.f_start_hz)
            && positive(self.f_end_hz)
            && positive(self.rate_hz_per_min)
            && positive(self.amplitude_n)
            && positive(self.sample_rate_hz))
        {
            return config("sweep parameters must be positive and finite");
        }
        if self.f_start_hz >= self.f_end_hz {
            return config("sweep must satisfy f_start < f_end");
        }
        if self.f_end_hz >= self.sample_rate_hz / 2.0 {
            return config("sweep end frequency must be below Nyquist");
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        (self.f_end_hz - self.f_start_hz) / self.rate_hz_per_min * 60.0
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s() * self.sample_rate_hz).round() as usize
    }

    pub fn instantaneous_frequency_hz(&self, t: f64) -> f64 {
        self.f_start_hz + self.rate_hz_per_min / 60.0 * t
    }

    pub fn phase(&self, t: f64) -> f64 {
        2.0 * PI * (self.f_start_hz * t + 0.5 * self.rate_hz_per_min / 60.0 * t * t)
    }

    /// Same sweep sampled at another rate.
    pub fn at_rate(&self, sample_rate_hz: f64) -> Self {
        Self {
            sample_rate_hz,
            ..self.clone()
        }
    }
}

pub fn generate_sweep(spec: &SweepSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let dt = 1.0 / spec.sample_rate_hz;
    Ok((0..spec.num_samples())
        .map(|i| spec.amplitude_n * spec.phase(i as f64 * dt).sin())
        .collect())
}
