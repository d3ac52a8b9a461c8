//! Acquisition chain: anti-alias filtering, decimation and output noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::filter::{decimate, LowPass, Padding};
use super::newmark::{integer_ratio, simulate_displacement, NewmarkConfig};
use super::params::BoucWenParameters;
use crate::error::{config, Result};
use crate::signals::{rms, Multisine};

/// Sampled input/output data, `periods * samples_per_period` samples long
/// for periodic records (`periods = 1` for a transient record such as a sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub sample_rate_hz: f64,
    pub periods: usize,
    pub samples_per_period: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    /// Max |last period - preceding period| over the last simulated period,
    /// in dB relative to the output RMS. `None` when not simulated periodically.
    #[serde(default)]
    pub transient_db: Option<f64>,
}

impl TimeRecord {
    pub fn validate(&self) -> Result<()> {
        let n = self.periods * self.samples_per_period;
        if self.input.len() != n || self.output.len() != n {
            return config(format!(
                "record length mismatch: input {}, output {}, expected {} x {}",
                self.input.len(),
                self.output.len(),
                self.periods,
                self.samples_per_period
            ));
        }
        if !(self.sample_rate_hz > 0.0) {
            return config("sample rate must be positive");
        }
        Ok(())
    }

    pub fn period_input(&self, p: usize) -> &[f64] {
        let n = self.samples_per_period;
        &self.input[p * n..(p + 1) * n]
    }

    pub fn period_output(&self, p: usize) -> &[f64] {
        let n = self.samples_per_period;
        &self.output[p * n..(p + 1) * n]
    }

    /// Sample-wise mean over periods.
    pub fn mean_period(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.samples_per_period;
        let mut u = vec![0.0; n];
        let mut y = vec![0.0; n];
        for p in 0..self.periods {
            for (acc, v) in u.iter_mut().zip(self.period_input(p)) {
                *acc += v;
            }
            for (acc, v) in y.iter_mut().zip(self.period_output(p)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.periods as f64;
        u.iter_mut().for_each(|v| *v *= inv);
        y.iter_mut().for_each(|v| *v *= inv);
        (u, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub target_rate_hz: f64,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    pub filter_order: usize,
    /// Cut-off as a fraction of the target sample rate.
    pub cutoff_ratio: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: 750.0,
            snr_db: Some(40.0),
            noise_seed: 0,
            filter_order: 8,
            cutoff_ratio: 0.4,
        }
    }
}

/// Low-pass, decimated output plus the noise standard deviation that was added.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquired {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub noise_sigma: f64,
}

/// Filters `fine` (sampled at `step_hz`) below the new Nyquist, decimates to
/// `acq.target_rate_hz` and adds white Gaussian output noise at `acq.snr_db`.
pub fn acquire_output(fine: &[f64], step_hz: f64, acq: &AcquisitionConfig, padding: Padding) -> Result<Acquired> {
    let factor = integer_ratio(step_hz, acq.target_rate_hz)?;
    let lp = LowPass::butterworth(acq.filter_order, acq.cutoff_ratio * acq.target_rate_hz, step_hz)?;
    // long enough for the filter transient to decay below round-off
    let pad = (0.5 * step_hz) as usize;
    let filtered = lp.filtfilt(fine, padding, pad);
    let clean = decimate(&filtered, factor);
    let (noisy, noise_sigma) = add_noise(&clean, acq.snr_db, acq.noise_seed)?;
    Ok(Acquired { clean, noisy, noise_sigma })
}

/// Adds seeded white Gaussian noise with `20 log10(rms(x) / sigma) = snr_db`.
pub fn add_noise(x: &[f64], snr_db: Option<f64>, seed: u64) -> Result<(Vec<f64>, f64)> {
    let Some(snr) = snr_db else {
        return Ok((x.to_vec(), 0.0));
    };
    if snr.is_infinite() && snr > 0.0 {
        return Ok((x.to_vec(), 0.0));
    }
    if !snr.is_finite() {
        return config("snr_db must be finite or +inf");
    }
    let sigma = rms(x) / 10f64.powf(snr / 20.0);
    let normal = Normal::new(0.0, sigma).map_err(|e| crate::Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((x.iter().map(|v| v + normal.sample(&mut rng)).collect(), sigma))
}

/// Acquires a whole periodic input/output pair sampled at `step_hz`.
pub fn acquire(
    input_fine: &[f64],
    output_fine: &[f64],
    step_hz: f64,
    samples_per_period_fine: usize,
    acq: &AcquisitionConfig,
) -> Result<TimeRecord> {
    let factor = integer_ratio(step_hz, acq.target_rate_hz)?;
    if samples_per_period_fine % factor != 0 || output_fine.len() % samples_per_period_fine != 0 {
        return config("record must hold whole periods that decimate evenly");
    }
    let got = acquire_output(output_fine, step_hz, acq, Padding::Periodic)?;
    Ok(TimeRecord {
        input: decimate(input_fine, factor),
        output: got.noisy,
        sample_rate_hz: acq.target_rate_hz,
        periods: output_fine.len() / samples_per_period_fine,
        samples_per_period: samples_per_period_fine / factor,
        noise_sigma: got.noise_sigma,
        noise_seed: acq.snr_db.map(|_| acq.noise_seed),
        transient_db: None,
    })
}

/// Result of a periodic simulation before acquisition, at the integration rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSimulation {
    pub displacement: Vec<f64>,
    pub samples_per_period: usize,
    pub periods: usize,
}

impl PeriodicSimulation {
    /// Per-period max |y_p - y_last| in dB relative to the RMS of the last period.
    pub fn transient_decay_db(&self) -> Vec<f64> {
        let n = self.samples_per_period;
        let last = &self.displacement[(self.periods - 1) * n..];
        let ref_rms = rms(last);
        (0..self.periods)
            .map(|p| {
                let d = self.displacement[p * n..(p + 1) * n]
                    .iter()
                    .zip(last)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                to_db(d / ref_rms)
            })
            .collect()
    }

    /// Max |last period - preceding period| in dB relative to the output RMS.
    pub fn residual_transient_db(&self) -> f64 {
        let n = self.samples_per_period;
        if self.periods < 2 {
            return 0.0;
        }
        let last = &self.displacement[(self.periods - 1) * n..];
        let prev = &self.displacement[(self.periods - 2) * n..(self.periods - 1) * n];
        let d = last.iter().zip(prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        to_db(d / rms(last))
    }
}

fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        // exact zero: report the double-precision floor
        return 20.0 * f64::EPSILON.log10() - 20.0;
    }
    20.0 * ratio.log10()
}

/// Simulates `total_periods` repetitions of `multisine` from rest at the integration rate.
pub fn simulate_periodic(
    params: &BoucWenParameters,
    cfg: &NewmarkConfig,
    multisine: &Multisine,
    total_periods: usize,
) -> Result<(Vec<f64>, PeriodicSimulation)> {
    let factor = integer_ratio(cfg.step_hz, multisine.sample_rate_hz)?;
    let n_fine = multisine.num_samples_per_period * factor;
    let period = multisine.synthesize(n_fine);
    let mut u = Vec::with_capacity(n_fine * total_periods);
    for _ in 0..total_periods {
        u.extend_from_slice(&period);
    }
    let y = simulate_displacement(params, cfg, &u)?;
    Ok((
        period,
        PeriodicSimulation {
            displacement: y,
            samples_per_period: n_fine,
            periods: total_periods,
        },
    ))
}

/// Steady-state periodic record: simulate, drop the first `discard_periods`
/// periods, then filter, decimate and add noise.
pub fn steady_state_record(
    params: &BoucWenParameters,
    cfg: &NewmarkConfig,
    multisine: &Multisine,
    total_periods: usize,
    discard_periods: usize,
    acq: &AcquisitionConfig,
) -> Result<TimeRecord> {
    if !(total_periods > discard_periods && discard_periods >= 1) {
        return config("need total_periods > discard_periods >= 1");
    }
    if (acq.target_rate_hz - multisine.sample_rate_hz).abs() > 1e-9 * acq.target_rate_hz {
        return config("multisine must be designed at the acquisition rate");
    }
    let (period_fine, sim) = simulate_periodic(params, cfg, multisine, total_periods)?;
    let n_fine = sim.samples_per_period;
    let kept = &sim.displacement[discard_periods * n_fine..];
    let got = acquire_output(kept, cfg.step_hz, acq, Padding::Periodic)?;
    let keep = total_periods - discard_periods;
    debug_assert_eq!(period_fine.len(), n_fine);
    Ok(TimeRecord {
        input: multisine.repeat(keep),
        output: got.noisy,
        sample_rate_hz: acq.target_rate_hz,
        periods: keep,
        samples_per_period: multisine.num_samples_per_period,
        noise_sigma: got.noise_sigma,
        noise_seed: acq.snr_db.map(|_| acq.noise_seed),
        transient_db: Some(sim.residual_transient_db()),
    })
}
