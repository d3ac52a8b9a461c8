//! Nonparametric detection and odd/even separation of nonlinear distortions
//! from steady-state periodic data taken with an odd detection-line multisine.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boucwen::{steady_state_record, AcquisitionConfig, BoucWenParameters, NewmarkConfig, TimeRecord};
use crate::error::{config, Result};
use crate::signals::{Dft, LineClass, Multisine};

/// Levels are in dB re 1 m. Bins with no meaningful value for a given array
/// (for instance `odd_distortion` at an excited line) hold `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub f0_hz: f64,
    pub classes: Vec<LineClass>,
    pub output_at_excited: Vec<Option<f64>>,
    pub odd_distortion: Vec<Option<f64>>,
    pub even_distortion: Vec<Option<f64>>,
    /// Standard deviation of the period-averaged output spectrum, every bin.
    pub noise_level: Vec<f64>,
    pub rms_input_n: f64,
    pub periods: usize,
}

pub(crate) fn db(x: f64) -> f64 {
    20.0 * x.max(1e-300).log10()
}

/// Per-bin period-averaged spectrum and its standard error.
pub(crate) struct PeriodStats {
    pub mean_u: Vec<Complex64>,
    pub mean_y: Vec<Complex64>,
    /// Standard deviation of the mean output spectrum, `std_p / sqrt(P)`.
    pub y_std_of_mean: Vec<f64>,
}

pub(crate) fn period_stats(record: &TimeRecord, bins: usize) -> PeriodStats {
    let n = record.samples_per_period;
    let dft = Dft::new(n);
    let p = record.periods;
    let mut mean_u = vec![Complex64::new(0.0, 0.0); bins];
    let mut mean_y = vec![Complex64::new(0.0, 0.0); bins];
    let ys: Vec<Vec<Complex64>> = (0..p)
        .map(|i| {
            let u = dft.forward_real(record.period_input(i));
            let y = dft.forward_real(record.period_output(i));
            for k in 0..bins {
                mean_u[k] += u[k];
                mean_y[k] += y[k];
            }
            y[..bins].to_vec()
        })
        .collect();
    let inv = 1.0 / p as f64;
    mean_u.iter_mut().for_each(|v| *v *= inv);
    mean_y.iter_mut().for_each(|v| *v *= inv);
    let y_std_of_mean = (0..bins)
        .map(|k| {
            if p < 2 {
                return 0.0;
            }
            let var = ys.iter().map(|y| (y[k] - mean_y[k]).norm_sqr()).sum::<f64>() / (p - 1) as f64;
            (var / p as f64).sqrt()
        })
        .collect();
    PeriodStats { mean_u, mean_y, y_std_of_mean }
}

pub fn analyze_distortions(record: &TimeRecord, classes: &[LineClass]) -> Result<DistortionReport> {
    record.validate()?;
    if record.periods < 2 {
        return config("at least two periods are needed to estimate the noise level");
    }
    let n = record.samples_per_period;
    if classes.len() != n / 2 + 1 {
        return config(format!(
            "classification has {} bins but the record needs {}",
            classes.len(),
            n / 2 + 1
        ));
    }
    let bins = classes.len();
    let stats = period_stats(record, bins);

    // the input must vanish on every non-excited bin
    let peak_u = stats.mean_u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (k, c) in classes.iter().enumerate() {
        if *c != LineClass::OddExcited && stats.mean_u[k].norm() > 1e-9 * peak_u {
            return config(format!("input is not zero at non-excited bin {k}"));
        }
        if *c == LineClass::OddExcited && stats.mean_u[k].norm() <= 1e-9 * peak_u {
            return config(format!("input is zero at excited bin {k}"));
        }
    }

    let pick = |want: LineClass| -> Vec<Option<f64>> {
        classes
            .iter()
            .zip(&stats.mean_y)
            .map(|(c, y)| (*c == want).then(|| db(y.norm())))
            .collect()
    };
    let rms_input = crate::signals::rms(&record.input);
    Ok(DistortionReport {
        f0_hz: record.sample_rate_hz / n as f64,
        output_at_excited: pick(LineClass::OddExcited),
        odd_distortion: pick(LineClass::OddDetection),
        even_distortion: pick(LineClass::EvenDetection),
        noise_level: stats.y_std_of_mean.iter().map(|&s| db(s)).collect(),
        classes: classes.to_vec(),
        rms_input_n: rms_input,
        periods: record.periods,
    })
}

/// Summary levels of a report inside a frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLevels {
    pub output_db: f64,
    pub odd_db: f64,
    pub even_db: f64,
    pub noise_db: f64,
}

impl DistortionReport {
    /// Power-averaged levels over the bins whose frequency lies in `[lo, hi]`.
    /// A class with no bin in the band reports `-inf`.
    pub fn band_levels(&self, lo_hz: f64, hi_hz: f64) -> BandLevels {
        let in_band = |k: usize| {
            let f = k as f64 * self.f0_hz;
            f >= lo_hz && f <= hi_hz
        };
        let avg = |v: &[Option<f64>]| -> f64 {
            let (s, c) = v
                .iter()
                .enumerate()
                .filter(|(k, _)| in_band(*k))
                .filter_map(|(_, l)| l.map(|d| 10f64.powf(d / 10.0)))
                .fold((0.0, 0usize), |(s, c), p| (s + p, c + 1));
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                10.0 * (s / c as f64).log10()
            }
        };
        let noise: Vec<Option<f64>> = self
            .noise_level
            .iter()
            .zip(&self.classes)
            .map(|(l, c)| (*c != LineClass::OutOfBand).then_some(*l))
            .collect();
        BandLevels {
            output_db: avg(&self.output_at_excited),
            odd_db: avg(&self.odd_distortion),
            even_db: avg(&self.even_distortion),
            noise_db: avg(&noise),
        }
    }

    /// CSV rows `bin,frequency_hz,class,level_db` plus the noise level of every in-band bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,frequency_hz,class,level_db,noise_db\n");
        for (k, c) in self.classes.iter().enumerate() {
            if *c == LineClass::OutOfBand {
                continue;
            }
            let level = self.output_at_excited[k]
                .or(self.odd_distortion[k])
                .or(self.even_distortion[k])
                .unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{k},{},{},{level},{}\n",
                k as f64 * self.f0_hz,
                c.as_str(),
                self.noise_level[k]
            ));
        }
        out
    }
}

/// One steady-state experiment per amplitude, with the same line design,
/// phases and noise seed; only the RMS level changes.
#[allow(clippy::too_many_arguments)]
pub fn distortion_sweep(
    params: &BoucWenParameters,
    newmark: &NewmarkConfig,
    multisine: &Multisine,
    classes: &[LineClass],
    amplitudes_rms_n: &[f64],
    total_periods: usize,
    discard_periods: usize,
    acq: &AcquisitionConfig,
) -> Result<Vec<DistortionReport>> {
    use rayon::prelude::*;
    if amplitudes_rms_n.iter().any(|a| !(*a > 0.0)) {
        return config("amplitudes must be positive");
    }
    let base = multisine.rms();
    amplitudes_rms_n
        .par_iter()
        .map(|&a| {
            let ms = multisine.scaled(a / base);
            let rec = steady_state_record(params, newmark, &ms, total_periods, discard_periods, acq)?;
            analyze_distortions(&rec, classes)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boucwen::add_noise;
    use crate::signals::{generate_odd_detection_multisine, ExcitationSpec, GridKind};

    fn small_spec() -> ExcitationSpec {
        ExcitationSpec {
            sample_rate_hz: 750.0,
            num_samples_per_period: 1024,
            band_low_hz: 5.0,
            band_high_hz: 150.0,
            target_rms: 1.0,
            grid_kind: GridKind::OddWithDetection,
            group_size: 3,
            rng_seed: 3,
        }
    }

    /// y[t] = 0.5 y[t-1] + u[t], simulated over several periods and kept in steady state.
    fn linear_record(ms: &Multisine, periods: usize, snr: Option<f64>, seed: u64) -> TimeRecord {
        let n = ms.num_samples_per_period;
        let u = ms.repeat(periods + 2);
        let mut y = vec![0.0; u.len()];
        for t in 0..u.len() {
            y[t] = u[t] + if t > 0 { 0.5 * y[t - 1] } else { 0.0 };
        }
        let y = y[2 * n..].to_vec();
        let (y, sigma) = add_noise(&y, snr, seed).unwrap();
        TimeRecord {
            input: ms.repeat(periods),
            output: y,
            sample_rate_hz: ms.sample_rate_hz,
            periods,
            samples_per_period: n,
            noise_sigma: sigma,
            noise_seed: Some(seed),
            transient_db: None,
        }
    }

    #[test]
    fn linear_system_shows_no_distortion() {
        let (ms, classes) = generate_odd_detection_multisine(&small_spec()).unwrap();
        let rec = linear_record(&ms, 4, Some(40.0), 1);
        let rep = analyze_distortions(&rec, &classes).unwrap();
        let lv = rep.band_levels(5.0, 150.0);
        assert!((lv.odd_db - lv.noise_db).abs() < 3.0, "{lv:?}");
        assert!((lv.even_db - lv.noise_db).abs() < 3.0, "{lv:?}");
        assert!(lv.output_db > lv.noise_db + 20.0);
    }

    #[test]
    fn single_period_is_rejected() {
        let (ms, classes) = generate_odd_detection_multisine(&small_spec()).unwrap();
        let rec = linear_record(&ms, 1, None, 0);
        assert!(analyze_distortions(&rec, &classes).is_err());
    }

    #[test]
    fn mismatched_classification_is_rejected() {
        let (ms, classes) = generate_odd_detection_multisine(&small_spec()).unwrap();
        let rec = linear_record(&ms, 2, None, 0);
        assert!(analyze_distortions(&rec, &classes[1..]).is_err());
    }

    #[test]
    fn noise_level_scales_with_inverse_sqrt_periods() {
        let (ms, classes) = generate_odd_detection_multisine(&small_spec()).unwrap();
        // identical clean trajectory, seeded white noise with a fixed sigma
        let clean = linear_record(&ms, 16, None, 0);
        let sigma = 1e-2;
        let noisy = |periods: usize| {
            let len = periods * clean.samples_per_period;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
            let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
            let out: Vec<f64> = clean.output[..len]
                .iter()
                .map(|y| y + rand_distr::Distribution::sample(&normal, &mut rng))
                .collect();
            TimeRecord {
                input: clean.input[..len].to_vec(),
                output: out,
                periods,
                ..clean.clone()
            }
        };
        let l4 = analyze_distortions(&noisy(4), &classes).unwrap().band_levels(5.0, 150.0).noise_db;
        let l16 = analyze_distortions(&noisy(16), &classes).unwrap().band_levels(5.0, 150.0).noise_db;
        // 1/sqrt(P): a factor 4 in P lowers the level by 6.02 dB
        assert!(((l4 - l16) - 6.02).abs() < 0.5, "{l4} {l16}");
    }
}
