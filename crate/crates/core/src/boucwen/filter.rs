//! Zero-phase Butterworth low-pass used ahead of decimation.

use std::f64::consts::PI;

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    sections: Vec<Biquad>,
}

/// How a record is extended before forward-backward filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// The record holds whole periods of a periodic signal; extend it circularly.
    Periodic,
    /// Odd reflection about the end points.
    Reflect,
}

impl LowPass {
    /// Even-order Butterworth designed by the bilinear transform with pre-warping.
    pub fn butterworth(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return config("Butterworth order must be even and positive");
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return config("cutoff must lie between 0 and Nyquist");
        }
        let k = 2.0 * sample_rate_hz;
        let wc = k * (PI * cutoff_hz / sample_rate_hz).tan();
        let sections = (0..order / 2)
            .map(|i| {
                let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
                // analog pair s^2 + 2 sin(theta) wc s + wc^2
                let damp = 2.0 * theta.sin() * wc;
                let a0 = k * k + damp * k + wc * wc;
                let a1 = 2.0 * (wc * wc - k * k);
                let a2 = k * k - damp * k + wc * wc;
                let g = wc * wc / a0;
                Biquad {
                    b: [g, 2.0 * g, g],
                    a: [a1 / a0, a2 / a0],
                }
            })
            .collect();
        Ok(Self { sections })
    }

    /// Magnitude response at `f_hz`.
    pub fn gain(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / sample_rate_hz;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| ((s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[0] * z1 + s.a[1] * z2)).norm())
            .product()
    }

    fn filter_in_place(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut w1, mut w2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + w1;
                w1 = s.b[1] * input - s.a[0] * out + w2;
                w2 = s.b[2] * input - s.a[1] * out;
                *v = out;
            }
        }
    }

    /// Forward-backward filtering with `pad` samples of extension on each side.
    pub fn filtfilt(&self, x: &[f64], padding: Padding, pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        match padding {
            Padding::Periodic => {
                for i in 0..pad {
                    ext.push(x[(n - pad % n + i) % n]);
                }
                ext.extend_from_slice(x);
                for i in 0..pad {
                    ext.push(x[i % n]);
                }
            }
            Padding::Reflect => {
                let p = pad.min(n - 1);
                for i in (1..=p).rev() {
                    ext.push(2.0 * x[0] - x[i]);
                }
                ext.extend_from_slice(x);
                for i in 1..=p {
                    ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
                }
            }
        }
        let lead = (ext.len() - n) / 2;
        self.filter_in_place(&mut ext);
        ext.reverse();
        self.filter_in_place(&mut ext);
        ext.reverse();
        ext[lead..lead + n].to_vec()
    }
}

pub fn decimate(x: &[f64], factor: usize) -> Vec<f64> {
    x.iter().step_by(factor.max(1)).copied().collect()
}
