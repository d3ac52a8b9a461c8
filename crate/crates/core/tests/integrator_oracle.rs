//! Newmark integration checked against an adaptive Dormand-Prince solution of
//! the same Bouc-Wen equations, driven by the multisine evaluated in closed form.

use std::f64::consts::PI;

use hystid::boucwen::{newmark_simulate, BoucWenParameters, NewmarkConfig, SimState};
use hystid::signals::{generate_multisine, ExcitationSpec, GridKind, Multisine};
use ode_solvers::dopri5::Dopri5;
use ode_solvers::{System, Vector3};

struct Oscillator {
    p: BoucWenParameters,
    omegas: Vec<f64>,
    phases: Vec<f64>,
    amplitude: f64,
}

impl Oscillator {
    fn force(&self, t: f64) -> f64 {
        self.amplitude
            * self
                .omegas
                .iter()
                .zip(&self.phases)
                .map(|(w, ph)| (w * t + ph).cos())
                .sum::<f64>()
    }
}

impl System<f64, Vector3<f64>> for Oscillator {
    fn system(&self, t: f64, s: &Vector3<f64>, ds: &mut Vector3<f64>) {
        let (y, v, z) = (s[0], s[1], s[2]);
        let p = &self.p;
        ds[0] = v;
        ds[1] = (self.force(t) - p.k_l * y - p.c_l * v - z) / p.m_l;
        // nu = 1
        ds[2] = p.alpha * v - p.beta * (p.gamma * v.abs() * z + p.delta * v * z.abs());
    }
}

fn spec() -> ExcitationSpec {
    ExcitationSpec {
        sample_rate_hz: 750.0,
        num_samples_per_period: 8192,
        band_low_hz: 5.0,
        band_high_hz: 150.0,
        target_rms: 50.0,
        grid_kind: GridKind::Full,
        group_size: 3,
        rng_seed: 0,
    }
}

/// Displacement on the grid `k / rate_hz`, `k = 0..=duration * rate_hz`.
fn oracle(ms: &Multisine, duration_s: f64, rate_hz: f64) -> Vec<f64> {
    let f0 = ms.sample_rate_hz / ms.num_samples_per_period as f64;
    let sys = Oscillator {
        p: BoucWenParameters::default(),
        omegas: ms.lines.iter().map(|&k| 2.0 * PI * f0 * k as f64).collect(),
        phases: ms.phases.clone(),
        amplitude: ms.amplitude,
    };
    let mut solver = Dopri5::new(sys, 0.0, duration_s, 1.0 / rate_hz, Vector3::zeros(), 1e-13, 1e-16);
    solver.integrate().expect("oracle integration");
    let steps = (duration_s * rate_hz).round() as usize;
    solver.y_out().iter().take(steps + 1).map(|s| s[0]).collect()
}

fn newmark(ms: &Multisine, duration_s: f64, step_hz: f64) -> Vec<f64> {
    let ratio = (step_hz / ms.sample_rate_hz).round() as usize;
    let fine = ms.synthesize(ms.num_samples_per_period * ratio);
    let steps = (duration_s * step_hz).round() as usize;
    let cfg = NewmarkConfig { step_hz, ..NewmarkConfig::default() };
    let traj = newmark_simulate(&BoucWenParameters::default(), &cfg, &fine[..=steps], step_hz, SimState::default())
        .unwrap();
    traj.y
}

fn relative_rms(a: &[f64], reference: &[f64]) -> f64 {
    let e: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum();
    let r: f64 = reference.iter().map(|y| y * y).sum();
    (e / r).sqrt()
}

#[test]
fn newmark_converges_to_the_adaptive_solution_at_second_order() {
    let ms = generate_multisine(&spec(), 11).unwrap();
    let duration = 0.5;
    let reference = oracle(&ms, duration, 15_000.0);
    let coarse = newmark(&ms, duration, 15_000.0);
    let fine = newmark(&ms, duration, 30_000.0);
    let fine_on_coarse: Vec<f64> = fine.iter().step_by(2).copied().collect();
    assert_eq!(coarse.len(), reference.len());
    let e1 = relative_rms(&coarse, &reference);
    let e2 = relative_rms(&fine_on_coarse, &reference);
    eprintln!("relative error: {e1:.3e} at 15 kHz, {e2:.3e} at 30 kHz");
    assert!(e1 < 1e-2, "{e1}");
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.3, "observed order {order}");
}
