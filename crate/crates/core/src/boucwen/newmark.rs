//! Newmark integration of the Bouc-Wen oscillator with a Newton-Raphson corrector.
//!
//! The unknowns at `t + h` are the acceleration and the hysteretic rate. The
//! displacement, velocity and hysteretic force follow from the Newmark
//! relations, and the corrector enforces dynamic equilibrium together with the
//! hysteresis law.

use serde::{Deserialize, Serialize};

use super::params::BoucWenParameters;
use crate::error::{config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub step_hz: f64,
    /// Residual tolerance in newtons, relative to the magnitude of the force terms
    /// whenever those exceed 1 N.
    pub nr_tolerance: f64,
    pub nr_max_iter: usize,
}

impl Default for NewmarkConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 0.25,
            c: 0.5,
            step_hz: 15_000.0,
            nr_tolerance: 1e-12,
            nr_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub y: f64,
    pub ydot: f64,
    pub yddot: f64,
    pub z: f64,
}

/// Column-wise state history, one entry per input sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub yddot: Vec<f64>,
    pub z: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn state(&self, i: usize) -> SimState {
        SimState {
            y: self.y[i],
            ydot: self.ydot[i],
            yddot: self.yddot[i],
            z: self.z[i],
        }
    }

    fn push(&mut self, s: SimState) {
        self.y.push(s.y);
        self.ydot.push(s.ydot);
        self.yddot.push(s.yddot);
        self.z.push(s.z);
    }
}

/// Single-step integrator carrying the current state and hysteretic rate.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: BoucWenParameters,
    cfg: NewmarkConfig,
    h: f64,
    state: SimState,
    zdot: f64,
    step: usize,
    /// Largest |equilibrium residual| accepted so far, in newtons.
    pub max_residual: f64,
}

impl Stepper {
    /// Starts from `initial`; the acceleration is recomputed from equilibrium with `u0`.
    pub fn new(params: BoucWenParameters, cfg: NewmarkConfig, initial: SimState, u0: f64) -> Result<Self> {
        params.validate()?;
        if !(cfg.step_hz > 0.0) || cfg.nr_max_iter == 0 || !(cfg.nr_tolerance > 0.0) {
            return config("invalid Newmark configuration");
        }
        let mut state = initial;
        state.yddot = (u0 - params.k_l * state.y - params.c_l * state.ydot - state.z) / params.m_l;
        Ok(Self {
            zdot: params.z_rate(state.ydot, state.z),
            params,
            cfg,
            h: 1.0 / cfg.step_hz,
            state,
            step: 0,
            max_residual: 0.0,
        })
    }

    pub fn state(&self) -> SimState {
        self.state
    }

    /// Advances one step to the input value `u_next`.
    pub fn advance(&mut self, u_next: f64) -> Result<SimState> {
        let p = &self.params;
        let NewmarkConfig { a, b, c, .. } = self.cfg;
        let h = self.h;
        let s = self.state;

        // explicit parts of the Newmark relations
        let v_pred = s.ydot + (1.0 - a) * h * s.yddot;
        let y_pred = s.y + h * s.ydot + (0.5 - b) * h * h * s.yddot;
        let z_pred = s.z + (1.0 - c) * h * self.zdot;

        // predictor: zero acceleration and zero hysteretic rate at t + h
        let mut acc = 0.0;
        let mut zd = 0.0;
        let dr1_dacc = p.m_l + p.k_l * b * h * h + p.c_l * a * h;
        let dr1_dzd = c * h;

        let mut iter = 0;
        loop {
            let v1 = v_pred + a * h * acc;
            let y1 = y_pred + b * h * h * acc;
            let z1 = z_pred + c * h * zd;
            let inertia = p.m_l * acc;
            let spring = p.k_l * y1;
            let damper = p.c_l * v1;
            let r1 = inertia + spring + damper + z1 - u_next;
            let r2 = zd - p.z_rate(v1, z1);
            let scale = 1f64
                .max(inertia.abs())
                .max(spring.abs())
                .max(damper.abs())
                .max(z1.abs())
                .max(u_next.abs());
            let tol = self.cfg.nr_tolerance * scale;
            let r2_force = r2 * c * h;
            if r1.abs() <= tol && r2_force.abs() <= tol {
                self.max_residual = self.max_residual.max(r1.abs());
                self.state = SimState { y: y1, ydot: v1, yddot: acc, z: z1 };
                self.zdot = zd;
                self.step += 1;
                return Ok(self.state);
            }
            if iter >= self.cfg.nr_max_iter {
                return Err(Error::NewtonRaphson {
                    step: self.step + 1,
                    time_s: (self.step + 1) as f64 * h,
                    residual: r1.abs().max(r2_force.abs()),
                });
            }
            let (fv, fz) = p.z_rate_partials(v1, z1);
            let j21 = -fv * a * h;
            let j22 = 1.0 - fz * c * h;
            let det = dr1_dacc * j22 - dr1_dzd * j21;
            let d_acc = (r1 * j22 - dr1_dzd * r2) / det;
            let d_zd = (dr1_dacc * r2 - j21 * r1) / det;
            acc -= d_acc;
            zd -= d_zd;
            iter += 1;
            // corrections at round-off level: accept the iterate as converged
            let stalled = (d_acc * p.m_l).abs() <= 4.0 * f64::EPSILON * scale
                && (d_zd * c * h).abs() <= 4.0 * f64::EPSILON * scale;
            if stalled && iter > 1 {
                let v1 = v_pred + a * h * acc;
                let y1 = y_pred + b * h * h * acc;
                let z1 = z_pred + c * h * zd;
                let r1 = p.m_l * acc + p.k_l * y1 + p.c_l * v1 + z1 - u_next;
                self.max_residual = self.max_residual.max(r1.abs());
                self.state = SimState { y: y1, ydot: v1, yddot: acc, z: z1 };
                self.zdot = zd;
                self.step += 1;
                return Ok(self.state);
            }
        }
    }
}

/// Integrates the oscillator over `input`, which must be sampled at `config.step_hz`
/// or at an integer fraction of it (then linearly interpolated to the step rate).
pub fn newmark_simulate(
    params: &BoucWenParameters,
    cfg: &NewmarkConfig,
    input: &[f64],
    input_rate_hz: f64,
    initial: SimState,
) -> Result<Trajectory> {
    let fine;
    let u: &[f64] = if (input_rate_hz - cfg.step_hz).abs() <= 1e-9 * cfg.step_hz {
        input
    } else {
        fine = interpolate_linear(input, integer_ratio(cfg.step_hz, input_rate_hz)?);
        &fine
    };
    let mut traj = Trajectory::default();
    if u.is_empty() {
        return Ok(traj);
    }
    let mut stepper = Stepper::new(*params, *cfg, initial, u[0])?;
    traj.push(stepper.state());
    for &un in &u[1..] {
        traj.push(stepper.advance(un)?);
    }
    Ok(traj)
}

/// Displacement-only integration for long records.
pub fn simulate_displacement(
    params: &BoucWenParameters,
    cfg: &NewmarkConfig,
    input: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(input.len());
    if input.is_empty() {
        return Ok(out);
    }
    let mut stepper = Stepper::new(*params, *cfg, SimState::default(), input[0])?;
    out.push(stepper.state().y);
    for &un in &input[1..] {
        out.push(stepper.advance(un)?.y);
    }
    Ok(out)
}

pub(crate) fn integer_ratio(fast_hz: f64, slow_hz: f64) -> Result<usize> {
    let r = fast_hz / slow_hz;
    let ri = r.round();
    if ri < 1.0 || (r - ri).abs() > 1e-9 * r {
        return config(format!(
            "rate ratio {fast_hz}/{slow_hz} is not a positive integer"
        ));
    }
    Ok(ri as usize)
}

fn interpolate_linear(x: &[f64], factor: usize) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity((x.len() - 1) * factor + 1);
    for w in x.windows(2) {
        for j in 0..factor {
            let t = j as f64 / factor as f64;
            out.push(w[0] + t * (w[1] - w[0]));
        }
    }
    out.push(*x.last().unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_stays_at_rest() {
        let traj = newmark_simulate(
            &BoucWenParameters::default(),
            &NewmarkConfig::default(),
            &vec![0.0; 1000],
            15_000.0,
            SimState::default(),
        )
        .unwrap();
        assert_eq!(traj.len(), 1000);
        assert!(traj.y.iter().chain(&traj.z).all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_residual_is_within_tolerance() {
        let p = BoucWenParameters::default();
        let cfg = NewmarkConfig::default();
        let u: Vec<f64> = (0..30_000)
            .map(|i| 80.0 * (2.0 * std::f64::consts::PI * 30.0 * i as f64 / cfg.step_hz).sin())
            .collect();
        let traj = newmark_simulate(&p, &cfg, &u, cfg.step_hz, SimState::default()).unwrap();
        for i in 0..traj.len() {
            let s = traj.state(i);
            let terms = [p.m_l * s.yddot, p.k_l * s.y, p.c_l * s.ydot, s.z, u[i]];
            let scale = terms.iter().fold(1f64, |m, v| m.max(v.abs()));
            let res = p.m_l * s.yddot + p.k_l * s.y + p.c_l * s.ydot + s.z - u[i];
            assert!(res.abs() <= 1e-12 * scale + 1e-13, "step {i}: {res}");
        }
    }

    #[test]
    fn odd_symmetry() {
        let p = BoucWenParameters::default();
        let cfg = NewmarkConfig::default();
        let u: Vec<f64> = (0..20_000)
            .map(|i| {
                let t = i as f64 / cfg.step_hz;
                60.0 * (2.0 * std::f64::consts::PI * 12.0 * t).sin() + 30.0 * (2.0 * std::f64::consts::PI * 41.0 * t + 0.4).cos()
            })
            .collect();
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let a = simulate_displacement(&p, &cfg, &u).unwrap();
        let b = simulate_displacement(&p, &cfg, &neg).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn coarse_input_is_interpolated() {
        let cfg = NewmarkConfig::default();
        let u = vec![1.0; 11];
        let traj = newmark_simulate(&BoucWenParameters::default(), &cfg, &u, 750.0, SimState::default()).unwrap();
        assert_eq!(traj.len(), 10 * 20 + 1);
        assert!(newmark_simulate(&BoucWenParameters::default(), &cfg, &u, 700.0, SimState::default()).is_err());
    }

    #[test]
    fn non_convergence_reports_the_step() {
        let cfg = NewmarkConfig { nr_max_iter: 1, nr_tolerance: 1e-300, ..Default::default() };
        let err = newmark_simulate(&BoucWenParameters::default(), &cfg, &[0.0, 10.0, 20.0], 15_000.0, SimState::default())
            .unwrap_err();
        assert!(matches!(err, Error::NewtonRaphson { step: 1, .. }), "{err}");
    }
}
