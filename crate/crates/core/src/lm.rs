//! Levenberg-Marquardt minimization of `||r(p)||^2`.
//!
//! Jacobian columns are scaled to unit norm before the damped normal equations
//! `(J^T J + mu I) dp = -J^T r` are solved through an eigendecomposition of
//! `J^T J`, so each damping trial after a rejection costs only a back-substitution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    /// Number of damping trials (accepted or rejected).
    pub max_iterations: usize,
    /// Initial damping relative to the largest diagonal entry of the scaled `J^T J`.
    pub initial_damping: f64,
    pub decrease: f64,
    pub increase: f64,
    /// Damping never drops below `min_damping` times the largest diagonal entry.
    pub min_damping: f64,
    /// Give up once the damping exceeds this multiple of the largest diagonal entry.
    pub max_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 150,
            initial_damping: 1e-2,
            decrease: 0.1,
            increase: 10.0,
            min_damping: 1e-12,
            max_damping: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmIteration {
    pub iteration: usize,
    /// Cost of the candidate (infinite for a divergent candidate).
    pub candidate_cost: f64,
    /// Cost after the accept/reject decision.
    pub cost: f64,
    pub damping: f64,
    pub accepted: bool,
}

/// Factored damped normal equations for one Jacobian.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    /// `V^T J^T r`
    projected_gradient: DVector<f64>,
    max_diag: f64,
}

impl NormalEquations {
    pub fn new(jacobian: &DMatrix<f64>, residuals: &DVector<f64>) -> Self {
        let jtj = jacobian.tr_mul(jacobian);
        let jtr = jacobian.tr_mul(residuals);
        let max_diag = jtj.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
        let eig = SymmetricEigen::new(jtj);
        let projected_gradient = eig.eigenvectors.tr_mul(&jtr);
        Self {
            eigvals: eig.eigenvalues.map(|v| v.max(0.0)),
            eigvecs: eig.eigenvectors,
            projected_gradient,
            max_diag,
        }
    }

    pub fn max_diag(&self) -> f64 {
        self.max_diag
    }

    /// Solution of `(J^T J + damping I) dp = -J^T r`.
    pub fn step(&self, damping: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.eigvals.len(),
            self.eigvals
                .iter()
                .zip(self.projected_gradient.iter())
                .map(|(l, g)| {
                    let d = l + damping;
                    if d > 0.0 {
                        -g / d
                    } else {
                        0.0
                    }
                }),
        );
        &self.eigvecs * scaled
    }
}

/// Candidate parameters `params + dp` for the given damping.
pub fn lm_step(
    params: &DVector<f64>,
    jacobian: &DMatrix<f64>,
    residuals: &DVector<f64>,
    damping: f64,
) -> DVector<f64> {
    params + NormalEquations::new(jacobian, residuals).step(damping)
}

/// Multiplicative damping schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub value: f64,
    floor: f64,
    cfg: LmConfig,
}

impl Damping {
    pub fn new(max_diag: f64, cfg: LmConfig) -> Self {
        let scale = if max_diag > 0.0 { max_diag } else { 1.0 };
        Self {
            value: cfg.initial_damping * scale,
            floor: cfg.min_damping * scale,
            cfg,
        }
    }

    pub fn accept(&mut self) {
        self.value = (self.value * self.cfg.decrease).max(self.floor);
    }

    pub fn reject(&mut self) {
        self.value *= self.cfg.increase;
    }

    pub fn exhausted(&self, max_diag: f64) -> bool {
        self.value > self.cfg.max_damping * max_diag.max(f64::MIN_POSITIVE)
    }
}

/// A least-squares problem in a real parameter vector.
pub trait LeastSquaresProblem {
    /// Residual vector, or `None` when the model cannot be evaluated (for
    /// instance a divergent simulation).
    fn residuals(&mut self, params: &DVector<f64>) -> Option<DVector<f64>>;

    /// Jacobian of the residuals at `params`, one column per parameter.
    fn jacobian(&mut self, params: &DVector<f64>) -> Option<DMatrix<f64>>;

    /// Called after every accepted step.
    fn accepted(&mut self, _iteration: usize, _params: &DVector<f64>, _cost: f64) {}
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub cost: f64,
    pub trace: Vec<LmIteration>,
}

pub fn cost_of(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

fn column_scales(jac: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        jac.ncols(),
        jac.column_iter().map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                1.0 / n
            } else {
                1.0
            }
        }),
    )
}

pub fn minimize<P: LeastSquaresProblem>(
    problem: &mut P,
    initial: DVector<f64>,
    cfg: &LmConfig,
) -> Result<LmOutcome> {
    let mut params = initial;
    let mut res = problem
        .residuals(&params)
        .ok_or(Error::NonFiniteCost { iterations: 0 })?;
    let mut cost = cost_of(&res);
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost { iterations: 0 });
    }
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut damping: Option<Damping> = None;
    'outer: while iteration < cfg.max_iterations {
        let Some(mut jac) = problem.jacobian(&params) else {
            break;
        };
        if jac.iter().any(|v| !v.is_finite()) {
            break;
        }
        let scales = column_scales(&jac);
        for (j, mut col) in jac.column_iter_mut().enumerate() {
            col *= scales[j];
        }
        let ne = NormalEquations::new(&jac, &res);
        let mut d = *damping.get_or_insert_with(|| Damping::new(ne.max_diag(), *cfg));
        loop {
            if iteration >= cfg.max_iterations {
                break 'outer;
            }
            iteration += 1;
            let step = ne.step(d.value).component_mul(&scales);
            let candidate = &params + &step;
            let cand_res = if step.iter().all(|v| v.is_finite()) {
                problem.residuals(&candidate)
            } else {
                None
            };
            let cand_cost = cand_res.as_ref().map_or(f64::INFINITY, cost_of);
            if cand_cost.is_finite() && cand_cost < cost {
                params = candidate;
                res = cand_res.unwrap();
                cost = cand_cost;
                trace.push(LmIteration {
                    iteration,
                    candidate_cost: cand_cost,
                    cost,
                    damping: d.value,
                    accepted: true,
                });
                d.accept();
                damping = Some(d);
                problem.accepted(iteration, &params, cost);
                continue 'outer;
            }
            trace.push(LmIteration {
                iteration,
                candidate_cost: cand_cost,
                cost,
                damping: d.value,
                accepted: false,
            });
            d.reject();
            if d.exhausted(ne.max_diag()) {
                break 'outer;
            }
        }
    }
    Ok(LmOutcome { params, cost, trace })
}
