//! Polynomial nonlinear state-space models: monomial bases, simulation and
//! estimation.

mod basis;
mod estimate;
mod model;

pub use basis::{binomial, build_basis, full_term_count, MonomialBasis};
pub use estimate::{cost_jacobian, cost_residuals, estimate_pnlss, nonlinear_cost, PeriodicData, PnlssConfig, PnlssFit, PnlssIteration};
pub use model::{
    parameter_count, pnlss_simulate, steady_state_from, steady_state_simulate, PnlssModel, SimStatus, Simulation,
    SteadyState,
};
