//! Penalized short-horizon objective: closed-loop simulation, performance
//! quadrature, and hinge-squared certificate penalties on the trajectory grid.

use serde::{Deserialize, Serialize};

use crate::integrate::{rk45_integrate, IntegrateError, Trajectory};
use crate::lyapunov::decay_expression;
use crate::scenario::{CertificateSample, Scenario};

/// Value returned for designs whose simulation fails.
pub const BARRIER: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// Error-signal weights: one entry for the consensus cases,
    /// `[W_eψ, W_eω, W_ei]` for the motor.
    pub error: Vec<f64>,
    pub control: f64,
    /// Multiplies both certificate penalties.
    pub lyapunov: f64,
    /// Weight on the application-constraint penalty.
    pub constraint: f64,
    pub eps_margin: f64,
}

impl CostWeights {
    pub fn consensus() -> Self {
        Self {
            error: vec![1.0],
            control: 0.1,
            lyapunov: 1.0,
            constraint: 1.0,
            eps_margin: 1e-6,
        }
    }

    pub fn motor() -> Self {
        Self {
            error: vec![2.0, 10.0, 10.0],
            control: 1e-4,
            lyapunov: 1.0,
            constraint: 1.0,
            eps_margin: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = self
            .error
            .iter()
            .chain([&self.control, &self.lyapunov, &self.constraint]);
        if all.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("weights must be finite and non-negative".into());
        }
        if !(self.eps_margin > 0.0) {
            return Err("eps_margin must be positive".into());
        }
        Ok(())
    }
}

/// Where and how far a candidate design is simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochContext {
    pub t_start: f64,
    pub x_start: Vec<f64>,
    pub horizon: f64,
    pub n_grid: usize,
}

/// Breakdown of one penalized-cost evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub performance: f64,
    pub pi_v: f64,
    pub pi_vdot: f64,
    pub pi_c: f64,
    pub total: f64,
}

/// Simulates the closed loop under `p` over `[t, t + horizon]` and fills in
/// the controls at the grid points.
pub fn simulate(
    p: &[f64],
    t_start: f64,
    x_start: &[f64],
    horizon: f64,
    n_grid: usize,
    scenario: &Scenario,
) -> Result<Trajectory, IntegrateError> {
    let plant = scenario.plant.as_ref();
    let mut traj = rk45_integrate(
        |t, x, dx| plant.rhs(t, x, p, dx),
        x_start,
        t_start,
        t_start + horizon,
        n_grid,
        scenario.tolerances,
    )?;
    traj.controls = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| plant.control(t, x, p))
        .collect();
    Ok(traj)
}

/// Composite trapezoid of `Σ w_e‖ε‖² + w_u‖u‖²` over the trajectory grid.
pub fn performance_integral(traj: &Trajectory, error_terms: &[f64], w: &CostWeights) -> f64 {
    let integrand: Vec<f64> = error_terms
        .iter()
        .zip(&traj.controls)
        .map(|(e, u)| e + w.control * u.iter().map(|v| v * v).sum::<f64>())
        .collect();
    trapezoid(&traj.times, &integrand)
}

pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `(Π_V, Π_V̇)` over the samples not at the equilibrium.
pub fn lyapunov_penalties(
    samples: &[CertificateSample],
    spec: crate::lyapunov::StabilitySpec,
    eps_margin: f64,
) -> (f64, f64) {
    let mut pi_v = 0.0;
    let mut pi_vdot = 0.0;
    for s in samples.iter().filter(|s| !s.at_equilibrium) {
        let gap = (eps_margin - s.v).max(0.0);
        pi_v += gap * gap;
        // Fractional powers use V⁺.
        let psi = decay_expression(spec, s.v.max(0.0), s.vdot).unwrap_or(f64::INFINITY);
        let hinge = psi.max(0.0);
        pi_vdot += hinge * hinge;
    }
    (pi_v, pi_vdot)
}

/// Clamps a design vector into the scenario's admissible box.
pub fn clamp_design(p: &[f64], scenario: &Scenario) -> Vec<f64> {
    scenario.initial_region.clamp(p)
}

pub fn cost_breakdown(
    p: &[f64],
    ctx: &EpochContext,
    scenario: &Scenario,
    w: &CostWeights,
) -> Option<(CostBreakdown, Trajectory)> {
    let p = clamp_design(p, scenario);
    let traj = simulate(&p, ctx.t_start, &ctx.x_start, ctx.horizon, ctx.n_grid, scenario).ok()?;
    let plant = scenario.plant.as_ref();
    let errors: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| plant.weighted_error(t, x, &p, w))
        .collect();
    let performance = performance_integral(&traj, &errors, w);
    let samples = plant.certificate_samples(&traj, &p);
    let (pi_v, pi_vdot) = lyapunov_penalties(&samples, scenario.spec, w.eps_margin);
    let mut pi_c = 0.0;
    for c in &scenario.constraints {
        for ((&t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.controls) {
            pi_c += c(t, x, u, &p)
                .iter()
                .map(|v| v.max(0.0).powi(2))
                .sum::<f64>();
        }
    }
    let total = performance + w.lyapunov * (pi_v + pi_vdot) + w.constraint * pi_c;
    if !total.is_finite() {
        return None;
    }
    Some((
        CostBreakdown {
            performance,
            pi_v,
            pi_vdot,
            pi_c,
            total,
        },
        traj,
    ))
}

/// Penalized short-horizon cost; failed simulations map to [`BARRIER`].
pub fn penalized_cost(p: &[f64], ctx: &EpochContext, scenario: &Scenario, w: &CostWeights) -> f64 {
    match cost_breakdown(p, ctx, scenario, w) {
        Some((b, _)) => b.total,
        None => BARRIER,
    }
}
