//! The three closed-loop case studies behind a common plant interface, and the
//! bundle (plant, certificate family, stability spec, search box) that the
//! cost and co-design layers consume.

use std::fmt;
use std::sync::Arc;

use crate::blackhole::SearchRegion;
use crate::cost::CostWeights;
use crate::integrate::{Trajectory, Tolerances};
use crate::lyapunov::{CertificateKind, LyapunovCandidate, StabilitySpec, EQUILIBRIUM_EXCLUSION};
use crate::plants::{
    first_order_rhs, foc_control, motor_dynamics, norm, second_order_rhs, FirstOrderParams,
    FocErrors, MotorCoefficients, MotorDesign, MotorParams, MotorReferences, RingGraph,
    SecondOrderParams,
};

/// One sampled point of the certificate conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateSample {
    pub v: f64,
    pub vdot: f64,
    /// The sample sits at the shifted equilibrium and is skipped by the
    /// strict-inequality penalties.
    pub at_equilibrium: bool,
}

/// Closed-loop system parameterized by a joint design vector
/// `[controller gains; certificate coefficients]`.
pub trait Plant: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn parameter_names(&self) -> &'static [&'static str];
    /// Number of leading design entries that are controller gains.
    fn n_controller(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], p: &[f64], dx: &mut [f64]);
    fn control(&self, t: f64, x: &[f64], p: &[f64]) -> Vec<f64>;

    /// `Σ w_e ‖ε(x)‖²` with the scenario's error signal and weights.
    fn weighted_error(&self, t: f64, x: &[f64], p: &[f64], w: &CostWeights) -> f64;

    fn certificate(&self, p: &[f64]) -> LyapunovCandidate;

    /// Certificate value along a trajectory point.
    fn certificate_value(&self, t: f64, x: &[f64], p: &[f64]) -> f64;

    fn certificate_samples(&self, traj: &Trajectory, p: &[f64]) -> Vec<CertificateSample>;

    /// Scalar convergence/tracking metric used for logging and stopping.
    fn error_metric(&self, t: f64, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct FirstOrderConsensus {
    pub graph: RingGraph,
}

impl FirstOrderConsensus {
    fn params(p: &[f64]) -> FirstOrderParams {
        FirstOrderParams {
            alpha: p[0],
            beta: p[1],
            k: p[2],
        }
    }
}

impl Plant for FirstOrderConsensus {
    fn name(&self) -> &'static str {
        "consensus1"
    }
    fn state_dim(&self) -> usize {
        self.graph.n_agents()
    }
    fn input_dim(&self) -> usize {
        self.graph.n_agents()
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["alpha", "beta", "k", "theta2", "theta4"]
    }
    fn n_controller(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) {
        let (d, _) = first_order_rhs(x, Self::params(p), &self.graph);
        dx.copy_from_slice(&d);
    }

    fn control(&self, _t: f64, x: &[f64], p: &[f64]) -> Vec<f64> {
        first_order_rhs(x, Self::params(p), &self.graph).1
    }

    fn weighted_error(&self, _t: f64, x: &[f64], _p: &[f64], w: &CostWeights) -> f64 {
        let lx = self.graph.apply(x);
        w.error[0] * lx.iter().map(|v| v * v).sum::<f64>()
    }

    fn certificate(&self, p: &[f64]) -> LyapunovCandidate {
        LyapunovCandidate::new(CertificateKind::FirstOrderQuartic, &p[3..5])
            .expect("two certificate coefficients")
    }

    fn certificate_value(&self, _t: f64, x: &[f64], p: &[f64]) -> f64 {
        self.certificate(p).eval_v(x)
    }

    fn certificate_samples(&self, traj: &Trajectory, p: &[f64]) -> Vec<CertificateSample> {
        let cand = self.certificate(p);
        let mut dx = vec![0.0; self.state_dim()];
        traj.times
            .iter()
            .zip(&traj.states)
            .map(|(&t, x)| {
                self.rhs(t, x, p, &mut dx);
                CertificateSample {
                    v: cand.eval_v(x),
                    vdot: cand.eval_vdot(x, &dx),
                    at_equilibrium: norm(x) < EQUILIBRIUM_EXCLUSION,
                }
            })
            .collect()
    }

    fn error_metric(&self, _t: f64, x: &[f64]) -> f64 {
        norm(&self.graph.apply(x))
    }
}

#[derive(Debug, Clone)]
pub struct SecondOrderConsensus {
    pub graph: RingGraph,
    pub drag_a: f64,
    pub drag_b: f64,
}

impl SecondOrderConsensus {
    fn params(&self, p: &[f64]) -> SecondOrderParams {
        SecondOrderParams {
            kp: p[0],
            kd: p[1],
            drag_a: self.drag_a,
            drag_b: self.drag_b,
        }
    }

    fn disagreement(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.graph.n_agents();
        (self.graph.apply(&z[..n]), self.graph.apply(&z[n..]))
    }
}

impl Plant for SecondOrderConsensus {
    fn name(&self) -> &'static str {
        "consensus2"
    }
    fn state_dim(&self) -> usize {
        2 * self.graph.n_agents()
    }
    fn input_dim(&self) -> usize {
        self.graph.n_agents()
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["kp", "kd", "theta_x2", "theta_v2", "theta_x4"]
    }
    fn n_controller(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) {
        let (d, _) = second_order_rhs(x, self.params(p), &self.graph);
        dx.copy_from_slice(&d);
    }

    fn control(&self, _t: f64, x: &[f64], p: &[f64]) -> Vec<f64> {
        second_order_rhs(x, self.params(p), &self.graph).1
    }

    fn weighted_error(&self, _t: f64, x: &[f64], _p: &[f64], w: &CostWeights) -> f64 {
        let (lx, lv) = self.disagreement(x);
        w.error[0] * lx.iter().chain(&lv).map(|v| v * v).sum::<f64>()
    }

    fn certificate(&self, p: &[f64]) -> LyapunovCandidate {
        LyapunovCandidate::new(
            CertificateKind::SecondOrderDisagreement(self.graph.clone()),
            &p[2..5],
        )
        .expect("three certificate coefficients")
    }

    fn certificate_value(&self, _t: f64, x: &[f64], p: &[f64]) -> f64 {
        self.certificate(p).eval_v(x)
    }

    fn certificate_samples(&self, traj: &Trajectory, p: &[f64]) -> Vec<CertificateSample> {
        let cand = self.certificate(p);
        let mut dx = vec![0.0; self.state_dim()];
        traj.times
            .iter()
            .zip(&traj.states)
            .map(|(&t, x)| {
                self.rhs(t, x, p, &mut dx);
                CertificateSample {
                    v: cand.eval_v(x),
                    vdot: cand.eval_vdot(x, &dx),
                    at_equilibrium: self.error_metric(t, x) < EQUILIBRIUM_EXCLUSION,
                }
            })
            .collect()
    }

    fn error_metric(&self, _t: f64, x: &[f64]) -> f64 {
        let (lx, lv) = self.disagreement(x);
        (lx.iter().chain(&lv).map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Induction-motor drive with a nominal controller model and a plant whose
/// parameters may differ from it.
#[derive(Debug, Clone)]
pub struct InductionMotorDrive {
    pub plant_params: MotorParams,
    pub nominal_params: MotorParams,
    pub refs: MotorReferences,
    plant: MotorCoefficients,
    nominal: MotorCoefficients,
}

impl InductionMotorDrive {
    pub fn new(plant_params: MotorParams, nominal_params: MotorParams, refs: MotorReferences) -> Self {
        Self {
            plant: plant_params.coefficients(),
            nominal: nominal_params.coefficients(),
            plant_params,
            nominal_params,
            refs,
        }
    }

    pub fn design(p: &[f64]) -> MotorDesign {
        MotorDesign::new(p[0], p[1])
    }

    pub fn errors(&self, t: f64, x: &[f64], p: &[f64]) -> FocErrors {
        foc_control(x, Self::design(p), &self.refs, &self.nominal, t).1
    }

    pub fn nominal_coefficients(&self) -> &MotorCoefficients {
        &self.nominal
    }

    pub fn plant_coefficients(&self) -> &MotorCoefficients {
        &self.plant
    }
}

impl Plant for InductionMotorDrive {
    fn name(&self) -> &'static str {
        "motor"
    }
    fn state_dim(&self) -> usize {
        5
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn parameter_names(&self) -> &'static [&'static str] {
        &["k_psi", "k_omega", "theta_psi", "theta_omega"]
    }
    fn n_controller(&self) -> usize {
        2
    }

    fn rhs(&self, t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) {
        let (u, _) = foc_control(x, Self::design(p), &self.refs, &self.nominal, t);
        dx.copy_from_slice(&motor_dynamics(x, u, &self.plant, self.refs.torque(t)));
    }

    fn control(&self, t: f64, x: &[f64], p: &[f64]) -> Vec<f64> {
        foc_control(x, Self::design(p), &self.refs, &self.nominal, t)
            .0
            .to_vec()
    }

    fn weighted_error(&self, t: f64, x: &[f64], p: &[f64], w: &CostWeights) -> f64 {
        let e = self.errors(t, x, p);
        w.error[0] * e.e_psi * e.e_psi
            + w.error[1] * e.e_omega * e.e_omega
            + w.error[2] * (e.e1 * e.e1 + e.e2 * e.e2)
    }

    fn certificate(&self, p: &[f64]) -> LyapunovCandidate {
        LyapunovCandidate::new(CertificateKind::MotorTracking, &p[2..4])
            .expect("two certificate coefficients")
    }

    fn certificate_value(&self, t: f64, x: &[f64], p: &[f64]) -> f64 {
        self.certificate(p).eval_v(&self.errors(t, x, p).as_array())
    }

    /// V̇ from centered differences of V along the grid, one-sided at the ends.
    fn certificate_samples(&self, traj: &Trajectory, p: &[f64]) -> Vec<CertificateSample> {
        let cand = self.certificate(p);
        let errs: Vec<[f64; 4]> = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, x)| self.errors(t, x, p).as_array())
            .collect();
        let v: Vec<f64> = errs.iter().map(|e| cand.eval_v(e)).collect();
        let n = v.len();
        let ts = &traj.times;
        (0..n)
            .map(|i| {
                let vdot = if n < 2 {
                    0.0
                } else if i == 0 {
                    (v[1] - v[0]) / (ts[1] - ts[0])
                } else if i == n - 1 {
                    (v[n - 1] - v[n - 2]) / (ts[n - 1] - ts[n - 2])
                } else {
                    (v[i + 1] - v[i - 1]) / (ts[i + 1] - ts[i - 1])
                };
                CertificateSample {
                    v: v[i],
                    vdot,
                    at_equilibrium: norm(&errs[i]) < EQUILIBRIUM_EXCLUSION,
                }
            })
            .collect()
    }

    fn error_metric(&self, t: f64, x: &[f64]) -> f64 {
        (x[4] - self.refs.speed(t)).abs()
    }
}

/// Application constraint `c(t, x, u, p) ≤ 0`, one entry per row.
pub type ConstraintFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Everything the cost needs besides the design vector and the epoch context.
#[derive(Clone)]
pub struct Scenario {
    pub plant: Arc<dyn Plant>,
    pub spec: StabilitySpec,
    pub initial_region: SearchRegion,
    pub tolerances: Tolerances,
    /// Extension hook for application constraints; empty for all case studies.
    pub constraints: Vec<ConstraintFn>,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("plant", &self.plant)
            .field("spec", &self.spec)
            .field("initial_region", &self.initial_region)
            .field("tolerances", &self.tolerances)
            .field("constraints", &self.constraints.len())
            .finish()
    }
}

impl Scenario {
    pub fn new(plant: Arc<dyn Plant>, spec: StabilitySpec, initial_region: SearchRegion) -> Self {
        Self {
            plant,
            spec,
            initial_region,
            tolerances: Tolerances::default(),
            constraints: Vec::new(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.plant.parameter_names().len()
    }
}
