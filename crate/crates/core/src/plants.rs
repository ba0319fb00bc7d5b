//! Closed-loop plant models: first- and second-order nonlinear consensus on a
//! ring graph and an induction-motor drive under rotor-flux-oriented control.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("ring graph needs at least 3 agents, got {0}")]
    InvalidSize(usize),
    #[error("invalid motor parameters: {0}")]
    InvalidMotor(String),
}

/// Undirected cycle graph and its Laplacian `L = 2I - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGraph {
    n_agents: usize,
    laplacian: Vec<Vec<f64>>,
}

impl RingGraph {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn laplacian(&self) -> &[Vec<f64>] {
        &self.laplacian
    }

    /// `L x` using the cycle structure directly.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_agents;
        debug_assert_eq!(x.len(), n);
        (0..n)
            .map(|i| 2.0 * x[i] - x[(i + n - 1) % n] - x[(i + 1) % n])
            .collect()
    }
}

pub fn ring_laplacian(n: usize) -> Result<RingGraph, PlantError> {
    if n < 3 {
        return Err(PlantError::InvalidSize(n));
    }
    let mut laplacian = vec![vec![0.0; n]; n];
    for (i, row) in laplacian.iter_mut().enumerate() {
        row[i] = 2.0;
        row[(i + 1) % n] = -1.0;
        row[(i + n - 1) % n] = -1.0;
    }
    Ok(RingGraph {
        n_agents: n,
        laplacian,
    })
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

/// Closed loop `dx = (1-α)x + (1-β)x³ - kLx` and the feedback
/// `u = -αx - βx³ - kLx` that closes the open-loop drift `x + x³`.
pub fn first_order_rhs(x: &[f64], p: FirstOrderParams, graph: &RingGraph) -> (Vec<f64>, Vec<f64>) {
    let lx = graph.apply(x);
    let mut dx = Vec::with_capacity(x.len());
    let mut u = Vec::with_capacity(x.len());
    for (xi, lxi) in x.iter().zip(&lx) {
        let cube = xi * xi * xi;
        dx.push((1.0 - p.alpha) * xi + (1.0 - p.beta) * cube - p.k * lxi);
        u.push(-p.alpha * xi - p.beta * cube - p.k * lxi);
    }
    (dx, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderParams {
    pub kp: f64,
    pub kd: f64,
    pub drag_a: f64,
    pub drag_b: f64,
}

impl SecondOrderParams {
    pub const DRAG_A: f64 = 0.5;
    pub const DRAG_B: f64 = 0.05;

    pub fn with_gains(kp: f64, kd: f64) -> Self {
        Self {
            kp,
            kd,
            drag_a: Self::DRAG_A,
            drag_b: Self::DRAG_B,
        }
    }
}

/// `z = [x; v]`, `dz = [v; -a v - b|v|v - Kp Lx - Kd Lv]`, `u = -Kp Lx - Kd Lv`.
pub fn second_order_rhs(
    z: &[f64],
    p: SecondOrderParams,
    graph: &RingGraph,
) -> (Vec<f64>, Vec<f64>) {
    let n = graph.n_agents();
    let (x, v) = z.split_at(n);
    let lx = graph.apply(x);
    let lv = graph.apply(v);
    let u: Vec<f64> = lx
        .iter()
        .zip(&lv)
        .map(|(a, b)| -p.kp * a - p.kd * b)
        .collect();
    let mut dz = Vec::with_capacity(2 * n);
    dz.extend_from_slice(v);
    for (vi, ui) in v.iter().zip(&u) {
        dz.push(-p.drag_a * vi - p.drag_b * vi.abs() * vi + ui);
    }
    (dz, u)
}

/// Physical induction-motor parameters. Derived coefficients are computed on
/// demand so the base fields stay the single source of truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    pub rs: f64,
    pub rr: f64,
    pub ls: f64,
    pub lr: f64,
    pub lm: f64,
    pub j: f64,
    pub pole_pairs: f64,
}

/// Compact stationary-frame coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorCoefficients {
    pub l_sigma: f64,
    pub a_s: f64,
    pub b_s: f64,
    pub c_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub inertia: f64,
}

impl MotorParams {
    pub fn nominal() -> Self {
        Self {
            rs: 2.3,
            rr: 2.5,
            ls: 0.25,
            lr: 0.25,
            lm: 0.24,
            j: 0.003,
            pole_pairs: 2.0,
        }
    }

    pub fn with_lm_scale(self, scale: f64) -> Self {
        Self {
            lm: self.lm * scale,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [self.rs, self.rr, self.ls, self.lr, self.lm, self.j, self.pole_pairs];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(PlantError::InvalidMotor(
                "all motor parameters must be positive".into(),
            ));
        }
        if self.l_sigma() <= 0.0 {
            return Err(PlantError::InvalidMotor(format!(
                "leakage inductance Ls - Lm^2/Lr = {} must be positive",
                self.l_sigma()
            )));
        }
        Ok(())
    }

    pub fn l_sigma(&self) -> f64 {
        self.ls - self.lm * self.lm / self.lr
    }

    pub fn coefficients(&self) -> MotorCoefficients {
        let l_sigma = self.l_sigma();
        MotorCoefficients {
            l_sigma,
            a_s: self.rs / l_sigma + self.rr * self.lm * self.lm / (l_sigma * self.lr * self.lr),
            b_s: self.rr * self.lm / (l_sigma * self.lr * self.lr),
            c_s: self.lm / (l_sigma * self.lr),
            alpha: self.rr * self.lm / self.lr,
            beta: -self.rr / self.lr,
            gamma: 3.0 * self.pole_pairs * self.lm / (2.0 * self.j * self.lr),
            inertia: self.j,
        }
    }
}

/// Outer-loop gains; inner current gains are tied to the flux gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorDesign {
    pub k_psi: f64,
    pub k_omega: f64,
}

impl MotorDesign {
    pub fn new(k_psi: f64, k_omega: f64) -> Self {
        Self { k_psi, k_omega }
    }

    pub fn k1(&self) -> f64 {
        10.0 * self.k_psi
    }

    pub fn k2(&self) -> f64 {
        10.0 * self.k_psi
    }
}

/// Flux, speed and load-torque references for the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorReferences {
    pub flux_ref: f64,
    /// Breakpoints `(t, ω)` of the piecewise-linear speed reference; held
    /// constant outside the listed range.
    pub speed_profile: Vec<(f64, f64)>,
    pub load_torque: f64,
    pub load_step_time: f64,
    pub psi_floor: f64,
}

impl Default for MotorReferences {
    fn default() -> Self {
        Self {
            flux_ref: 0.9,
            speed_profile: vec![
                (0.0, 0.0),
                (0.8, 100.0),
                (1.4, 100.0),
                (2.0, 50.0),
                (2.2, 50.0),
            ],
            load_torque: 1.0,
            load_step_time: 0.5,
            psi_floor: 0.05,
        }
    }
}

impl MotorReferences {
    pub fn speed(&self, t: f64) -> f64 {
        let prof = &self.speed_profile;
        if prof.is_empty() {
            return 0.0;
        }
        if t <= prof[0].0 {
            return prof[0].1;
        }
        for w in prof.windows(2) {
            let (t0, w0) = w[0];
            let (t1, w1) = w[1];
            if t < t1 {
                return w0 + (w1 - w0) * (t - t0) / (t1 - t0);
            }
        }
        prof[prof.len() - 1].1
    }

    /// Right-sided slope of the speed reference.
    pub fn speed_rate(&self, t: f64) -> f64 {
        let prof = &self.speed_profile;
        if prof.len() < 2 || t < prof[0].0 {
            return 0.0;
        }
        for w in prof.windows(2) {
            let (t0, w0) = w[0];
            let (t1, w1) = w[1];
            if t >= t0 && t < t1 {
                return (w1 - w0) / (t1 - t0);
            }
        }
        0.0
    }

    pub fn flux(&self, _t: f64) -> f64 {
        self.flux_ref
    }

    pub fn flux_rate(&self, _t: f64) -> f64 {
        0.0
    }

    pub fn torque(&self, t: f64) -> f64 {
        if t >= self.load_step_time {
            self.load_torque
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.flux_ref > self.psi_floor && self.psi_floor > 0.0) {
            return Err(PlantError::InvalidMotor(
                "flux_ref > psi_floor > 0 is required".into(),
            ));
        }
        if self.speed_profile.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(PlantError::InvalidMotor(
                "speed profile breakpoints must have increasing times".into(),
            ));
        }
        Ok(())
    }
}

/// Tracking errors produced by the field-oriented controller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FocErrors {
    pub e_psi: f64,
    pub e_omega: f64,
    pub e1: f64,
    pub e2: f64,
}

impl FocErrors {
    pub fn as_array(&self) -> [f64; 4] {
        [self.e_psi, self.e_omega, self.e1, self.e2]
    }
}

/// Intermediate signals of the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocSignals {
    pub psi: f64,
    pub e_d: [f64; 2],
    pub e_q: [f64; 2],
    pub i_d_ref: f64,
    pub i_q_ref: f64,
    pub current_ref: [f64; 2],
}

/// Desired-current map of the outer loops.
pub fn desired_current(
    x: &[f64],
    d: MotorDesign,
    refs: &MotorReferences,
    nominal: &MotorCoefficients,
    t: f64,
) -> (FocSignals, f64, f64) {
    let (lra, lrb, omega) = (x[2], x[3], x[4]);
    let psi = lra.hypot(lrb);
    let (e_d, e_q) = if psi < refs.psi_floor {
        ([1.0, 0.0], [0.0, 1.0])
    } else {
        ([lra / psi, lrb / psi], [-lrb / psi, lra / psi])
    };
    let e_psi = psi - refs.flux(t);
    let e_omega = omega - refs.speed(t);
    let psi_eff = psi.max(refs.psi_floor);
    let i_d_ref = (refs.flux_rate(t) - nominal.beta * psi - d.k_psi * e_psi) / nominal.alpha;
    let i_q_ref = (refs.speed_rate(t) + refs.torque(t) / nominal.inertia - d.k_omega * e_omega)
        / (nominal.gamma * psi_eff);
    let current_ref = [
        i_d_ref * e_d[0] + i_q_ref * e_q[0],
        i_d_ref * e_d[1] + i_q_ref * e_q[1],
    ];
    (
        FocSignals {
            psi,
            e_d,
            e_q,
            i_d_ref,
            i_q_ref,
            current_ref,
        },
        e_psi,
        e_omega,
    )
}

/// Step of the central difference used for the desired-current derivative.
pub const CURRENT_REF_FD_STEP: f64 = 1e-5;

/// Rotor-flux-oriented control law. Returns `(u_α, u_β)` and the tracking errors.
pub fn foc_control(
    x: &[f64],
    d: MotorDesign,
    refs: &MotorReferences,
    nominal: &MotorCoefficients,
    t: f64,
) -> ([f64; 2], FocErrors) {
    let (sig, e_psi, e_omega) = desired_current(x, d, refs, nominal, t);
    let h = CURRENT_REF_FD_STEP;
    let (plus, _, _) = desired_current(x, d, refs, nominal, t + h);
    let (minus, _, _) = desired_current(x, d, refs, nominal, t - h);
    let dx1d = (plus.current_ref[0] - minus.current_ref[0]) / (2.0 * h);
    let dx2d = (plus.current_ref[1] - minus.current_ref[1]) / (2.0 * h);

    let (isa, isb, lra, lrb, omega) = (x[0], x[1], x[2], x[3], x[4]);
    let e1 = isa - sig.current_ref[0];
    let e2 = isb - sig.current_ref[1];
    let c = nominal;
    let u_alpha =
        c.l_sigma * (dx1d + c.a_s * isa - c.b_s * lra - c.c_s * omega * lrb - d.k1() * e1);
    let u_beta =
        c.l_sigma * (dx2d + c.a_s * isb - c.b_s * lrb + c.c_s * omega * lra - d.k2() * e2);
    (
        [u_alpha, u_beta],
        FocErrors {
            e_psi,
            e_omega,
            e1,
            e2,
        },
    )
}

/// Stationary-frame motor dynamics driven by the given stator voltages.
pub fn motor_dynamics(
    x: &[f64],
    u: [f64; 2],
    plant: &MotorCoefficients,
    load_torque: f64,
) -> [f64; 5] {
    let (isa, isb, lra, lrb, omega) = (x[0], x[1], x[2], x[3], x[4]);
    let p = plant;
    // ψ i_q with i_q the stator current projected on the q axis.
    let psi_iq = lra * isb - lrb * isa;
    [
        -p.a_s * isa + p.b_s * lra + p.c_s * omega * lrb + u[0] / p.l_sigma,
        -p.a_s * isb + p.b_s * lrb - p.c_s * omega * lra + u[1] / p.l_sigma,
        p.alpha * isa + p.beta * lra - omega * lrb,
        p.alpha * isb + p.beta * lrb + omega * lra,
        p.gamma * psi_iq - load_torque / p.inertia,
    ]
}

/// Closed-loop motor right-hand side: controller on nominal coefficients,
/// plant on (possibly mismatched) plant coefficients.
pub fn motor_rhs(
    x: &[f64],
    d: MotorDesign,
    refs: &MotorReferences,
    plant: &MotorCoefficients,
    nominal: &MotorCoefficients,
    t: f64,
) -> ([f64; 5], [f64; 2]) {
    let (u, _) = foc_control(x, d, refs, nominal, t);
    (motor_dynamics(x, u, plant, refs.torque(t)), u)
}
