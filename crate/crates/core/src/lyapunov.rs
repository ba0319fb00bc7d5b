//! Parametric Lyapunov candidates and the decay expressions of the supported
//! stability specifications.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plants::RingGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("V = {0} is negative; fractional powers are undefined")]
    DomainError(f64),
    #[error("{kind} expects {expected} coefficients, got {got}")]
    ThetaLength {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Basis family of a candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum CertificateKind {
    /// `θ₂/2 ‖x‖² + θ₄/4 Σ xᵢ⁴`
    FirstOrderQuartic,
    /// `θx2/2 ‖Lx‖² + θv2/2 ‖Lv‖² + θx4/4 Σ (Lx)ᵢ⁴` on `z = [x; v]`
    SecondOrderDisagreement(RingGraph),
    /// `θψ eψ² + θω eω² + e₁² + e₂²` on the error vector `[eψ, eω, e₁, e₂]`
    MotorTracking,
}

impl CertificateKind {
    pub fn theta_len(&self) -> usize {
        match self {
            CertificateKind::FirstOrderQuartic => 2,
            CertificateKind::SecondOrderDisagreement(_) => 3,
            CertificateKind::MotorTracking => 2,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            CertificateKind::FirstOrderQuartic => "first_order_quartic",
            CertificateKind::SecondOrderDisagreement(_) => "second_order_disagreement",
            CertificateKind::MotorTracking => "motor_tracking",
        }
    }
}

/// A candidate `V(x; θ) = Σ θₖ φₖ(x)`, linear in `θ`. Every basis vanishes at
/// the shifted equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCandidate {
    kind: CertificateKind,
    theta: Vec<f64>,
}

impl LyapunovCandidate {
    pub fn new(kind: CertificateKind, theta: &[f64]) -> Result<Self, LyapunovError> {
        if theta.len() != kind.theta_len() {
            return Err(LyapunovError::ThetaLength {
                kind: kind.name(),
                expected: kind.theta_len(),
                got: theta.len(),
            });
        }
        Ok(Self {
            kind,
            theta: theta.to_vec(),
        })
    }

    pub fn kind(&self) -> &CertificateKind {
        &self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eval_v(&self, x: &[f64]) -> f64 {
        let th = &self.theta;
        match &self.kind {
            CertificateKind::FirstOrderQuartic => {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                let quart: f64 = x.iter().map(|v| v.powi(4)).sum();
                th[0] / 2.0 * sq + th[1] / 4.0 * quart
            }
            CertificateKind::SecondOrderDisagreement(g) => {
                let n = g.n_agents();
                let lx = g.apply(&x[..n]);
                let lv = g.apply(&x[n..]);
                let sx: f64 = lx.iter().map(|v| v * v).sum();
                let sv: f64 = lv.iter().map(|v| v * v).sum();
                let q: f64 = lx.iter().map(|v| v.powi(4)).sum();
                th[0] / 2.0 * sx + th[1] / 2.0 * sv + th[2] / 4.0 * q
            }
            CertificateKind::MotorTracking => {
                th[0] * x[0] * x[0] + th[1] * x[1] * x[1] + x[2] * x[2] + x[3] * x[3]
            }
        }
    }

    /// Analytic gradient with respect to the candidate's argument.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let th = &self.theta;
        match &self.kind {
            CertificateKind::FirstOrderQuartic => x
                .iter()
                .map(|v| th[0] * v + th[1] * v * v * v)
                .collect(),
            CertificateKind::SecondOrderDisagreement(g) => {
                let n = g.n_agents();
                let lx = g.apply(&x[..n]);
                let lv = g.apply(&x[n..]);
                // L is symmetric, so ∇ₓ = L (θx2 Lx + θx4 (Lx)³).
                let wx: Vec<f64> = lx
                    .iter()
                    .map(|v| th[0] * v + th[2] * v * v * v)
                    .collect();
                let wv: Vec<f64> = lv.iter().map(|v| th[1] * v).collect();
                let mut grad = g.apply(&wx);
                grad.extend(g.apply(&wv));
                grad
            }
            CertificateKind::MotorTracking => vec![
                2.0 * th[0] * x[0],
                2.0 * th[1] * x[1],
                2.0 * x[2],
                2.0 * x[3],
            ],
        }
    }

    /// `∇V(x)ᵀ dx`.
    pub fn eval_vdot(&self, x: &[f64], dx: &[f64]) -> f64 {
        self.gradient(x).iter().zip(dx).map(|(g, d)| g * d).sum()
    }
}

/// Decay requirement imposed on sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StabilitySpec {
    #[default]
    Asymptotic,
    Exponential {
        rate: f64,
    },
    FiniteTime {
        c: f64,
        gamma: f64,
    },
    FixedTime {
        a: f64,
        b: f64,
        p: f64,
        q: f64,
    },
}

impl StabilitySpec {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            StabilitySpec::Asymptotic => Ok(()),
            StabilitySpec::Exponential { rate } if rate > 0.0 => Ok(()),
            StabilitySpec::Exponential { .. } => Err("rate must be positive".into()),
            StabilitySpec::FiniteTime { c, gamma } if c > 0.0 && gamma > 0.0 && gamma < 1.0 => {
                Ok(())
            }
            StabilitySpec::FiniteTime { .. } => Err("need c > 0 and 0 < gamma < 1".into()),
            StabilitySpec::FixedTime { a, b, p, q }
                if a > 0.0 && b > 0.0 && p > 0.0 && p < 1.0 && q > 1.0 =>
            {
                Ok(())
            }
            StabilitySpec::FixedTime { .. } => {
                Err("need a, b > 0, 0 < p < 1 and q > 1".into())
            }
        }
    }
}

/// Ψ such that `Ψ ≤ 0` is the sampled decay condition.
pub fn decay_expression(spec: StabilitySpec, v: f64, vdot: f64) -> Result<f64, LyapunovError> {
    match spec {
        StabilitySpec::Asymptotic => Ok(vdot),
        StabilitySpec::Exponential { rate } => Ok(vdot + rate * v),
        StabilitySpec::FiniteTime { c, gamma } => {
            if v < 0.0 {
                return Err(LyapunovError::DomainError(v));
            }
            Ok(vdot + c * v.powf(gamma))
        }
        StabilitySpec::FixedTime { a, b, p, q } => {
            if v < 0.0 {
                return Err(LyapunovError::DomainError(v));
            }
            Ok(vdot + a * v.powf(p) + b * v.powf(q))
        }
    }
}

/// Samples whose shifted-state norm is below this are treated as the equilibrium.
pub const EQUILIBRIUM_EXCLUSION: f64 = 1e-9;
