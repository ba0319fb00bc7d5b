//! Dense statevector simulation of a rotation/CNOT-chain ansatz and
//! variational imaginary-time parameter updates on a diagonal Hamiltonian.
//!
//! Qubit `r` is the `r`-th bit of an encoded bitstring, and it occupies bit
//! position `n - 1 - r` of the basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::Bitstring;
use crate::surrogate::IsingModel;

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("expected {expected} parameters, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state has {state} qubits, operator has {operator}")]
    DimensionMismatch { state: usize, operator: usize },
    #[error("regularized update system could not be solved")]
    LinearSolveFailure,
    #[error("{0} qubits exceeds the simulator limit")]
    TooManyQubits(usize),
    #[error("invalid settings: {0}")]
    InvalidSettings(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub n_qubits: usize,
}

impl StateVector {
    pub fn zero_state(n: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes, n_qubits: n }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Gate {
    Ry { qubit: usize, param: usize },
    Rz { qubit: usize, param: usize },
    Cnot { control: usize, target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    pub n_qubits: usize,
    pub reps: usize,
    gates: Vec<Gate>,
}

impl Ansatz {
    pub fn new(n_qubits: usize, reps: usize) -> Result<Self, QuantumError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(n_qubits));
        }
        let mut gates = Vec::new();
        let mut p = 0;
        let mut rotation_layer = |gates: &mut Vec<Gate>| {
            for q in 0..n_qubits {
                gates.push(Gate::Ry { qubit: q, param: p });
                p += 1;
            }
            for q in 0..n_qubits {
                gates.push(Gate::Rz { qubit: q, param: p });
                p += 1;
            }
        };
        for _ in 0..reps {
            rotation_layer(&mut gates);
            for q in 0..n_qubits.saturating_sub(1) {
                gates.push(Gate::Cnot {
                    control: q,
                    target: q + 1,
                });
            }
        }
        rotation_layer(&mut gates);
        Ok(Self {
            n_qubits,
            reps,
            gates,
        })
    }

    pub fn n_params(&self) -> usize {
        2 * self.n_qubits * (self.reps + 1)
    }

    fn check(&self, theta: &[f64]) -> Result<(), QuantumError> {
        if theta.len() != self.n_params() {
            return Err(QuantumError::LengthMismatch {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

type Mat2 = [[Complex64; 2]; 2];

fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let r = |x: f64| Complex64::new(x, 0.0);
    [[r(c), r(-s)], [r(s), r(c)]]
}

fn ry_derivative(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let r = |x: f64| Complex64::new(x, 0.0);
    [[r(-s / 2.0), r(-c / 2.0)], [r(c / 2.0), r(-s / 2.0)]]
}

fn rz(theta: f64) -> Mat2 {
    let z = Complex64::new(0.0, 0.0);
    let e = Complex64::from_polar(1.0, -theta / 2.0);
    [[e, z], [z, e.conj()]]
}

fn rz_derivative(theta: f64) -> Mat2 {
    let z = Complex64::new(0.0, 0.0);
    let e = Complex64::from_polar(1.0, -theta / 2.0);
    let half_i = Complex64::new(0.0, 0.5);
    [[-half_i * e, z], [z, half_i * e.conj()]]
}

fn apply_single(amps: &mut [Complex64], n: usize, qubit: usize, m: &Mat2) {
    let mask = 1usize << (n - 1 - qubit);
    for idx in 0..amps.len() {
        if idx & mask == 0 {
            let a0 = amps[idx];
            let a1 = amps[idx | mask];
            amps[idx] = m[0][0] * a0 + m[0][1] * a1;
            amps[idx | mask] = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

fn apply_cnot(amps: &mut [Complex64], n: usize, control: usize, target: usize) {
    let cm = 1usize << (n - 1 - control);
    let tm = 1usize << (n - 1 - target);
    for idx in 0..amps.len() {
        if idx & cm != 0 && idx & tm == 0 {
            amps.swap(idx, idx | tm);
        }
    }
}

fn apply_gate(amps: &mut [Complex64], n: usize, g: Gate, theta: &[f64], derivative: bool) {
    match g {
        Gate::Ry { qubit, param } => {
            let m = if derivative {
                ry_derivative(theta[param])
            } else {
                ry(theta[param])
            };
            apply_single(amps, n, qubit, &m);
        }
        Gate::Rz { qubit, param } => {
            let m = if derivative {
                rz_derivative(theta[param])
            } else {
                rz(theta[param])
            };
            apply_single(amps, n, qubit, &m);
        }
        Gate::Cnot { control, target } => apply_cnot(amps, n, control, target),
    }
}

pub fn prepare_state(a: &Ansatz, theta: &[f64]) -> Result<StateVector, QuantumError> {
    a.check(theta)?;
    let mut s = StateVector::zero_state(a.n_qubits);
    for &g in &a.gates {
        apply_gate(&mut s.amplitudes, a.n_qubits, g, theta, false);
    }
    Ok(s)
}

pub fn hamiltonian_expectation(m: &IsingModel, s: &StateVector) -> Result<f64, QuantumError> {
    if m.n_qubits() != s.n_qubits {
        return Err(QuantumError::DimensionMismatch {
            state: s.n_qubits,
            operator: m.n_qubits(),
        });
    }
    Ok(expectation_diag(&m.diagonal(), s))
}

fn expectation_diag(diag: &[f64], s: &StateVector) -> f64 {
    diag.iter()
        .zip(&s.amplitudes)
        .map(|(e, a)| e * a.norm_sqr())
        .sum()
}

/// Columns are `∂ψ/∂θ_i`, stored as one amplitude vector per parameter.
pub fn state_jacobian(a: &Ansatz, theta: &[f64]) -> Result<Vec<Vec<Complex64>>, QuantumError> {
    a.check(theta)?;
    let n = a.n_qubits;
    // State just before each parameterized gate, indexed by parameter.
    let mut prefixes: Vec<(usize, Vec<Complex64>)> = Vec::with_capacity(a.n_params());
    let mut s = StateVector::zero_state(n).amplitudes;
    for (gi, &g) in a.gates.iter().enumerate() {
        if !matches!(g, Gate::Cnot { .. }) {
            prefixes.push((gi, s.clone()));
        }
        apply_gate(&mut s, n, g, theta, false);
    }
    Ok(prefixes
        .into_par_iter()
        .map(|(gi, mut v)| {
            apply_gate(&mut v, n, a.gates[gi], theta, true);
            for &g in &a.gates[gi + 1..] {
                apply_gate(&mut v, n, g, theta, false);
            }
            v
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QiteSettings {
    pub tau: f64,
    pub steps: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
}

fn default_ridge() -> f64 {
    1e-6
}

fn default_init_scale() -> f64 {
    0.1
}

fn default_reps() -> usize {
    2
}

impl QiteSettings {
    pub fn new(tau: f64, steps: usize) -> Self {
        Self {
            tau,
            steps,
            ridge: default_ridge(),
            init_scale: default_init_scale(),
            reps: default_reps(),
        }
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(QuantumError::InvalidSettings("tau must be positive"));
        }
        if self.steps == 0 {
            return Err(QuantumError::InvalidSettings("steps must be at least 1"));
        }
        if !(self.ridge > 0.0) {
            return Err(QuantumError::InvalidSettings("ridge must be positive"));
        }
        if !(self.init_scale >= 0.0) {
            return Err(QuantumError::InvalidSettings("init_scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QiteRun {
    pub theta_initial: Vec<f64>,
    pub theta_final: Vec<f64>,
    pub initial_energy: f64,
    pub energy_trace: Vec<f64>,
    pub state: StateVector,
}

/// `A = Re(J†J)` and `C = Re(J†Hψ)` at the current parameters.
fn update_system(jac: &[Vec<Complex64>], h_psi: &[Complex64]) -> (DMatrix<f64>, DVector<f64>) {
    let p = jac.len();
    let rows: Vec<(Vec<f64>, f64)> = (0..p)
        .into_par_iter()
        .map(|i| {
            let ci = &jac[i];
            let row: Vec<f64> = (0..p)
                .map(|j| {
                    if j < i {
                        0.0
                    } else {
                        ci.iter().zip(&jac[j]).map(|(x, y)| (x.conj() * y).re).sum()
                    }
                })
                .collect();
            let c = ci.iter().zip(h_psi).map(|(x, y)| (x.conj() * y).re).sum();
            (row, c)
        })
        .collect();
    let mut a = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    for (i, (row, ci)) in rows.into_iter().enumerate() {
        c[i] = ci;
        for j in i..p {
            a[(i, j)] = row[j];
            a[(j, i)] = row[j];
        }
    }
    (a, c)
}

pub fn varqite_run<R: Rng + ?Sized>(
    m: &IsingModel,
    a: &Ansatz,
    s: &QiteSettings,
    rng: &mut R,
) -> Result<QiteRun, QuantumError> {
    s.validate()?;
    if m.n_qubits() != a.n_qubits {
        return Err(QuantumError::DimensionMismatch {
            state: a.n_qubits,
            operator: m.n_qubits(),
        });
    }
    let diag = m.diagonal();
    let theta0: Vec<f64> = (0..a.n_params())
        .map(|_| {
            if s.init_scale > 0.0 {
                rng.gen_range(-s.init_scale..=s.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    let mut theta = theta0.clone();
    let mut psi = prepare_state(a, &theta)?;
    let initial_energy = expectation_diag(&diag, &psi);
    let dtau = s.tau / s.steps as f64;
    let mut trace = Vec::with_capacity(s.steps);
    for _ in 0..s.steps {
        let jac = state_jacobian(a, &theta)?;
        // Residual taken relative to <H>.
        let energy = expectation_diag(&diag, &psi);
        let h_psi: Vec<Complex64> = psi
            .amplitudes
            .iter()
            .zip(&diag)
            .map(|(x, e)| x * (*e - energy))
            .collect();
        let (mut amat, c) = update_system(&jac, &h_psi);
        for i in 0..amat.nrows() {
            amat[(i, i)] += s.ridge;
        }
        let delta = match amat.clone().cholesky() {
            Some(ch) => ch.solve(&c),
            None => amat.lu().solve(&c).ok_or(QuantumError::LinearSolveFailure)?,
        };
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(QuantumError::LinearSolveFailure);
        }
        for (t, d) in theta.iter_mut().zip(delta.iter()) {
            *t -= d * dtau;
        }
        psi = prepare_state(a, &theta)?;
        trace.push(expectation_diag(&diag, &psi));
    }
    Ok(QiteRun {
        theta_initial: theta0,
        theta_final: theta,
        initial_energy,
        energy_trace: trace,
        state: psi,
    })
}

/// Most probable basis states, descending, ties by ascending index.
pub fn top_k_bitstrings(s: &StateVector, k: usize) -> Vec<(Bitstring, f64)> {
    let probs = s.probabilities();
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]).then(i.cmp(&j)));
    idx.into_iter()
        .take(k)
        .map(|i| (Bitstring::from_index(i as u64, s.n_qubits), probs[i]))
        .collect()
}
