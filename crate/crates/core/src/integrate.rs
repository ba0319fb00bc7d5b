//! Adaptive Dormand–Prince 5(4) integration with dense output on a uniform grid.
//!
//! The stepper uses the standard seven-stage tableau (FSAL), an RMS error
//! norm scaled by `atol + rtol * max(|y_old|, |y_new|)`, PI step-size control
//! and the pair's quartic continuous extension to fill grid values between
//! accepted steps. Grid density never influences the step sequence.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integration request: {0}")]
    InvalidInput(&'static str),
    #[error("step size {step:e} fell below the minimum {min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, step: f64, min: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
}

/// Sampled solution of an initial-value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Control inputs evaluated at `times`; empty until a plant fills them in.
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }
}

/// Counters and the accepted step endpoints of one integration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub step_ends: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];

/// Quartic interpolant coefficients: y(t + s h) = y + h * sum_i k_i * sum_j P[i][j] s^(j+1).
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const MAX_STEPS: usize = 2_000_000;

/// Integrates `rhs(t, x, dx)` from `t_start` to `t_end` and samples the solution
/// at `n_grid` uniformly spaced times (both endpoints included).
pub fn rk45_integrate<F>(
    rhs: F,
    x0: &[f64],
    t_start: f64,
    t_end: f64,
    n_grid: usize,
    tol: Tolerances,
) -> Result<Trajectory, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk45_integrate_with_stats(rhs, x0, t_start, t_end, n_grid, tol).map(|(traj, _)| traj)
}

/// Same as [`rk45_integrate`] but also returns step statistics.
pub fn rk45_integrate_with_stats<F>(
    mut rhs: F,
    x0: &[f64],
    t_start: f64,
    t_end: f64,
    n_grid: usize,
    tol: Tolerances,
) -> Result<(Trajectory, StepStats), IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(IntegrateError::InvalidInput("t_end must exceed t_start"));
    }
    if n_grid < 2 {
        return Err(IntegrateError::InvalidInput("n_grid must be at least 2"));
    }
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(IntegrateError::InvalidInput("tolerances must be positive"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteState { t: t_start });
    }

    let n = x0.len();
    let span = t_end - t_start;
    let min_step = 1e-14 * span;
    let times: Vec<f64> = (0..n_grid)
        .map(|i| {
            if i == n_grid - 1 {
                t_end
            } else {
                t_start + span * (i as f64) / ((n_grid - 1) as f64)
            }
        })
        .collect();

    let mut states: Vec<Vec<f64>> = Vec::with_capacity(n_grid);
    states.push(x0.to_vec());
    let mut next_grid = 1;

    let mut stats = StepStats::default();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = x0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut y_stage = vec![0.0; n];
    let mut t = t_start;

    rhs(t, &y, &mut k[0]);
    stats.rhs_evals += 1;
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteState { t });
    }

    let mut h = 1e-3 * span;
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;
    let mut last_trial_nonfinite = false;

    while next_grid < n_grid {
        if stats.accepted + stats.rejected >= MAX_STEPS {
            return Err(IntegrateError::TooManySteps(MAX_STEPS));
        }
        if h < min_step {
            return Err(if last_trial_nonfinite {
                IntegrateError::NonFiniteState { t }
            } else {
                IntegrateError::StepSizeUnderflow {
                    t,
                    step: h,
                    min: min_step,
                }
            });
        }
        let mut last_step = false;
        if t + h >= t_end {
            h = t_end - t;
            last_step = true;
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            rhs(t + C[s] * h, &y_stage, &mut k[s]);
            stats.rhs_evals += 1;
        }
        // The last stage point is the fifth-order solution (FSAL).
        y_new.copy_from_slice(&y_stage);

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            e *= h;
            let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            err_sq += r * r;
            if !y_new[i].is_finite() || !k[6][i].is_finite() {
                finite = false;
            }
        }
        let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };

        if !finite || !err.is_finite() {
            last_trial_nonfinite = true;
            last_rejected = true;
            stats.rejected += 1;
            h *= MIN_FACTOR;
            continue;
        }
        last_trial_nonfinite = false;

        if err <= 1.0 {
            let t_new = if last_step { t_end } else { t + h };
            // Fill grid points covered by this step.
            while next_grid < n_grid && times[next_grid] <= t_new {
                let tg = times[next_grid];
                if next_grid == n_grid - 1 && last_step {
                    states.push(y_new.clone());
                } else {
                    states.push(dense_eval(&y, &k, h, (tg - t) / h));
                }
                next_grid += 1;
            }

            let err_c = err.max(1e-10);
            let mut factor = SAFETY * err_c.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            err_prev = err_c;
            last_rejected = false;

            stats.accepted += 1;
            stats.step_ends.push(t_new);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            let k6 = std::mem::take(&mut k[6]);
            k[0] = k6;
            k[6] = vec![0.0; n];
            h *= factor;
        } else {
            stats.rejected += 1;
            let factor = (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            h *= factor;
            last_rejected = true;
        }
    }

    Ok((
        Trajectory {
            times,
            states,
            controls: Vec::new(),
        },
        stats,
    ))
}

fn dense_eval(y: &[f64], k: &[Vec<f64>], h: f64, s: f64) -> Vec<f64> {
    let powers = [s, s * s, s * s * s, s * s * s * s];
    let weights: Vec<f64> = P
        .iter()
        .map(|row| row.iter().zip(powers.iter()).map(|(p, q)| p * q).sum())
        .collect();
    (0..y.len())
        .map(|i| {
            let mut acc = 0.0;
            for (s, ks) in k.iter().enumerate() {
                acc += weights[s] * ks[i];
            }
            y[i] + h * acc
        })
        .collect()
}
