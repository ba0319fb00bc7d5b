//! Epoch loop: calibrate, encode, fit, evolve, screen, re-evaluate, apply.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::blackhole::{calibrate, BhSettings, SearchRegion};
use crate::cost::{penalized_cost, simulate, CostWeights, EpochContext};
use crate::encoding::{allocate_bits, decode, encode_nearest, BitAllocation, Bitstring, EncodingMode};
use crate::integrate::{IntegrateError, Trajectory};
use crate::quantum::{top_k_bitstrings, varqite_run, Ansatz, QiteSettings, QuantumError, MAX_QUBITS};
use crate::scenario::Scenario;
use crate::surrogate::{fit_quadratic, qubo_to_ising, sample_training_set, SurrogateError};

#[derive(Debug, Error)]
pub enum CodesignError {
    #[error("closed-loop integration failed at t = {t}: {source}")]
    Integration { t: f64, source: IntegrateError },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("encoding needs {n_qubits} qubits, cap is {cap}")]
    CapExceeded { n_qubits: usize, cap: usize },
    #[error("invalid settings: {0}")]
    Settings(String),
}

/// Everything one epoch needs besides the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSettings {
    pub horizon: f64,
    pub n_grid: usize,
    pub weights: CostWeights,
    pub bh: BhSettings,
    pub encoding: EncodingMode,
    pub training_factor: usize,
    pub training_minimum: usize,
    pub ridge: f64,
    pub qite: QiteSettings,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub epoch: EpochSettings,
    pub x0: Vec<f64>,
    pub redesign_interval: f64,
    pub t_final: f64,
    /// Stop once the scenario's error metric drops to this value.
    pub stop_threshold: Option<f64>,
    pub seed: u64,
    /// Logging grid per applied interval, as a multiple of `n_grid`.
    pub log_grid_factor: usize,
}

impl SimulationSettings {
    pub fn max_epochs(&self) -> usize {
        if self.t_final <= 0.0 {
            return 0;
        }
        let ratio = self.t_final / self.redesign_interval;
        // Guard against ratios like 2.2 / 0.2 = 11.000000000000002.
        (ratio - 1e-9).ceil().max(1.0) as usize
    }

    pub fn epoch_start(&self, k: usize) -> f64 {
        k as f64 * self.redesign_interval
    }
}

/// Independent RNG stream for epoch `k` of a run seeded with `master`.
pub fn epoch_rng(master: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub index: usize,
    pub t_start: f64,
    pub x_start: Vec<f64>,
    pub calibrated_region: SearchRegion,
    pub allocation: BitAllocation,
    pub n_qubits: usize,
    pub design: Vec<f64>,
    pub winner_bits: Bitstring,
    pub exact_cost: f64,
    /// Smallest surrogate prediction over the screened candidates.
    pub surrogate_min_seen: f64,
    pub candidate_count: usize,
    pub error_metric: f64,
    pub qite_final_energy: f64,
    pub bh_best_cost: f64,
    pub safety_net_cost: f64,
    pub energy_trace: Vec<f64>,
}

impl EpochRecord {
    pub fn context(&self, s: &EpochSettings) -> EpochContext {
        EpochContext {
            t_start: self.t_start,
            x_start: self.x_start.clone(),
            horizon: s.horizon,
            n_grid: s.n_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub epochs: Vec<EpochRecord>,
    pub trajectory: Trajectory,
    /// Certificate value at each trajectory sample under the design applied there.
    pub v_values: Vec<f64>,
    pub terminated_early: bool,
    pub termination_reason: String,
}

pub fn run_epoch(
    x_k: &[f64],
    t_k: f64,
    index: usize,
    scenario: &Scenario,
    s: &EpochSettings,
    rng: &mut ChaCha8Rng,
) -> Result<EpochRecord, CodesignError> {
    let ctx = EpochContext {
        t_start: t_k,
        x_start: x_k.to_vec(),
        horizon: s.horizon,
        n_grid: s.n_grid,
    };
    let objective = |p: &[f64]| penalized_cost(p, &ctx, scenario, &s.weights);

    let cal = calibrate(objective, &scenario.initial_region, &s.bh, rng);
    let region = cal.region.clone();
    let alloc = allocate_bits(&region, &s.bh.freeze_thresholds, s.encoding);
    let n_q = alloc.n_total;
    if n_q == 0 || n_q > MAX_QUBITS {
        return Err(CodesignError::CapExceeded {
            n_qubits: n_q,
            cap: MAX_QUBITS,
        });
    }
    let decode_ok = |b: &Bitstring| decode(b, &alloc, &region).expect("allocation length");

    let safety_bits = encode_nearest(&cal.best_point, &alloc, &region);
    let mut samples = sample_training_set(n_q, s.training_factor, s.training_minimum, rng);
    if !samples.contains(&safety_bits) {
        samples.push(safety_bits.clone());
    }
    let targets: Vec<f64> = samples.par_iter().map(|b| objective(&decode_ok(b))).collect();
    let surrogate = fit_quadratic(&samples, &targets, s.ridge)?;
    let ising = qubo_to_ising(&surrogate);

    let ansatz = Ansatz::new(n_q, s.qite.reps)?;
    let qite = varqite_run(&ising, &ansatz, &s.qite, rng)?;
    let mut candidates: Vec<Bitstring> = top_k_bitstrings(&qite.state, s.top_k)
        .into_iter()
        .map(|(b, _)| b)
        .collect();
    if !candidates.contains(&safety_bits) {
        candidates.push(safety_bits.clone());
    }
    let designs: Vec<Vec<f64>> = candidates.iter().map(decode_ok).collect();
    let costs: Vec<f64> = designs.par_iter().map(|p| objective(p)).collect();
    let winner = crate::blackhole::best_index(&costs);
    let safety_idx = candidates
        .iter()
        .position(|b| *b == safety_bits)
        .expect("safety net is screened");
    let surrogate_min_seen = candidates
        .iter()
        .map(|b| surrogate.eval(b.bits()))
        .fold(f64::INFINITY, f64::min);

    Ok(EpochRecord {
        index,
        t_start: t_k,
        x_start: x_k.to_vec(),
        calibrated_region: region,
        n_qubits: n_q,
        design: designs[winner].clone(),
        winner_bits: candidates[winner].clone(),
        exact_cost: costs[winner],
        surrogate_min_seen,
        candidate_count: candidates.len(),
        error_metric: scenario.plant.error_metric(t_k, x_k),
        qite_final_energy: *qite.energy_trace.last().unwrap_or(&qite.initial_energy),
        bh_best_cost: cal.best_cost,
        safety_net_cost: costs[safety_idx],
        energy_trace: qite.energy_trace,
        allocation: alloc,
    })
}

fn append_segment(log: &mut RunLog, seg: Trajectory, scenario: &Scenario, p: &[f64]) {
    let skip = usize::from(!log.trajectory.is_empty());
    for i in skip..seg.len() {
        let (t, x) = (seg.times[i], &seg.states[i]);
        log.v_values.push(scenario.plant.certificate_value(t, x, p));
        log.trajectory.times.push(t);
        log.trajectory.states.push(x.clone());
        log.trajectory.controls.push(seg.controls[i].clone());
    }
}

fn empty_log() -> RunLog {
    RunLog {
        epochs: Vec::new(),
        trajectory: Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
        },
        v_values: Vec::new(),
        terminated_early: false,
        termination_reason: String::new(),
    }
}

pub fn run_simulation(scenario: &Scenario, s: &SimulationSettings) -> Result<RunLog, CodesignError> {
    run_simulation_observed(scenario, s, |_| Ok(()))
}

/// [`run_simulation`] with a hook called after each epoch is designed.
pub fn run_simulation_observed<F>(
    scenario: &Scenario,
    s: &SimulationSettings,
    mut observe: F,
) -> Result<RunLog, CodesignError>
where
    F: FnMut(&EpochRecord) -> Result<(), CodesignError>,
{
    validate(scenario, s)?;
    let mut log = empty_log();
    let mut x = s.x0.clone();
    let n_epochs = s.max_epochs();
    let log_grid = s.log_grid_factor * s.epoch.n_grid;
    for k in 0..n_epochs {
        let t_k = s.epoch_start(k);
        let mut rng = epoch_rng(s.seed, k);
        let record = run_epoch(&x, t_k, k, scenario, &s.epoch, &mut rng)?;
        observe(&record)?;
        let t_next = if k + 1 == n_epochs {
            s.t_final
        } else {
            s.epoch_start(k + 1)
        };
        let seg = simulate(&record.design, t_k, &x, t_next - t_k, log_grid, scenario)
            .map_err(|source| CodesignError::Integration { t: t_k, source })?;
        x = seg.last_state().to_vec();
        append_segment(&mut log, seg, scenario, &record.design);
        log.epochs.push(record);
        if let Some(thr) = s.stop_threshold {
            let metric = scenario.plant.error_metric(t_next, &x);
            if metric <= thr {
                if k + 1 < n_epochs {
                    log.terminated_early = true;
                    log.termination_reason =
                        format!("error metric {metric:e} <= {thr:e} at t = {t_next}");
                } else {
                    log.termination_reason = format!("error metric {metric:e} <= {thr:e} at final time");
                }
                return Ok(log);
            }
        }
    }
    log.termination_reason = format!("reached t = {}", s.t_final);
    Ok(log)
}

/// Constant-design run over the whole horizon with one integration; logs one
/// record per redesign boundary for schema compatibility.
pub fn run_fixed_baseline(
    scenario: &Scenario,
    design: &[f64],
    s: &SimulationSettings,
) -> Result<RunLog, CodesignError> {
    validate(scenario, s)?;
    if design.len() != scenario.n_params() {
        return Err(CodesignError::Settings(format!(
            "baseline design has {} entries, scenario expects {}",
            design.len(),
            scenario.n_params()
        )));
    }
    let mut log = empty_log();
    let plant = scenario.plant.as_ref();
    if s.t_final <= 0.0 {
        log.trajectory.times.push(0.0);
        log.trajectory.states.push(s.x0.clone());
        log.trajectory.controls.push(plant.control(0.0, &s.x0, design));
        log.v_values.push(plant.certificate_value(0.0, &s.x0, design));
        log.termination_reason = "zero-length horizon".into();
        return Ok(log);
    }
    let n_epochs = s.max_epochs();
    let per_epoch = s.log_grid_factor * s.epoch.n_grid;
    let n_grid = n_epochs * (per_epoch - 1) + 1;
    let traj = simulate(design, 0.0, &s.x0, s.t_final, n_grid, scenario)
        .map_err(|source| CodesignError::Integration { t: 0.0, source })?;
    let n_design = design.len();
    let records: Vec<EpochRecord> = (0..n_epochs)
        .into_par_iter()
        .map(|k| {
            let idx = (k * (per_epoch - 1)).min(traj.len() - 1);
            let (t_k, x_k) = (traj.times[idx], traj.states[idx].clone());
            let ctx = EpochContext {
                t_start: t_k,
                x_start: x_k.clone(),
                horizon: s.epoch.horizon,
                n_grid: s.epoch.n_grid,
            };
            let cost = penalized_cost(design, &ctx, scenario, &s.epoch.weights);
            EpochRecord {
                index: k,
                t_start: t_k,
                error_metric: plant.error_metric(t_k, &x_k),
                x_start: x_k,
                calibrated_region: SearchRegion::new(design.to_vec(), design.to_vec())
                    .expect("point region"),
                allocation: BitAllocation::from_bits(vec![0; n_design]),
                n_qubits: 0,
                design: design.to_vec(),
                winner_bits: Bitstring(Vec::new()),
                exact_cost: cost,
                surrogate_min_seen: f64::NAN,
                candidate_count: 0,
                qite_final_energy: f64::NAN,
                bh_best_cost: f64::NAN,
                safety_net_cost: f64::NAN,
                energy_trace: Vec::new(),
            }
        })
        .collect();
    append_segment(&mut log, traj, scenario, design);
    log.epochs = records;
    log.termination_reason = format!("reached t = {}", s.t_final);
    Ok(log)
}

/// Exhaustive minimum of the exact cost over every decodable point of an epoch.
pub fn brute_force_minimum(
    record: &EpochRecord,
    scenario: &Scenario,
    s: &EpochSettings,
    cap: usize,
) -> Result<(f64, Bitstring), CodesignError> {
    let n = record.n_qubits;
    if n > cap {
        return Err(CodesignError::CapExceeded { n_qubits: n, cap });
    }
    let ctx = record.context(s);
    let costs: Vec<f64> = (0..(1u64 << n))
        .into_par_iter()
        .map(|i| {
            let b = Bitstring::from_index(i, n);
            let p = decode(&b, &record.allocation, &record.calibrated_region).expect("allocation length");
            penalized_cost(&p, &ctx, scenario, &s.weights)
        })
        .collect();
    let best = crate::blackhole::best_index(&costs);
    Ok((costs[best], Bitstring::from_index(best as u64, n)))
}

fn validate(scenario: &Scenario, s: &SimulationSettings) -> Result<(), CodesignError> {
    let bad = |m: String| Err(CodesignError::Settings(m));
    if s.x0.len() != scenario.plant.state_dim() {
        return bad(format!(
            "initial state has {} entries, plant expects {}",
            s.x0.len(),
            scenario.plant.state_dim()
        ));
    }
    if !(s.redesign_interval > 0.0) {
        return bad("redesign_interval must be positive".into());
    }
    if !(s.epoch.horizon > 0.0) || s.epoch.n_grid < 2 {
        return bad("horizon must be positive with at least 2 grid points".into());
    }
    if s.log_grid_factor == 0 {
        return bad("log_grid_factor must be at least 1".into());
    }
    if s.epoch.top_k == 0 {
        return bad("top_k must be at least 1".into());
    }
    s.epoch.bh.validate(scenario.n_params()).map_err(CodesignError::Settings)?;
    s.epoch.qite.validate()?;
    s.epoch.weights.validate().map_err(CodesignError::Settings)?;
    Ok(())
}
