//! Acceptance suite. Prints one PASS/FAIL line per criterion. With
//! `ACCEPTANCE_STRICT=1` any failing criterion makes the process exit non-zero.
//!
//! Run with `cargo test -p codesign-core --test acceptance --release`.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codesign::codesign::{brute_force_minimum, run_fixed_baseline, run_simulation, run_simulation_observed, RunLog};
use codesign::config::{EncodingKind, RunConfig, ScenarioKind};
use codesign::cost::penalized_cost;
use codesign::encoding::Bitstring;
use codesign::output;
use codesign::quantum::{prepare_state, state_jacobian, top_k_bitstrings, varqite_run, Ansatz, QiteSettings};
use codesign::scenario::Scenario;
use codesign::surrogate::{fit_quadratic, ising_energy, qubo_to_ising, IsingModel, QuadraticSurrogate, DEFAULT_RIDGE};

const SEEDS: [u64; 3] = [42, 43, 44];
const MANY_THREADS: usize = 4;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(id: usize, pass: bool, detail: String, start: Instant) -> Outcome {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {id}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
    Outcome { id, pass, detail }
}

fn random_surrogate(n: usize, rng: &mut ChaCha8Rng) -> QuadraticSurrogate {
    let mut q = QuadraticSurrogate::zero(n);
    q.beta0 = rng.gen_range(-1.0..1.0);
    q.linear.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    q.quadratic.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    q
}

fn cube(n: usize) -> Vec<Bitstring> {
    (0..1u64 << n).map(|i| Bitstring::from_index(i, n)).collect()
}

fn first_min(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = 2 + i % 9;
        let q = random_surrogate(n, &mut rng);
        let m = qubo_to_ising(&q);
        for b in cube(n) {
            let z: Vec<f64> = b.spins().iter().map(|&s| s as f64).collect();
            let e = ising_energy(&m, &z).unwrap();
            worst = worst.max((e - q.eval(b.bits())).abs());
        }
    }
    report(1, worst <= 1e-10, format!("200 surrogates, max |E(z(b)) - Q(b)| = {worst:.2e} (tol 1e-10)"), start)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut argmin_ok = 0;
    for i in 0..50 {
        let n = 2 + i % 7;
        let truth = random_surrogate(n, &mut rng);
        let samples = cube(n);
        let y: Vec<f64> = samples.iter().map(|b| truth.eval(b.bits())).collect();
        let fit = fit_quadratic(&samples, &y, DEFAULT_RIDGE).unwrap();
        let diffs = std::iter::once((fit.beta0, truth.beta0))
            .chain(fit.linear.iter().copied().zip(truth.linear.iter().copied()))
            .chain(fit.quadratic.iter().copied().zip(truth.quadratic.iter().copied()));
        for (a, b) in diffs {
            worst = worst.max((a - b).abs());
        }
        let fitted: Vec<f64> = samples.iter().map(|b| fit.eval(b.bits())).collect();
        if first_min(&fitted) == first_min(&y) {
            argmin_ok += 1;
        }
    }
    let pass = worst <= 1e-8 && argmin_ok == 50;
    report(
        2,
        pass,
        format!("50 quadratics, max coefficient error {worst:.2e} (tol 1e-8), argmin match {argmin_ok}/50"),
        start,
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let n = 6;
    let ansatz = Ansatz::new(n, 2).unwrap();
    let settings = QiteSettings::new(3.0, 60);
    let mut ground_hits = 0;
    let mut within = 0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + inst);
        let m = IsingModel {
            eta0: 0.0,
            fields: (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            couplings: (0..n * (n - 1) / 2).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        };
        let diag = m.diagonal();
        let ground = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let top = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let run = varqite_run(&m, &ansatz, &settings, &mut rng).unwrap();
        let best = top_k_bitstrings(&run.state, 32)
            .iter()
            .map(|(b, _)| m.energy_bits(b.bits()))
            .fold(f64::INFINITY, f64::min);
        if best - ground <= 1e-9 * (1.0 + ground.abs()) {
            ground_hits += 1;
        }
        if best - ground <= 0.05 * (top - ground) {
            within += 1;
        }
    }
    let pass = ground_hits * 5 >= 20 * 4 && within == 20;
    report(
        3,
        pass,
        format!("ground state in {ground_hits}/20 (need 16), within 5% of span in {within}/20 (need 20)"),
        start,
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let reps = rng.gen_range(0..=2);
        let a = Ansatz::new(n, reps).unwrap();
        let theta: Vec<f64> = (0..a.n_params())
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let jac = state_jacobian(&a, &theta).unwrap();
        for (j, col) in jac.iter().enumerate() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let sp = prepare_state(&a, &plus).unwrap();
            let sm = prepare_state(&a, &minus).unwrap();
            for (i, d) in col.iter().enumerate() {
                let fd = (sp.amplitudes[i] - sm.amplitudes[i]) / (2.0 * h);
                worst = worst.max((fd - d).norm());
            }
        }
    }
    report(4, worst <= 1e-6, format!("20 configurations, max |J - FD| = {worst:.2e} (tol 1e-6)"), start)
}

fn reduced(kind: ScenarioKind, seed: u64) -> RunConfig {
    let mut c = RunConfig::defaults(kind);
    c.seed = seed;
    c.qite.steps = 30;
    if kind != ScenarioKind::Motor {
        c.black_hole.max_iters = 30;
    }
    c
}

struct Run {
    cfg: RunConfig,
    scenario: Scenario,
    log: RunLog,
}

fn execute(cfg: RunConfig) -> Run {
    let scenario = cfg.build_scenario().unwrap();
    let log = run_simulation(&scenario, &cfg.simulation_settings()).unwrap();
    Run { cfg, scenario, log }
}

/// Error metric at each redesign boundary `t_k`, `k = 0..=K`; after an early
/// stop the last reached value is held.
fn boundary_metrics(run: &Run) -> Vec<f64> {
    let s = run.cfg.simulation_settings();
    let mut v: Vec<f64> = run.log.epochs.iter().map(|r| r.error_metric).collect();
    let traj = &run.log.trajectory;
    let last = traj.len() - 1;
    v.push(run.scenario.plant.error_metric(traj.times[last], &traj.states[last]));
    let last_value = *v.last().unwrap();
    v.resize(s.max_epochs() + 1, last_value);
    v
}

fn seed_average(runs: &[Run]) -> Vec<f64> {
    let per: Vec<Vec<f64>> = runs.iter().map(boundary_metrics).collect();
    (0..per[0].len())
        .map(|k| per.iter().map(|v| v[k]).sum::<f64>() / per.len() as f64)
        .collect()
}

fn first_below(avg: &[f64], interval: f64, threshold: f64) -> Option<f64> {
    avg.iter().position(|v| *v < threshold).map(|k| k as f64 * interval)
}

fn criterion_5(runs: &[Run], start: Instant) -> Outcome {
    let avg = seed_average(runs);
    let pairs = avg.len() - 1;
    let ok = avg.windows(2).filter(|w| w[1] <= w[0]).count();
    let dt = runs[0].cfg.redesign_interval;
    let below = first_below(&avg, dt, 1e-2);
    let pass = ok * 100 >= pairs * 95 && below.is_some_and(|t| t <= 10.0);
    report(
        5,
        pass,
        format!(
            "consensus1, 3 seeds: {ok}/{pairs} boundary pairs non-increasing, mean ||Lx|| < 1e-2 at t = {}",
            below.map_or("never".into(), |t| format!("{t}"))
        ),
        start,
    )
}

fn criterion_6(runs: &[Run], start: Instant) -> Outcome {
    let avg = seed_average(runs);
    let dt = runs[0].cfg.redesign_interval;
    let below = first_below(&avg, dt, 1e-2);
    let final_avg = *avg.last().unwrap();
    let mut stop_ok = true;
    for r in runs {
        let m = boundary_metrics(r);
        let n = r.cfg.simulation_settings().max_epochs();
        let expected = m[1..].iter().position(|v| *v <= 1e-4).map(|k| k + 1);
        match expected {
            Some(k) if k < n => stop_ok &= r.log.terminated_early && r.log.epochs.len() == k,
            _ => stop_ok &= !r.log.terminated_early && r.log.epochs.len() == n,
        }
    }
    let pass = below.is_some_and(|t| t <= 50.0) && stop_ok;
    report(
        6,
        pass,
        format!(
            "consensus2, 3 seeds: mean combined error < 1e-2 at t = {}, final {final_avg:.3e}, stopping rule honored: {stop_ok}",
            below.map_or("never".into(), |t| format!("{t}"))
        ),
        start,
    )
}

fn max_speed_error(run_scenario: &Scenario, log: &RunLog) -> f64 {
    let traj = &log.trajectory;
    (0..traj.len())
        .filter(|&i| traj.times[i] >= 0.5 && traj.times[i] <= 2.2 + 1e-12)
        .map(|i| run_scenario.plant.error_metric(traj.times[i], &traj.states[i]))
        .fold(0.0, f64::max)
}

fn criterion_7(runs: &[Run], start: Instant) -> Outcome {
    let cfg = &runs[0].cfg;
    let baseline = run_fixed_baseline(&runs[0].scenario, &cfg.baseline_design, &cfg.simulation_settings()).unwrap();
    let base = max_speed_error(&runs[0].scenario, &baseline);
    let mut parts = Vec::new();
    let mut pass = true;
    for r in runs {
        let co = max_speed_error(&r.scenario, &r.log);
        let margin = 1.0 - co / base;
        pass &= margin >= 0.2;
        parts.push(format!("seed {} {co:.3} ({:.0}%)", r.cfg.seed, 100.0 * margin));
    }
    report(
        7,
        pass,
        format!("motor max |e_w| on [0.5, 2.2]: baseline {base:.3}, co-design {}", parts.join(", ")),
        start,
    )
}

fn criterion_8(groups: &[&[Run]]) -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    let mut bitwise = 0;
    let mut safe = 0;
    for runs in groups {
        for r in runs.iter() {
            let s = r.cfg.simulation_settings();
            for rec in &r.log.epochs {
                total += 1;
                let c = penalized_cost(&rec.design, &rec.context(&s.epoch), &r.scenario, &s.epoch.weights);
                if c.to_bits() == rec.exact_cost.to_bits() {
                    bitwise += 1;
                }
                if rec.exact_cost <= rec.safety_net_cost {
                    safe += 1;
                }
            }
        }
    }
    let pass = bitwise == total && safe == total;
    report(
        8,
        pass,
        format!("{total} epochs: cost reproduced bitwise {bitwise}/{total}, winner <= safety net {safe}/{total}"),
        start,
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    let mut within = 0;
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let mut cfg = RunConfig::defaults(ScenarioKind::Consensus1);
        cfg.seed = seed;
        cfg.encoding.mode = EncodingKind::Fixed;
        cfg.encoding.bits = 2;
        let sc = cfg.build_scenario().unwrap();
        let s = cfg.simulation_settings();
        run_simulation_observed(&sc, &s, |rec| {
            assert_eq!(rec.n_qubits, 10);
            let (min, _) = brute_force_minimum(rec, &sc, &s.epoch, 12)?;
            let rel = (rec.exact_cost - min) / min.abs().max(f64::MIN_POSITIVE);
            total += 1;
            worst = worst.max(rel);
            if rec.exact_cost <= min + 0.1 * min.abs() {
                within += 1;
            }
            Ok(())
        })
        .unwrap();
    }
    let pass = within * 10 >= total * 7;
    report(
        9,
        pass,
        format!("consensus1 2-bit: winner within 10% of brute minimum in {within}/{total} epochs (worst gap {:.1}%)", 100.0 * worst),
        start,
    )
}

fn csv_bytes(run: &Run, dir: &Path) -> Vec<Vec<u8>> {
    let plant = run.scenario.plant.as_ref();
    let e = dir.join("epochs.csv");
    let t = dir.join("trajectory.csv");
    let q = dir.join("qite_trace.csv");
    output::write_epochs(&e, plant, &run.log).unwrap();
    output::write_trajectory(&t, plant, &run.log).unwrap();
    output::write_qite_traces(&q, &run.log).unwrap();
    [e, t, q].iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

/// `groups` were produced on a pool of `MANY_THREADS` workers.
fn criterion_10(groups: &[&[Run]]) -> Outcome {
    let start = Instant::now();
    let pool = pool(1);
    let tmp = tempfile::tempdir().unwrap();
    let mut total = 0;
    let mut same = 0;
    for runs in groups {
        for r in runs.iter() {
            let single = pool.install(|| execute(r.cfg.clone()));
            let a = tmp.path().join(format!("{}-{}-many", r.cfg.scenario.name(), r.cfg.seed));
            let b = tmp.path().join(format!("{}-{}-one", r.cfg.scenario.name(), r.cfg.seed));
            std::fs::create_dir_all(&a).unwrap();
            std::fs::create_dir_all(&b).unwrap();
            total += 1;
            if csv_bytes(r, &a) == csv_bytes(&single, &b) {
                same += 1;
            }
        }
    }
    report(
        10,
        same == total,
        format!(
            "{same}/{total} runs byte-identical between 1 and {MANY_THREADS} threads"
        ),
        start,
    )
}

fn main() {
    let wall = Instant::now();
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];

    let many = pool(MANY_THREADS);
    let runs = |kind| -> Vec<Run> {
        many.install(|| SEEDS.iter().map(|&s| execute(reduced(kind, s))).collect())
    };

    let start = Instant::now();
    let c1 = runs(ScenarioKind::Consensus1);
    outcomes.push(criterion_5(&c1, start));
    let start = Instant::now();
    let c2 = runs(ScenarioKind::Consensus2);
    outcomes.push(criterion_6(&c2, start));
    let start = Instant::now();
    let motor = runs(ScenarioKind::Motor);
    outcomes.push(criterion_7(&motor, start));

    let groups: [&[Run]; 3] = [&c1, &c2, &motor];
    outcomes.push(criterion_8(&groups));
    outcomes.push(criterion_9());
    outcomes.push(criterion_10(&groups));

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "{}/{} criteria passed in {:.1} s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        wall.elapsed().as_secs_f64()
    );
    for o in &failed {
        eprintln!("failed criterion {}: {}", o.id, o.detail);
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
