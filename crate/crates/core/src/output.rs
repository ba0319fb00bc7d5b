//! CSV and metadata artifacts of a run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codesign::{EpochRecord, RunLog};
use crate::config::RunConfig;
use crate::scenario::Plant;

/// Shortest text that parses back to the same `f64` bits (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn epochs_header(plant: &dyn Plant) -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "t_start".to_string()];
    h.extend(plant.parameter_names().iter().map(|s| s.to_string()));
    h.extend(
        ["exact_cost", "surrogate_min", "qite_final_energy", "n_qubits", "error_metric"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn trajectory_header(plant: &dyn Plant) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=plant.state_dim()).map(|i| format!("x{i}")));
    h.extend((1..=plant.input_dim()).map(|i| format!("u{i}")));
    h.push("V_value".into());
    h
}

fn epoch_row(r: &EpochRecord) -> Vec<String> {
    let mut row = vec![r.index.to_string(), fmt_f64(r.t_start)];
    row.extend(r.design.iter().map(|v| fmt_f64(*v)));
    row.push(fmt_f64(r.exact_cost));
    row.push(fmt_f64(r.surrogate_min_seen));
    row.push(fmt_f64(r.qite_final_energy));
    row.push(r.n_qubits.to_string());
    row.push(fmt_f64(r.error_metric));
    row
}

pub fn write_epochs(path: &Path, plant: &dyn Plant, log: &RunLog) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(epochs_header(plant))?;
    for r in &log.epochs {
        w.write_record(epoch_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, plant: &dyn Plant, log: &RunLog) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(plant))?;
    let traj = &log.trajectory;
    for i in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[i])];
        row.extend(traj.states[i].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.controls[i].iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(log.v_values[i]));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qite_traces(path: &Path, log: &RunLog) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "step", "energy"])?;
    for r in &log.epochs {
        for (s, e) in r.energy_trace.iter().enumerate() {
            w.write_record([r.index.to_string(), (s + 1).to_string(), fmt_f64(*e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One line of the brute-force comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteRow {
    pub epoch: usize,
    pub t_start: f64,
    pub n_qubits: usize,
    pub winner_cost: f64,
    pub brute_min: f64,
    pub winner_bits: String,
    pub brute_bits: String,
}

impl BruteRow {
    pub fn gap(&self) -> f64 {
        self.winner_cost - self.brute_min
    }
}

pub fn write_brute(path: &Path, rows: &[BruteRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "t_start",
        "n_qubits",
        "winner_cost",
        "brute_min",
        "gap",
        "winner_bits",
        "brute_bits",
    ])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            fmt_f64(r.t_start),
            r.n_qubits.to_string(),
            fmt_f64(r.winner_cost),
            fmt_f64(r.brute_min),
            fmt_f64(r.gap()),
            r.winner_bits.clone(),
            r.brute_bits.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub epochs: usize,
    pub terminated_early: bool,
    pub termination_reason: String,
    pub config: RunConfig,
}

pub fn write_meta(path: &Path, meta: &RunMeta) -> std::io::Result<()> {
    let text = toml::to_string(meta).map_err(std::io::Error::other)?;
    fs::write(path, text)
}

pub fn read_meta(path: &Path) -> Result<RunMeta, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    toml::from_str(&text).map_err(|e| e.to_string())
}
