//! Online co-design of feedback gains and Lyapunov certificates through
//! Black-Hole calibration, QUBO surrogates and variational imaginary-time
//! evolution on a simulated statevector.

pub mod blackhole;
pub mod codesign;
pub mod config;
pub mod cost;
pub mod encoding;
pub mod integrate;
pub mod lyapunov;
pub mod output;
pub mod plants;
pub mod quantum;
pub mod scenario;
pub mod surrogate;
