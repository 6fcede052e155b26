//! Wi-Fi network slicing laboratory.
//!
//! Simulates per-window bandwidth slicing across high-throughput (H),
//! low-latency (L) and best-effort (B) SLA categories, trains a
//! state-augmented primal-dual MLP slicing policy offline, executes it
//! online with dual-multiplier dynamics, and aggregates QoS violation
//! metrics against classical baselines (uniform / proportional /
//! traffic-weighted).
//!
//! Module map:
//! - [`domain`]: core value types, configuration, network-state features
//! - [`channel`]: Rayleigh block fading and Shannon spectral efficiency
//! - [`traffic`]: CBR packet generation with random-walk rate drift
//! - [`simulator`]: slotted per-slice round-robin queue simulation
//! - [`qos`]: objective, constraint and Lagrangian evaluation
//! - [`policy`]: the state-augmented MLP with manual backprop
//! - [`training`]: offline primal-dual trainers and the FD logit-gradient
//! - [`execution`]: online dual dynamics and classical baselines
//! - [`report`]: violation rates, trajectory curves, sweep tables
//! - [`cli`]: the `slicelab` command-line entry points

pub mod channel;
pub mod cli;
pub mod domain;
pub mod error;
pub mod execution;
pub mod policy;
pub mod qos;
pub mod report;
pub mod seeds;
pub mod simulator;
pub mod traffic;
pub mod training;

pub use error::{Error, Result};
