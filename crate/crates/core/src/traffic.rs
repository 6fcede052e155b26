//! Constant-bit-rate packet generation with random-walk drift of the mean
//! rates across slicing windows.
//!
//! CBR is realized as equally spaced packets with a uniform random phase per
//! flow per window. Mean rates evolve as a clamped Gaussian random walk.
//! Everything regenerates from `(traffic_seed, window_index)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::domain::{NetworkConfig, NetworkRealization, SlaCategory};
use crate::error::{Error, Result};
use crate::seeds::{self, stream};

/// Random-walk noise standard deviation (bps/Hz per window).
pub const RATE_WALK_STD: f64 = 0.5;
/// Clamp bounds keeping the walked rates well-posed over an episode.
pub const RATE_MIN: f64 = 0.1;
pub const RATE_MAX: f64 = 8.0;

/// Initial-rate ranges per SLA category (bps/Hz).
pub const INIT_RATE_HB: (f64, f64) = (1.0, 5.0);
pub const INIT_RATE_L: (f64, f64) = (0.5, 1.5);

/// Packet arrivals of every flow for one window: within-window timestamps in
/// seconds, sorted ascending, plus the mean rates that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    pub window: usize,
    /// Per-flow arrival timestamps in `[0, window_duration)`.
    pub arrivals: Vec<Vec<f64>>,
    /// Per-flow mean rate mu for this window (bps/Hz).
    pub rates: Vec<f64>,
}

/// Draws each flow's initial mean rate: Unif[1, 5] bps/Hz for
/// high-throughput and best-effort flows, Unif[0.5, 1.5] for low-latency.
pub fn init_rates<R: Rng>(realization: &NetworkRealization, rng: &mut R) -> Vec<f64> {
    realization
        .flows
        .iter()
        .map(|flow| {
            let (lo, hi) = match flow.sla {
                SlaCategory::LowLatency => INIT_RATE_L,
                _ => INIT_RATE_HB,
            };
            rng.random_range(lo..hi)
        })
        .collect()
}

/// One random-walk step with clamping; split out so the clamp is testable
/// with explicit noise.
pub fn step_rate(mu_prev: f64, noise: f64) -> f64 {
    (mu_prev + noise).clamp(RATE_MIN, RATE_MAX)
}

/// Advances every flow's mean rate by one window:
/// `mu + Normal(0, RATE_WALK_STD^2)`, clamped to `[RATE_MIN, RATE_MAX]`.
pub fn evolve_rates<R: Rng>(mu_prev: &[f64], std_dev: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!(mu_prev.iter().all(|&m| m >= 0.0));
    if std_dev == 0.0 {
        return mu_prev.iter().map(|&m| step_rate(m, 0.0)).collect();
    }
    let normal = Normal::new(0.0, std_dev).expect("valid std");
    mu_prev
        .iter()
        .map(|&m| step_rate(m, normal.sample(rng)))
        .collect()
}

/// The full mean-rate path of an episode, window 0 through T-1.
///
/// Window 0 carries the realization's declared initial rates; later windows
/// walk from there. Deterministic given the realization's traffic seed.
pub fn rate_path(realization: &NetworkRealization) -> Vec<Vec<f64>> {
    let t_total = realization.config.num_windows;
    let mut rng = seeds::rng(realization.traffic_seed, stream::RATE_WALK, 0);
    let mut path = Vec::with_capacity(t_total);
    path.push(realization.flows.iter().map(|f| f.mu_init).collect::<Vec<_>>());
    for _ in 1..t_total {
        let next = evolve_rates(path.last().unwrap(), RATE_WALK_STD, &mut rng);
        path.push(next);
    }
    path
}

/// Generates the CBR arrival trace for one window.
///
/// Per flow: `N = round(mu * W * tau_max / P)` equally spaced packets with a
/// uniform random phase in `[0, tau_max / N)`.
pub fn generate_arrivals(
    rates: &[f64],
    config: &NetworkConfig,
    window_index: usize,
    traffic_seed: u64,
) -> Result<ArrivalTrace> {
    if rates.is_empty() {
        return Err(Error::precondition("no rates supplied".to_string()));
    }
    let mut rng = seeds::rng(traffic_seed, stream::ARRIVALS, window_index as u64);
    let tau_max = config.window_duration;
    let window_bits = rates
        .iter()
        .map(|&mu| mu * config.bandwidth_hz * tau_max)
        .collect::<Vec<_>>();

    let mut arrivals = Vec::with_capacity(rates.len());
    for &bits in &window_bits {
        let n = (bits / config.packet_size_bits).round() as usize;
        if n == 0 {
            // keep the RNG stream aligned regardless of packet count
            let _: f64 = rng.random();
            arrivals.push(Vec::new());
            continue;
        }
        let spacing = tau_max / n as f64;
        let phase_dist = Uniform::new(0.0, spacing).expect("positive spacing");
        let phase = phase_dist.sample(&mut rng);
        arrivals.push((0..n).map(|k| k as f64 * spacing + phase).collect());
    }

    Ok(ArrivalTrace {
        window: window_index,
        arrivals,
        rates: rates.to_vec(),
    })
}
