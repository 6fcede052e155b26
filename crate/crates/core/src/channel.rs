//! Rayleigh block-fading channel generation and Shannon spectral efficiency.
//!
//! Fading is block-constant: one gain draw per flow per slicing window, held
//! across all slots of that window. Noise power is normalized to 1 and the
//! mean SNR is folded directly into the gain, so `h` is already the SNR
//! numerator. Traces are regenerated from `(channel_seed, window_index)` and
//! never persisted; regenerating the same pair is bit-identical, which the
//! common-random-numbers gradient estimator relies on.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::domain::{LogBase, NetworkConfig, NetworkRealization};
use crate::error::{Error, Result};
use crate::seeds::{self, stream};

/// Per-flow channel gains (linear power units) for one slicing window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub window: usize,
    /// One gain per flow, constant across the window's slots.
    pub gains: Vec<f64>,
}

/// Draws a large-scale mean SNR in dB, uniform over `[snr_min_db, snr_max_db]`.
///
/// Stands in for a concrete transmitter/AP deployment geometry; the draw is
/// fixed for the realization's lifetime.
pub fn sample_mean_snr<R: Rng>(rng: &mut R, snr_min_db: f64, snr_max_db: f64) -> f64 {
    if snr_min_db == snr_max_db {
        return snr_min_db;
    }
    rng.random_range(snr_min_db..snr_max_db)
}

/// dB to linear power.
pub fn snr_linear(mean_snr_db: f64) -> f64 {
    10f64.powf(mean_snr_db / 10.0)
}

/// Channel gain for one flow-window: mean SNR scaled by a unit-mean
/// exponential fade (Rayleigh amplitude squared).
pub fn fading_gain(mean_snr_db: f64, fade: f64) -> f64 {
    snr_linear(mean_snr_db) * fade
}

/// Samples the block-fading trace for `window_index`.
///
/// Each flow gets one Exponential(1) fade per window; the per-window RNG is
/// derived from `(channel_seed, window_index)` so traces can be regenerated
/// independently of simulation order.
pub fn sample_fading(realization: &NetworkRealization, window_index: usize) -> Result<ChannelTrace> {
    if window_index >= realization.config.num_windows {
        return Err(Error::precondition(format!(
            "window_index {} out of range (T = {})",
            window_index, realization.config.num_windows
        )));
    }
    let mut rng: ChaCha8Rng = seeds::rng(
        realization.channel_seed,
        stream::FADING,
        window_index as u64,
    );
    let gains = realization
        .flows
        .iter()
        .map(|flow| {
            let fade: f64 = Exp1.sample(&mut rng);
            fading_gain(flow.mean_snr_db, fade)
        })
        .collect();
    Ok(ChannelTrace {
        window: window_index,
        gains,
    })
}

/// Shannon spectral efficiency g(h) for gain `h` and noise power `sigma2`.
///
/// Base-2 logarithm by default (bps/Hz); natural log behind the
/// [`LogBase::Natural`] config flag.
pub fn shannon_rate(h: f64, sigma2: f64, log_base: LogBase) -> f64 {
    debug_assert!(h >= 0.0 && sigma2 > 0.0);
    match log_base {
        LogBase::Two => (1.0 + h / sigma2).log2(),
        LogBase::Natural => (1.0 + h / sigma2).ln(),
    }
}

/// Per-flow spectral efficiencies for a whole trace.
pub fn spectral_efficiencies(trace: &ChannelTrace, config: &NetworkConfig) -> Vec<f64> {
    trace
        .gains
        .iter()
        .map(|&h| shannon_rate(h, config.noise_power, config.log_base))
        .collect()
}
