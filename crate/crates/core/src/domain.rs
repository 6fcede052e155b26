//! Core value types shared by every module: SLA categories, QoS targets,
//! network configuration, sampled network realizations, slice allocations,
//! dual multipliers and the network-state feature vector.
//!
//! All types here are immutable value types; they are cheap to clone and
//! safe to copy between threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::WindowMetrics;

/// Fixed normalizer for the state-vector rate entries (bps/Hz): the maximum
/// of the Unif[1, 5] initial-rate range, so MLP inputs stay O(1).
pub const STATE_RATE_NORMALIZER: f64 = 5.0;

/// Service-level agreement category of a flow.
///
/// Every flow belongs to exactly one category. High-throughput flows carry a
/// minimum-throughput target, low-latency flows a maximum-latency target and
/// best-effort flows have no QoS target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaCategory {
    HighThroughput,
    LowLatency,
    BestEffort,
}

impl SlaCategory {
    pub const ALL: [SlaCategory; 3] = [
        SlaCategory::HighThroughput,
        SlaCategory::LowLatency,
        SlaCategory::BestEffort,
    ];

    /// Index of this category in allocation/state vectors (H, L, B order).
    pub fn index(self) -> usize {
        match self {
            SlaCategory::HighThroughput => 0,
            SlaCategory::LowLatency => 1,
            SlaCategory::BestEffort => 2,
        }
    }
}

/// QoS targets: minimum throughput for H flows, maximum window latency for L
/// flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// Minimum throughput target for high-throughput flows (bps/Hz).
    pub r_min: f64,
    /// Maximum packet-latency target for low-latency flows (ms).
    pub ell_max: f64,
}

impl QosSpec {
    pub fn new(r_min: f64, ell_max: f64) -> Self {
        QosSpec { r_min, ell_max }
    }
}

/// Logarithm base used by the Shannon rate. The spectral-efficiency
/// convention is base 2; base e is kept for fidelity experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

/// Packet-latency formula variant; see `simulator::packet_latency`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    /// Queueing delay plus transmission airtime, in milliseconds.
    #[default]
    Conventional,
    /// Ratio form with the packet size in both denominators; kept for
    /// fidelity comparisons.
    Literal,
}

/// Static configuration of one simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Total channel bandwidth W (Hz).
    pub bandwidth_hz: f64,
    /// Total number of flows |U|.
    pub num_flows: usize,
    /// Number of slicing windows T per episode.
    pub num_windows: usize,
    /// Dual multipliers update every `dual_period` windows (T0).
    pub dual_period: usize,
    /// Slicing-window duration tau_max (s).
    pub window_duration: f64,
    /// Scheduler slot duration (s); must divide the window duration.
    pub slot_duration: f64,
    /// Fixed packet size P (bits).
    pub packet_size_bits: f64,
    /// Per-flow queue capacity Q_max (packets). The default is a shallow
    /// buffer (~10-30 ms of backlog at typical service rates) so the latency
    /// metric tracks load rather than bufferbloat.
    pub queue_capacity_packets: usize,
    /// Noise power sigma^2 (SNR is folded into the channel gain, so 1.0).
    pub noise_power: f64,
    pub qos: QosSpec,
    /// Root seed for realization sampling.
    pub rng_seed: u64,
    /// Lower edge of the effective mean-SNR draw (dB). The default range maps
    /// to per-flow spectral efficiencies of roughly 25-30 bps/Hz, i.e. a
    /// high-end multi-antenna AP, which keeps the QoS targets attainable for
    /// typical slice compositions.
    #[serde(default = "default_snr_min_db")]
    pub snr_min_db: f64,
    /// Upper edge of the effective mean-SNR draw (dB).
    #[serde(default = "default_snr_max_db")]
    pub snr_max_db: f64,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default)]
    pub latency_mode: LatencyMode,
}

fn default_snr_min_db() -> f64 {
    75.0
}

fn default_snr_max_db() -> f64 {
    90.0
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            bandwidth_hz: 20e6,
            num_flows: 20,
            num_windows: 50,
            dual_period: 2,
            window_duration: 0.05,
            slot_duration: 0.5e-3,
            packet_size_bits: 10_000.0,
            queue_capacity_packets: 25,
            noise_power: 1.0,
            qos: QosSpec::new(1.0, 10.0),
            rng_seed: 0,
            snr_min_db: default_snr_min_db(),
            snr_max_db: default_snr_max_db(),
            log_base: LogBase::default(),
            latency_mode: LatencyMode::default(),
        }
    }
}

impl NetworkConfig {
    /// Number of scheduler slots per window.
    pub fn slots_per_window(&self) -> usize {
        (self.window_duration / self.slot_duration).round() as usize
    }
}

/// Checks every `NetworkConfig` invariant and returns the full list of
/// violations rather than stopping at the first.
pub fn validate_config(config: &NetworkConfig) -> std::result::Result<(), Vec<String>> {
    let mut errors = Vec::new();
    if config.bandwidth_hz <= 0.0 {
        errors.push("bandwidth_hz must be positive".to_string());
    }
    if config.num_flows < SlaCategory::ALL.len() {
        errors.push(format!(
            "num_flows must be at least {} (one per SLA category), got {}",
            SlaCategory::ALL.len(),
            config.num_flows
        ));
    }
    if config.num_windows == 0 {
        errors.push("num_windows must be positive".to_string());
    }
    if config.dual_period == 0 {
        errors.push("dual_period must be positive".to_string());
    } else if config.num_windows % config.dual_period != 0 {
        errors.push(format!(
            "dual_period must divide num_windows: T={} T0={}",
            config.num_windows, config.dual_period
        ));
    }
    if config.window_duration <= 0.0 {
        errors.push("window_duration must be positive".to_string());
    }
    if config.slot_duration <= 0.0 {
        errors.push("slot_duration must be positive".to_string());
    } else {
        let ratio = config.window_duration / config.slot_duration;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            errors.push(format!(
                "window_duration must be an integer multiple of slot_duration (ratio {ratio})"
            ));
        }
    }
    if config.packet_size_bits <= 0.0 {
        errors.push("packet_size_bits must be positive".to_string());
    }
    if config.queue_capacity_packets < 1 {
        errors.push("queue_capacity_packets must be at least 1".to_string());
    }
    if config.noise_power <= 0.0 {
        errors.push("noise_power must be positive".to_string());
    }
    if config.qos.r_min <= 0.0 {
        errors.push("qos.r_min must be positive".to_string());
    }
    if config.qos.ell_max <= 0.0 {
        errors.push("qos.ell_max must be positive".to_string());
    }
    if config.snr_min_db > config.snr_max_db {
        errors.push(format!(
            "snr_min_db must not exceed snr_max_db: [{}, {}]",
            config.snr_min_db, config.snr_max_db
        ));
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// One flow and its static attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: usize,
    pub sla: SlaCategory,
    /// Initial mean traffic arrival rate mu (bps/Hz against the full band).
    pub mu_init: f64,
    /// Large-scale mean SNR (dB), fixed for the realization's lifetime.
    pub mean_snr_db: f64,
}

/// One sampled network: flow population plus the seeds that make its traffic
/// and channel processes reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    pub config: NetworkConfig,
    pub flows: Vec<FlowSpec>,
    pub traffic_seed: u64,
    pub channel_seed: u64,
}

impl NetworkRealization {
    /// Builds a realization, enforcing at least one flow per SLA category,
    /// unique flow ids and positive initial rates.
    pub fn new(
        config: NetworkConfig,
        flows: Vec<FlowSpec>,
        traffic_seed: u64,
        channel_seed: u64,
    ) -> Result<Self> {
        if flows.is_empty() {
            return Err(Error::config("realization must contain at least one flow"));
        }
        let mut errors = Vec::new();
        for cat in SlaCategory::ALL {
            if !flows.iter().any(|f| f.sla == cat) {
                errors.push(format!("no flow with SLA category {cat:?}"));
            }
        }
        let mut ids: Vec<usize> = flows.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != flows.len() {
            errors.push("flow ids must be unique".to_string());
        }
        if flows.iter().any(|f| f.mu_init <= 0.0) {
            errors.push("every mu_init must be positive".to_string());
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        Ok(NetworkRealization {
            config,
            flows,
            traffic_seed,
            channel_seed,
        })
    }

    /// Indices of the flows belonging to `cat`, in flow order.
    pub fn slice_members(&self, cat: SlaCategory) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.sla == cat)
            .map(|(i, _)| i)
            .collect()
    }

    /// Flow count per category in (H, L, B) order.
    pub fn slice_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for f in &self.flows {
            counts[f.sla.index()] += 1;
        }
        counts
    }
}

/// A point on the 3-simplex: the fraction of total bandwidth given to each
/// SLA category for one slicing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceAllocation {
    pub p_h: f64,
    pub p_l: f64,
    pub p_b: f64,
}

impl SliceAllocation {
    pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

    /// Validates nonnegativity and unit sum (within `SIMPLEX_TOLERANCE`).
    pub fn new(p_h: f64, p_l: f64, p_b: f64) -> Result<Self> {
        let alloc = SliceAllocation { p_h, p_l, p_b };
        if !alloc.is_valid() {
            return Err(Error::precondition(format!(
                "slice allocation must be a simplex point, got ({p_h}, {p_l}, {p_b})"
            )));
        }
        Ok(alloc)
    }

    /// Skips simplex validation. Used by the throughput-monotonicity property
    /// test, which compares deliberately unnormalized allocations.
    pub fn new_unchecked(p_h: f64, p_l: f64, p_b: f64) -> Self {
        SliceAllocation { p_h, p_l, p_b }
    }

    pub fn uniform() -> Self {
        SliceAllocation {
            p_h: 1.0 / 3.0,
            p_l: 1.0 / 3.0,
            p_b: 1.0 / 3.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let components = [self.p_h, self.p_l, self.p_b];
        components.iter().all(|&p| p >= 0.0 && p.is_finite())
            && ((self.p_h + self.p_l + self.p_b) - 1.0).abs() <= Self::SIMPLEX_TOLERANCE
    }

    /// Allocation component for a flow in category `cat` (the x_i mapping).
    pub fn component(&self, cat: SlaCategory) -> f64 {
        match cat {
            SlaCategory::HighThroughput => self.p_h,
            SlaCategory::LowLatency => self.p_l,
            SlaCategory::BestEffort => self.p_b,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_h, self.p_l, self.p_b]
    }
}

/// Nonnegative dual multipliers pricing the throughput and latency QoS
/// constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualMultipliers {
    pub lambda_h: f64,
    pub lambda_l: f64,
}

impl DualMultipliers {
    pub fn new(lambda_h: f64, lambda_l: f64) -> Result<Self> {
        if lambda_h < 0.0 || lambda_l < 0.0 || !lambda_h.is_finite() || !lambda_l.is_finite() {
            return Err(Error::precondition(format!(
                "dual multipliers must be nonnegative, got ({lambda_h}, {lambda_l})"
            )));
        }
        Ok(DualMultipliers { lambda_h, lambda_l })
    }

    pub fn zero() -> Self {
        DualMultipliers::default()
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lambda_h, self.lambda_l]
    }
}

/// The 9-dimensional network-state feature vector fed to the policy:
/// per-slice flow fractions plus the average and total arrival-rate
/// estimates per slice (H, L, B order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStateVector {
    pub frac_flows: [f64; 3],
    pub avg_rate: [f64; 3],
    pub tot_rate: [f64; 3],
}

impl NetworkStateVector {
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.frac_flows[0],
            self.frac_flows[1],
            self.frac_flows[2],
            self.avg_rate[0],
            self.avg_rate[1],
            self.avg_rate[2],
            self.tot_rate[0],
            self.tot_rate[1],
            self.tot_rate[2],
        ]
    }
}

/// Builds the network-state vector for the next window.
///
/// Flow fractions come from SLA membership counts. Rate features use the
/// per-flow arrival-rate estimates observed in the previous window; for
/// window 0 (`prev_window` is `None`) the declared `mu_init` values are used
/// instead. Average-rate entries are divided by [`STATE_RATE_NORMALIZER`];
/// total-rate entries additionally by the flow count.
pub fn build_state_vector(
    realization: &NetworkRealization,
    prev_window: Option<&WindowMetrics>,
    prev_arrival_estimates: &[f64],
) -> Result<NetworkStateVector> {
    let flows = &realization.flows;
    if flows.is_empty() {
        return Err(Error::config("cannot build state vector: no flows"));
    }
    if prev_window.is_some() && prev_arrival_estimates.len() != flows.len() {
        return Err(Error::precondition(format!(
            "arrival estimates length {} does not match flow count {}",
            prev_arrival_estimates.len(),
            flows.len()
        )));
    }
    if prev_window.is_some() && prev_arrival_estimates.iter().any(|&r| r < 0.0) {
        return Err(Error::precondition(
            "arrival estimates must be nonnegative".to_string(),
        ));
    }

    let n = flows.len() as f64;
    let mut sum = [0.0; 3];
    let mut count = [0usize; 3];
    for (i, flow) in flows.iter().enumerate() {
        let k = flow.sla.index();
        let rate = match prev_window {
            Some(_) => prev_arrival_estimates[i],
            None => flow.mu_init,
        };
        sum[k] += rate;
        count[k] += 1;
    }

    let mut frac = [0.0; 3];
    let mut avg = [0.0; 3];
    let mut tot = [0.0; 3];
    for k in 0..3 {
        frac[k] = count[k] as f64 / n;
        if count[k] > 0 {
            avg[k] = sum[k] / count[k] as f64 / STATE_RATE_NORMALIZER;
        }
        tot[k] = sum[k] / STATE_RATE_NORMALIZER / n;
    }

    Ok(NetworkStateVector {
        frac_flows: frac,
        avg_rate: avg,
        tot_rate: tot,
    })
}

/// Per-flow arrival-rate estimates (bps/Hz) observed from a simulated
/// window: offered packets scaled back to spectral units.
pub fn arrival_estimates(metrics: &WindowMetrics, config: &NetworkConfig) -> Vec<f64> {
    let window_bits = config.bandwidth_hz * config.window_duration;
    metrics
        .flows
        .iter()
        .map(|f| f.generated as f64 * config.packet_size_bits / window_bits)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flows_with_counts(n_h: usize, n_l: usize, n_b: usize, mu: f64) -> Vec<FlowSpec> {
        let mut flows = Vec::new();
        let mut id = 0;
        for (count, sla) in [
            (n_h, SlaCategory::HighThroughput),
            (n_l, SlaCategory::LowLatency),
            (n_b, SlaCategory::BestEffort),
        ] {
            for _ in 0..count {
                flows.push(FlowSpec {
                    id,
                    sla,
                    mu_init: mu,
                    mean_snr_db: 15.0,
                });
                id += 1;
            }
        }
        flows
    }

    fn realization(n_h: usize, n_l: usize, n_b: usize) -> NetworkRealization {
        let mut config = NetworkConfig::default();
        config.num_flows = n_h + n_l + n_b;
        NetworkRealization::new(config, flows_with_counts(n_h, n_l, n_b, 2.0), 1, 2).unwrap()
    }

    #[test]
    fn state_fractions_from_membership_counts() {
        let r = realization(10, 6, 4);
        let s = build_state_vector(&r, None, &[]).unwrap();
        assert_eq!(s.frac_flows, [0.5, 0.3, 0.2]);
    }

    #[test]
    fn all_best_effort_is_rejected_at_construction() {
        let mut config = NetworkConfig::default();
        config.num_flows = 20;
        let err = NetworkRealization::new(config, flows_with_counts(0, 0, 20, 2.0), 1, 2)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("HighThroughput"), "unexpected error: {msg}");
        assert!(msg.contains("LowLatency"), "unexpected error: {msg}");
    }

    #[test]
    fn window_zero_state_uses_mu_init_over_normalizer() {
        // mu_init = 2.0 for every flow, normalizer 5.0 -> avg_rate_H = 0.4
        let r = realization(10, 6, 4);
        let s = build_state_vector(&r, None, &[]).unwrap();
        assert!((s.avg_rate[0] - 0.4).abs() < 1e-12);
        // totals additionally divided by num_flows: 10 * 2.0 / 5.0 / 20
        assert!((s.tot_rate[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn validate_accepts_the_default_config() {
        assert!(validate_config(&NetworkConfig::default()).is_ok());
    }

    #[test]
    fn validate_rejects_nondividing_dual_period() {
        let mut config = NetworkConfig::default();
        config.dual_period = 3; // T = 50
        let errors = validate_config(&config).unwrap_err();
        assert!(errors.iter().any(|e| e.contains("dual_period must divide")));
    }

    #[test]
    fn validate_reports_all_violations_not_just_the_first() {
        let mut config = NetworkConfig::default();
        config.bandwidth_hz = -1.0;
        config.queue_capacity_packets = 0;
        config.dual_period = 7;
        let errors = validate_config(&config).unwrap_err();
        assert!(errors.len() >= 3, "expected 3+ violations, got {errors:?}");
    }

    #[test]
    fn slot_multiple_check_accepts_100_slots() {
        let config = NetworkConfig::default();
        assert_eq!(config.slots_per_window(), 100);
        assert!(validate_config(&config).is_ok());
    }

    #[test]
    fn allocation_requires_simplex_point() {
        assert!(SliceAllocation::new(0.5, 0.3, 0.2).is_ok());
        assert!(SliceAllocation::new(0.5, 0.3, 0.3).is_err());
        assert!(SliceAllocation::new(-0.1, 0.6, 0.5).is_err());
    }

    #[test]
    fn dual_multipliers_must_be_nonnegative() {
        assert!(DualMultipliers::new(0.0, 0.0).is_ok());
        assert!(DualMultipliers::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn config_json_round_trip_uses_snake_case_fields() {
        let config = NetworkConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        for field in [
            "bandwidth_hz",
            "num_flows",
            "num_windows",
            "dual_period",
            "window_duration",
            "slot_duration",
            "packet_size_bits",
            "queue_capacity_packets",
            "noise_power",
            "qos",
            "rng_seed",
        ] {
            assert!(json.contains(field), "missing field {field} in {json}");
        }
        let back: NetworkConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn realization_json_round_trip() {
        let r = realization(10, 6, 4);
        let json = serde_json::to_string(&r).unwrap();
        let back: NetworkRealization = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest::proptest! {
        #[test]
        fn state_vector_fractions_sum_to_one(
            n_h in 1usize..18,
            n_l in 1usize..18,
            n_b in 1usize..18,
            mu in 0.1f64..8.0,
        ) {
            let r = {
                let mut config = NetworkConfig::default();
                config.num_flows = n_h + n_l + n_b;
                NetworkRealization::new(config, flows_with_counts(n_h, n_l, n_b, mu), 1, 2)
                    .unwrap()
            };
            let s = build_state_vector(&r, None, &[]).unwrap();
            let sum: f64 = s.frac_flows.iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
            proptest::prop_assert!(s.as_array().iter().all(|v| *v >= 0.0));
        }
    }
}
