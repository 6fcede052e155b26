//! Slotted simulation of one slicing window.
//!
//! Each SLA category owns a subband sized by the window's slice allocation.
//! Within a slice, backlogged flows take strict round-robin turns occupying
//! the whole subband for one slot at a time; slices run in parallel and do
//! not interfere. Queue and scheduler state are explicit inputs and outputs,
//! so a window can be re-simulated from a snapshot under identical traces
//! (the common-random-numbers contract of the gradient estimator).
//!
//! Timestamps are absolute episode seconds (window index times window
//! duration plus the within-window offset), so packets queued across window
//! boundaries age correctly.

use std::collections::VecDeque;

use crate::channel::{shannon_rate, ChannelTrace};
use crate::domain::{
    FlowSpec, LatencyMode, NetworkConfig, NetworkRealization, SlaCategory, SliceAllocation,
};
use crate::error::{Error, Result};
use crate::traffic::ArrivalTrace;

/// Bits below this are treated as a completed packet.
const BITS_EPS: f64 = 1e-9;

/// One queued packet: absolute arrival time, bits still to send, and the
/// absolute time its first bit went on air (unset until serving starts).
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedPacket {
    pub arrival: f64,
    pub remaining_bits: f64,
    pub first_service: Option<f64>,
}

/// FIFO packet queue with drop-tail capacity `Q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowQueue {
    packets: VecDeque<QueuedPacket>,
    capacity: usize,
    /// Cumulative drop counter over the queue's lifetime.
    pub dropped_total: u64,
}

impl FlowQueue {
    pub fn new(capacity: usize) -> Self {
        FlowQueue {
            packets: VecDeque::new(),
            capacity,
            dropped_total: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn head(&self) -> Option<&QueuedPacket> {
        self.packets.front()
    }

    /// Enqueues a packet, dropping it (and counting the drop) at capacity.
    /// Returns whether the packet was accepted.
    pub fn offer(&mut self, arrival: f64, size_bits: f64) -> bool {
        if self.packets.len() >= self.capacity {
            self.dropped_total += 1;
            return false;
        }
        self.packets.push_back(QueuedPacket {
            arrival,
            remaining_bits: size_bits,
            first_service: None,
        });
        true
    }

    /// Pre-fills the queue with backlog packets that arrived at `arrival`.
    /// Test and property-suite helper for saturated-queue scenarios.
    pub fn preload(&mut self, count: usize, arrival: f64, size_bits: f64) {
        for _ in 0..count {
            self.offer(arrival, size_bits);
        }
    }
}

/// Fresh per-flow queues for a realization.
pub fn fresh_queues(realization: &NetworkRealization) -> Vec<FlowQueue> {
    realization
        .flows
        .iter()
        .map(|_| FlowQueue::new(realization.config.queue_capacity_packets))
        .collect()
}

/// Per-slice round-robin cursors. A cursor indexes into the slice's member
/// list and points at the next flow to consider.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SliceSchedulerState {
    pub cursors: [usize; 3],
}

impl SliceSchedulerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// QoS outcome of one flow over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWindowMetrics {
    /// Delivered throughput (bps/Hz against the full band).
    pub throughput: f64,
    /// Window latency (ms): max over packets completed this window, or the
    /// head-of-line age when backlog exists but nothing completed. Absent
    /// when the flow neither transmitted nor holds queued packets.
    pub latency_ms: Option<f64>,
    /// Packets offered to the queue this window (accepted or dropped).
    pub generated: u64,
    /// Packets fully transmitted this window.
    pub transmitted: u64,
    /// Packets dropped at the queue this window.
    pub dropped: u64,
    pub queued_start: u64,
    pub queued_end: u64,
}

/// QoS metrics of every flow for one slicing window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window: usize,
    pub flows: Vec<FlowWindowMetrics>,
}

impl WindowMetrics {
    /// Packet balance: offered + carried-in = completed + dropped + carried-out.
    pub fn conserves_packets(&self) -> bool {
        self.flows.iter().all(|f| {
            f.generated + f.queued_start == f.transmitted + f.dropped + f.queued_end
        })
    }
}

/// One scheduler decision, for the optional per-slot debug log.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotEvent {
    pub slot: usize,
    pub slice: usize,
    pub flow: usize,
    pub bits_served: f64,
    pub queue_len: usize,
}

/// CSV export of a per-slot event log.
pub fn slot_events_to_csv(events: &[SlotEvent]) -> String {
    let mut out = String::from("slot,slice,flow,bits_served,queue_len\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{:.1},{}\n",
            e.slot, e.slice, e.flow, e.bits_served, e.queue_len
        ));
    }
    out
}

/// Full instantaneous rate of a flow (bps/Hz): its category's bandwidth
/// fraction times the Shannon spectral efficiency of its current gain.
pub fn instantaneous_rate(
    allocation: &SliceAllocation,
    flow: &FlowSpec,
    h: f64,
    config: &NetworkConfig,
) -> f64 {
    allocation.component(flow.sla) * shannon_rate(h, config.noise_power, config.log_base)
}

/// Latency of a completed packet.
///
/// `service_start` is the absolute time the packet's first bit went on air,
/// so `service_start - arrival` is the queueing delay. The conventional mode
/// adds the transmission airtime `P / (rate * W)` and reports milliseconds.
/// The literal mode instead evaluates the ratio form
/// `(tau_j - alpha_j) / P + 1 / (rate * P)` with the spectral rate as-is,
/// kept for fidelity comparisons.
pub fn packet_latency(
    arrival: f64,
    service_start: f64,
    rate_bps_hz: f64,
    config: &NetworkConfig,
) -> f64 {
    debug_assert!(service_start >= arrival);
    debug_assert!(rate_bps_hz > 0.0);
    let queueing = service_start - arrival;
    match config.latency_mode {
        LatencyMode::Conventional => {
            let airtime = config.packet_size_bits / (rate_bps_hz * config.bandwidth_hz);
            (queueing + airtime) * 1e3
        }
        LatencyMode::Literal => {
            queueing / config.packet_size_bits + 1.0 / (rate_bps_hz * config.packet_size_bits)
        }
    }
}

/// Simulates one slicing window under a fixed allocation.
///
/// Per slot and per slice: arrivals with timestamps up to the slot end are
/// enqueued (drop-tail), the round-robin cursor advances to the next
/// backlogged flow, and that flow transmits `rate * W * slot` bits from its
/// queue head, completing zero or more packets. Queue and scheduler state
/// are mutated in place and carry across windows within an episode.
pub fn simulate_window(
    realization: &NetworkRealization,
    window_index: usize,
    allocation: &SliceAllocation,
    queues: &mut [FlowQueue],
    scheduler: &mut SliceSchedulerState,
    arrivals: &ArrivalTrace,
    channel: &ChannelTrace,
    mut event_log: Option<&mut Vec<SlotEvent>>,
) -> Result<WindowMetrics> {
    let config = &realization.config;
    let n_flows = realization.flows.len();
    if arrivals.window != window_index || channel.window != window_index {
        return Err(Error::precondition(format!(
            "trace/window mismatch: arrivals {} channel {} window {}",
            arrivals.window, channel.window, window_index
        )));
    }
    if arrivals.arrivals.len() != n_flows || channel.gains.len() != n_flows {
        return Err(Error::precondition(
            "trace does not cover every flow".to_string(),
        ));
    }
    if queues.len() != n_flows {
        return Err(Error::precondition("queue/flow count mismatch".to_string()));
    }
    if !allocation.as_array().iter().all(|p| p.is_finite() && *p >= 0.0) {
        return Err(Error::precondition(format!(
            "allocation components must be nonnegative, got {:?}",
            allocation.as_array()
        )));
    }

    let slots = config.slots_per_window();
    let delta = config.slot_duration;
    let tau_max = config.window_duration;
    let window_start = window_index as f64 * tau_max;
    let bandwidth = config.bandwidth_hz;
    let packet_bits = config.packet_size_bits;

    // Per-flow instantaneous rate, constant within the window (block fading).
    let rates: Vec<f64> = realization
        .flows
        .iter()
        .zip(&channel.gains)
        .map(|(flow, &h)| instantaneous_rate(allocation, flow, h, config))
        .collect();

    let members: [Vec<usize>; 3] = [
        realization.slice_members(SlaCategory::HighThroughput),
        realization.slice_members(SlaCategory::LowLatency),
        realization.slice_members(SlaCategory::BestEffort),
    ];

    let mut generated = vec![0u64; n_flows];
    let mut transmitted = vec![0u64; n_flows];
    let mut dropped = vec![0u64; n_flows];
    let mut bits_tx = vec![0.0f64; n_flows];
    let mut max_latency = vec![f64::NEG_INFINITY; n_flows];
    let queued_start: Vec<u64> = queues.iter().map(|q| q.len() as u64).collect();
    let mut arrival_ptr = vec![0usize; n_flows];

    for slot in 0..slots {
        let slot_start = window_start + slot as f64 * delta;
        let slot_end_local = (slot + 1) as f64 * delta;

        // Admit every arrival with a timestamp up to the slot end.
        for flow in 0..n_flows {
            let stamps = &arrivals.arrivals[flow];
            while arrival_ptr[flow] < stamps.len() && stamps[arrival_ptr[flow]] < slot_end_local {
                let ts = window_start + stamps[arrival_ptr[flow]];
                generated[flow] += 1;
                if !queues[flow].offer(ts, packet_bits) {
                    dropped[flow] += 1;
                }
                arrival_ptr[flow] += 1;
            }
        }

        // Each slice independently serves its round-robin pick.
        for (slice, slice_members) in members.iter().enumerate() {
            if slice_members.is_empty() {
                continue;
            }
            let n_m = slice_members.len();
            let cursor = scheduler.cursors[slice] % n_m;
            let picked = (0..n_m)
                .map(|k| (cursor + k) % n_m)
                .find(|&pos| !queues[slice_members[pos]].is_empty());
            let Some(pos) = picked else {
                continue; // no backlog anywhere in the slice: idle slot
            };
            let flow = slice_members[pos];
            scheduler.cursors[slice] = (pos + 1) % n_m;

            let rate = rates[flow];
            let mut capacity_bits = rate * bandwidth * delta;
            let mut served_bits = 0.0;
            while capacity_bits > BITS_EPS {
                let Some(head) = queues[flow].packets.front_mut() else {
                    break;
                };
                if head.first_service.is_none() {
                    // Service order within the slot positions the packet's
                    // start time; it can never precede the arrival itself.
                    let offset = served_bits / (rate * bandwidth);
                    head.first_service = Some((slot_start + offset).max(head.arrival));
                }
                let take = head.remaining_bits.min(capacity_bits);
                head.remaining_bits -= take;
                capacity_bits -= take;
                served_bits += take;
                if head.remaining_bits <= BITS_EPS {
                    let done = queues[flow].packets.pop_front().expect("head exists");
                    transmitted[flow] += 1;
                    let latency = packet_latency(
                        done.arrival,
                        done.first_service.expect("served packet has start time"),
                        rate,
                        config,
                    );
                    if latency > max_latency[flow] {
                        max_latency[flow] = latency;
                    }
                }
            }
            bits_tx[flow] += served_bits;

            if let Some(log) = event_log.as_deref_mut() {
                log.push(SlotEvent {
                    slot,
                    slice,
                    flow,
                    bits_served: served_bits,
                    queue_len: queues[flow].len(),
                });
            }
        }
    }

    let window_end = window_start + tau_max;
    let flows_out: Vec<FlowWindowMetrics> = (0..n_flows)
        .map(|flow| {
            let latency_ms = if transmitted[flow] > 0 {
                Some(max_latency[flow])
            } else {
                // Nothing completed: report the age of the head-of-line
                // packet so a starved backlog still registers as latency.
                queues[flow]
                    .head()
                    .map(|head| (window_end - head.arrival) * 1e3)
            };
            FlowWindowMetrics {
                throughput: bits_tx[flow] / (bandwidth * tau_max),
                latency_ms,
                generated: generated[flow],
                transmitted: transmitted[flow],
                dropped: dropped[flow],
                queued_start: queued_start[flow],
                queued_end: queues[flow].len() as u64,
            }
        })
        .collect();

    let metrics = WindowMetrics {
        window: window_index,
        flows: flows_out,
    };
    debug_assert!(metrics.conserves_packets());
    Ok(metrics)
}
