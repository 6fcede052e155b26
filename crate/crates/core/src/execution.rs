//! Online execution of a trained slicing policy with dual-multiplier
//! dynamics, plus the classical baseline allocators.
//!
//! One execution run is sequential (the dual state is a feedback loop);
//! independent realizations run in parallel at the call sites.

use serde::{Deserialize, Serialize};

use crate::channel::{sample_fading, ChannelTrace};
use crate::domain::{
    arrival_estimates, build_state_vector, DualMultipliers, NetworkRealization,
    NetworkStateVector, SliceAllocation,
};
use crate::error::{Error, Result};
use crate::policy::{forward, PolicyInput, PolicyParams};
use crate::qos::{self, ConstraintValue};
use crate::simulator::{
    fresh_queues, simulate_window, FlowQueue, SliceSchedulerState, WindowMetrics,
};
use crate::traffic::{generate_arrivals, rate_path, ArrivalTrace};

/// Classical baseline allocators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Uniform,
    Proportional,
    TrafficWeighted,
}

/// Mutable world state of one episode: queues and the scheduler persist
/// across windows, the mean-rate path and the arrival estimates feed the
/// policy's state vector. Cloning the queue/scheduler pair gives the
/// common-random-numbers snapshot used by the gradient estimator.
pub struct EpisodeWorld<'a> {
    pub realization: &'a NetworkRealization,
    pub queues: Vec<FlowQueue>,
    pub scheduler: SliceSchedulerState,
    /// Mean traffic rates for every window of the episode.
    pub rates: Vec<Vec<f64>>,
    /// Arrival-rate estimates observed in the previous window.
    pub estimates: Vec<f64>,
    pub prev_metrics: Option<WindowMetrics>,
    pub window: usize,
}

impl<'a> EpisodeWorld<'a> {
    pub fn new(realization: &'a NetworkRealization) -> Self {
        EpisodeWorld {
            realization,
            queues: fresh_queues(realization),
            scheduler: SliceSchedulerState::new(),
            rates: rate_path(realization),
            estimates: realization.flows.iter().map(|f| f.mu_init).collect(),
            prev_metrics: None,
            window: 0,
        }
    }

    /// State vector for the current window (mu_init cold start at window 0).
    pub fn state_vector(&self) -> Result<NetworkStateVector> {
        build_state_vector(
            self.realization,
            self.prev_metrics.as_ref(),
            &self.estimates,
        )
    }

    /// Regenerates the current window's traffic and channel traces.
    pub fn traces(&self) -> Result<(ArrivalTrace, ChannelTrace)> {
        let arrivals = generate_arrivals(
            &self.rates[self.window],
            &self.realization.config,
            self.window,
            self.realization.traffic_seed,
        )?;
        let channel = sample_fading(self.realization, self.window)?;
        Ok((arrivals, channel))
    }

    /// Simulates the current window from a cloned snapshot without advancing
    /// the episode. Used by the finite-difference gradient estimator.
    pub fn simulate_snapshot(
        &self,
        allocation: &SliceAllocation,
        arrivals: &ArrivalTrace,
        channel: &ChannelTrace,
    ) -> Result<WindowMetrics> {
        let mut queues = self.queues.clone();
        let mut scheduler = self.scheduler;
        simulate_window(
            self.realization,
            self.window,
            allocation,
            &mut queues,
            &mut scheduler,
            arrivals,
            channel,
            None,
        )
    }

    /// Simulates the current window for real and advances to the next one.
    pub fn step(
        &mut self,
        allocation: &SliceAllocation,
        arrivals: &ArrivalTrace,
        channel: &ChannelTrace,
    ) -> Result<WindowMetrics> {
        let metrics = simulate_window(
            self.realization,
            self.window,
            allocation,
            &mut self.queues,
            &mut self.scheduler,
            arrivals,
            channel,
            None,
        )?;
        self.estimates = arrival_estimates(&metrics, &self.realization.config);
        self.prev_metrics = Some(metrics.clone());
        self.window += 1;
        Ok(metrics)
    }
}

/// Per-window record of an executed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub t: usize,
    pub allocation: SliceAllocation,
    /// Dual multipliers fed to the policy for this window.
    pub lambda: DualMultipliers,
    pub f_h: f64,
    pub f_l: f64,
    /// Maximization-form objective (mean best-effort throughput).
    pub objective: f64,
}

/// Full outcome of one executed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<WindowRecord>,
    pub metrics: Vec<WindowMetrics>,
    /// Dual iterates after each update (lambda_0 excluded).
    pub dual_iterates: Vec<DualMultipliers>,
}

/// Flat JSON-lines row for trajectory dumps.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub p_h: f64,
    pub p_l: f64,
    pub p_b: f64,
    pub lambda_h: f64,
    pub lambda_l: f64,
    pub f_h: f64,
    pub f_l: f64,
    pub objective: f64,
}

impl Trajectory {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            let row = TrajectoryRow {
                t: r.t,
                p_h: r.allocation.p_h,
                p_l: r.allocation.p_l,
                p_b: r.allocation.p_b,
                lambda_h: r.lambda.lambda_h,
                lambda_l: r.lambda.lambda_l,
                f_h: r.f_h,
                f_l: r.f_l,
                objective: r.objective,
            };
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// The projected online dual update over one block of `t0` windows:
/// `lambda' = [lambda + (eta / t0) * sum_t f_t]_+`.
pub fn dual_update(
    lambda: &DualMultipliers,
    block: &[ConstraintValue],
    eta_lambda: f64,
    t0: usize,
) -> DualMultipliers {
    let sum_h: f64 = block.iter().map(|f| f.f_h).sum();
    let sum_l: f64 = block.iter().map(|f| f.f_l).sum();
    let scale = eta_lambda / t0 as f64;
    DualMultipliers {
        lambda_h: (lambda.lambda_h + scale * sum_h).max(0.0),
        lambda_l: (lambda.lambda_l + scale * sum_l).max(0.0),
    }
}

/// Executes a trained state-augmented policy online: `lambda_0 = 0`, the
/// policy is fed `lambda_{floor(t / t0)}`, and after every `t0` windows the
/// duals take a projected step proportional to the accumulated constraint
/// slacks.
pub fn run_online(
    params: &PolicyParams,
    realization: &NetworkRealization,
    t_total: usize,
    t0: usize,
    eta_lambda: f64,
) -> Result<Trajectory> {
    if t0 == 0 || t_total % t0 != 0 {
        return Err(Error::precondition(format!(
            "dual period {t0} must divide horizon {t_total}"
        )));
    }
    if eta_lambda <= 0.0 {
        return Err(Error::precondition(
            "eta_lambda must be positive".to_string(),
        ));
    }
    if t_total > realization.config.num_windows {
        return Err(Error::precondition(format!(
            "horizon {t_total} exceeds configured windows {}",
            realization.config.num_windows
        )));
    }

    let qos = realization.config.qos;
    let flows = &realization.flows;
    let mut world = EpisodeWorld::new(realization);
    let mut lambda = DualMultipliers::zero();
    let mut records = Vec::with_capacity(t_total);
    let mut metrics_out = Vec::with_capacity(t_total);
    let mut dual_iterates = Vec::with_capacity(t_total / t0);
    let mut block: Vec<ConstraintValue> = Vec::with_capacity(t0);

    for t in 0..t_total {
        let state = world.state_vector()?;
        let out = forward(params, &PolicyInput::new(&state, &lambda))?;
        let (arrivals, channel) = world.traces()?;
        let metrics = world.step(&out.allocation, &arrivals, &channel)?;
        let f = qos::constraints(&metrics, &qos, flows)?;
        let objective = qos::objective(&metrics, flows)?;
        records.push(WindowRecord {
            t,
            allocation: out.allocation,
            lambda,
            f_h: f.f_h,
            f_l: f.f_l,
            objective,
        });
        metrics_out.push(metrics);
        block.push(f);
        if block.len() == t0 {
            lambda = dual_update(&lambda, &block, eta_lambda, t0);
            dual_iterates.push(lambda);
            block.clear();
        }
    }

    Ok(Trajectory {
        records,
        metrics: metrics_out,
        dual_iterates,
    })
}

/// Executes a policy with the dual input frozen at `lambda` for the whole
/// episode (how the conventional primal-dual baseline is deployed: its
/// final training multipliers are not adapted online).
pub fn run_fixed_lambda(
    params: &PolicyParams,
    realization: &NetworkRealization,
    lambda: DualMultipliers,
) -> Result<Trajectory> {
    let qos = realization.config.qos;
    let flows = &realization.flows;
    let t_total = realization.config.num_windows;
    let mut world = EpisodeWorld::new(realization);
    let mut records = Vec::with_capacity(t_total);
    let mut metrics_out = Vec::with_capacity(t_total);

    for t in 0..t_total {
        let state = world.state_vector()?;
        let out = forward(params, &PolicyInput::new(&state, &lambda))?;
        let (arrivals, channel) = world.traces()?;
        let metrics = world.step(&out.allocation, &arrivals, &channel)?;
        let f = qos::constraints(&metrics, &qos, flows)?;
        let objective = qos::objective(&metrics, flows)?;
        records.push(WindowRecord {
            t,
            allocation: out.allocation,
            lambda,
            f_h: f.f_h,
            f_l: f.f_l,
            objective,
        });
        metrics_out.push(metrics);
    }

    Ok(Trajectory {
        records,
        metrics: metrics_out,
        dual_iterates: Vec::new(),
    })
}

/// Classical baseline allocation for one window.
///
/// Uniform splits the band equally; proportional splits by flow counts;
/// traffic-weighted splits by current per-slice mean traffic demand and
/// falls back to proportional when total demand is zero.
pub fn baseline_allocation(
    kind: BaselineKind,
    realization: &NetworkRealization,
    current_rates: &[f64],
) -> Result<SliceAllocation> {
    let counts = realization.slice_counts();
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::precondition(
            "baseline requires at least one flow per slice".to_string(),
        ));
    }
    match kind {
        BaselineKind::Uniform => Ok(SliceAllocation::uniform()),
        BaselineKind::Proportional => {
            let n = realization.flows.len() as f64;
            SliceAllocation::new(
                counts[0] as f64 / n,
                counts[1] as f64 / n,
                counts[2] as f64 / n,
            )
        }
        BaselineKind::TrafficWeighted => {
            if current_rates.len() != realization.flows.len() {
                return Err(Error::precondition(
                    "traffic-weighted baseline needs one rate per flow".to_string(),
                ));
            }
            let mut demand = [0.0; 3];
            for (flow, &mu) in realization.flows.iter().zip(current_rates) {
                demand[flow.sla.index()] += mu;
            }
            let total: f64 = demand.iter().sum();
            if total <= 0.0 {
                return baseline_allocation(BaselineKind::Proportional, realization, current_rates);
            }
            SliceAllocation::new(demand[0] / total, demand[1] / total, demand[2] / total)
        }
    }
}

/// Runs a classical baseline over a full episode.
pub fn run_baseline(kind: BaselineKind, realization: &NetworkRealization) -> Result<Trajectory> {
    let qos = realization.config.qos;
    let flows = &realization.flows;
    let t_total = realization.config.num_windows;
    let mut world = EpisodeWorld::new(realization);
    let mut records = Vec::with_capacity(t_total);
    let mut metrics_out = Vec::with_capacity(t_total);

    for t in 0..t_total {
        let allocation = baseline_allocation(kind, realization, &world.rates[t])?;
        let (arrivals, channel) = world.traces()?;
        let metrics = world.step(&allocation, &arrivals, &channel)?;
        let f = qos::constraints(&metrics, &qos, flows)?;
        let objective = qos::objective(&metrics, flows)?;
        records.push(WindowRecord {
            t,
            allocation,
            lambda: DualMultipliers::zero(),
            f_h: f.f_h,
            f_l: f.f_l,
            objective,
        });
        metrics_out.push(metrics);
    }

    Ok(Trajectory {
        records,
        metrics: metrics_out,
        dual_iterates: Vec::new(),
    })
}
