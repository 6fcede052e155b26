//! Aggregation of executed trajectories into the evaluation metrics:
//! instantaneous and ergodic QoS violation rates, per-window mean/99th
//! percentile curves, and the method-by-tolerance sweep table.

use serde::{Deserialize, Serialize};

use crate::domain::{DualMultipliers, NetworkRealization, QosSpec, SlaCategory};
use crate::error::{Error, Result};
use crate::execution::{run_baseline, run_fixed_lambda, run_online, BaselineKind, Trajectory};
use crate::policy::PolicyParams;
use rayon::prelude::*;

/// One realization together with its executed trajectory.
#[derive(Debug, Clone)]
pub struct EvaluatedRun {
    pub realization: NetworkRealization,
    pub trajectory: Trajectory,
}

/// Violation percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationRates {
    /// Fraction of (H flow, window) pairs below the throughput target.
    pub h_inst: f64,
    /// Fraction of H flows whose T-window average throughput misses it.
    pub h_erg: f64,
    /// Fraction of (L flow, window) pairs above the latency target.
    pub l_inst: f64,
    /// Fraction of L flows whose time-averaged window latency exceeds it.
    pub l_erg: f64,
}

impl ViolationRates {
    pub fn max_ergodic(&self) -> f64 {
        self.h_erg.max(self.l_erg)
    }
}

/// Counts instantaneous violations over (flow, window) pairs and ergodic
/// violations over flows, pooled across all runs. Absent window latency
/// counts as 0 ms (an idle flow violates nothing).
pub fn violation_rates(runs: &[EvaluatedRun], qos: &QosSpec) -> Result<ViolationRates> {
    if runs.is_empty() {
        return Err(Error::precondition("no trajectories supplied".to_string()));
    }
    let mut h_pairs = 0u64;
    let mut h_pair_violations = 0u64;
    let mut h_flows = 0u64;
    let mut h_flow_violations = 0u64;
    let mut l_pairs = 0u64;
    let mut l_pair_violations = 0u64;
    let mut l_flows = 0u64;
    let mut l_flow_violations = 0u64;

    for run in runs {
        let windows = &run.trajectory.metrics;
        if windows.is_empty() {
            return Err(Error::precondition("empty trajectory".to_string()));
        }
        let t_total = windows.len() as f64;
        for (i, flow) in run.realization.flows.iter().enumerate() {
            match flow.sla {
                SlaCategory::HighThroughput => {
                    h_flows += 1;
                    let mut sum = 0.0;
                    for w in windows {
                        let r = w.flows[i].throughput;
                        h_pairs += 1;
                        if r < qos.r_min {
                            h_pair_violations += 1;
                        }
                        sum += r;
                    }
                    if sum / t_total < qos.r_min {
                        h_flow_violations += 1;
                    }
                }
                SlaCategory::LowLatency => {
                    l_flows += 1;
                    let mut sum = 0.0;
                    for w in windows {
                        let latency = w.flows[i].latency_ms.unwrap_or(0.0);
                        l_pairs += 1;
                        if latency > qos.ell_max {
                            l_pair_violations += 1;
                        }
                        sum += latency;
                    }
                    if sum / t_total > qos.ell_max {
                        l_flow_violations += 1;
                    }
                }
                SlaCategory::BestEffort => {}
            }
        }
    }

    let pct = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    Ok(ViolationRates {
        h_inst: pct(h_pair_violations, h_pairs),
        h_erg: pct(h_flow_violations, h_flows),
        l_inst: pct(l_pair_violations, l_pairs),
        l_erg: pct(l_flow_violations, l_flows),
    })
}

/// Empirical quantile with linear interpolation on sorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-window mean and 99th-percentile curve of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub metric: String,
    pub mean: Vec<f64>,
    pub p99: Vec<f64>,
}

/// Mean and worst-case (99th percentile across realizations) curves of the
/// constraint values and the objective, per window index.
pub fn aggregate_curves(trajectories: &[&Trajectory]) -> Result<Vec<CurveSeries>> {
    if trajectories.len() < 2 {
        return Err(Error::precondition(
            "need at least two realizations to aggregate curves".to_string(),
        ));
    }
    let t_total = trajectories[0].records.len();
    if trajectories.iter().any(|t| t.records.len() != t_total) {
        return Err(Error::precondition(
            "trajectories must share the same horizon".to_string(),
        ));
    }
    let extract: [(&str, fn(&crate::execution::WindowRecord) -> f64); 3] = [
        ("f_h", |r| r.f_h),
        ("f_l", |r| r.f_l),
        ("objective", |r| r.objective),
    ];
    let mut out = Vec::with_capacity(3);
    for (name, get) in extract {
        let mut mean = Vec::with_capacity(t_total);
        let mut p99 = Vec::with_capacity(t_total);
        for t in 0..t_total {
            let values: Vec<f64> = trajectories.iter().map(|tr| get(&tr.records[t])).collect();
            mean.push(values.iter().sum::<f64>() / values.len() as f64);
            p99.push(percentile(&values, 0.99));
        }
        out.push(CurveSeries {
            metric: name.to_string(),
            mean,
            p99,
        });
    }
    Ok(out)
}

/// CSV export of curve series: `method,metric,window,mean,p99`.
pub fn curves_to_csv(method: &str, series: &[CurveSeries]) -> String {
    let mut out = String::from("method,metric,window,mean,p99\n");
    for s in series {
        for (t, (m, p)) in s.mean.iter().zip(&s.p99).enumerate() {
            out.push_str(&format!("{method},{},{t},{m:.6},{p:.6}\n", s.metric));
        }
    }
    out
}

/// A slicing method under evaluation.
#[derive(Debug, Clone)]
pub enum MethodSpec {
    /// State-augmented primal-dual checkpoint, executed with online duals.
    SaPd {
        params: PolicyParams,
        eta_lambda: f64,
    },
    /// Conventional primal-dual checkpoint with its frozen final multipliers.
    Pd(PolicyParams, DualMultipliers),
    Baseline(BaselineKind),
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::SaPd { .. } => "sapd",
            MethodSpec::Pd(..) => "pd",
            MethodSpec::Baseline(BaselineKind::Uniform) => "uniform",
            MethodSpec::Baseline(BaselineKind::Proportional) => "proportional",
            MethodSpec::Baseline(BaselineKind::TrafficWeighted) => "tw",
        }
    }

    /// Whether executed trajectories depend on the QoS thresholds (online
    /// dual dynamics react to the constraints; baselines do not).
    pub fn qos_sensitive(&self) -> bool {
        matches!(self, MethodSpec::SaPd { .. })
    }
}

/// Executes one method over the whole test set at the given QoS point.
pub fn evaluate_method(
    method: &MethodSpec,
    test_set: &[NetworkRealization],
    qos: &QosSpec,
) -> Result<Vec<EvaluatedRun>> {
    let runs: Vec<Result<EvaluatedRun>> = test_set
        .par_iter()
        .map(|r| {
            let mut realization = r.clone();
            realization.config.qos = *qos;
            let trajectory = match method {
                MethodSpec::SaPd { params, eta_lambda } => run_online(
                    params,
                    &realization,
                    realization.config.num_windows,
                    realization.config.dual_period,
                    *eta_lambda,
                )?,
                MethodSpec::Pd(params, lambda) => {
                    run_fixed_lambda(params, &realization, *lambda)?
                }
                MethodSpec::Baseline(kind) => run_baseline(*kind, &realization)?,
            };
            Ok(EvaluatedRun {
                realization,
                trajectory,
            })
        })
        .collect();
    runs.into_iter().collect()
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub r_min: f64,
    pub ell_max: f64,
    pub h_inst: f64,
    pub h_erg: f64,
    pub l_inst: f64,
    pub l_erg: f64,
}

/// Evaluates every method at every QoS grid point.
///
/// QoS-insensitive methods (baselines and the frozen primal-dual policy) are
/// simulated once and re-scored per grid point; the state-augmented method
/// reruns its online dual dynamics at each point with the same checkpoint.
pub fn sweep_table(
    methods: &[MethodSpec],
    grid: &[(f64, f64)],
    test_set: &[NetworkRealization],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::precondition("empty QoS grid".to_string()));
    }
    let mut rows = Vec::new();
    for method in methods {
        let insensitive_runs = if method.qos_sensitive() {
            None
        } else {
            Some(evaluate_method(
                method,
                test_set,
                &test_set
                    .first()
                    .map(|r| r.config.qos)
                    .unwrap_or(QosSpec::new(1.0, 10.0)),
            )?)
        };
        for &(r_min, ell_max) in grid {
            let qos = QosSpec::new(r_min, ell_max);
            let rates = match &insensitive_runs {
                Some(runs) => violation_rates(runs, &qos)?,
                None => violation_rates(&evaluate_method(method, test_set, &qos)?, &qos)?,
            };
            rows.push(SweepRow {
                method: method.name().to_string(),
                r_min,
                ell_max,
                h_inst: rates.h_inst,
                h_erg: rates.h_erg,
                l_inst: rates.l_inst,
                l_erg: rates.l_erg,
            });
        }
    }
    Ok(rows)
}

/// CSV export of the sweep table.
pub fn table_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,r_min,ell_max,h_inst,h_erg,l_inst,l_erg\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2},{:.2}\n",
            r.method, r.r_min, r.ell_max, r.h_inst, r.h_erg, r.l_inst, r.l_erg
        ));
    }
    out
}
