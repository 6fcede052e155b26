//! Objective, constraint functions and Lagrangian evaluation.
//!
//! Internally everything is kept in minimization form: the objective term is
//! the negated mean best-effort throughput, constraints are normalized so
//! that feasibility means "at most zero". Reports convert back to the
//! maximization-form objective for display.

use crate::domain::{DualMultipliers, FlowSpec, QosSpec, SlaCategory};
use crate::error::{Error, Result};
use crate::simulator::WindowMetrics;

/// Normalized per-window constraint values: `f_h` for the worst-case
/// throughput slack among H flows, `f_l` for the worst-case latency slack
/// among L flows. Nonpositive means satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintValue {
    pub f_h: f64,
    pub f_l: f64,
}

/// Worst-case normalized throughput slack over high-throughput flows:
/// `max_i (1 - r_i / r_min)`. Negative iff every H flow met its target.
pub fn throughput_constraint(
    window: &WindowMetrics,
    qos: &QosSpec,
    flows: &[FlowSpec],
) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for (flow, m) in flows.iter().zip(&window.flows) {
        if flow.sla == SlaCategory::HighThroughput {
            let slack = 1.0 - m.throughput / qos.r_min;
            worst = Some(worst.map_or(slack, |w: f64| w.max(slack)));
        }
    }
    worst.ok_or_else(|| Error::precondition("no high-throughput flows".to_string()))
}

/// Ceiling of the latency constraint value. The throughput constraint is
/// bounded above by 1 (at zero delivered rate); head-of-line ages are not,
/// so the latency value is clipped to the same ceiling to keep the two
/// constraints on similar dynamic ranges for the scalar dual step size.
pub const LATENCY_CONSTRAINT_CEIL: f64 = 1.0;

/// Worst-case normalized latency slack over low-latency flows:
/// `max_i (ell_i / ell_max - 1)`, with absent latency treated as 0 ms and
/// the result clipped at [`LATENCY_CONSTRAINT_CEIL`].
pub fn latency_constraint(
    window: &WindowMetrics,
    qos: &QosSpec,
    flows: &[FlowSpec],
) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for (flow, m) in flows.iter().zip(&window.flows) {
        if flow.sla == SlaCategory::LowLatency {
            let latency = m.latency_ms.unwrap_or(0.0);
            let slack = (latency / qos.ell_max - 1.0).min(LATENCY_CONSTRAINT_CEIL);
            worst = Some(worst.map_or(slack, |w: f64| w.max(slack)));
        }
    }
    worst.ok_or_else(|| Error::precondition("no low-latency flows".to_string()))
}

/// Mean throughput over best-effort flows (the maximization-form objective).
pub fn objective(window: &WindowMetrics, flows: &[FlowSpec]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (flow, m) in flows.iter().zip(&window.flows) {
        if flow.sla == SlaCategory::BestEffort {
            sum += m.throughput;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::precondition("no best-effort flows".to_string()));
    }
    Ok(sum / count as f64)
}

/// Both constraint values for one window.
pub fn constraints(
    window: &WindowMetrics,
    qos: &QosSpec,
    flows: &[FlowSpec],
) -> Result<ConstraintValue> {
    Ok(ConstraintValue {
        f_h: throughput_constraint(window, qos, flows)?,
        f_l: latency_constraint(window, qos, flows)?,
    })
}

/// The per-window Lagrangian integrand in minimization form:
/// `-objective + lambda_h * f_h + lambda_l * f_l`.
pub fn window_lagrangian(
    window: &WindowMetrics,
    lambda: &DualMultipliers,
    qos: &QosSpec,
    flows: &[FlowSpec],
) -> Result<f64> {
    let f = constraints(window, qos, flows)?;
    Ok(-objective(window, flows)? + lambda.lambda_h * f.f_h + lambda.lambda_l * f.f_l)
}

/// Trajectory Lagrangian: mean of the per-window integrand over the windows.
pub fn lagrangian(
    trajectory: &[WindowMetrics],
    lambda: &DualMultipliers,
    qos: &QosSpec,
    flows: &[FlowSpec],
) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::precondition("empty trajectory".to_string()));
    }
    let mut sum = 0.0;
    for window in trajectory {
        sum += window_lagrangian(window, lambda, qos, flows)?;
    }
    Ok(sum / trajectory.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::FlowWindowMetrics;

    fn flow(id: usize, sla: SlaCategory) -> FlowSpec {
        FlowSpec { id, sla, mu_init: 1.0, mean_snr_db: 15.0 }
    }

    fn metrics_for(throughputs: &[f64], latencies: &[Option<f64>]) -> WindowMetrics {
        WindowMetrics {
            window: 0,
            flows: throughputs
                .iter()
                .zip(latencies)
                .map(|(&throughput, &latency_ms)| FlowWindowMetrics {
                    throughput,
                    latency_ms,
                    generated: 0,
                    transmitted: 0,
                    dropped: 0,
                    queued_start: 0,
                    queued_end: 0,
                })
                .collect(),
        }
    }

    fn hlb_flows() -> Vec<FlowSpec> {
        vec![
            flow(0, SlaCategory::HighThroughput),
            flow(1, SlaCategory::HighThroughput),
            flow(2, SlaCategory::LowLatency),
            flow(3, SlaCategory::LowLatency),
            flow(4, SlaCategory::BestEffort),
        ]
    }

    #[test]
    fn throughput_constraint_at_target_is_zero() {
        let qos = QosSpec::new(1.0, 10.0);
        let m = metrics_for(&[1.0, 1.0, 0.0, 0.0, 0.0], &[None; 5]);
        let f = throughput_constraint(&m, &qos, &hlb_flows()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn throughput_constraint_takes_the_worst_flow() {
        // r in {0.5, 1.2}, r_min = 1.0 -> max(0.5, -0.2) = 0.5
        let qos = QosSpec::new(1.0, 10.0);
        let m = metrics_for(&[0.5, 1.2, 0.0, 0.0, 0.0], &[None; 5]);
        let f = throughput_constraint(&m, &qos, &hlb_flows()).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn throughput_constraint_double_target_is_minus_one() {
        let qos = QosSpec::new(1.0, 10.0);
        let flows = vec![flow(0, SlaCategory::HighThroughput)];
        let m = metrics_for(&[2.0], &[None]);
        let f = throughput_constraint(&m, &qos, &flows).unwrap();
        assert!((f + 1.0).abs() < 1e-12);
    }

    #[test]
    fn latency_constraint_boundary_and_worst_case() {
        let qos = QosSpec::new(1.0, 10.0);
        let at_target = metrics_for(
            &[0.0; 5],
            &[None, None, Some(10.0), Some(10.0), None],
        );
        assert_eq!(latency_constraint(&at_target, &qos, &hlb_flows()).unwrap(), 0.0);

        // {5 ms, 12 ms} with ell_max 10 -> 0.2
        let mixed = metrics_for(&[0.0; 5], &[None, None, Some(5.0), Some(12.0), None]);
        let f = latency_constraint(&mixed, &qos, &hlb_flows()).unwrap();
        assert!((f - 0.2).abs() < 1e-12);
    }

    #[test]
    fn latency_constraint_is_clipped_at_the_ceiling() {
        let qos = QosSpec::new(1.0, 10.0);
        // 300 ms of head-of-line age: raw value 29, clipped to 1
        let m = metrics_for(&[0.0; 5], &[None, None, Some(300.0), Some(3.0), None]);
        let f = latency_constraint(&m, &qos, &hlb_flows()).unwrap();
        assert_eq!(f, LATENCY_CONSTRAINT_CEIL);
    }

    #[test]
    fn absent_latency_counts_as_zero_milliseconds() {
        let qos = QosSpec::new(1.0, 10.0);
        let idle = metrics_for(&[0.0; 5], &[None; 5]);
        let f = latency_constraint(&idle, &qos, &hlb_flows()).unwrap();
        assert!((f + 1.0).abs() < 1e-12);
    }

    #[test]
    fn objective_is_mean_best_effort_throughput() {
        let flows = vec![
            flow(0, SlaCategory::HighThroughput),
            flow(1, SlaCategory::LowLatency),
            flow(2, SlaCategory::BestEffort),
            flow(3, SlaCategory::BestEffort),
            flow(4, SlaCategory::BestEffort),
        ];
        let single = metrics_for(&[0.0, 0.0, 1.5, 0.0, 0.0], &[None; 5]);
        let only_first = objective(
            &single,
            &flows[..3].to_vec(),
        );
        assert!((only_first.unwrap() - 1.5).abs() < 1e-12);

        let m = metrics_for(&[0.0, 0.0, 1.0, 2.0, 3.0], &[None; 5]);
        assert!((objective(&m, &flows).unwrap() - 2.0).abs() < 1e-12);

        let zeros = metrics_for(&[0.0; 5], &[None; 5]);
        assert_eq!(objective(&zeros, &flows).unwrap(), 0.0);
    }

    #[test]
    fn missing_categories_are_errors() {
        let qos = QosSpec::new(1.0, 10.0);
        let flows = vec![flow(0, SlaCategory::BestEffort)];
        let m = metrics_for(&[1.0], &[None]);
        assert!(throughput_constraint(&m, &qos, &flows).is_err());
        assert!(latency_constraint(&m, &qos, &flows).is_err());
        assert!(objective(&m, &[flow(0, SlaCategory::HighThroughput)]).is_err());
    }

    #[test]
    fn lagrangian_with_zero_multipliers_is_negated_objective() {
        let qos = QosSpec::new(1.0, 10.0);
        let m = metrics_for(&[1.0, 1.0, 0.0, 0.0, 2.5], &[None; 5]);
        let value =
            lagrangian(&[m], &DualMultipliers::zero(), &qos, &hlb_flows()).unwrap();
        assert!((value + 2.5).abs() < 1e-12);
    }

    #[test]
    fn lagrangian_single_window_direct_evaluation() {
        // objective 2, f = (0.5, -0.2), lambda = (1, 1) -> -2 + 0.5 - 0.2 = -1.7
        let qos = QosSpec::new(1.0, 10.0);
        // H flow at 0.5 -> f_h = 0.5; L latency 8 ms -> f_l = -0.2; B at 2.0
        let m = metrics_for(
            &[0.5, 0.0, 0.0],
            &[None, Some(8.0), None],
        );
        let flows = vec![
            flow(0, SlaCategory::HighThroughput),
            flow(1, SlaCategory::LowLatency),
            flow(2, SlaCategory::BestEffort),
        ];
        let m = WindowMetrics {
            flows: {
                let mut f = m.flows;
                f[2].throughput = 2.0;
                f
            },
            ..m
        };
        let lambda = DualMultipliers::new(1.0, 1.0).unwrap();
        let value = lagrangian(&[m], &lambda, &qos, &flows).unwrap();
        assert!((value + 1.7).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn lagrangian_is_affine_in_lambda() {
        let qos = QosSpec::new(1.0, 10.0);
        let m = metrics_for(
            &[0.4, 1.3, 0.0, 0.0, 1.1],
            &[None, None, Some(14.0), Some(3.0), None],
        );
        let flows = hlb_flows();
        let base = lagrangian(&[m.clone()], &DualMultipliers::zero(), &qos, &flows).unwrap();
        let l1 = lagrangian(
            &[m.clone()],
            &DualMultipliers::new(2.0, 0.0).unwrap(),
            &qos,
            &flows,
        )
        .unwrap();
        let l2 = lagrangian(
            &[m.clone()],
            &DualMultipliers::new(4.0, 0.0).unwrap(),
            &qos,
            &flows,
        )
        .unwrap();
        // doubling lambda_h doubles that term's contribution exactly
        assert!(((l2 - base) - 2.0 * (l1 - base)).abs() < 1e-12);
    }

    #[test]
    fn constraints_invariant_to_flow_permutation_within_category() {
        let qos = QosSpec::new(1.0, 10.0);
        let flows = hlb_flows();
        let a = metrics_for(
            &[0.5, 1.2, 0.0, 0.0, 0.0],
            &[None, None, Some(5.0), Some(12.0), None],
        );
        let b = metrics_for(
            &[1.2, 0.5, 0.0, 0.0, 0.0],
            &[None, None, Some(12.0), Some(5.0), None],
        );
        assert_eq!(
            throughput_constraint(&a, &qos, &flows).unwrap(),
            throughput_constraint(&b, &qos, &flows).unwrap()
        );
        assert_eq!(
            latency_constraint(&a, &qos, &flows).unwrap(),
            latency_constraint(&b, &qos, &flows).unwrap()
        );
    }

    #[test]
    fn throughput_constraint_strictly_decreases_when_all_h_flows_improve() {
        let qos = QosSpec::new(1.0, 10.0);
        let flows = hlb_flows();
        let before = metrics_for(&[0.5, 0.9, 0.0, 0.0, 0.0], &[None; 5]);
        let after = metrics_for(&[0.7, 1.1, 0.0, 0.0, 0.0], &[None; 5]);
        assert!(
            throughput_constraint(&after, &qos, &flows).unwrap()
                < throughput_constraint(&before, &qos, &flows).unwrap()
        );
    }
}
