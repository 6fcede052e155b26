//! Offline trainers: the state-augmented primal-dual algorithm and the
//! conventional primal-dual baseline, plus realization sampling, the
//! finite-difference logit-gradient estimator and lambda_max calibration.
//!
//! The packet simulator is not analytically differentiable, so per-window
//! logit gradients come from central differences in logit space under common
//! random numbers: the window is re-simulated from an identical queue
//! snapshot and identical traces with the softmax input perturbed one
//! coordinate at a time. Chaining those through the MLP's exact backward
//! pass yields the parameter gradient of the empirical Lagrangian.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::channel::{sample_mean_snr, ChannelTrace};
use crate::domain::{
    DualMultipliers, FlowSpec, NetworkConfig, NetworkRealization, SlaCategory,
};
use crate::error::{Error, Result};
use crate::execution::{run_online, EpisodeWorld, Trajectory};
use crate::policy::{backward, forward, init_params, PolicyInput, PolicyParams, OUTPUT_DIM};
use crate::qos;
use crate::report::{violation_rates, EvaluatedRun};
use crate::seeds::{self, stream};
use crate::traffic::{ArrivalTrace, INIT_RATE_HB, INIT_RATE_L};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_epochs: usize,
    pub batch_size: usize,
    /// Primal (Adam) learning rate eta_phi.
    pub learning_rate: f64,
    /// Dual step size of the conventional primal-dual iteration.
    pub eta_lambda_pd: f64,
    /// Online dual step size of the state-augmented execution phase.
    pub eta_lambda: f64,
    /// Initial per-constraint sampling caps for the augmenting multipliers.
    pub lambda_max_init: [f64; 2],
    /// Central-difference step in logit space.
    pub fd_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_epochs: 100,
            batch_size: 4,
            learning_rate: 1e-4,
            eta_lambda_pd: 0.1,
            eta_lambda: 1.0,
            lambda_max_init: [1.0, 1.0],
            fd_epsilon: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Flat-state Adam optimizer over the policy parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    pub learning_rate: f64,
}

impl Adam {
    pub fn new(param_count: usize, config: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_epsilon,
            learning_rate: config.learning_rate,
        }
    }

    /// One descent step in place.
    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams) -> Result<()> {
        let g = grads.to_flat();
        let mut p = params.to_flat();
        if g.len() != self.m.len() || p.len() != self.m.len() {
            return Err(Error::Shape("optimizer/parameter size mismatch".to_string()));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..p.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        *params = params.from_flat(&p)?;
        Ok(())
    }
}

/// All SLA compositions `(n_h, n_l, n_b)` with one flow minimum per
/// category, in lexicographic order.
pub fn enumerate_compositions(num_flows: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for n_h in 1..=num_flows.saturating_sub(2) {
        for n_l in 1..=num_flows - n_h - 1 {
            out.push([n_h, n_l, num_flows - n_h - n_l]);
        }
    }
    out
}

/// Samples `count` network realizations from the configured distribution:
/// the SLA composition is uniform over all compositions with at least one
/// flow per category, initial rates follow the per-category uniform ranges,
/// mean SNRs the configured uniform dB range, and each realization gets
/// fresh traffic and channel seeds.
pub fn sample_realizations<R: Rng>(
    count: usize,
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<Vec<NetworkRealization>> {
    if count == 0 {
        return Err(Error::precondition("count must be at least 1".to_string()));
    }
    let compositions = enumerate_compositions(config.num_flows);
    if compositions.is_empty() {
        return Err(Error::config(format!(
            "num_flows {} cannot host three SLA categories",
            config.num_flows
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let comp = compositions[rng.random_range(0..compositions.len())];
        let mut flows = Vec::with_capacity(config.num_flows);
        let mut id = 0;
        for (slot, sla) in [
            SlaCategory::HighThroughput,
            SlaCategory::LowLatency,
            SlaCategory::BestEffort,
        ]
        .iter()
        .enumerate()
        {
            for _ in 0..comp[slot] {
                let (lo, hi) = match sla {
                    SlaCategory::LowLatency => INIT_RATE_L,
                    _ => INIT_RATE_HB,
                };
                flows.push(FlowSpec {
                    id,
                    sla: *sla,
                    mu_init: rng.random_range(lo..hi),
                    mean_snr_db: sample_mean_snr(rng, config.snr_min_db, config.snr_max_db),
                });
                id += 1;
            }
        }
        let traffic_seed: u64 = rng.random();
        let channel_seed: u64 = rng.random();
        out.push(NetworkRealization::new(
            config.clone(),
            flows,
            traffic_seed,
            channel_seed,
        )?);
    }
    Ok(out)
}

/// Central-difference gradient of the per-window Lagrangian with respect to
/// the policy logits, under common random numbers.
///
/// For each logit coordinate the window is re-simulated from the same queue
/// snapshot and traces with the allocation `softmax(logits +- eps * e_k)`;
/// the spread of the per-window Lagrangian integrand gives the derivative.
pub fn estimate_logit_gradient(
    world: &EpisodeWorld,
    arrivals: &ArrivalTrace,
    channel: &ChannelTrace,
    logits: &[f64; OUTPUT_DIM],
    lambda: &DualMultipliers,
    fd_epsilon: f64,
) -> Result<[f64; OUTPUT_DIM]> {
    let qos_spec = world.realization.config.qos;
    let flows = &world.realization.flows;
    let mut grad = [0.0; OUTPUT_DIM];
    for k in 0..OUTPUT_DIM {
        let mut value = [0.0; 2];
        for (sign_idx, sign) in [1.0, -1.0].iter().enumerate() {
            let mut perturbed = *logits;
            perturbed[k] += sign * fd_epsilon;
            let p = crate::policy::softmax(&perturbed);
            let allocation = crate::domain::SliceAllocation::new(p[0], p[1], p[2])?;
            let metrics = world.simulate_snapshot(&allocation, arrivals, channel)?;
            value[sign_idx] = qos::window_lagrangian(&metrics, lambda, &qos_spec, flows)?;
        }
        grad[k] = (value[0] - value[1]) / (2.0 * fd_epsilon);
    }
    Ok(grad)
}

/// Gradient and Lagrangian of one full training episode at a fixed
/// augmenting multiplier. Queues persist across the episode's windows and
/// start empty.
pub fn episode_gradient(
    params: &PolicyParams,
    realization: &NetworkRealization,
    lambda: &DualMultipliers,
    config: &TrainConfig,
) -> Result<(PolicyParams, f64)> {
    let qos_spec = realization.config.qos;
    let flows = &realization.flows;
    let t_total = realization.config.num_windows;
    let mut world = EpisodeWorld::new(realization);
    let mut grad = PolicyParams::zeros();
    let mut lagrangian_sum = 0.0;

    for _ in 0..t_total {
        let state = world.state_vector()?;
        let out = forward(params, &PolicyInput::new(&state, lambda))?;
        let (arrivals, channel) = world.traces()?;
        let dl_dlogits = estimate_logit_gradient(
            &world,
            &arrivals,
            &channel,
            &out.logits,
            lambda,
            config.fd_epsilon,
        )?;
        let g = backward(params, &out.cache, &dl_dlogits)?;
        grad.axpy(1.0, &g)?;
        let metrics = world.step(&out.allocation, &arrivals, &channel)?;
        lagrangian_sum += qos::window_lagrangian(&metrics, lambda, &qos_spec, flows)?;
    }

    grad.scale(1.0 / t_total as f64);
    Ok((grad, lagrangian_sum / t_total as f64))
}

/// Mean gradient and mean Lagrangian over a batch of (realization, lambda)
/// pairs: the empirical Lagrangian of one optimizer step. Batch elements
/// evaluate in parallel; the reduction order is fixed, so results are
/// deterministic for a given seed regardless of thread count.
pub fn batch_step(
    params: &PolicyParams,
    batch: &[(&NetworkRealization, DualMultipliers)],
    config: &TrainConfig,
) -> Result<(PolicyParams, f64)> {
    if batch.is_empty() {
        return Err(Error::precondition("empty batch".to_string()));
    }
    let results: Vec<Result<(PolicyParams, f64)>> = batch
        .par_iter()
        .map(|(realization, lambda)| episode_gradient(params, realization, lambda, config))
        .collect();

    let mut grad = PolicyParams::zeros();
    let mut lagrangian = 0.0;
    for result in results {
        let (g, l) = result?;
        grad.axpy(1.0, &g)?;
        lagrangian += l;
    }
    let scale = 1.0 / batch.len() as f64;
    grad.scale(scale);
    lagrangian *= scale;
    if !lagrangian.is_finite() {
        return Err(Error::Diverged(format!(
            "empirical Lagrangian is {lagrangian}"
        )));
    }
    Ok((grad, lagrangian))
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub val_objective: f64,
    pub val_f_h: f64,
    pub val_f_l: f64,
    pub lambda_max_h: f64,
    pub lambda_max_l: f64,
    pub wall_time_s: f64,
}

/// Training log with CSV export.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,val_objective,val_f_h,val_f_l,lambda_max_h,lambda_max_l,wall_time_s\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}\n",
                e.epoch, e.val_objective, e.val_f_h, e.val_f_l, e.lambda_max_h, e.lambda_max_l,
                e.wall_time_s
            ));
        }
        out
    }
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: TrainingLog,
    /// Dual iterates of the conventional primal-dual trainer (one per
    /// optimizer step); empty for the state-augmented trainer.
    pub dual_trajectory: Vec<DualMultipliers>,
    /// The multiplier pair deployed with `params` by the conventional
    /// primal-dual policy (zero for the state-augmented trainer, whose
    /// multipliers are online state).
    pub pd_lambda: DualMultipliers,
}

/// Mean objective and constraint values over a set of executed trajectories.
fn validation_stats(trajectories: &[Trajectory]) -> (f64, f64, f64) {
    let mut objective = 0.0;
    let mut f_h = 0.0;
    let mut f_l = 0.0;
    let mut count = 0usize;
    for trajectory in trajectories {
        for record in &trajectory.records {
            objective += record.objective;
            f_h += record.f_h;
            f_l += record.f_l;
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    (objective / n, f_h / n, f_l / n)
}

/// Runs the online dual dynamics on a validation set and returns the
/// recalibrated sampling caps: 1.1x the largest dual iterate seen per
/// component, floored at 1.0. Also returns the executed trajectories so a
/// caller can reuse them for logging.
pub fn calibrate_lambda_max(
    params: &PolicyParams,
    val_set: &[NetworkRealization],
    config: &TrainConfig,
) -> Result<([f64; 2], Vec<Trajectory>)> {
    let trajectories: Vec<Result<Trajectory>> = val_set
        .par_iter()
        .map(|r| {
            run_online(
                params,
                r,
                r.config.num_windows,
                r.config.dual_period,
                config.eta_lambda,
            )
        })
        .collect();
    let mut observed = [0.0f64; 2];
    let mut out = Vec::with_capacity(val_set.len());
    for trajectory in trajectories {
        let trajectory = trajectory?;
        for lambda in &trajectory.dual_iterates {
            observed[0] = observed[0].max(lambda.lambda_h);
            observed[1] = observed[1].max(lambda.lambda_l);
        }
        out.push(trajectory);
    }
    Ok((
        [
            (1.1 * observed[0]).max(1.0),
            (1.1 * observed[1]).max(1.0),
        ],
        out,
    ))
}

/// Applies the calibration rule to an already-observed maximum.
pub fn lambda_max_from_observed(observed: f64) -> f64 {
    (1.1 * observed).max(1.0)
}

/// Validation score used for iterate selection: ergodic feasibility first,
/// best-effort objective as the tiebreak. Lower is better.
fn selection_score(
    val_set: &[NetworkRealization],
    trajectories: &[Trajectory],
    mean_objective: f64,
) -> Result<f64> {
    let runs: Vec<EvaluatedRun> = val_set
        .iter()
        .zip(trajectories)
        .map(|(realization, trajectory)| EvaluatedRun {
            realization: realization.clone(),
            trajectory: trajectory.clone(),
        })
        .collect();
    let qos = val_set[0].config.qos;
    let rates = violation_rates(&runs, &qos)?;
    Ok(rates.h_erg.max(rates.l_erg) + 0.01 * (rates.h_erg + rates.l_erg) - 1e-4 * mean_objective)
}

/// Offline training of the state-augmented policy.
///
/// Per epoch the train set is shuffled into batches; every batch element
/// runs a full episode under a fresh augmenting multiplier drawn uniformly
/// from `[0, lambda_max]` per component (fixed for that episode), and one
/// Adam step descends the empirical Lagrangian. At each epoch end the
/// sampling caps are recalibrated by running the online dual dynamics on the
/// validation set, and the same validation runs drive iterate selection:
/// the returned parameters are the epoch checkpoint with the best validation
/// feasibility, the practical estimate of the expected-Lagrangian minimizer.
pub fn train_state_augmented(
    train_set: &[NetworkRealization],
    val_set: &[NetworkRealization],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::precondition(
            "train and validation sets must be nonempty".to_string(),
        ));
    }
    let mut params = init_params(&mut seeds::rng(config.seed, stream::INIT, 0));
    let mut adam = Adam::new(params.flat_len(), config);
    let mut lambda_max = config.lambda_max_init;
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, PolicyParams)> = None;
    let start = Instant::now();

    for epoch in 0..config.num_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seeds::rng(config.seed, stream::SHUFFLE, epoch as u64));

        for (batch_idx, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let mut lambda_rng = seeds::rng(
                config.seed,
                stream::LAMBDA,
                (epoch * 1_000_003 + batch_idx) as u64,
            );
            let batch: Vec<(&NetworkRealization, DualMultipliers)> = chunk
                .iter()
                .map(|&idx| {
                    let lambda = DualMultipliers {
                        lambda_h: lambda_rng.random_range(0.0..lambda_max[0]),
                        lambda_l: lambda_rng.random_range(0.0..lambda_max[1]),
                    };
                    (&train_set[idx], lambda)
                })
                .collect();
            let (grad, _lagrangian) = batch_step(&params, &batch, config)?;
            adam.step(&mut params, &grad)?;
            if !params.is_finite() {
                return Err(Error::Diverged("non-finite parameters".to_string()));
            }
        }

        let (new_lambda_max, val_trajectories) =
            calibrate_lambda_max(&params, val_set, config)?;
        lambda_max = new_lambda_max;
        let (val_objective, val_f_h, val_f_l) = validation_stats(&val_trajectories);
        let score = selection_score(val_set, &val_trajectories, val_objective)?;
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, params.clone()));
        }
        log.epochs.push(EpochLog {
            epoch,
            val_objective,
            val_f_h,
            val_f_l,
            lambda_max_h: lambda_max[0],
            lambda_max_l: lambda_max[1],
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainOutcome {
        params: best.map(|(_, p)| p).unwrap_or(params),
        log,
        dual_trajectory: Vec::new(),
        pd_lambda: DualMultipliers::zero(),
    })
}

/// One projected dual ascent step of the conventional primal-dual iteration.
pub fn pd_dual_step(
    lambda: &DualMultipliers,
    mean_constraint: [f64; 2],
    eta: f64,
) -> DualMultipliers {
    DualMultipliers {
        lambda_h: (lambda.lambda_h + eta * mean_constraint[0]).max(0.0),
        lambda_l: (lambda.lambda_l + eta * mean_constraint[1]).max(0.0),
    }
}

/// Conventional primal-dual training: a single shared multiplier pair is
/// fed to the policy, alternating one Adam step on the batch Lagrangian with
/// one projected dual ascent step on the batch-mean constraint values.
pub fn train_vanilla_pd(
    train_set: &[NetworkRealization],
    val_set: &[NetworkRealization],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::precondition("train set must be nonempty".to_string()));
    }
    let mut params = init_params(&mut seeds::rng(config.seed, stream::INIT, 1));
    let mut adam = Adam::new(params.flat_len(), config);
    let mut lambda = DualMultipliers::zero();
    let mut dual_trajectory = vec![lambda];
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, PolicyParams, DualMultipliers)> = None;
    let start = Instant::now();

    for epoch in 0..config.num_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seeds::rng(config.seed, stream::SHUFFLE, 7_000_000 + epoch as u64));

        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<(&NetworkRealization, DualMultipliers)> =
                chunk.iter().map(|&idx| (&train_set[idx], lambda)).collect();

            // Primal step on the batch Lagrangian at the current multiplier.
            let (grad, _lagrangian) = batch_step(&params, &batch, config)?;
            adam.step(&mut params, &grad)?;
            if !params.is_finite() {
                return Err(Error::Diverged("non-finite parameters".to_string()));
            }

            // Dual step on the batch-mean episode constraints.
            let constraints: Vec<Result<[f64; 2]>> = batch
                .par_iter()
                .map(|(realization, lam)| {
                    episode_mean_constraints(&params, realization, lam)
                })
                .collect();
            let mut mean = [0.0f64; 2];
            for c in constraints {
                let c = c?;
                mean[0] += c[0];
                mean[1] += c[1];
            }
            mean[0] /= batch.len() as f64;
            mean[1] /= batch.len() as f64;
            lambda = pd_dual_step(&lambda, mean, config.eta_lambda_pd);
            dual_trajectory.push(lambda);
        }

        if !val_set.is_empty() {
            let trajectories: Vec<Result<Trajectory>> = val_set
                .par_iter()
                .map(|r| crate::execution::run_fixed_lambda(&params, r, lambda))
                .collect();
            let trajectories: Vec<Trajectory> =
                trajectories.into_iter().collect::<Result<_>>()?;
            let (val_objective, val_f_h, val_f_l) = validation_stats(&trajectories);
            let score = selection_score(val_set, &trajectories, val_objective)?;
            if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
                best = Some((score, params.clone(), lambda));
            }
            log.epochs.push(EpochLog {
                epoch,
                val_objective,
                val_f_h,
                val_f_l,
                lambda_max_h: lambda.lambda_h,
                lambda_max_l: lambda.lambda_l,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }

    let (params, pd_lambda) = match best {
        Some((_, p, l)) => (p, l),
        None => (params, lambda),
    };
    Ok(TrainOutcome {
        params,
        log,
        dual_trajectory,
        pd_lambda,
    })
}

/// Episode-mean constraint values under a fixed multiplier input.
fn episode_mean_constraints(
    params: &PolicyParams,
    realization: &NetworkRealization,
    lambda: &DualMultipliers,
) -> Result<[f64; 2]> {
    let trajectory = crate::execution::run_fixed_lambda(params, realization, *lambda)?;
    let n = trajectory.records.len().max(1) as f64;
    let f_h: f64 = trajectory.records.iter().map(|r| r.f_h).sum::<f64>() / n;
    let f_l: f64 = trajectory.records.iter().map(|r| r.f_l).sum::<f64>() / n;
    Ok([f_h, f_l])
}
