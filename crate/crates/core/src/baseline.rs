//! Baseline asynchronous aggregation whose per-iteration blend weights are
//! solved so that one trunk of single-client aggregations reproduces the
//! synchronous weighted average.
//!
//! With schedule `phi` (client `phi[k]` uploads in iteration `k + 1`) the
//! trunk result is `sum_k alpha[phi[k]] * w^{phi[k]}` exactly when
//! `1 - beta_M = alpha[phi[M]]` and
//! `alpha[phi[k]] = (1 - beta_k) * prod_{l > k} beta_l` for `k < M`.

use rayon::prelude::*;

use crate::engine::{record, AggregationLog, Evaluator, LocalTrainer, RunOutput, RunSettings};
use crate::error::{Error, Result};
use crate::metrics::Algorithm;
use crate::model::{convex_blend, ModelVector, COEFFICIENT_SUM_TOLERANCE};
use crate::timing::{AsyncTimeline, ClientId, ClientProfile, GrantPolicy, TrunkOrder};

/// Largest accepted gap between the input weights and the weights implied by
/// the solved schedule.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;

/// Slack below zero tolerated on a solved coefficient before it is clamped.
const NEGATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    /// `schedule[k]` uploads in iteration `k + 1` of every trunk.
    pub schedule: Vec<ClientId>,
    /// `betas[k]` is the weight kept on the global model in iteration `k + 1`.
    pub betas: Vec<f64>,
}

impl BetaSchedule {
    /// Per-client weights implied by the schedule.
    pub fn implied_alphas(&self) -> Vec<f64> {
        let m = self.betas.len();
        let mut alphas = vec![0.0; m];
        let mut survive = 1.0;
        for k in (0..m).rev() {
            alphas[self.schedule[k]] = (1.0 - self.betas[k]) * survive;
            survive *= self.betas[k];
        }
        alphas
    }
}

fn check_permutation(schedule: &[ClientId], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    for &c in schedule {
        if c >= m || std::mem::replace(&mut seen[c], true) {
            return Err(Error::Solver(format!(
                "schedule {schedule:?} is not a permutation of {m} clients"
            )));
        }
    }
    if schedule.len() != m {
        return Err(Error::Solver(format!(
            "schedule has {} entries for {m} clients",
            schedule.len()
        )));
    }
    Ok(())
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Solver("no clients".into()));
    }
    if let Some((m, a)) = alphas
        .iter()
        .enumerate()
        .find(|(_, a)| !(a.is_finite() && **a > 0.0 && **a <= 1.0))
    {
        return Err(Error::Solver(format!("alpha[{m}] = {a} is outside (0, 1]")));
    }
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > COEFFICIENT_SUM_TOLERANCE {
        return Err(Error::Solver(format!("alphas sum to {sum:e}, expected 1")));
    }
    Ok(())
}

/// Backward recursion: `beta_M = 1 - alpha[phi[M]]`, then
/// `beta_k = 1 - alpha[phi[k]] / prod_{l > k} beta_l` down to `k = 1`.
pub fn solve_betas(alphas: &[f64], schedule: &[ClientId]) -> Result<BetaSchedule> {
    check_alphas(alphas)?;
    check_permutation(schedule, alphas.len())?;
    let m = alphas.len();
    let mut betas = vec![0.0; m];
    let mut survive = 1.0;
    for k in (0..m).rev() {
        if survive == 0.0 {
            return Err(Error::Solver(format!(
                "surviving weight vanished before iteration {}",
                k + 1
            )));
        }
        let mut beta = 1.0 - alphas[schedule[k]] / survive;
        if beta < 0.0 {
            if beta < -NEGATIVE_SLACK {
                return Err(Error::Solver(format!(
                    "iteration {} needs a negative weight {beta}",
                    k + 1
                )));
            }
            beta = 0.0;
        }
        betas[k] = beta;
        survive *= beta;
    }
    // The first upload replaces the global model outright; the recursion
    // gives 1 - alpha/alpha up to rounding.
    betas[0] = 0.0;
    let solved = BetaSchedule {
        schedule: schedule.to_vec(),
        betas,
    };
    let implied = solved.implied_alphas();
    if let Some((c, (a, b))) = alphas
        .iter()
        .zip(&implied)
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > RECONSTRUCTION_TOLERANCE)
    {
        return Err(Error::Solver(format!(
            "numerically unstable: client {c} weight {a} reconstructs as {b}"
        )));
    }
    Ok(solved)
}

/// Effective per-client weights after one pass of the naive scheme that
/// blends with `alpha` directly (`w <- (1 - a) w + a w^m`), and the weight
/// left on the starting model.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficients {
    pub per_client: Vec<f64>,
    pub residual: f64,
}

pub fn effective_coefficients(alphas: &[f64], schedule: &[ClientId]) -> Result<EffectiveCoefficients> {
    check_alphas(alphas)?;
    check_permutation(schedule, alphas.len())?;
    let mut per_client = vec![0.0; alphas.len()];
    let mut survive = 1.0;
    for &c in schedule.iter().rev() {
        per_client[c] = alphas[c] * survive;
        survive *= 1.0 - alphas[c];
    }
    Ok(EffectiveCoefficients {
        per_client,
        residual: survive,
    })
}

/// Clients ordered by ascending pass time, ties by id.
pub fn fastest_first(profiles: &[ClientProfile]) -> Vec<ClientId> {
    let mut order: Vec<ClientId> = (0..profiles.len()).collect();
    order.sort_by_key(|&c| (profiles[c].pass_time(), c));
    order
}

/// Trunk-structured asynchronous run: every trunk, all clients train from
/// the trunk-start model, upload in `schedule` order, and each upload is
/// blended with the solved weight. Clients idle after their download until
/// the trunk's last download, which carries the trunk result to everyone.
pub fn run_baseline_afl(
    settings: &RunSettings,
    schedule: &[ClientId],
    trainer: &dyn LocalTrainer,
    evaluator: &dyn Evaluator,
) -> Result<RunOutput> {
    settings.validate()?;
    let solved = solve_betas(&settings.coefficients, schedule)?;
    let m = schedule.len();
    let round_ticks = settings.round_ticks();

    let mut timeline = AsyncTimeline::new(
        settings.profiles.clone(),
        GrantPolicy::Trunk {
            order: TrunkOrder::Fixed(schedule.to_vec()),
            barrier: true,
        },
    )?;
    if settings.record_trace {
        timeline = timeline.with_trace();
    }

    let mut global = settings.initial_model.clone();
    let mut iteration = 0u64;
    let mut trunk = 0u64;
    let mut trunk_start_iteration = 0u64;
    let mut locals: Option<Vec<ModelVector>> = None;
    let mut log = Vec::new();
    let mut records = Vec::new();

    for t in settings.eval_times() {
        while let Some(up) = timeline.next_upload(t)? {
            let pos = (iteration % m as u64) as usize;
            if up.client_id != schedule[pos] {
                return Err(Error::Scheduler(format!(
                    "client {} uploaded in position {pos}, schedule expects {}",
                    up.client_id, schedule[pos]
                )));
            }
            let trained = match &locals {
                Some(l) => l,
                None => {
                    let start = &global;
                    let l = settings
                        .profiles
                        .par_iter()
                        .map(|p| {
                            let e = p.local_epochs;
                            trainer.train(start, p.client_id, e, trunk * u64::from(e))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    locals.insert(l)
                }
            };
            let beta = solved.betas[pos];
            global = convex_blend(&global, &trained[up.client_id], beta)?;
            iteration += 1;
            log.push(AggregationLog {
                time: up.time,
                client_id: up.client_id,
                iteration,
                basis_iteration: trunk_start_iteration,
                local_weight: 1.0 - beta,
            });
            if pos + 1 == m {
                trunk += 1;
                trunk_start_iteration = iteration;
                locals = None;
            }
        }
        records.push(record(evaluator, &global, t, round_ticks, iteration, Algorithm::AflBaseline, None)?);
    }

    Ok(RunOutput {
        records,
        final_model: global,
        aggregations: iteration,
        sim_time: settings.horizon_ticks(),
        aggregation_log: log,
        trace: timeline.take_trace().unwrap_or_default(),
    })
}
