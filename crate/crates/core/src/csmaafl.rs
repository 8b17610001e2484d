//! Asynchronous federated learning with slot-request client scheduling,
//! adaptive local epochs and staleness-decayed aggregation.
//!
//! On every upload the server forms
//! `w_j = beta * w_{j-1} + (1 - beta) * w_i^m` with local weight
//! `1 - beta = min(1, mu / (gamma * j * (j - i)))`, where `i` is the
//! iteration the client trained from and `mu` is a moving average of
//! `j - i`. The new model goes back to the uploading client only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{record, AggregationLog, Evaluator, LocalTrainer, RunOutput, RunSettings};
use crate::error::{Error, Result};
use crate::metrics::Algorithm;
use crate::model::{convex_blend, ModelVector};
use crate::seed;
use crate::timing::{AsyncTimeline, ClientId, ClientProfile, GrantPolicy, Ticks, TrunkOrder};

/// Local weight of an upload at iteration `j` trained from iteration `i`.
pub fn staleness_weight(j: u64, i: u64, mu: f64, gamma: f64) -> Result<f64> {
    if j <= i {
        return Err(Error::Staleness { j, i });
    }
    if !(mu > 0.0 && gamma > 0.0) {
        return Err(Error::Config(format!(
            "moving average ({mu}) and gamma ({gamma}) must be positive"
        )));
    }
    let denom = gamma * j as f64 * (j - i) as f64;
    Ok((mu / denom).min(1.0))
}

/// `rho * mu + (1 - rho) * gap`.
pub fn update_moving_average(mu: f64, gap: u64, rho: f64) -> f64 {
    rho * mu + (1.0 - rho) * gap as f64
}

fn median(values: &mut [Ticks]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Local epochs per client, `clamp(round(median / compute * base), 1, max)`:
/// fast clients train longer and slow ones shorter.
pub fn adapt_local_iterations(profiles: &[ClientProfile], base: u32, max: u32) -> Result<Vec<u32>> {
    if profiles.is_empty() {
        return Ok(Vec::new());
    }
    if base == 0 || max == 0 {
        return Err(Error::Config("local epoch bounds must be positive".into()));
    }
    if let Some(p) = profiles.iter().find(|p| p.compute_time == 0) {
        return Err(Error::Config(format!("client {} has zero compute time", p.client_id)));
    }
    let mut times: Vec<Ticks> = profiles.iter().map(|p| p.compute_time).collect();
    let med = median(&mut times);
    Ok(profiles
        .iter()
        .map(|p| {
            let e = (med / p.compute_time as f64 * f64::from(base)).round();
            e.clamp(1.0, f64::from(max)) as u32
        })
        .collect())
}

/// Seeded upload order for one trunk.
pub fn randomized_trunk_schedule(clients: usize, trunk_index: u64, seed: u64) -> Vec<ClientId> {
    let mut order: Vec<ClientId> = (0..clients).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::STREAM_TRUNK, trunk_index, 0)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerMode {
    /// First-come slot requests with the staleness tie-break.
    Slot,
    /// Each client uploads once per trunk in a seeded random order.
    RandomizedTrunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsmaaflParams {
    pub gamma: f64,
    /// Moving-average factor.
    pub rho: f64,
    pub mu_init: f64,
    pub scheduler: SchedulerMode,
    pub max_local_epochs: u32,
    /// Seed of the randomized trunk orders.
    pub seed: u64,
}

impl CsmaaflParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.mu_init > 0.0 && self.mu_init.is_finite()) {
            return Err(Error::Config(format!("initial moving average must be positive, got {}", self.mu_init)));
        }
        if self.max_local_epochs == 0 {
            return Err(Error::Config("max local epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Server-side aggregation state.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationState {
    pub global: ModelVector,
    /// Number of aggregations performed; the initial model is iteration 0.
    pub iteration: u64,
    pub mu: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl AggregationState {
    pub fn new(initial: ModelVector, mu: f64, gamma: f64, rho: f64) -> Self {
        AggregationState {
            global: initial,
            iteration: 0,
            mu,
            gamma,
            rho,
        }
    }

    /// Blends `local`, trained from iteration `basis`, into the global model
    /// and returns the local weight used. The moving average absorbs the new
    /// gap after the weight is computed.
    pub fn aggregate(&mut self, local: &ModelVector, basis: u64) -> Result<f64> {
        let j = self.iteration + 1;
        let weight = staleness_weight(j, basis, self.mu, self.gamma)?;
        self.global = convex_blend(&self.global, local, 1.0 - weight)?;
        self.mu = update_moving_average(self.mu, j - basis, self.rho);
        self.iteration = j;
        Ok(weight)
    }
}

struct ClientState {
    basis_model: ModelVector,
    basis_iteration: u64,
    epochs_done: u64,
}

pub fn run_csmaafl(
    settings: &RunSettings,
    params: &CsmaaflParams,
    trainer: &dyn LocalTrainer,
    evaluator: &dyn Evaluator,
) -> Result<RunOutput> {
    settings.validate()?;
    params.validate()?;
    let round_ticks = settings.round_ticks();

    let base = settings.profiles.iter().map(|p| p.local_epochs).max().unwrap_or(1);
    let epochs = adapt_local_iterations(&settings.profiles, base, params.max_local_epochs.max(base))?;
    let profiles: Vec<ClientProfile> = settings
        .profiles
        .iter()
        .zip(&epochs)
        .map(|(p, &e)| ClientProfile { local_epochs: e, ..*p })
        .collect();

    let policy = match params.scheduler {
        SchedulerMode::Slot => GrantPolicy::Slot,
        SchedulerMode::RandomizedTrunk => GrantPolicy::Trunk {
            order: TrunkOrder::Randomized { seed: params.seed },
            barrier: false,
        },
    };
    let mut timeline = AsyncTimeline::new(profiles, policy)?;
    if settings.record_trace {
        timeline = timeline.with_trace();
    }

    let mut state = AggregationState::new(settings.initial_model.clone(), params.mu_init, params.gamma, params.rho);
    let mut clients: Vec<ClientState> = (0..settings.profiles.len())
        .map(|_| ClientState {
            basis_model: settings.initial_model.clone(),
            basis_iteration: 0,
            epochs_done: 0,
        })
        .collect();
    let mut log = Vec::new();
    let mut records = Vec::new();

    for t in settings.eval_times() {
        while let Some(up) = timeline.next_upload(t)? {
            let c = up.client_id;
            let e = epochs[c];
            let client = &mut clients[c];
            let local = trainer.train(&client.basis_model, c, e, client.epochs_done)?;
            client.epochs_done += u64::from(e);
            let weight = state.aggregate(&local, client.basis_iteration)?;
            log.push(AggregationLog {
                time: up.time,
                client_id: c,
                iteration: state.iteration,
                basis_iteration: client.basis_iteration,
                local_weight: weight,
            });
            client.basis_model = state.global.clone();
            client.basis_iteration = state.iteration;
        }
        records.push(record(
            evaluator,
            &state.global,
            t,
            round_ticks,
            state.iteration,
            Algorithm::Csmaafl,
            Some(params.gamma),
        )?);
    }

    Ok(RunOutput {
        records,
        final_model: state.global,
        aggregations: state.iteration,
        sim_time: settings.horizon_ticks(),
        aggregation_log: log,
        trace: timeline.take_trace().unwrap_or_default(),
    })
}
