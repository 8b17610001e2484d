//! Pieces shared by the three learning engines.

use serde::Serialize;

use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::metrics::{Algorithm, MetricsRecord};
use crate::model::{evaluate, train_local, EpochSeed, Evaluation, LearnerSpec, ModelVector, SgdConfig};
use crate::timing::{validate_profiles, ClientId, ClientProfile, SimEvent, Ticks};

/// Local training of one client.
pub trait LocalTrainer: Sync {
    /// Trains `client` from `model` for `epochs` epochs; `first_epoch` is the
    /// client's running epoch counter and selects the shuffle streams.
    fn train(&self, model: &ModelVector, client: ClientId, epochs: u32, first_epoch: u64) -> Result<ModelVector>;
}

/// Scores a global model.
pub trait Evaluator: Sync {
    fn evaluate(&self, model: &ModelVector) -> Result<Evaluation>;
}

/// Mini-batch SGD on each client's partition.
#[derive(Debug, Clone, Copy)]
pub struct SgdTrainer<'a> {
    pub data: &'a Dataset,
    pub partition: &'a PartitionPlan,
    pub spec: &'a LearnerSpec,
    pub sgd: SgdConfig,
    pub master_seed: u64,
}

impl LocalTrainer for SgdTrainer<'_> {
    fn train(&self, model: &ModelVector, client: ClientId, epochs: u32, first_epoch: u64) -> Result<ModelVector> {
        let cfg = SgdConfig { local_epochs: epochs, ..self.sgd };
        let seed = EpochSeed { master: self.master_seed, client, first_epoch };
        train_local(model, self.data, self.partition.client(client), &cfg, self.spec, seed)
    }
}

/// Accuracy and loss on a held-out test set.
#[derive(Debug, Clone, Copy)]
pub struct TestSetEvaluator<'a> {
    pub test: &'a Dataset,
    pub spec: &'a LearnerSpec,
}

impl Evaluator for TestSetEvaluator<'_> {
    fn evaluate(&self, model: &ModelVector) -> Result<Evaluation> {
        evaluate(model, self.test, self.spec)
    }
}

/// Inputs common to every engine.
#[derive(Debug, Clone)]
pub struct RunSettings {
    /// Per-client timing; `local_epochs` is the base epoch count.
    pub profiles: Vec<ClientProfile>,
    /// Sample-count weights `|D_m| / sum |D_c|`.
    pub coefficients: Vec<f64>,
    pub initial_model: ModelVector,
    /// Simulated run length in synchronous rounds.
    pub horizon_rounds: u64,
    /// Evaluate every this many rounds of simulated time.
    pub eval_every: u64,
    pub record_trace: bool,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        validate_profiles(&self.profiles)?;
        if self.coefficients.len() != self.profiles.len() {
            return Err(Error::Config(format!(
                "{} coefficients for {} clients",
                self.coefficients.len(),
                self.profiles.len()
            )));
        }
        if self.horizon_rounds == 0 || self.eval_every == 0 {
            return Err(Error::Config("horizon and evaluation cadence must be positive".into()));
        }
        Ok(())
    }

    /// Length of one synchronous round, the unit of relative time.
    pub fn round_ticks(&self) -> Ticks {
        round_ticks(&self.profiles)
    }

    pub fn horizon_ticks(&self) -> Ticks {
        self.horizon_rounds * self.round_ticks()
    }

    /// Evaluation instants: 0, every `eval_every` rounds, and the horizon.
    pub fn eval_times(&self) -> Vec<Ticks> {
        let step = self.eval_every * self.round_ticks();
        let end = self.horizon_ticks();
        let mut times: Vec<Ticks> = (0..).map(|k| k * step).take_while(|&t| t <= end).collect();
        if times.last() != Some(&end) {
            times.push(end);
        }
        times
    }
}

/// `download + slowest pass + M * upload` for the given profiles.
pub fn round_ticks(profiles: &[ClientProfile]) -> Ticks {
    let slowest = profiles.iter().map(ClientProfile::pass_time).max().unwrap_or(0);
    let download = profiles.iter().map(|p| p.download_time).max().unwrap_or(0);
    let upload: Ticks = profiles.iter().map(|p| p.upload_time).sum();
    download + slowest + upload
}

/// One asynchronous aggregation `w <- beta * w + (1 - beta) * local`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregationLog {
    pub time: Ticks,
    pub client_id: ClientId,
    /// Global iteration produced by this aggregation (first is 1).
    pub iteration: u64,
    /// Iteration of the global model the client trained from.
    pub basis_iteration: u64,
    /// Coefficient of the local model, `1 - beta`.
    pub local_weight: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub final_model: ModelVector,
    /// Rounds (synchronous) or aggregations (asynchronous).
    pub aggregations: u64,
    pub sim_time: Ticks,
    pub aggregation_log: Vec<AggregationLog>,
    pub trace: Vec<SimEvent>,
}

pub(crate) fn record(
    evaluator: &dyn Evaluator,
    model: &ModelVector,
    time: Ticks,
    round_ticks: Ticks,
    iteration: u64,
    algorithm: Algorithm,
    gamma: Option<f64>,
) -> Result<MetricsRecord> {
    let eval = evaluator.evaluate(model)?;
    Ok(MetricsRecord {
        sim_time: time,
        relative_time: time as f64 / round_ticks as f64,
        iteration,
        loss: eval.loss,
        accuracy: eval.accuracy,
        algorithm,
        gamma,
    })
}
