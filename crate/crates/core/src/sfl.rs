//! Synchronous federated averaging: every round the server broadcasts the
//! global model, all clients train from it, and the server replaces it with
//! the sample-weighted average of the local models.

use rayon::prelude::*;

use crate::engine::{record, Evaluator, LocalTrainer, RunOutput, RunSettings};
use crate::error::{Error, Result};
use crate::metrics::Algorithm;
use crate::model::{weighted_sum, ModelVector};
use crate::timing::sfl_round;

/// Global model and the local models of one round.
#[derive(Debug, Clone)]
pub struct SflRoundState {
    pub round: u64,
    pub global: ModelVector,
    pub locals: Vec<ModelVector>,
}

/// Trains every client from `state.global` and aggregates. Client training
/// runs in parallel; the reduction sums in client order.
pub fn fedavg_round(
    global: &ModelVector,
    round: u64,
    settings: &RunSettings,
    trainer: &dyn LocalTrainer,
) -> Result<SflRoundState> {
    let locals = settings
        .profiles
        .par_iter()
        .map(|p| {
            let epochs = p.local_epochs;
            trainer.train(global, p.client_id, epochs, round * u64::from(epochs))
        })
        .collect::<Result<Vec<_>>>()?;
    let next = weighted_sum(&locals, &settings.coefficients)?;
    Ok(SflRoundState {
        round: round + 1,
        global: next,
        locals,
    })
}

pub fn run_fedavg(settings: &RunSettings, trainer: &dyn LocalTrainer, evaluator: &dyn Evaluator) -> Result<RunOutput> {
    settings.validate()?;
    let round_ticks = settings.round_ticks();
    let mut trace = Vec::new();
    let mut records = vec![record(evaluator, &settings.initial_model, 0, round_ticks, 0, Algorithm::Sfl, None)?];
    let mut global = settings.initial_model.clone();
    let mut clock = 0;
    for round in 0..settings.horizon_rounds {
        let end = sfl_round(&settings.profiles, clock, settings.record_trace.then_some(&mut trace))?;
        if end - clock != round_ticks {
            return Err(Error::Scheduler(format!(
                "round {round} took {} ticks, expected {round_ticks}",
                end - clock
            )));
        }
        clock = end;
        global = fedavg_round(&global, round, settings, trainer)?.global;
        let done = round + 1;
        if done % settings.eval_every == 0 || done == settings.horizon_rounds {
            records.push(record(evaluator, &global, clock, round_ticks, done, Algorithm::Sfl, None)?);
        }
    }
    Ok(RunOutput {
        records,
        final_model: global,
        aggregations: settings.horizon_rounds,
        sim_time: clock,
        aggregation_log: Vec::new(),
        trace,
    })
}
