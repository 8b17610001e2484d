use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::learner::Workspace;
use super::{LearnerSpec, ModelVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: u32,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            batch_size: 5,
            local_epochs: 1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Identifies the shuffle stream of a training call: epoch `e` of the call
/// shuffles with `hash(master, client, first_epoch + e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochSeed {
    pub master: u64,
    pub client: usize,
    pub first_epoch: u64,
}

/// One gradient step `model - lr * mean_grad(batch)`.
pub fn local_sgd_step(
    model: &ModelVector,
    data: &Dataset,
    batch: &[usize],
    learning_rate: f64,
    spec: &LearnerSpec,
) -> Result<ModelVector> {
    spec.check_model(model)?;
    spec.check_data(data)?;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut params = model.as_slice().to_vec();
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; params.len()];
    step_in_place(&mut ws, &mut params, &mut grad, data, batch, learning_rate)?;
    Ok(ModelVector::new(params))
}

fn step_in_place(
    ws: &mut Workspace,
    params: &mut [f64],
    grad: &mut [f64],
    data: &Dataset,
    batch: &[usize],
    learning_rate: f64,
) -> Result<()> {
    ws.loss_and_gradient(params, data, batch, grad);
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            index,
            value: grad[index],
        });
    }
    for (p, g) in params.iter_mut().zip(grad.iter()) {
        *p -= learning_rate * g;
    }
    Ok(())
}

/// `cfg.local_epochs` epochs of mini-batch SGD over `partition`, each epoch a
/// fresh Fisher-Yates shuffle cut into batches of `cfg.batch_size` (the last
/// batch may be short).
pub fn train_local(
    model: &ModelVector,
    data: &Dataset,
    partition: &[usize],
    cfg: &SgdConfig,
    spec: &LearnerSpec,
    seed: EpochSeed,
) -> Result<ModelVector> {
    if partition.is_empty() {
        return Err(Error::Config(format!(
            "client {} has an empty partition",
            seed.client
        )));
    }
    cfg.validate()?;
    spec.check_model(model)?;
    spec.check_data(data)?;

    let mut params = model.as_slice().to_vec();
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::new(spec);
    let mut order = partition.to_vec();
    for e in 0..u64::from(cfg.local_epochs) {
        order.copy_from_slice(partition);
        let mut rng = seed::rng(seed::shuffle_seed(seed.master, seed.client, seed.first_epoch + e));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step_in_place(&mut ws, &mut params, &mut grad, data, batch, cfg.learning_rate)?;
        }
    }
    Ok(ModelVector::new(params))
}
