//! Builds data, partitions, timing profiles and the initial model from an
//! [`ExperimentConfig`], runs the selected engine and writes its metrics.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::baseline::{fastest_first, run_baseline_afl};
use crate::config::{DatasetSource, Distribution, ExperimentConfig, Heterogeneity};
use crate::csmaafl::{run_csmaafl, CsmaaflParams};
use crate::data::{load_idx, partition_iid, partition_label_shards, BlobCenters, Dataset, PartitionPlan};
use crate::engine::{RunOutput, RunSettings, SgdTrainer, TestSetEvaluator};
use crate::error::{Error, Result};
use crate::metrics::{write_csv, Algorithm};
use crate::model::{init_model, LearnerKind, LearnerSpec};
use crate::seed;
use crate::sfl::run_fedavg;
use crate::timing::{ClientProfile, Ticks};

/// Everything an engine needs, materialised from a configuration.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: PartitionPlan,
    pub spec: LearnerSpec,
    pub settings: RunSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub aggregations: u64,
    pub sim_time: Ticks,
    pub relative_time: f64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: final accuracy {:.4}, loss {:.4}, {} aggregations, simulated time {} ticks ({:.2} relative)",
            self.algorithm, self.final_accuracy, self.final_loss, self.aggregations, self.sim_time, self.relative_time
        )
    }
}

pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.dataset {
        DatasetSource::IdxFiles { train_images, train_labels, test_images, test_labels } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            if train.dim() != test.dim() {
                return Err(Error::Config(format!(
                    "train images have {} pixels but test images have {}",
                    train.dim(),
                    test.dim()
                )));
            }
            Ok((train, test))
        }
        DatasetSource::SynthBlobs { classes, dim, per_class, test_per_class, spread } => {
            let centers = BlobCenters::new(*classes, *dim, seed::derive(config.seed, seed::STREAM_SYNTH_TRAIN, 0, 0))?;
            let train = centers.sample(*per_class, *spread, seed::derive(config.seed, seed::STREAM_SYNTH_TRAIN, 1, 0))?;
            let test = centers.sample(*test_per_class, *spread, seed::derive(config.seed, seed::STREAM_SYNTH_TEST, 0, 0))?;
            Ok((train, test))
        }
    }
}

/// Per-client compute times `max(1, round(a_m * tau_base))`.
pub fn client_profiles(config: &ExperimentConfig) -> Vec<ClientProfile> {
    let t = &config.timing;
    let factors: Vec<f64> = match &t.heterogeneity {
        Heterogeneity::Explicit(f) => f.clone(),
        Heterogeneity::Uniform { min, max } if min == max => vec![*min; config.clients],
        Heterogeneity::Uniform { min, max } => {
            let mut rng = seed::rng(seed::derive(config.seed, seed::STREAM_HETEROGENEITY, 0, 0));
            (0..config.clients).map(|_| rng.random_range(*min..=*max)).collect()
        }
    };
    factors
        .iter()
        .enumerate()
        .map(|(m, a)| ClientProfile {
            client_id: m,
            compute_time: ((a * t.tau_base as f64).round() as Ticks).max(1),
            upload_time: t.upload,
            download_time: t.download,
            local_epochs: config.sgd.local_epochs,
        })
        .collect()
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    let (train, test) = load_datasets(config)?;
    let partition = match config.distribution {
        Distribution::Iid => partition_iid(&train, config.clients, seed::derive(config.seed, seed::STREAM_PARTITION, 0, 0))?,
        Distribution::LabelShards { classes_per_client } => partition_label_shards(
            &train,
            config.clients,
            classes_per_client,
            seed::derive(config.seed, seed::STREAM_PARTITION, 0, 0),
        )?,
    };
    let class_count = train.class_count().max(test.class_count());
    let spec = match config.model.kind {
        LearnerKind::SoftmaxRegression => LearnerSpec::softmax_regression(train.dim(), class_count),
        LearnerKind::Mlp => LearnerSpec::mlp(train.dim(), config.model.hidden.clone(), class_count),
    };
    spec.validate()?;
    let settings = RunSettings {
        profiles: client_profiles(config),
        coefficients: partition.coefficients(),
        initial_model: init_model(&spec, seed::derive(config.seed, seed::STREAM_INIT, 0, 0)),
        horizon_rounds: config.relative_slots,
        eval_every: config.eval_every,
        record_trace: false,
    };
    settings.validate()?;
    Ok(PreparedExperiment { config: config.clone(), train, test, partition, spec, settings })
}

impl PreparedExperiment {
    pub fn csmaafl_params(&self) -> CsmaaflParams {
        let c = &self.config.csmaafl;
        CsmaaflParams {
            gamma: c.gamma,
            rho: c.rho,
            mu_init: c.mu_init,
            scheduler: c.scheduler,
            max_local_epochs: c.max_local_epochs,
            seed: self.config.seed,
        }
    }

    /// Runs the configured algorithm.
    pub fn run(&self, record_trace: bool) -> Result<RunOutput> {
        let settings = RunSettings { record_trace, ..self.settings.clone() };
        let trainer = SgdTrainer {
            data: &self.train,
            partition: &self.partition,
            spec: &self.spec,
            sgd: self.config.sgd,
            master_seed: self.config.seed,
        };
        let evaluator = TestSetEvaluator { test: &self.test, spec: &self.spec };
        match self.config.algorithm {
            Algorithm::Sfl => run_fedavg(&settings, &trainer, &evaluator),
            Algorithm::AflBaseline => {
                let schedule = match &self.config.baseline_schedule {
                    Some(s) => s.clone(),
                    None => fastest_first(&settings.profiles),
                };
                run_baseline_afl(&settings, &schedule, &trainer, &evaluator)
            }
            Algorithm::Csmaafl => run_csmaafl(&settings, &self.csmaafl_params(), &trainer, &evaluator),
        }
    }

    pub fn summarize(&self, output: &RunOutput) -> RunSummary {
        let last = output.records.last();
        RunSummary {
            algorithm: self.config.algorithm,
            final_accuracy: last.map_or(f64::NAN, |r| r.accuracy),
            final_loss: last.map_or(f64::NAN, |r| r.loss),
            aggregations: output.aggregations,
            sim_time: output.sim_time,
            relative_time: output.sim_time as f64 / self.settings.round_ticks() as f64,
        }
    }
}

/// Runs `config`, writes the metrics CSV to `out` and, if requested, the
/// event trace (one `time<TAB>kind<TAB>client` line per event).
pub fn run_experiment(config: &ExperimentConfig, out: &Path, trace: Option<&Path>) -> Result<RunSummary> {
    let prepared = prepare(config)?;
    let output = prepared.run(trace.is_some())?;
    write_csv(out, &output.records)?;
    if let Some(path) = trace {
        write_trace(path, &output)?;
    }
    Ok(prepared.summarize(&output))
}

pub fn write_trace(path: &Path, output: &RunOutput) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for event in &output.trace {
        writeln!(w, "{}", event.trace_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs one configuration per `gamma` on separate threads and writes
/// `<out_dir>/<algorithm>_gamma<gamma>.csv` for each.
pub fn sweep_gamma(config: &ExperimentConfig, gammas: &[f64], out_dir: &Path) -> Result<Vec<(f64, RunSummary)>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let prepared = prepare(config)?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = gammas
            .iter()
            .map(|&gamma| {
                let mut p = prepared.clone();
                p.config.csmaafl.gamma = gamma;
                scope.spawn(move || -> Result<(f64, RunSummary)> {
                    let output = p.run(false)?;
                    let path = out_dir.join(format!("{}_gamma{gamma}.csv", p.config.algorithm));
                    write_csv(&path, &output.records)?;
                    Ok((gamma, p.summarize(&output)))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::Report("sweep worker panicked".into()))?)
            .collect()
    })
}
