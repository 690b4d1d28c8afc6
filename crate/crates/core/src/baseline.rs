//! Pooled-data training and the federated-vs-centralized comparison.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::{epsilon_gap, evaluate, EvalReport, GapCheck};
use crate::model::{init_params, ModelSpec};
use crate::optim::OptimizerConfig;
use crate::params::ParamVector;
use crate::protocol::{FLConfig, FederatedRun};
use crate::rng::EpochShuffler;
use crate::train::run_epoch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl CentralizedConfig {
    /// Same model, optimizer, batch size and seed as the federated arm, with
    /// one epoch for every local epoch the federation runs in total.
    pub fn matching(fl: &FLConfig) -> Self {
        Self {
            model: fl.model,
            optimizer: fl.optimizer,
            epochs: fl.rounds * fl.local_epochs,
            batch_size: fl.local_batch,
            seed: fl.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub accuracy: f64,
    pub per_label_accuracy: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedRun {
    pub model: ModelSpec,
    pub params: ParamVector,
    pub history: Vec<EpochRecord>,
}

/// Trains on the whole dataset with a single optimizer that persists across
/// epochs. Epoch `e` visits rows in the order of shuffle stream 0, epoch `e`.
pub fn train_centralized(
    dataset: &LabeledDataset,
    config: &CentralizedConfig,
    eval: &LabeledDataset,
) -> Result<CentralizedRun> {
    config.optimizer.validate()?;
    if config.batch_size == 0 {
        return Err(crate::error::config("batch_size must be at least 1"));
    }
    let model = config.model;
    let mut params = init_params(&model, config.seed)?;
    let mut optimizer = config.optimizer.start(params.len());
    let rows: Vec<usize> = (0..dataset.len()).collect();
    let shuffler = EpochShuffler::new(config.seed, 0, 0);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = shuffler.order(epoch as u64, rows.len());
        let train_loss = run_epoch(
            &model,
            &mut params,
            &mut optimizer,
            dataset,
            &rows,
            &order,
            config.batch_size,
        )?;
        let report = evaluate(&model, &params, eval)?;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            eval_loss: report.mean_loss,
            accuracy: report.accuracy,
            per_label_accuracy: report.per_label_accuracy,
        });
    }
    Ok(CentralizedRun {
        model,
        params,
        history,
    })
}

/// Centralized epoch that lines up with the end of federated round `round`.
pub fn aligned_epoch(round: usize, local_epochs: usize) -> usize {
    round * local_epochs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedLoss {
    pub round: usize,
    pub epoch: usize,
    pub federated_eval_loss: f64,
    pub centralized_eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Carries the gap verdict in its `epsilon_gap` field.
    pub federated: EvalReport,
    pub centralized: EvalReport,
    pub aligned_loss: Vec<AlignedLoss>,
}

impl Comparison {
    pub fn gap(&self) -> &GapCheck {
        self.federated
            .epsilon_gap
            .as_ref()
            .expect("compare_runs always fills the gap block")
    }
}

/// Evaluates both final models on `eval` and measures their accuracy gap.
pub fn compare_runs(
    federated: &FederatedRun,
    centralized: &CentralizedRun,
    eval: &LabeledDataset,
    epsilon: f64,
) -> Result<Comparison> {
    if federated.model != centralized.model {
        return Err(Error::Comparison(format!(
            "model specs differ: {:?} vs {:?}",
            federated.model, centralized.model
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Comparison(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut fed_report = evaluate(&federated.model, &federated.params, eval)?;
    let central_report = evaluate(&centralized.model, &centralized.params, eval)?;
    fed_report.epsilon_gap = Some(epsilon_gap(
        fed_report.accuracy,
        central_report.accuracy,
        epsilon,
    ));
    let aligned_loss = federated
        .history
        .iter()
        .filter_map(|r| {
            let epoch = aligned_epoch(r.round, federated.local_epochs);
            let c = centralized.history.get(epoch.checked_sub(1)?)?;
            Some(AlignedLoss {
                round: r.round,
                epoch,
                federated_eval_loss: r.eval_loss,
                centralized_eval_loss: c.eval_loss,
            })
        })
        .collect();
    Ok(Comparison {
        federated: fed_report,
        centralized: central_report,
        aligned_loss,
    })
}
