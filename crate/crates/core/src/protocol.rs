//! The federated averaging round protocol.
//!
//! A [`Federation`] owns the server's global parameters. Each round it
//! samples a fraction of the clients, lets every sampled client train a
//! private copy of the global model on its shard, and replaces the global
//! model with the sample-weighted mean of the returned parameters.
//!
//! Clients are stateless: every local update starts from the received
//! global parameters with a fresh optimizer, and its shuffling stream is
//! keyed by `(seed, client, epoch counter)`. Local updates within a round
//! can therefore run concurrently while producing exactly the same result
//! as a sequential pass in ascending client order.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_disjoint_cover, LabeledDataset, Shard};
use crate::error::{config, protocol, Result};
use crate::eval::{evaluate, EvalReport};
use crate::exec::Executor;
use crate::model::{init_params, loss, ModelSpec};
use crate::optim::OptimizerConfig;
use crate::params::ParamVector;
use crate::rng::{stream, EpochShuffler, TAG_SAMPLE};
use crate::train::run_epoch;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    BySamples,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FLConfig {
    pub num_agents: usize,
    pub frac: f64,
    pub local_epochs: usize,
    pub local_batch: usize,
    pub rounds: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub model: ModelSpec,
    pub weighting: Weighting,
}

impl FLConfig {
    /// Five agents, 40% participation, 3 local epochs, batches of 10,
    /// 100 rounds, Adam at lr 2e-5 with weight decay 1e-7.
    pub fn new(model: ModelSpec) -> Self {
        Self {
            num_agents: 5,
            frac: 0.4,
            local_epochs: 3,
            local_batch: 10,
            rounds: 100,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            model,
            weighting: Weighting::BySamples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(config("num_agents must be at least 1"));
        }
        if !(self.frac > 0.0 && self.frac <= 1.0) {
            return Err(config(format!("frac must be in (0, 1], got {}", self.frac)));
        }
        if self.local_batch == 0 {
            return Err(config("local_batch must be at least 1"));
        }
        self.optimizer.validate()?;
        self.model.validate()
    }

    pub fn clients_per_round(&self) -> usize {
        clients_per_round(self.num_agents, self.frac)
    }
}

/// `max(1, ceil(frac * k))`, capped at `k`. A 1e-9 slack absorbs products
/// such as `0.7 * 10 = 7.000000000000001`.
pub fn clients_per_round(k: usize, frac: f64) -> usize {
    let m = (frac * k as f64 - 1e-9).ceil().max(1.0) as usize;
    m.min(k)
}

/// Draws `clients_per_round(k, frac)` distinct client ids uniformly without
/// replacement, returned in ascending order.
pub fn sample_clients(k: usize, frac: f64, rng: &mut impl RngCore) -> Vec<usize> {
    let m = clients_per_round(k, frac);
    let mut ids = index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub num_samples: usize,
    /// Mean minibatch loss over the local run; the shard loss at the
    /// received parameters when no local epochs were run.
    pub train_loss: f64,
}

/// Trains a copy of `global` on one client's shard for `config.local_epochs`
/// epochs with a freshly created optimizer.
pub fn local_update(
    global: &ParamVector,
    shard: &Shard,
    dataset: &LabeledDataset,
    config: &FLConfig,
    shuffler: EpochShuffler,
) -> Result<ClientUpdate> {
    if shard.is_empty() {
        return Err(protocol(format!("client {} has an empty shard", shard.owner_id)));
    }
    let mut params = global.clone();
    let train_loss = if config.local_epochs == 0 {
        loss(&config.model, &params, &dataset.gather(&shard.indices)?)?
    } else {
        let mut optimizer = config.optimizer.start(params.len());
        let mut total = 0.0;
        for epoch in 0..config.local_epochs {
            let order = shuffler.order(epoch as u64, shard.len());
            total += run_epoch(
                &config.model,
                &mut params,
                &mut optimizer,
                dataset,
                &shard.indices,
                &order,
                config.local_batch,
            )?;
        }
        total / config.local_epochs as f64
    };
    if !params.is_finite() {
        return Err(protocol(format!(
            "client {} produced non-finite parameters",
            shard.owner_id
        )));
    }
    Ok(ClientUpdate {
        client_id: shard.owner_id,
        params,
        num_samples: shard.len(),
        train_loss,
    })
}

/// Weighted element-wise mean of client parameters.
///
/// Contributions are accumulated in ascending `client_id` order whatever
/// order `updates` arrive in.
pub fn aggregate(updates: &[ClientUpdate], weighting: Weighting) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| protocol("cannot aggregate an empty set of updates"))?;
    let len = first.params.len();
    if let Some(bad) = updates.iter().find(|u| u.params.len() != len) {
        return Err(protocol(format!(
            "client {} returned {} parameters, expected {len}",
            bad.client_id,
            bad.params.len()
        )));
    }
    if let Some(bad) = updates.iter().find(|u| u.num_samples == 0) {
        return Err(protocol(format!("client {} reports zero samples", bad.client_id)));
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);

    let weights: Vec<f64> = match weighting {
        Weighting::BySamples => {
            let total: usize = ordered.iter().map(|u| u.num_samples).sum();
            ordered
                .iter()
                .map(|u| u.num_samples as f64 / total as f64)
                .collect()
        }
        Weighting::Uniform => vec![1.0 / ordered.len() as f64; ordered.len()],
    };

    if ordered.windows(2).all(|w| w[0].params == w[1].params) {
        return Ok(first.params.clone());
    }
    let mut out = vec![0.0; len];
    for (u, w) in ordered.iter().zip(&weights) {
        for (o, p) in out.iter_mut().zip(u.params.iter()) {
            *o += w * p;
        }
    }
    // keep every coordinate inside the hull of the inputs despite rounding
    for (i, o) in out.iter_mut().enumerate() {
        let (lo, hi) = ordered.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
            (lo.min(u.params[i]), hi.max(u.params[i]))
        });
        *o = o.clamp(lo, hi);
    }
    Ok(ParamVector::new(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub sampled: Vec<usize>,
    pub mean_local_loss: f64,
    pub eval_loss: f64,
    pub accuracy: f64,
    pub per_label_accuracy: Vec<Option<f64>>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Result of a complete federated run.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedRun {
    pub model: ModelSpec,
    pub local_epochs: usize,
    pub params: ParamVector,
    pub history: Vec<RoundRecord>,
}

/// Server-side state of a simulated federation.
#[derive(Debug)]
pub struct Federation<'a> {
    config: FLConfig,
    dataset: &'a LabeledDataset,
    eval: &'a LabeledDataset,
    shards: Vec<Shard>,
    global: ParamVector,
    sampler: ChaCha8Rng,
    history: Vec<RoundRecord>,
    executor: Executor,
}

impl<'a> Federation<'a> {
    /// Initializes the global model from `config.seed`. Shards must be a
    /// disjoint cover of `dataset`, one non-empty shard per agent.
    pub fn new(
        config: FLConfig,
        dataset: &'a LabeledDataset,
        shards: Vec<Shard>,
        eval: &'a LabeledDataset,
    ) -> Result<Self> {
        config.validate()?;
        for (name, ds) in [("training", dataset), ("evaluation", eval)] {
            if ds.input_dim() != config.model.input_dim()
                || ds.num_classes() != config.model.num_classes()
            {
                return Err(config_mismatch(name, ds, &config.model));
            }
        }
        if shards.len() != config.num_agents {
            return Err(crate::error::config(format!(
                "{} shards for {} agents",
                shards.len(),
                config.num_agents
            )));
        }
        check_disjoint_cover(&shards, dataset.len())?;
        if let Some(s) = shards.iter().find(|s| s.is_empty()) {
            return Err(protocol(format!("client {} has an empty shard", s.owner_id)));
        }
        let global = init_params(&config.model, config.seed)?;
        let sampler = stream(config.seed, &[TAG_SAMPLE]);
        Ok(Self {
            config,
            dataset,
            eval,
            shards,
            global,
            sampler,
            history: Vec::new(),
            executor: Executor::sequential(),
        })
    }

    pub fn with_executor(mut self, executor: Executor) -> Self {
        self.executor = executor;
        self
    }

    pub fn config(&self) -> &FLConfig {
        &self.config
    }

    pub fn round(&self) -> usize {
        self.history.len()
    }

    pub fn global_params(&self) -> &ParamVector {
        &self.global
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn is_finished(&self) -> bool {
        self.round() >= self.config.rounds
    }

    /// Sample, train locally, aggregate, evaluate.
    pub fn run_round(&mut self) -> Result<&RoundRecord> {
        if self.is_finished() {
            return Err(protocol(format!(
                "all {} rounds have already run",
                self.config.rounds
            )));
        }
        let started = Instant::now();
        let t = self.round();
        let sampled = sample_clients(self.config.num_agents, self.config.frac, &mut self.sampler);

        let epoch_base = (t * self.config.local_epochs) as u64;
        let (global, shards, dataset, cfg) = (&self.global, &self.shards, self.dataset, &self.config);
        let updates = self
            .executor
            .map(&sampled, |&id| {
                let shuffler = EpochShuffler::new(cfg.seed, id as u64, epoch_base);
                local_update(global, &shards[id], dataset, cfg, shuffler)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let mean_local_loss =
            updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64;
        self.global = aggregate(&updates, self.config.weighting)?;
        let report = evaluate(&self.config.model, &self.global, self.eval)?;
        self.history.push(RoundRecord {
            round: t + 1,
            sampled,
            mean_local_loss,
            eval_loss: report.mean_loss,
            accuracy: report.accuracy,
            per_label_accuracy: report.per_label_accuracy,
            wall_time: started.elapsed(),
        });
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.run_round()?;
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<EvalReport> {
        evaluate(&self.config.model, &self.global, self.eval)
    }

    pub fn into_run(self) -> FederatedRun {
        FederatedRun {
            model: self.config.model,
            local_epochs: self.config.local_epochs,
            params: self.global,
            history: self.history,
        }
    }
}

fn config_mismatch(name: &str, ds: &LabeledDataset, model: &ModelSpec) -> crate::Error {
    config(format!(
        "{name} data has {} features and {} classes, model expects {} and {}",
        ds.input_dim(),
        ds.num_classes(),
        model.input_dim(),
        model.num_classes()
    ))
}

/// Runs all `config.rounds` rounds from a freshly initialized global model.
pub fn run_federation(
    config: &FLConfig,
    dataset: &LabeledDataset,
    shards: Vec<Shard>,
    eval: &LabeledDataset,
    executor: Executor,
) -> Result<FederatedRun> {
    let mut federation =
        Federation::new(config.clone(), dataset, shards, eval)?.with_executor(executor);
    federation.run_to_end()?;
    Ok(federation.into_run())
}
