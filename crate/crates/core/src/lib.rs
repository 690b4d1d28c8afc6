//! Deterministic federated averaging simulator.
//!
//! Clients hold private shards of a dataset, train a copy of the server's
//! global model for a few local epochs, and the server averages the returned
//! parameters weighted by shard size. A centralized trainer over the pooled
//! data provides the comparison arm. Everything is seeded: the same inputs
//! produce bit-identical parameters and histories, with or without the
//! `parallel` feature.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod optim;
pub mod params;
pub mod protocol;
pub mod rng;
mod train;

pub use baseline::{
    aligned_epoch, compare_runs, train_centralized, AlignedLoss, CentralizedConfig,
    CentralizedRun, Comparison, EpochRecord,
};
pub use data::{
    check_disjoint_cover, class_counts, load_csv, make_blobs, partition_iid, partition_label_skew,
    BlobsSpec, LabeledDataset, Shard,
};
pub use error::{Error, LoadError, Result};
pub use eval::{epsilon_gap, evaluate, EvalReport, GapCheck};
pub use exec::Executor;
pub use model::{
    forward, gradient, init_params, loss, loss_and_gradient, predict, softmax, Batch, Logits,
    ModelSpec,
};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState, Optimizer, OptimizerConfig};
pub use params::ParamVector;
pub use protocol::{
    aggregate, clients_per_round, local_update, run_federation, sample_clients, ClientUpdate,
    FLConfig, FederatedRun, Federation, RoundRecord, Weighting,
};
pub use rng::EpochShuffler;
