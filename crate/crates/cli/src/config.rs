//! Experiment configuration files.
//!
//! Every key is optional; an empty object `{}` resolves to five agents,
//! 40% participation, 3 local epochs, batches of 10, 100 rounds and Adam at
//! lr 2e-5 / weight decay 1e-7 on a 3-class Gaussian-blob dataset. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use fedsim_core::{
    make_blobs, partition_iid, partition_label_skew, BlobsSpec, FLConfig, LabeledDataset,
    ModelSpec, OptimizerConfig, Shard, Weighting,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_agents: usize,
    pub frac: f64,
    pub local_epochs: usize,
    pub local_batch: usize,
    pub rounds: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub model: ModelConfig,
    pub weighting: Weighting,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub epsilon: f64,
    /// Also train on the pooled data and check the accuracy gap.
    pub compare_centralized: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_agents: 5,
            frac: 0.4,
            local_epochs: 3,
            local_batch: 10,
            rounds: 100,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            model: ModelConfig::default(),
            weighting: Weighting::BySamples,
            dataset: DatasetConfig::default(),
            partition: PartitionConfig::Iid,
            epsilon: 0.05,
            compare_centralized: true,
            output_dir: PathBuf::from("fedsim-out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SoftmaxRegression,
    #[serde(rename = "mlp-1")]
    Mlp1,
}

/// Input width and class count default to the dataset's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp1,
            hidden_dim: None,
            input_dim: None,
            num_classes: None,
        }
    }
}

const DEFAULT_HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Training rows use `seed`, test rows `seed + 1`; `seed` defaults to
    /// the experiment seed and `class_weights` to uniform.
    Blobs {
        #[serde(default = "defaults::train_size")]
        train_size: usize,
        #[serde(default = "defaults::test_size")]
        test_size: usize,
        #[serde(default = "defaults::num_classes")]
        num_classes: usize,
        #[serde(default = "defaults::input_dim")]
        input_dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_weights: Option<Vec<f64>>,
        #[serde(default = "defaults::separation")]
        separation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        num_classes: usize,
    },
}

mod defaults {
    pub fn train_size() -> usize {
        2000
    }
    pub fn test_size() -> usize {
        500
    }
    pub fn num_classes() -> usize {
        3
    }
    pub fn input_dim() -> usize {
        20
    }
    pub fn separation() -> f64 {
        4.0
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            train_size: defaults::train_size(),
            test_size: defaults::test_size(),
            num_classes: defaults::num_classes(),
            input_dim: defaults::input_dim(),
            class_weights: None,
            separation: defaults::separation(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionConfig {
    Iid,
    LabelSkew { alpha: f64 },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("config key `{path}`: {}", e.inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Loads data, partitions it and fills in every defaulted value.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment, CliError> {
        let mut resolved = self.clone();
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Config(format!(
                "config key `epsilon`: must be positive, got {}",
                self.epsilon
            )));
        }

        let (train, test) = match &mut resolved.dataset {
            DatasetConfig::Blobs {
                train_size,
                test_size,
                num_classes,
                input_dim,
                class_weights,
                separation,
                seed,
            } => {
                let seed = *seed.get_or_insert(self.seed);
                let weights = class_weights
                    .get_or_insert_with(|| vec![1.0 / *num_classes as f64; *num_classes])
                    .clone();
                let spec = |n: usize, seed: u64| BlobsSpec {
                    n,
                    num_classes: *num_classes,
                    input_dim: *input_dim,
                    class_weights: weights.clone(),
                    separation: *separation,
                    seed,
                };
                let train = make_blobs(&spec(*train_size, seed)).map_err(keyed("dataset"))?;
                let test = make_blobs(&spec(*test_size, seed.wrapping_add(1)))
                    .map_err(keyed("dataset"))?;
                (train, test)
            }
            DatasetConfig::Csv {
                train,
                test,
                num_classes,
            } => {
                let load = |p: &Path| {
                    let full = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
                    fedsim_core::load_csv(&full, *num_classes)
                        .map_err(|e| CliError::Config(format!("config key `dataset`: {}: {e}", full.display())))
                };
                (load(train)?, load(test)?)
            }
        };
        if train.input_dim() != test.input_dim() {
            return Err(CliError::Config(format!(
                "config key `dataset`: train rows have {} features, test rows {}",
                train.input_dim(),
                test.input_dim()
            )));
        }

        let m = &mut resolved.model;
        for (key, given, actual) in [
            ("model.input_dim", m.input_dim, train.input_dim()),
            ("model.num_classes", m.num_classes, train.num_classes()),
        ] {
            if let Some(given) = given {
                if given != actual {
                    return Err(CliError::Config(format!(
                        "config key `{key}`: {given} does not match the dataset ({actual})"
                    )));
                }
            }
        }
        m.input_dim = Some(train.input_dim());
        m.num_classes = Some(train.num_classes());
        let model = match m.kind {
            ModelKind::SoftmaxRegression => {
                if m.hidden_dim.is_some() {
                    return Err(CliError::Config(
                        "config key `model.hidden_dim`: only valid for mlp-1".into(),
                    ));
                }
                ModelSpec::softmax_regression(train.input_dim(), train.num_classes())
            }
            ModelKind::Mlp1 => {
                let hidden = *m.hidden_dim.get_or_insert(DEFAULT_HIDDEN);
                ModelSpec::mlp(train.input_dim(), hidden, train.num_classes())
            }
        };

        let fl = FLConfig {
            num_agents: self.num_agents,
            frac: self.frac,
            local_epochs: self.local_epochs,
            local_batch: self.local_batch,
            rounds: self.rounds,
            optimizer: self.optimizer,
            seed: self.seed,
            model,
            weighting: self.weighting,
        };
        fl.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let shards = match self.partition {
            PartitionConfig::Iid => partition_iid(&train, self.num_agents, self.seed),
            PartitionConfig::LabelSkew { alpha } => {
                partition_label_skew(&train, self.num_agents, alpha, self.seed)
            }
        }
        .map_err(keyed("partition"))?;

        Ok(Experiment {
            config: resolved,
            fl,
            train,
            test,
            shards,
        })
    }
}

fn keyed(key: &'static str) -> impl Fn(fedsim_core::Error) -> CliError {
    move |e| CliError::Config(format!("config key `{key}`: {e}"))
}

/// A fully resolved experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub fl: FLConfig,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub shards: Vec<Shard>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_table_one() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.num_agents, 5);
        assert_eq!(cfg.frac, 0.4);
        assert_eq!(cfg.local_epochs, 3);
        assert_eq!(cfg.local_batch, 10);
        match cfg.optimizer {
            OptimizerConfig::Adam(h) => {
                assert_eq!(h.lr, 2e-5);
                assert_eq!(h.weight_decay, 1e-7);
            }
            other => panic!("unexpected optimizer {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_json(r#"{"num_agent": 5}"#).unwrap_err();
        assert!(err.to_string().contains("num_agent"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"optimizer": {"kind": "adam", "momentum": 1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("momentum"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"frac": "lots"}"#).unwrap_err();
        assert!(err.to_string().contains("`frac`"), "{err}");
    }

    #[test]
    fn optimizer_variants_parse() {
        let cfg = ExperimentConfig::from_json(r#"{"optimizer": {"kind": "sgd", "lr": 0.1}}"#).unwrap();
        assert_eq!(cfg.optimizer, OptimizerConfig::Sgd { lr: 0.1 });
        let cfg = ExperimentConfig::from_json(r#"{"optimizer": {"kind": "adam", "lr": 0.001}}"#).unwrap();
        match cfg.optimizer {
            OptimizerConfig::Adam(h) => assert_eq!((h.lr, h.beta2), (0.001, 0.999)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolve_fills_defaults_and_round_trips() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset": {"source": "blobs", "train_size": 50, "test_size": 20, "input_dim": 3}}"#,
        )
        .unwrap();
        let exp = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(exp.fl.model, ModelSpec::mlp(3, 16, 3));
        assert_eq!(exp.shards.len(), 5);
        let text = serde_json::to_string(&exp.config).unwrap();
        let again = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(again, exp.config);
        assert_eq!(again.resolve(Path::new(".")).unwrap().config, exp.config);
    }

    #[test]
    fn invalid_values_name_their_key() {
        let cases = [
            (r#"{"frac": 0}"#, "frac"),
            (r#"{"num_agents": 0}"#, "num_agents"),
            (r#"{"local_batch": 0}"#, "local_batch"),
            (r#"{"epsilon": 0}"#, "epsilon"),
            (r#"{"model": {"kind": "mlp-1", "input_dim": 7}}"#, "model.input_dim"),
            (r#"{"partition": {"kind": "label-skew", "alpha": -1}}"#, "partition"),
            (r#"{"optimizer": {"kind": "adam", "lr": -1}}"#, "optimizer.lr"),
        ];
        for (json, key) in cases {
            let err = ExperimentConfig::from_json(json)
                .and_then(|c| c.resolve(Path::new(".")).map(|_| ()))
                .unwrap_err();
            assert!(err.to_string().contains(key), "{json}: {err}");
        }
    }
}
