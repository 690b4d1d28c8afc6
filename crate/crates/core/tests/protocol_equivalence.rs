//! Protocol-level identities: a lone client is centralized training, and one
//! full-participation full-batch SGD round is one pooled gradient step.

use fedsim_core::{
    gradient, init_params, make_blobs, partition_iid, run_federation, sgd_step, train_centralized,
    BlobsSpec, CentralizedConfig, Executor, FLConfig, LabeledDataset, ModelSpec, OptimizerConfig,
    Shard,
};

fn blobs(n: usize, dim: usize, seed: u64) -> LabeledDataset {
    make_blobs(&BlobsSpec {
        n,
        num_classes: 3,
        input_dim: dim,
        class_weights: vec![0.5, 0.3, 0.2],
        separation: 2.5,
        seed,
    })
    .unwrap()
}

#[test]
fn single_client_federation_is_centralized_training() {
    let train = blobs(137, 5, 1);
    let test = blobs(60, 5, 2);
    for model in [ModelSpec::softmax_regression(5, 3), ModelSpec::mlp(5, 7, 3)] {
        let mut cfg = FLConfig::new(model);
        cfg.num_agents = 1;
        cfg.frac = 1.0;
        cfg.rounds = 10;
        cfg.local_epochs = 3;
        cfg.local_batch = 16;
        cfg.seed = 42;
        cfg.optimizer = OptimizerConfig::Sgd { lr: 0.05 };
        let shards = partition_iid(&train, 1, 9).unwrap();
        let fed = run_federation(&cfg, &train, shards, &test, Executor::sequential()).unwrap();
        let central = train_centralized(&train, &CentralizedConfig::matching(&cfg), &test).unwrap();
        assert_eq!(central.history.len(), 30);
        assert_eq!(fed.params, central.params);
        for r in &fed.history {
            let c = &central.history[r.round * 3 - 1];
            assert_eq!(r.eval_loss, c.eval_loss);
            assert_eq!(r.accuracy, c.accuracy);
        }
    }
}

#[test]
fn one_round_of_full_batch_sgd_is_one_pooled_step() {
    let train = blobs(80, 4, 3);
    let model = ModelSpec::mlp(4, 6, 3);
    let lr = 0.3;
    let mut cfg = FLConfig::new(model);
    cfg.num_agents = 4;
    cfg.frac = 1.0;
    cfg.local_epochs = 1;
    cfg.local_batch = 1000;
    cfg.rounds = 1;
    cfg.seed = 11;
    cfg.optimizer = OptimizerConfig::Sgd { lr };
    let shards = partition_iid(&train, 4, 0).unwrap();
    assert!(shards.iter().all(|s| s.len() == 20));
    let fed = run_federation(&cfg, &train, shards, &train, Executor::sequential()).unwrap();

    // oracle: one step along the gradient of the whole pooled batch
    let start = init_params(&model, 11).unwrap();
    let pooled = gradient(&model, &start, &train.as_batch()).unwrap();
    let expected = sgd_step(&start, &pooled, lr).unwrap();
    let diff = fed.params.max_abs_diff(&expected);
    assert!(diff < 1e-12, "max |delta| = {diff:e}");
}

#[test]
fn clients_are_stateless_between_rounds() {
    use fedsim_core::{local_update, EpochShuffler};
    let train = blobs(90, 3, 5);
    let mut cfg = FLConfig::new(ModelSpec::mlp(3, 4, 3));
    cfg.optimizer = OptimizerConfig::Adam(fedsim_core::AdamHyper::with_lr(1e-2));
    let shards = partition_iid(&train, 3, 0).unwrap();
    let global = init_params(&cfg.model, 0).unwrap();
    let shuffler = EpochShuffler::new(0, 1, 6);
    let first = local_update(&global, &shards[1], &train, &cfg, shuffler).unwrap();
    // interleave unrelated work on the same shard
    let other = init_params(&cfg.model, 99).unwrap();
    local_update(&other, &shards[1], &train, &cfg, EpochShuffler::new(0, 1, 0)).unwrap();
    let again = local_update(&global, &shards[1], &train, &cfg, shuffler).unwrap();
    assert_eq!(first, again);
}

#[test]
fn unequal_shards_weight_by_samples() {
    let train = blobs(30, 2, 7);
    let model = ModelSpec::softmax_regression(2, 3);
    let shards = vec![
        Shard { owner_id: 0, indices: (0..5).collect() },
        Shard { owner_id: 1, indices: (5..30).collect() },
    ];
    let mut cfg = FLConfig::new(model);
    cfg.num_agents = 2;
    cfg.frac = 1.0;
    cfg.local_epochs = 1;
    cfg.local_batch = 100;
    cfg.rounds = 1;
    cfg.optimizer = OptimizerConfig::Sgd { lr: 0.1 };
    let fed = run_federation(&cfg, &train, shards, &train, Executor::sequential()).unwrap();
    let start = init_params(&model, cfg.seed).unwrap();
    let pooled = gradient(&model, &start, &train.as_batch()).unwrap();
    let expected = sgd_step(&start, &pooled, 0.1).unwrap();
    assert!(fed.params.max_abs_diff(&expected) < 1e-12);
}
