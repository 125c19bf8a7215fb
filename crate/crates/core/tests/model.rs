mod common;

use common::prepared_corpus;
use sgfuse_core::embeddings::fixture_table;
use sgfuse_core::harness::Signal;
use sgfuse_core::model::{
    apply_ablation, batch_loss, predict, train, Ablation, FusionVariant, Model, ModelConfig,
    Stochastic, TrainConfig,
};
use sgfuse_core::numkit::{bce_value, Tape};

fn setup(cfg: &TrainConfig) -> (Model, Vec<sgfuse_core::model::PreparedExample>) {
    let mc = ModelConfig::default();
    let table = fixture_table();
    let (tr, _, vocab, fdim) = prepared_corpus(16, 4, Signal::Mixed, &mc, cfg, &table);
    (
        Model::new(&mc, cfg.fusion, vocab, fdim, cfg.seed).unwrap(),
        tr,
    )
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::desk()
    };
    let (mut model, tr) = setup(&cfg);
    let before = model.params.clone();
    train(&mut model, &tr, &[], &cfg).unwrap();
    assert_eq!(model.params, before);
}

#[test]
fn single_example_loss_never_rises() {
    let cfg = TrainConfig {
        dropout: 0.0,
        lr: 1e-4,
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::desk()
    };
    let (mut model, tr) = setup(&cfg);
    let one = vec![tr[0].clone()];
    let mut losses = Vec::new();
    for _ in 0..50 {
        let p = predict(&model, &one[0]).unwrap().prob;
        losses.push(bce_value(p, f64::from(one[0].label)));
        train(
            &mut model,
            &one,
            &[],
            &TrainConfig {
                batch_size: 8,
                ..cfg
            },
        )
        .unwrap();
    }
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn same_seed_same_parameters() {
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::desk()
    };
    let (mut a, tr) = setup(&cfg);
    let mut b = a.clone();
    let la = train(&mut a, &tr, &tr[..4], &cfg).unwrap();
    let lb = train(&mut b, &tr, &tr[..4], &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(la, lb);
    let (mut c, _) = setup(&cfg);
    train(&mut c, &tr, &[], &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn both_graphs_ablated_ignores_graph_content() {
    let cfg = TrainConfig::desk();
    let (model, tr) = setup(&cfg);
    let flags = Ablation {
        no_vsg: true,
        no_tsg: true,
        ..Ablation::default()
    };
    let a = apply_ablation(&tr[0], flags).unwrap();
    let mut b = a.clone();
    b.tsg = tr[1].tsg.clone();
    b.vsg = tr[2].vsg.clone();
    assert_eq!(
        predict(&model, &a).unwrap().prob,
        predict(&model, &b).unwrap().prob
    );
    // Without the ablation the graphs matter.
    let mut c = tr[0].clone();
    c.tsg = tr[1].tsg.clone();
    assert_ne!(
        predict(&model, &tr[0]).unwrap().prob,
        predict(&model, &c).unwrap().prob
    );
}

#[test]
fn batch_loss_is_the_mean_of_example_losses() {
    let cfg = TrainConfig::desk();
    let (model, tr) = setup(&cfg);
    let batch: Vec<_> = tr[..8].iter().collect();
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, false);
    let (loss, probs) = batch_loss(&model, &mut tape, &bound, &batch, Stochastic::eval()).unwrap();
    let got = tape.value(loss).item().unwrap();
    let want = batch
        .iter()
        .map(|ex| bce_value(predict(&model, ex).unwrap().prob, f64::from(ex.label)))
        .sum::<f64>()
        / 8.0;
    assert!((got - want).abs() <= 1e-12);
    assert_eq!(probs.len(), 8);
}

#[test]
fn cmsg_variants_train_and_predict() {
    for fusion in [
        FusionVariant::Cmsg1,
        FusionVariant::Cmsg2,
        FusionVariant::Cmsg3,
    ] {
        let cfg = TrainConfig {
            fusion,
            cmsg_threshold: (fusion == FusionVariant::Cmsg3).then_some(0.7),
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::desk()
        };
        let (mut model, tr) = setup(&cfg);
        assert!(tr[0].fused.is_some());
        let log = train(&mut model, &tr, &[], &cfg).unwrap();
        assert!(log[0].train_loss.is_finite());
    }
}
