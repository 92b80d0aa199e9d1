use wvssl::config::RunConfig;

const FIXTURE: &str = include_str!("fixtures/default_config.toml");

#[test]
fn defaults_match_fixture() {
    let parsed = RunConfig::parse_toml(FIXTURE).unwrap();
    assert_eq!(parsed, RunConfig::default());
    assert_eq!(RunConfig::default().to_toml(), FIXTURE);
}

#[test]
fn documented_values() {
    let c = RunConfig::default();
    let p = &c.pretrain;
    assert_eq!((p.epochs, p.batch_size, p.warmup_epochs, p.subsample_period), (20, 128, 10, 20));
    assert_eq!((p.temperature, p.momentum, p.weight_decay, p.subsample_fraction), (0.5, 0.9, 1e-6, 0.3));
    assert!((p.learning_rate() - 0.3 * 128.0 / 256.0).abs() < 1e-15);
    assert_eq!(c.preprocess.boxcar_window, 10);
    assert_eq!((c.preprocess.lower_percentile, c.preprocess.upper_percentile), (1.0, 99.0));
    assert_eq!((c.knn.k, c.retrieval.k, c.retrieval.trials), (15, 20, 100));
    assert_eq!((c.mlp.epochs, c.mlp.learning_rate), (200, 1e-3));
    assert_eq!(c.finetune.classification_lr, 0.05);
    assert_eq!((c.finetune.regression_backbone_lr, c.finetune.regression_head_lr), (0.007, 0.025));
    assert_eq!((c.finetune.regression_weight_decay, c.finetune.regression_dropout), (1e-6, 0.5));
    assert_eq!((c.synth.count, c.synth.side, c.synth.classes.len()), (2000, 64, 4));
}
