use wvssl::eval::{finetune, micro_auroc, FinetuneConfig, LinearConfig, LinearProbe, MetricsReport, Task};
use wvssl::image::Image;
use wvssl::nn::{Encoder, EncoderConfig, ParamSet, StageConfig};
use wvssl::rng::Rng;

const SIDE: usize = 16;

/// Label 1 when exactly one of the top-left and bottom-right quadrants is bright.
fn xor_quadrants(n: usize, seed: u64) -> (Vec<Image>, Vec<Vec<f64>>) {
    let mut rng = Rng::new(seed);
    let mut imgs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.bernoulli(0.5);
        let b = rng.bernoulli(0.5);
        let plane: Vec<f32> = (0..SIDE * SIDE)
            .map(|i| {
                let (r, c) = (i / SIDE, i % SIDE);
                let lit = (r < SIDE / 2 && c < SIDE / 2 && a) || (r >= SIDE / 2 && c >= SIDE / 2 && b);
                let base = if lit { 0.7 } else { 0.3 };
                (base + 0.1 * rng.normal()).clamp(0.0, 1.0) as f32
            })
            .collect();
        imgs.push(Image::from_plane(SIDE, SIDE, &plane, 3));
        y.push(vec![(a != b) as u8 as f64]);
    }
    (imgs, y)
}

#[test]
fn finetuning_beats_frozen_linear_probe_on_nonlinear_task() {
    let enc = Encoder::new(EncoderConfig {
        input_side: SIDE,
        stem_width: 8,
        stem_stride: 1,
        stages: vec![StageConfig { width: 8, stride: 2, blocks: 1 }],
        norm_groups: 2,
        projector_hidden: 8,
        projection_dim: 4,
        ..Default::default()
    })
    .unwrap();
    let params: ParamSet<f32> = enc.init_params(&mut Rng::new(1));
    let (train_x, train_y) = xor_quadrants(400, 2);
    let (test_x, test_y) = xor_quadrants(200, 3);

    let feats = |imgs: &[Image]| -> Vec<Vec<f64>> {
        imgs.iter()
            .map(|im| enc.forward(&params, &im.data).unwrap().0.iter().map(|&v| v as f64).collect())
            .collect()
    };
    let probe = LinearProbe::fit(&feats(&train_x), &train_y, Task::Classification, LinearConfig::default()).unwrap();
    let linear = micro_auroc(&test_y, &probe.predict(&feats(&test_x))).unwrap();

    let model = finetune(
        &enc,
        &params,
        &train_x,
        &train_y,
        Task::Classification,
        FinetuneConfig {
            epochs: 30,
            batch_size: 32,
            ..Default::default()
        },
    )
    .unwrap();
    let tuned = micro_auroc(&test_y, &model.predict(&test_x).unwrap()).unwrap();
    assert!(tuned >= linear, "finetuned {tuned:.4} < linear probe {linear:.4}");
}

#[test]
fn report_lines_append_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    let classes = vec!["a".to_string(), "b".to_string()];
    let y = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let s = vec![vec![0.9, 0.2], vec![0.1, 0.7], vec![0.6, 0.4]];
    let a = MetricsReport::new("knn", "test", serde_json::json!({"seed": 1}))
        .with_classification(&classes, &y, &s, 0.5)
        .unwrap();
    let b = MetricsReport::new("linear", "test", serde_json::json!({}))
        .with_regression(&[1.0, 2.0], &[1.5, 2.0], Some("px"))
        .unwrap();
    a.validate().unwrap();
    b.validate().unwrap();
    a.append(&path).unwrap();
    b.append(&path).unwrap();
    let back = MetricsReport::read_jsonl(&path).unwrap();
    assert_eq!(back, vec![a, b]);
    assert_eq!(back[1].mae, Some(0.25));
}
