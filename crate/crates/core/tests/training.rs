use brainqc::cnn::checkpoint::{load, save};
use brainqc::cnn::{
    evaluate_model, predict, train_fold, LabeledVolume, NetworkSpec, TaskDataset, Tensor4, TrainConfig,
};
use brainqc::model::{ConsensusLabel, DatasetSplit, Grades, Task, Volume};

/// Positives carry a bright cube, negatives a dim one.
fn toy(n: usize) -> Vec<LabeledVolume> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let level = if positive { 1.0 } else { 0.2 };
            let o = i % 3;
            let volume = Volume::from_fn([8, 8, 8], [1.0; 3], |x, y, z| {
                let inside = [x, y, z].iter().all(|&c| (o + 1..o + 5).contains(&c));
                if inside {
                    level
                } else {
                    0.0
                }
            })
            .unwrap();
            let id = format!("img{i:03}");
            let label = if positive {
                ConsensusLabel::straight_reject(&id)
            } else {
                ConsensusLabel::graded(&id, false, Grades::new(0, 0, 0).unwrap())
            };
            LabeledVolume { image_id: id, patient_id: format!("pat{i:03}"), volume, label }
        })
        .collect()
}

#[test]
fn learns_a_separable_task_and_checkpoints_exactly() {
    let items = toy(36);
    let ids: Vec<String> = items.iter().map(|v| v.image_id.clone()).collect();
    let split = DatasetSplit {
        train: vec![ids[..20].to_vec()],
        validation: vec![ids[20..26].to_vec()],
        test: ids[26..].to_vec(),
        n_folds: 1,
    };
    let data = TaskDataset::build(&items, Task::Sr);
    let spec = NetworkSpec::conv5_fc3([8, 8, 8], 16);
    let cfg = TrainConfig { learning_rate: 1e-3, max_epochs: 20, seed: 3, ..Default::default() };
    let model = train_fold(&data, &split, 0, &spec, &cfg).unwrap();
    assert!(model.best_epoch < model.epochs_run);
    let losses: Vec<f64> = model.trace.iter().map(|e| e.train_loss).collect();
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");

    let report = evaluate_model(&model, &data, &split.test).unwrap();
    assert_eq!(report.ba, Some(1.0), "{report:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt.json");
    save(&model, &path).unwrap();
    let restored = load(&path).unwrap();
    let inputs: Vec<Tensor4<f32>> = items.iter().map(|v| Tensor4::from_volume(&v.volume)).collect();
    let refs: Vec<&Tensor4<f32>> = inputs.iter().collect();
    let a = predict(&model, &refs).unwrap();
    let b = predict(&restored, &refs).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.class, y.class);
        assert_eq!(x.probs, y.probs);
    }
}

#[test]
fn same_seed_gives_the_same_model() {
    let items = toy(16);
    let ids: Vec<String> = items.iter().map(|v| v.image_id.clone()).collect();
    let split = DatasetSplit {
        train: vec![ids[..10].to_vec()],
        validation: vec![ids[10..13].to_vec()],
        test: ids[13..].to_vec(),
        n_folds: 1,
    };
    let data = TaskDataset::build(&items, Task::Sr);
    let spec = NetworkSpec::conv5_fc3([8, 8, 8], 8);
    let cfg = TrainConfig { max_epochs: 3, early_stop_patience: 2, seed: 5, ..Default::default() };
    let a = train_fold(&data, &split, 0, &spec, &cfg).unwrap();
    let b = train_fold(&data, &split, 0, &spec, &cfg).unwrap();
    assert_eq!(a.network.params(), b.network.params());
}
