mod common;

use std::collections::BTreeMap;

use kd_parallel::corpus::{gen_corpus, ChannelSpec, ParallelCorpus, ParallelUtterance, Utterance};
use kd_parallel::network::ModelParams;
use kd_parallel::numerics::{Matrix, RngStream};
use kd_parallel::training::{
    compute_soft_labels, distill_student, distillation_frames, epoch_batches, fit,
    gradient_norm, initial_params, minibatch_gradients, multi_condition_frames, shuffle_stream,
    train_baseline, train_hard, train_teacher, BaselineMode, FrameSet, SoftLabelSet,
    SplicedCorpus, TeacherTier, Targets, TrainConfig,
};

fn cfg(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 0.5,
        batch_size: 32,
        max_epochs,
        seed: 4,
        ..TrainConfig::default()
    }
}

fn one_hot_labels(data: &SplicedCorpus) -> SoftLabelSet {
    let s = data.num_classes;
    let mut utterances = BTreeMap::new();
    for split in [&data.train, &data.dev] {
        for (i, id) in split.ids.iter().enumerate() {
            let rows = split.utterance_rows(i);
            let mut m = Matrix::zeros(rows.len(), s);
            for (r, t) in rows.enumerate() {
                m.set(r, split.labels[t] as usize, 1.0);
            }
            utterances.insert(id.clone(), m);
        }
    }
    SoftLabelSet {
        teacher_fingerprint: "one-hot".into(),
        temperature: 1.0,
        num_classes: s,
        utterances,
    }
}

/// Two classes on a line, never closer than 1.0 to each other.
fn separable_corpus() -> ParallelCorpus {
    let mut rng = RngStream::new(17);
    let mut make = |prefix: &str, count: usize| -> Vec<ParallelUtterance> {
        (0..count)
            .map(|i| {
                let labels: Vec<u16> = (0..30).map(|t| ((t / 5) % 2) as u16).collect();
                let data = labels
                    .iter()
                    .map(|&l| (if l == 0 { -1.0 } else { 1.0 }) + rng.next_uniform() - 0.5)
                    .collect();
                let frames = Matrix::from_vec(labels.len(), 1, data).unwrap();
                let u = Utterance {
                    id: format!("{prefix}-{i}"),
                    frames,
                    labels,
                };
                ParallelUtterance {
                    clean: u.clone(),
                    far: u,
                }
            })
            .collect()
    };
    ParallelCorpus {
        num_classes: 2,
        feature_dim: 1,
        train: make("train", 20),
        dev: make("dev", 5),
        eval: make("eval", 5),
        channel: ChannelSpec::identity(),
        seed: 0,
    }
}

#[test]
fn separable_toy_corpus_reaches_zero_dev_error() {
    let data = SplicedCorpus::new(&separable_corpus(), 1).unwrap();
    let (_, hist) = train_hard(&data, &[], false, &cfg(50)).unwrap();
    assert_eq!(hist.best().dev_fer, 0.0, "{}", hist.to_csv());
    assert!(hist.stopping_epoch <= 50);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = SplicedCorpus::new(&common::small_corpus(1), 3).unwrap();
    let (a, ha) = train_hard(&data, &[8], true, &cfg(4)).unwrap();
    let (b, hb) = train_hard(&data, &[8], true, &cfg(4)).unwrap();
    assert_eq!(a, b);
    assert!(ha.same_trajectory(&hb));
    let (c, _) = train_hard(&data, &[8], true, &TrainConfig { seed: 5, ..cfg(4) }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn one_hot_distillation_reproduces_hard_training_step_by_step() {
    let data = SplicedCorpus::new(&common::small_corpus(2), 3).unwrap();
    let cfg = cfg(3);
    let arch = data.architecture(&[6, 5]);
    let (soft_train, soft_dev) = distillation_frames(&data, &one_hot_labels(&data)).unwrap();
    let hard_train = FrameSet::hard(data.train.far.clone(), &data.train.labels).unwrap();
    let hard_dev = FrameSet::hard(data.dev.far.clone(), &data.dev.labels).unwrap();

    let mut steps = Vec::new();
    let (hard, _) = fit(initial_params(&arch, &cfg).unwrap(), &hard_train, &hard_dev, &cfg, |p| {
        steps.push(p.flat())
    })
    .unwrap();
    let mut i = 0;
    let (soft, _) = fit(initial_params(&arch, &cfg).unwrap(), &soft_train, &soft_dev, &cfg, |p| {
        assert!(p.flat() == steps[i], "step {i} diverged");
        i += 1;
    })
    .unwrap();
    assert_eq!(i, steps.len());
    assert_eq!(hard, soft);

    let (student, _) = distill_student(&data, &one_hot_labels(&data), &[6, 5], &cfg).unwrap();
    let (baseline, _) = train_hard(&data, &[6, 5], true, &cfg).unwrap();
    assert_eq!(student, baseline);
}

#[test]
fn self_distillation_has_zero_gradient() {
    let data = SplicedCorpus::new(&common::small_corpus(3), 3).unwrap();
    let cfg = cfg(1);
    let teacher = initial_params(&data.architecture(&[7]), &cfg).unwrap();
    let soft = compute_soft_labels(&teacher, &data, 1.0).unwrap();
    let frames = FrameSet::new(
        data.train.clean.clone(),
        Targets::Soft(soft.targets_for(&data.train).unwrap()),
        data.train.labels.clone(),
    )
    .unwrap();
    let rows = &epoch_batches(frames.len(), &cfg, &mut shuffle_stream(&cfg))[0];
    let (_, grads) = minibatch_gradients(&teacher, &frames, rows).unwrap();
    assert!(gradient_norm(&grads) < 1e-10);
}

#[test]
fn missing_or_misaligned_soft_labels_are_rejected() {
    let data = SplicedCorpus::new(&common::small_corpus(4), 3).unwrap();
    let mut soft = one_hot_labels(&data);
    let id = data.train.ids[2].clone();
    let removed = soft.utterances.remove(&id).unwrap();
    let err = distill_student(&data, &soft, &[4], &cfg(1)).unwrap_err();
    assert!(err.to_string().contains(&format!("no soft labels for utterance {id}")), "{err}");

    let short = removed.select_rows(&(0..removed.rows() - 1).collect::<Vec<_>>());
    soft.utterances.insert(id.clone(), short);
    let err = distill_student(&data, &soft, &[4], &cfg(1)).unwrap_err();
    assert!(err.to_string().contains("alignment mismatch"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn teacher_stays_frozen() {
    let data = SplicedCorpus::new(&common::small_corpus(5), 3).unwrap();
    let tier = TeacherTier {
        name: "T".into(),
        hidden: vec![8],
        max_epochs: 3,
    };
    let (teacher, _) = train_teacher(&data, &tier, &cfg(10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("teacher.model");
    teacher.save(&path).unwrap();
    let before = std::fs::read(&path).unwrap();
    let fingerprint = teacher.fingerprint();

    let soft = compute_soft_labels(&teacher, &data, 1.0).unwrap();
    distill_student(&data, &soft, &[4], &cfg(2)).unwrap();
    assert_eq!(teacher.fingerprint(), fingerprint);
    assert_eq!(soft.teacher_fingerprint, fingerprint);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(ModelParams::load(&path).unwrap().fingerprint(), fingerprint);
}

#[test]
fn high_temperature_labels_are_nearly_uniform() {
    let spec = kd_parallel::corpus::CorpusSpec {
        num_classes: 20,
        ..common::small_spec(6)
    };
    let data = SplicedCorpus::new(&gen_corpus(&spec).unwrap(), 3).unwrap();
    let (teacher, _) = train_hard(&data, &[8], false, &cfg(5)).unwrap();
    let sharp = compute_soft_labels(&teacher, &data, 1.0).unwrap();
    let max_gap = |s: &SoftLabelSet| {
        s.utterances
            .values()
            .flat_map(|m| m.row_iter().map(|r| {
                let hi = r.iter().cloned().fold(f64::MIN, f64::max);
                let lo = r.iter().cloned().fold(f64::MAX, f64::min);
                hi - lo
            }).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    };
    assert!(max_gap(&sharp) > 0.2, "{}", max_gap(&sharp));
    let flat = compute_soft_labels(&teacher, &data, 100.0).unwrap();
    assert!(max_gap(&flat) < 0.01, "{}", max_gap(&flat));
    assert_eq!(flat.temperature, 100.0);
}

#[test]
fn multi_condition_epoch_touches_twice_the_frames() {
    let data = SplicedCorpus::new(&common::small_corpus(7), 3).unwrap();
    let n = data.train.num_frames();
    assert_eq!(multi_condition_frames(&data).unwrap().len(), 2 * n);

    let cfg = TrainConfig { batch_size: 1, ..cfg(1) };
    let count_steps = |mode: BaselineMode| {
        let train = match mode {
            BaselineMode::FarHard => FrameSet::hard(data.train.far.clone(), &data.train.labels),
            BaselineMode::MultiCond => multi_condition_frames(&data),
        }
        .unwrap();
        let dev = FrameSet::hard(data.dev.far.clone(), &data.dev.labels).unwrap();
        let init = initial_params(&data.architecture(&[3]), &cfg).unwrap();
        let mut steps = 0;
        fit(init, &train, &dev, &cfg, |_| steps += 1).unwrap();
        steps
    };
    assert_eq!(count_steps(BaselineMode::FarHard), n);
    assert_eq!(count_steps(BaselineMode::MultiCond), 2 * n);

    let (a, _) = train_baseline(&data, BaselineMode::MultiCond, &[3], &cfg).unwrap();
    let (b, _) = train_baseline(&data, BaselineMode::MultiCond, &[3], &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_channel_student_matches_teacher_better_than_baseline() {
    let corpus = gen_corpus(&common::identity_spec(8)).unwrap();
    for u in corpus.iter_all() {
        assert_eq!(u.clean.frames, u.far.frames);
    }
    let data = SplicedCorpus::new(&corpus, 3).unwrap();
    let cfg = TrainConfig { patience: 50, ..cfg(40) };
    let tier = TeacherTier {
        name: "T".into(),
        hidden: vec![8],
        max_epochs: 5,
    };
    let (teacher, _) = train_teacher(&data, &tier, &cfg).unwrap();
    let soft = compute_soft_labels(&teacher, &data, 2.0).unwrap();
    let (student, s_hist) = distill_student(&data, &soft, &[8], &cfg).unwrap();
    let (baseline, _) = train_baseline(&data, BaselineMode::FarHard, &[8], &cfg).unwrap();

    let (_, dev) = distillation_frames(&data, &soft).unwrap();
    let (student_loss, _) = dev.score(&student).unwrap();
    let (baseline_loss, _) = dev.score(&baseline).unwrap();
    assert_eq!(student_loss, s_hist.best().dev_loss);
    assert!(student_loss <= baseline_loss, "{student_loss} > {baseline_loss}");
}
