//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use kd_parallel::corpus::{gen_corpus, ChannelSpec, CorpusSpec, ParallelCorpus, SplitSizes};
use kd_parallel::network::{Architecture, ModelParams};
use kd_parallel::numerics::{Matrix, RngStream};
use kd_parallel::training::{minibatch_gradients, FrameSet, Targets};

pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude the relative error is measured against the floor,
/// since f64 roundoff in a central difference at `FD_STEP` is about 1e-11.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Random rows summing to one, strictly positive.
pub fn random_distributions(rng: &mut RngStream, rows: usize, classes: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, classes);
    for r in 0..rows {
        let row = m.row_mut(r);
        for v in row.iter_mut() {
            *v = 0.05 + rng.next_uniform();
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

pub fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn param_mut(p: &mut ModelParams, flat: usize) -> &mut f64 {
    let mut i = flat;
    for layer in &mut p.layers {
        let w = layer.weights.data().len();
        if i < w {
            return &mut layer.weights.data_mut()[i];
        }
        i -= w;
        if i < layer.bias.len() {
            return &mut layer.bias[i];
        }
        i -= layer.bias.len();
    }
    panic!("parameter index out of range");
}

/// Largest relative error between the analytic gradient of the mean batch
/// loss and central finite differences over every parameter.
pub fn max_gradient_error(hidden: &[usize], batch: usize, soft: bool, seed: u64) -> f64 {
    let (input, classes) = (4, 3);
    let mut rng = RngStream::new(seed);
    let arch = Architecture::new(input, hidden.to_vec(), classes);
    let params = ModelParams::init(&arch, &mut rng).unwrap();
    let x = random_matrix(&mut rng, batch, input);
    let labels: Vec<u16> = (0..batch).map(|_| rng.next_below(classes as u64) as u16).collect();
    let targets = if soft {
        Targets::Soft(random_distributions(&mut rng, batch, classes))
    } else {
        Targets::Hard(labels.iter().map(|&l| l as usize).collect())
    };
    let frames = FrameSet::new(x, targets, labels).unwrap();
    let rows: Vec<usize> = (0..batch).collect();

    let (_, grads) = minibatch_gradients(&params, &frames, &rows).unwrap();
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|l| l.weights.data().iter().chain(&l.bias).copied())
        .collect();

    let loss = |p: &ModelParams| minibatch_gradients(p, &frames, &rows).unwrap().0;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *param_mut(&mut plus, i) += FD_STEP;
        let mut minus = params.clone();
        *param_mut(&mut minus, i) -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        let scale = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// The default desk-scale corpus.
pub fn default_corpus() -> ParallelCorpus {
    gen_corpus(&CorpusSpec::default()).unwrap()
}

/// A small corpus for fast end-to-end tests.
pub fn small_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        num_classes: 4,
        feature_dim: 3,
        utterances: SplitSizes {
            train: 12,
            dev: 4,
            eval: 4,
        },
        utterance_frames: [20, 40],
        segment_frames: [3, 8],
        seed,
        ..CorpusSpec::default()
    }
}

pub fn small_corpus(seed: u64) -> ParallelCorpus {
    gen_corpus(&small_spec(seed)).unwrap()
}

pub fn identity_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        channel: ChannelSpec::identity(),
        ..small_spec(seed)
    }
}
