//! Teacher, student and baseline training.
//!
//! Every model is trained the same way: frames (not utterances) are shuffled
//! each epoch with the config seed, cut into minibatches in shuffle order
//! (the last short batch is kept), and each batch takes one SGD step on the
//! frame-mean cross-entropy. After every epoch the dev objective decides
//! early stopping and the best-dev checkpoint is returned.
//!
//! Only the targets differ between the pipelines:
//!
//! * teacher: clean features, ground-truth class indices
//! * student: corrupted features, teacher posteriors on the aligned clean frames
//! * far-hard baseline: corrupted features, ground-truth indices
//! * multi-condition baseline: clean and corrupted features pooled, ground-truth indices

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_f32_le, read_json, write_f32_le, write_json, ParallelCorpus, Split};
use crate::error::{Error, Result};
use crate::losses::{self, grad_logits, grad_logits_hard, hard_ce, soft_ce};
use crate::network::{Architecture, Gradients, ModelParams};
use crate::numerics::{argmax, Matrix, RngStream};

pub const SOFT_LABEL_FORMAT_VERSION: u32 = 1;
const SOFT_MANIFEST: &str = "softlabels.json";

/// Dev loss must drop by more than this to count as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;

/// Rows per forward pass when scoring whole splits.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 20,
            patience: 3,
            seed: 1,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation("train.lr must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("train.batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::validation("train.max_epochs must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::validation("train.patience must be >= 1"));
        }
        Ok(())
    }
}

/// A rung of the teacher-quality ladder: capacity plus training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherTier {
    pub name: String,
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
}

impl TeacherTier {
    /// Three tiers of increasing width and budget.
    pub fn default_ladder() -> Vec<TeacherTier> {
        vec![
            TeacherTier {
                name: "T1".into(),
                hidden: vec![32],
                max_epochs: 2,
            },
            TeacherTier {
                name: "T2".into(),
                hidden: vec![64, 64],
                max_epochs: 6,
            },
            TeacherTier {
                name: "T3".into(),
                hidden: vec![128, 128],
                max_epochs: 20,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    FarHard,
    MultiCond,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::FarHard => "far-hard",
            BaselineMode::MultiCond => "multi-cond",
        }
    }
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "far-hard" => Ok(BaselineMode::FarHard),
            "multi-cond" => Ok(BaselineMode::MultiCond),
            other => Err(Error::usage(format!(
                "unknown baseline mode {other:?} (expected far-hard or multi-cond)"
            ))),
        }
    }
}

/// Spliced features of one split, all utterances concatenated in order.
#[derive(Debug, Clone)]
pub struct SplicedSplit {
    pub ids: Vec<String>,
    /// `offsets[i]..offsets[i + 1]` are the rows of utterance `i`.
    pub offsets: Vec<usize>,
    pub labels: Vec<u16>,
    pub clean: Matrix,
    pub far: Matrix,
}

impl SplicedSplit {
    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn features(&self, far: bool) -> &Matrix {
        if far {
            &self.far
        } else {
            &self.clean
        }
    }

    pub fn utterance_rows(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Corpus with context-spliced features, ready for training.
#[derive(Debug, Clone)]
pub struct SplicedCorpus {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub context: usize,
    pub train: SplicedSplit,
    pub dev: SplicedSplit,
    pub eval: SplicedSplit,
}

impl SplicedCorpus {
    pub fn new(corpus: &ParallelCorpus, context: usize) -> Result<Self> {
        let build = |split: Split| -> Result<SplicedSplit> {
            let utts = corpus.split(split);
            let width = corpus.feature_dim * context;
            let total: usize = utts.iter().map(|u| u.num_frames()).sum();
            let mut clean = Vec::with_capacity(total * width);
            let mut far = Vec::with_capacity(total * width);
            let mut labels = Vec::with_capacity(total);
            let mut offsets = vec![0];
            for u in utts {
                clean.extend(crate::corpus::splice(&u.clean.frames, context)?.into_data());
                far.extend(crate::corpus::splice(&u.far.frames, context)?.into_data());
                labels.extend_from_slice(u.labels());
                offsets.push(labels.len());
            }
            Ok(SplicedSplit {
                ids: utts.iter().map(|u| u.id().to_owned()).collect(),
                offsets,
                labels,
                clean: Matrix::from_vec(total, width, clean)?,
                far: Matrix::from_vec(total, width, far)?,
            })
        };
        Ok(Self {
            num_classes: corpus.num_classes,
            feature_dim: corpus.feature_dim,
            context,
            train: build(Split::Train)?,
            dev: build(Split::Dev)?,
            eval: build(Split::Eval)?,
        })
    }

    pub fn split(&self, split: Split) -> &SplicedSplit {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Eval => &self.eval,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim * self.context
    }

    pub fn architecture(&self, hidden: &[usize]) -> Architecture {
        Architecture::new(self.input_dim(), hidden.to_vec(), self.num_classes)
    }

    fn check_model(&self, model: &ModelParams) -> Result<()> {
        if model.arch.input_dim != self.input_dim() || model.arch.output_dim != self.num_classes {
            return Err(Error::usage(format!(
                "model maps {} -> {}, corpus needs {} -> {}",
                model.arch.input_dim,
                model.arch.output_dim,
                self.input_dim(),
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Training targets for a set of frames.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Hard(Vec<usize>),
    /// One distribution per row.
    Soft(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(l) => l.len(),
            Targets::Soft(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Hard(l) => Targets::Hard(rows.iter().map(|&r| l[r]).collect()),
            Targets::Soft(m) => Targets::Soft(m.select_rows(rows)),
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Targets {
        let rows: Vec<usize> = range.collect();
        self.select(&rows)
    }

    /// Summed loss of `q` against these targets.
    fn loss_sum(&self, q: &Matrix) -> Result<f64> {
        let mut sum = 0.0;
        match self {
            Targets::Hard(labels) => {
                for (r, &l) in labels.iter().enumerate() {
                    sum += hard_ce(q.row(r), l)?;
                }
            }
            Targets::Soft(p) => {
                for r in 0..p.rows() {
                    sum += soft_ce(p.row(r), q.row(r))?;
                }
            }
        }
        Ok(sum)
    }

    /// Logit gradient `q - p` per row.
    fn logit_grad(&self, q: &Matrix) -> Result<Matrix> {
        match self {
            Targets::Hard(labels) => grad_logits_hard(labels, q),
            Targets::Soft(p) => grad_logits(p, q),
        }
    }
}

/// Inputs with their targets and, for error counting, ground-truth labels.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub inputs: Matrix,
    pub targets: Targets,
    pub labels: Vec<u16>,
}

impl FrameSet {
    pub fn new(inputs: Matrix, targets: Targets, labels: Vec<u16>) -> Result<Self> {
        if inputs.rows() != targets.len() || inputs.rows() != labels.len() {
            return Err(Error::validation(format!(
                "frame set has {} inputs, {} targets, {} labels",
                inputs.rows(),
                targets.len(),
                labels.len()
            )));
        }
        if inputs.rows() == 0 {
            return Err(Error::validation("frame set is empty"));
        }
        Ok(Self {
            inputs,
            targets,
            labels,
        })
    }

    pub fn hard(inputs: Matrix, labels: &[u16]) -> Result<Self> {
        let targets = Targets::Hard(labels.iter().map(|&l| l as usize).collect());
        Self::new(inputs, targets, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean loss and frame error rate of `model` on this set.
    pub fn score(&self, model: &ModelParams) -> Result<(f64, f64)> {
        let n = self.len();
        let mut loss = 0.0;
        let mut errors = 0usize;
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let q = model.posteriors(&self.inputs.select_rows(&rows), 1.0)?;
            loss += self.targets.slice(start..end).loss_sum(&q)?;
            errors += q
                .row_iter()
                .zip(&self.labels[start..end])
                .filter(|(row, &l)| argmax(row) != l as usize)
                .count();
        }
        Ok((loss / n as f64, errors as f64 / n as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_fer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Last epoch run.
    pub stopping_epoch: usize,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,dev_loss,dev_fer\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.dev_loss, e.dev_fer
            ));
        }
        s
    }

    /// Everything except wall time, for reproducibility checks.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.stopping_epoch == other.stopping_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStop {
    pub decision: StopDecision,
    /// 1-based.
    pub best_epoch: usize,
}

/// Patience-based stopping on the dev loss history (one entry per epoch).
///
/// The best epoch is the argmin (earliest on ties). Training stops once
/// `patience` consecutive epochs pass without beating the running best by
/// more than [`MIN_IMPROVEMENT`].
pub fn early_stop(dev_losses: &[f64], patience: usize) -> EarlyStop {
    assert!(!dev_losses.is_empty(), "early_stop needs at least one epoch");
    let mut best_epoch = 0;
    let mut reference = dev_losses[0];
    let mut since_improvement = 0;
    for (i, &loss) in dev_losses.iter().enumerate().skip(1) {
        if loss < dev_losses[best_epoch] {
            best_epoch = i;
        }
        if loss < reference - MIN_IMPROVEMENT {
            reference = loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
    }
    let decision = if since_improvement >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    };
    EarlyStop {
        decision,
        best_epoch: best_epoch + 1,
    }
}

/// Row indices of each minibatch for one epoch.
pub fn epoch_batches(n: usize, cfg: &TrainConfig, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        rng.shuffle(&mut order);
    }
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Mean loss and gradients of one minibatch.
pub fn minibatch_gradients(
    params: &ModelParams,
    frames: &FrameSet,
    rows: &[usize],
) -> Result<(f64, Gradients)> {
    let x = frames.inputs.select_rows(rows);
    let targets = frames.targets.select(rows);
    let trace = params.forward(&x)?;
    let scale = 1.0 / rows.len() as f64;
    let loss = targets.loss_sum(&trace.posteriors)? * scale;
    let mut g = targets.logit_grad(&trace.posteriors)?;
    g.scale(scale);
    Ok((loss, params.backward(&trace, &g)?))
}

pub fn gradient_norm(grads: &Gradients) -> f64 {
    grads
        .iter()
        .flat_map(|l| l.weights.data().iter().chain(&l.bias))
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// The shuffle stream a run with this config uses.
pub fn shuffle_stream(cfg: &TrainConfig) -> RngStream {
    RngStream::with_stream(cfg.seed, STREAM_SHUFFLE)
}

/// Initial parameters a run with this config uses.
pub fn initial_params(arch: &Architecture, cfg: &TrainConfig) -> Result<ModelParams> {
    ModelParams::init(arch, &mut RngStream::with_stream(cfg.seed, STREAM_INIT))
}

/// Minibatch SGD with dev early stopping. `on_step` sees the parameters
/// after every update.
pub fn fit(
    init: ModelParams,
    train: &FrameSet,
    dev: &FrameSet,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&ModelParams),
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = shuffle_stream(cfg);
    let mut params = init;
    let mut best = params.clone();
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut dev_losses = Vec::new();
    let mut best_epoch = 1;

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for rows in epoch_batches(train.len(), cfg, &mut rng) {
            let (loss, grads) = minibatch_gradients(&params, train, &rows)?;
            loss_sum += loss * rows.len() as f64;
            params.sgd_step(&grads, cfg.lr)?;
            on_step(&params);
        }
        if !params.is_finite() {
            return Err(Error::validation(format!(
                "training diverged at epoch {epoch} (lr {})",
                cfg.lr
            )));
        }
        let (dev_loss, dev_fer) = dev.score(&params)?;
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev_loss,
            dev_fer,
        });
        dev_losses.push(dev_loss);
        let state = early_stop(&dev_losses, cfg.patience);
        if state.best_epoch == epoch {
            best = params.clone();
        }
        best_epoch = state.best_epoch;
        if state.decision == StopDecision::Stop {
            break;
        }
    }
    let stopping_epoch = epochs.len();
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            stopping_epoch,
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Hard-label training on one view of the corpus from freshly initialized
/// parameters.
pub fn train_hard(
    data: &SplicedCorpus,
    hidden: &[usize],
    far: bool,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    let arch = data.architecture(hidden);
    let train = FrameSet::hard(data.train.features(far).clone(), &data.train.labels)?;
    let dev = FrameSet::hard(data.dev.features(far).clone(), &data.dev.labels)?;
    fit(initial_params(&arch, cfg)?, &train, &dev, cfg, |_| {})
}

/// Trains a teacher on clean features with hard labels, using the tier's
/// width and epoch budget.
pub fn train_teacher(
    data: &SplicedCorpus,
    tier: &TeacherTier,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let cfg = TrainConfig {
        max_epochs: tier.max_epochs,
        ..cfg.clone()
    };
    train_hard(data, &tier.hidden, false, &cfg).map_err(|e| e.context(format!("tier {}", tier.name)))
}

pub fn train_baseline(
    data: &SplicedCorpus,
    mode: BaselineMode,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    match mode {
        BaselineMode::FarHard => train_hard(data, hidden, true, cfg),
        BaselineMode::MultiCond => {
            cfg.validate()?;
            let arch = data.architecture(hidden);
            let train = multi_condition_frames(data)?;
            let dev = FrameSet::hard(data.dev.far.clone(), &data.dev.labels)?;
            fit(initial_params(&arch, cfg)?, &train, &dev, cfg, |_| {})
        }
    }
}

/// Clean training frames followed by corrupted ones, hard labels on both.
pub fn multi_condition_frames(data: &SplicedCorpus) -> Result<FrameSet> {
    let inputs = data.train.clean.vstack(&data.train.far)?;
    let mut labels = data.train.labels.clone();
    labels.extend_from_slice(&data.train.labels);
    FrameSet::hard(inputs, &labels)
}

/// Per-frame teacher posteriors for a set of utterances, keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    pub teacher_fingerprint: String,
    pub temperature: f64,
    pub num_classes: usize,
    pub utterances: BTreeMap<String, Matrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftLabelManifest {
    version: u32,
    teacher_fingerprint: String,
    temperature: f64,
    num_classes: usize,
    utterances: Vec<SoftLabelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftLabelEntry {
    id: String,
    frames: usize,
}

impl SoftLabelSet {
    pub fn validate(&self) -> Result<()> {
        for (id, m) in &self.utterances {
            if m.cols() != self.num_classes {
                return Err(Error::validation(format!(
                    "soft labels for {id} have {} classes, expected {}",
                    m.cols(),
                    self.num_classes
                )));
            }
            for r in m.row_iter() {
                losses::check_distribution(r, 1e-9)
                    .map_err(|e| e.context(format!("soft labels for {id}")))?;
            }
        }
        Ok(())
    }

    /// Rounds every probability to binary32 and renormalizes each row in f64,
    /// which is exactly what a save/load roundtrip produces.
    pub fn quantized(&self) -> SoftLabelSet {
        let mut out = self.clone();
        for m in out.utterances.values_mut() {
            quantize_rows(m);
        }
        out
    }

    /// Targets for a split, in utterance order. Fails on a missing id or a
    /// frame-count mismatch.
    pub fn targets_for(&self, split: &SplicedSplit) -> Result<Matrix> {
        let mut data = Vec::with_capacity(split.num_frames() * self.num_classes);
        for (i, id) in split.ids.iter().enumerate() {
            let m = self
                .utterances
                .get(id)
                .ok_or_else(|| Error::validation(format!("no soft labels for utterance {id}")))?;
            let t = split.utterance_rows(i).len();
            if m.rows() != t {
                return Err(Error::validation(format!(
                    "alignment mismatch for utterance {id}: {} soft-label frames, {t} features",
                    m.rows()
                )));
            }
            data.extend_from_slice(m.data());
        }
        Matrix::from_vec(split.num_frames(), self.num_classes, data)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = SoftLabelManifest {
            version: SOFT_LABEL_FORMAT_VERSION,
            teacher_fingerprint: self.teacher_fingerprint.clone(),
            temperature: self.temperature,
            num_classes: self.num_classes,
            utterances: self
                .utterances
                .iter()
                .map(|(id, m)| SoftLabelEntry {
                    id: id.clone(),
                    frames: m.rows(),
                })
                .collect(),
        };
        for (id, m) in &self.utterances {
            write_f32_le(&dir.join(format!("{id}.soft.f32")), m.data())?;
        }
        write_json(&dir.join(SOFT_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<SoftLabelSet> {
        let path = dir.join(SOFT_MANIFEST);
        let manifest: SoftLabelManifest = read_json(&path)?;
        if manifest.version != SOFT_LABEL_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported soft-label version {}", manifest.version),
            ));
        }
        let s = manifest.num_classes;
        let mut utterances = BTreeMap::new();
        for e in &manifest.utterances {
            let data = read_f32_le(
                &dir.join(format!("{}.soft.f32", e.id)),
                e.frames * s,
                &format!("utterance {}", e.id),
            )?;
            let mut m = Matrix::from_vec(e.frames, s, data)?;
            renormalize_rows(&mut m);
            utterances.insert(e.id.clone(), m);
        }
        let set = SoftLabelSet {
            teacher_fingerprint: manifest.teacher_fingerprint,
            temperature: manifest.temperature,
            num_classes: s,
            utterances,
        };
        set.validate()?;
        Ok(set)
    }
}

fn quantize_rows(m: &mut Matrix) {
    for v in m.data_mut() {
        *v = *v as f32 as f64;
    }
    renormalize_rows(m);
}

fn renormalize_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
}

/// Posteriors of the frozen teacher on the clean train and dev frames.
pub fn compute_soft_labels(
    teacher: &ModelParams,
    data: &SplicedCorpus,
    temperature: f64,
) -> Result<SoftLabelSet> {
    data.check_model(teacher)?;
    let mut utterances = BTreeMap::new();
    for split in [&data.train, &data.dev] {
        let n = split.num_frames();
        let mut q = Vec::with_capacity(n * data.num_classes);
        for start in (0..n).step_by(EVAL_CHUNK) {
            let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
            let p = teacher.posteriors(&split.clean.select_rows(&rows), temperature)?;
            q.extend_from_slice(p.data());
        }
        let q = Matrix::from_vec(n, data.num_classes, q)?;
        for (i, id) in split.ids.iter().enumerate() {
            let rows: Vec<usize> = split.utterance_rows(i).collect();
            utterances.insert(id.clone(), q.select_rows(&rows));
        }
    }
    Ok(SoftLabelSet {
        teacher_fingerprint: teacher.fingerprint(),
        temperature,
        num_classes: data.num_classes,
        utterances,
    })
}

/// Student frame sets: corrupted features against aligned soft labels.
pub fn distillation_frames(data: &SplicedCorpus, soft: &SoftLabelSet) -> Result<(FrameSet, FrameSet)> {
    if soft.num_classes != data.num_classes {
        return Err(Error::validation(format!(
            "soft labels cover {} classes, corpus has {}",
            soft.num_classes, data.num_classes
        )));
    }
    let train = FrameSet::new(
        data.train.far.clone(),
        Targets::Soft(soft.targets_for(&data.train)?),
        data.train.labels.clone(),
    )?;
    let dev = FrameSet::new(
        data.dev.far.clone(),
        Targets::Soft(soft.targets_for(&data.dev)?),
        data.dev.labels.clone(),
    )?;
    Ok((train, dev))
}

/// Trains a student on corrupted features to match the soft labels.
pub fn distill_student(
    data: &SplicedCorpus,
    soft: &SoftLabelSet,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    let arch = data.architecture(hidden);
    let (train, dev) = distillation_frames(data, soft)?;
    fit(initial_params(&arch, cfg)?, &train, &dev, cfg, |_| {})
}
