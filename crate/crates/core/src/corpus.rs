//! Synthetic parallel corpora: frame-synchronized clean and corrupted feature
//! streams sharing one label sequence, plus context splicing and the on-disk
//! directory format.
//!
//! Directory layout written by [`save_corpus`]:
//!
//! ```text
//! manifest.json          {"version":1,"num_classes":S,"feature_dim":D,
//!                         "splits":{"train":[{"id":..,"frames":T}],"dev":[..],"eval":[..]},
//!                         "channel":{..},"seed":..}
//! <id>.clean.f32         T*D little-endian IEEE-754 binary32, row-major
//! <id>.far.f32           same layout as the clean file
//! <id>.labels.u16        T little-endian u16 class indices
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const CORPUS_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

const STREAM_CLEAN: u64 = 0;
const STREAM_CHANNEL: u64 = 1;

/// Linear smearing channel with additive Gaussian noise:
/// `y_t = gain * sum_k kernel[k] * x_{t-k} + bias + sigma * n_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub kernel: Vec<f64>,
    pub sigma: f64,
    pub gain: f64,
    pub bias: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            kernel: vec![0.6, 0.3, 0.1],
            sigma: 0.5,
            gain: 1.0,
            bias: 0.0,
        }
    }
}

impl ChannelSpec {
    pub fn identity() -> Self {
        Self {
            kernel: vec![1.0],
            sigma: 0.0,
            gain: 1.0,
            bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_empty() {
            return Err(Error::validation("channel.kernel must have at least one tap"));
        }
        if self.kernel.iter().any(|h| !h.is_finite()) {
            return Err(Error::validation("channel.kernel has a non-finite tap"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::validation("channel.sigma must be finite and >= 0"));
        }
        if !self.gain.is_finite() {
            return Err(Error::validation("channel.gain must be finite"));
        }
        if !self.bias.is_finite() {
            return Err(Error::validation("channel.bias must be finite"));
        }
        Ok(())
    }
}

/// Segment-to-segment class transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransitionsRepr", into = "TransitionsRepr")]
pub enum Transitions {
    Uniform,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TransitionsRepr {
    Name(String),
    Rows(Vec<Vec<f64>>),
}

impl TryFrom<TransitionsRepr> for Transitions {
    type Error = String;

    fn try_from(r: TransitionsRepr) -> std::result::Result<Self, String> {
        match r {
            TransitionsRepr::Name(n) if n == "uniform" => Ok(Transitions::Uniform),
            TransitionsRepr::Name(n) => Err(format!("unknown transition model {n:?}")),
            TransitionsRepr::Rows(rows) => Ok(Transitions::Matrix(rows)),
        }
    }
}

impl From<Transitions> for TransitionsRepr {
    fn from(t: Transitions) -> Self {
        match t {
            Transitions::Uniform => TransitionsRepr::Name("uniform".into()),
            Transitions::Matrix(rows) => TransitionsRepr::Rows(rows),
        }
    }
}

impl Transitions {
    /// Row-stochastic matrix for `num_classes` classes.
    pub fn matrix(&self, num_classes: usize) -> Vec<Vec<f64>> {
        match self {
            Transitions::Uniform => vec![vec![1.0 / num_classes as f64; num_classes]; num_classes],
            Transitions::Matrix(rows) => rows.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub eval: usize,
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub utterances: SplitSizes,
    /// Inclusive range of utterance lengths, in frames.
    pub utterance_frames: [usize; 2],
    /// Inclusive range of segment dwell lengths, in frames.
    pub segment_frames: [usize; 2],
    pub transitions: Transitions,
    /// Class means are drawn from N(0, mean_spread^2 I).
    pub mean_spread: f64,
    /// Within-class standard deviation.
    pub class_scale: f64,
    pub channel: ChannelSpec,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_classes: 20,
            feature_dim: 12,
            utterances: SplitSizes {
                train: 600,
                dev: 100,
                eval: 100,
            },
            utterance_frames: [40, 120],
            segment_frames: [5, 20],
            transitions: Transitions::Uniform,
            mean_spread: 2.0,
            class_scale: 1.0,
            channel: ChannelSpec::default(),
            seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self.num_classes;
        if s == 0 || s > u16::MAX as usize + 1 {
            return Err(Error::validation("corpus.num_classes must be in 1..=65536"));
        }
        if self.feature_dim == 0 {
            return Err(Error::validation("corpus.feature_dim must be >= 1"));
        }
        let [umin, umax] = self.utterance_frames;
        if umin == 0 || umin > umax {
            return Err(Error::validation(
                "corpus.utterance_frames must satisfy 1 <= min <= max",
            ));
        }
        let [lmin, lmax] = self.segment_frames;
        if lmin == 0 || lmin > lmax {
            return Err(Error::validation(
                "corpus.segment_frames must satisfy 1 <= min <= max",
            ));
        }
        if let Transitions::Matrix(rows) = &self.transitions {
            if rows.len() != s {
                return Err(Error::validation(format!(
                    "corpus.transitions has {} rows, expected {s}",
                    rows.len()
                )));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != s || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::validation(format!(
                        "corpus.transitions row {i} is not a probability vector of length {s}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::validation(format!(
                        "corpus.transitions row {i} sums to {sum}"
                    )));
                }
            }
        }
        if !(self.mean_spread.is_finite() && self.mean_spread >= 0.0) {
            return Err(Error::validation("corpus.mean_spread must be finite and >= 0"));
        }
        if !(self.class_scale.is_finite() && self.class_scale >= 0.0) {
            return Err(Error::validation("corpus.class_scale must be finite and >= 0"));
        }
        self.channel
            .validate()
            .map_err(|e| e.context("corpus"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T x D` features.
    pub frames: Matrix,
    pub labels: Vec<u16>,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }
}

/// One utterance seen through both channels. `clean` and `far` share id,
/// frame count and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelUtterance {
    pub clean: Utterance,
    pub far: Utterance,
}

impl ParallelUtterance {
    pub fn id(&self) -> &str {
        &self.clean.id
    }

    pub fn labels(&self) -> &[u16] {
        &self.clean.labels
    }

    pub fn num_frames(&self) -> usize {
        self.clean.labels.len()
    }

    /// Clean or far view.
    pub fn view(&self, far: bool) -> &Utterance {
        if far {
            &self.far
        } else {
            &self.clean
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train: Vec<ParallelUtterance>,
    pub dev: Vec<ParallelUtterance>,
    pub eval: Vec<ParallelUtterance>,
    pub channel: ChannelSpec,
    pub seed: u64,
}

impl ParallelCorpus {
    pub fn split(&self, split: Split) -> &[ParallelUtterance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Eval => &self.eval,
        }
    }

    pub fn num_utterances(&self) -> usize {
        self.train.len() + self.dev.len() + self.eval.len()
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &ParallelUtterance> {
        self.train.iter().chain(&self.dev).chain(&self.eval)
    }

    /// Checks every structural invariant: shapes, parallel alignment, label
    /// range, finiteness and id uniqueness across splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for split in Split::ALL {
            for u in self.split(split) {
                let id = u.id();
                if !ids.insert(id.to_owned()) {
                    return Err(Error::validation(format!("duplicate utterance id {id}")));
                }
                let t = u.clean.labels.len();
                if t == 0 {
                    return Err(Error::validation(format!("utterance {id} has no frames")));
                }
                if u.far.id != u.clean.id {
                    return Err(Error::validation(format!(
                        "utterance {id} pairs with far-side id {}",
                        u.far.id
                    )));
                }
                if u.far.labels != u.clean.labels {
                    return Err(Error::validation(format!(
                        "utterance {id}: clean and far labels differ"
                    )));
                }
                for side in [&u.clean, &u.far] {
                    if side.frames.rows() != t || side.frames.cols() != self.feature_dim {
                        return Err(Error::validation(format!(
                            "utterance {id}: frames are {}x{}, expected {t}x{}",
                            side.frames.rows(),
                            side.frames.cols(),
                            self.feature_dim
                        )));
                    }
                    if !side.frames.is_finite() {
                        return Err(Error::validation(format!(
                            "utterance {id}: non-finite feature"
                        )));
                    }
                }
                if let Some(&bad) = u.labels().iter().find(|&&l| l as usize >= self.num_classes) {
                    return Err(Error::validation(format!(
                        "utterance {id}: label {bad} out of range for {} classes",
                        self.num_classes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generates a corpus. Clean features and labels come from one random
/// sub-stream and channel noise from another, so two specs that differ only
/// in their channel share identical clean data.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<ParallelCorpus> {
    spec.validate()?;
    let s = spec.num_classes;
    let d = spec.feature_dim;
    let mut rng = RngStream::with_stream(spec.seed, STREAM_CLEAN);
    let mut noise = RngStream::with_stream(spec.seed, STREAM_CHANNEL);

    let means: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..d).map(|_| spec.mean_spread * rng.next_gaussian()).collect())
        .collect();
    let transitions = spec.transitions.matrix(s);

    let mut make_split = |split: Split, count: usize| -> Vec<ParallelUtterance> {
        (0..count)
            .map(|i| {
                let id = format!("{}-{i:05}", split.name());
                let t = rng.next_in_range(spec.utterance_frames[0], spec.utterance_frames[1]);
                let labels = sample_labels(&mut rng, t, &transitions, spec.segment_frames);
                let mut clean = Matrix::zeros(t, d);
                for (r, &label) in labels.iter().enumerate() {
                    let mean = &means[label as usize];
                    for (c, x) in clean.row_mut(r).iter_mut().enumerate() {
                        *x = mean[c] + spec.class_scale * rng.next_gaussian();
                    }
                }
                let far = corrupt(&clean, &spec.channel, &mut noise);
                ParallelUtterance {
                    clean: Utterance {
                        id: id.clone(),
                        frames: clean,
                        labels: labels.clone(),
                    },
                    far: Utterance {
                        id,
                        frames: far,
                        labels,
                    },
                }
            })
            .collect()
    };

    let train = make_split(Split::Train, spec.utterances.train);
    let dev = make_split(Split::Dev, spec.utterances.dev);
    let eval = make_split(Split::Eval, spec.utterances.eval);
    Ok(ParallelCorpus {
        num_classes: s,
        feature_dim: d,
        train,
        dev,
        eval,
        channel: spec.channel.clone(),
        seed: spec.seed,
    })
}

/// Label sequence built from segments: the first class is uniform, later
/// classes follow the transition matrix, dwell lengths are uniform in
/// `[min, max]` and the last segment is cut at `num_frames`.
fn sample_labels(
    rng: &mut RngStream,
    num_frames: usize,
    transitions: &[Vec<f64>],
    [lmin, lmax]: [usize; 2],
) -> Vec<u16> {
    let mut labels = Vec::with_capacity(num_frames);
    let mut class = rng.next_below(transitions.len() as u64) as usize;
    loop {
        let dwell = rng.next_in_range(lmin, lmax);
        let take = dwell.min(num_frames - labels.len());
        labels.extend(std::iter::repeat_n(class as u16, take));
        if labels.len() == num_frames {
            return labels;
        }
        class = rng.next_categorical(&transitions[class]);
    }
}

/// Applies the channel. Frames before the start read the first frame.
pub fn corrupt(clean: &Matrix, channel: &ChannelSpec, rng: &mut RngStream) -> Matrix {
    let (t_len, d) = (clean.rows(), clean.cols());
    let mut out = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        let row = out.row_mut(t);
        row.copy_from_slice(clean.row(t));
        for v in row.iter_mut() {
            *v *= channel.kernel[0];
        }
        for (k, &h) in channel.kernel.iter().enumerate().skip(1) {
            let src = clean.row(t.saturating_sub(k));
            for (v, x) in row.iter_mut().zip(src) {
                *v += h * x;
            }
        }
        for v in row.iter_mut() {
            *v = channel.gain * *v + channel.bias;
        }
        if channel.sigma > 0.0 {
            for v in row.iter_mut() {
                *v += channel.sigma * rng.next_gaussian();
            }
        }
    }
    out
}

/// Concatenates each frame with its `context / 2` neighbours on either side,
/// replicating the first/last frame past the edges.
pub fn splice(frames: &Matrix, context: usize) -> Result<Matrix> {
    if context == 0 || context.is_multiple_of(2) {
        return Err(Error::usage(format!(
            "context window must be a positive odd number, got {context}"
        )));
    }
    let (t_len, d) = (frames.rows(), frames.cols());
    let half = context / 2;
    let mut out = Matrix::zeros(t_len, d * context);
    if t_len == 0 {
        return Ok(out);
    }
    for t in 0..t_len {
        let row = out.row_mut(t);
        for (slot, chunk) in row.chunks_exact_mut(d.max(1)).enumerate().take(context) {
            let src = (t + slot).saturating_sub(half).min(t_len - 1);
            chunk.copy_from_slice(frames.row(src));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSplits {
    pub train: Vec<ManifestEntry>,
    pub dev: Vec<ManifestEntry>,
    pub eval: Vec<ManifestEntry>,
}

impl ManifestSplits {
    fn get(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Eval => &self.eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub version: u32,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub splits: ManifestSplits,
    pub channel: ChannelSpec,
    pub seed: u64,
}

impl CorpusManifest {
    pub fn num_utterances(&self) -> usize {
        self.splits.train.len() + self.splits.dev.len() + self.splits.eval.len()
    }
}

pub fn write_f32_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads exactly `expected` binary32 values; `what` names the owner in errors.
pub fn read_f32_le(path: &Path, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!(
                "length mismatch for {what}: {} bytes, expected {}",
                bytes.len(),
                expected * 4
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_labels(path: &Path, labels: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_labels(path: &Path, expected: usize, what: &str) -> Result<Vec<u16>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 2 {
        return Err(Error::format(
            path,
            format!(
                "length mismatch for {what}: {} bytes, expected {}",
                bytes.len(),
                expected * 2
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the corpus directory and returns its manifest.
pub fn save_corpus(corpus: &ParallelCorpus, dir: &Path) -> Result<CorpusManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = |us: &[ParallelUtterance]| -> Vec<ManifestEntry> {
        us.iter()
            .map(|u| ManifestEntry {
                id: u.id().to_owned(),
                frames: u.num_frames(),
            })
            .collect()
    };
    let manifest = CorpusManifest {
        version: CORPUS_FORMAT_VERSION,
        num_classes: corpus.num_classes,
        feature_dim: corpus.feature_dim,
        splits: ManifestSplits {
            train: entries(&corpus.train),
            dev: entries(&corpus.dev),
            eval: entries(&corpus.eval),
        },
        channel: corpus.channel.clone(),
        seed: corpus.seed,
    };
    for u in corpus.iter_all() {
        let id = u.id();
        write_f32_le(&dir.join(format!("{id}.clean.f32")), u.clean.frames.data())?;
        write_f32_le(&dir.join(format!("{id}.far.f32")), u.far.frames.data())?;
        write_labels(&dir.join(format!("{id}.labels.u16")), u.labels())?;
    }
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST);
    let manifest: CorpusManifest = read_json(&path)?;
    if manifest.version != CORPUS_FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported corpus version {}", manifest.version),
        ));
    }
    Ok(manifest)
}

/// Loads and fully validates a directory written by [`save_corpus`].
pub fn load_corpus(dir: &Path) -> Result<ParallelCorpus> {
    let manifest = load_manifest(dir)?;
    let (s, d) = (manifest.num_classes, manifest.feature_dim);
    let load_split = |split: Split| -> Result<Vec<ParallelUtterance>> {
        manifest
            .splits
            .get(split)
            .iter()
            .map(|e| {
                let id = &e.id;
                let t = e.frames;
                let labels_path = dir.join(format!("{id}.labels.u16"));
                let labels = read_labels(&labels_path, t, &format!("utterance {id}"))?;
                if let Some(&bad) = labels.iter().find(|&&l| l as usize >= s) {
                    return Err(Error::validation(format!(
                        "utterance {id}: label {bad} out of range for {s} classes"
                    )));
                }
                let side = |suffix: &str| -> Result<Utterance> {
                    let path = dir.join(format!("{id}.{suffix}.f32"));
                    let data = read_f32_le(&path, t * d, &format!("utterance {id}"))?;
                    Ok(Utterance {
                        id: id.clone(),
                        frames: Matrix::from_vec(t, d, data)?,
                        labels: labels.clone(),
                    })
                };
                let clean = side("clean")?;
                let far = side("far")?;
                Ok(ParallelUtterance { clean, far })
            })
            .collect()
    };
    let corpus = ParallelCorpus {
        num_classes: s,
        feature_dim: d,
        train: load_split(Split::Train)?,
        dev: load_split(Split::Dev)?,
        eval: load_split(Split::Eval)?,
        channel: manifest.channel.clone(),
        seed: manifest.seed,
    };
    corpus.validate()?;
    Ok(corpus)
}
