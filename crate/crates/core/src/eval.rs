//! Frame and segment error rates, prior-scaled likelihoods and the
//! teacher-ladder experiment.
//!
//! The segment error rate stands in for word error rate: predicted and
//! reference frame labels are collapsed into runs, and the Levenshtein
//! distance between the run sequences is normalized by the number of
//! reference runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, ParallelUtterance, Split};
use crate::error::{Error, Result};
use crate::losses::{hard_ce, PROB_FLOOR};
use crate::network::ModelParams;
use crate::numerics::{argmax, Matrix};
use crate::training::{
    compute_soft_labels, distill_student, train_baseline, train_teacher, BaselineMode,
    SplicedCorpus, SplicedSplit, TeacherTier, TrainConfig, TrainHistory,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub split: String,
    pub frame_error_rate: f64,
    pub segment_error_rate: f64,
    /// Mean hard-label cross-entropy against the ground truth.
    pub mean_loss: f64,
    pub num_frames: usize,
    /// Reference segments.
    pub num_segments: usize,
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Collapses runs of equal labels: `[0,0,1,1,0] -> [0,1,0]`.
pub fn collapse_runs<T: PartialEq + Copy>(labels: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for &l in labels {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Per-utterance error counts accumulated over a split.
#[derive(Debug, Default, Clone, Copy)]
struct ErrorTally {
    frames: usize,
    frame_errors: usize,
    segments: usize,
    segment_edits: usize,
    loss: f64,
}

impl ErrorTally {
    fn add_utterance(&mut self, q: &Matrix, reference: &[u16]) -> Result<()> {
        let hyp: Vec<u16> = q.row_iter().map(|r| argmax(r) as u16).collect();
        self.frames += reference.len();
        self.frame_errors += hyp.iter().zip(reference).filter(|(h, r)| h != r).count();
        let ref_runs = collapse_runs(reference);
        self.segments += ref_runs.len();
        self.segment_edits += edit_distance(&ref_runs, &collapse_runs(&hyp));
        for (row, &l) in q.row_iter().zip(reference) {
            self.loss += hard_ce(row, l as usize)?;
        }
        Ok(())
    }

    fn report(&self, model: &str, split: &str) -> Result<MetricsReport> {
        if self.frames == 0 {
            return Err(Error::validation("no frames to evaluate"));
        }
        Ok(MetricsReport {
            model: model.to_owned(),
            split: split.to_owned(),
            frame_error_rate: self.frame_errors as f64 / self.frames as f64,
            segment_error_rate: self.segment_edits as f64 / self.segments as f64,
            mean_loss: self.loss / self.frames as f64,
            num_frames: self.frames,
            num_segments: self.segments,
        })
    }
}

/// Scores a model on a spliced split, one utterance at a time in order.
pub fn evaluate_split(
    model: &ModelParams,
    split: &SplicedSplit,
    far: bool,
    model_name: &str,
    split_name: &str,
) -> Result<MetricsReport> {
    let features = split.features(far);
    let mut tally = ErrorTally::default();
    for i in 0..split.ids.len() {
        let rows: Vec<usize> = split.utterance_rows(i).collect();
        let q = model.posteriors(&features.select_rows(&rows), 1.0)?;
        tally.add_utterance(&q, &split.labels[rows[0]..rows[0] + rows.len()])?;
    }
    tally.report(model_name, split_name)
}

/// Context window implied by a model's input width.
fn context_for(model: &ModelParams, feature_dim: usize) -> Result<usize> {
    let input = model.arch.input_dim;
    if feature_dim == 0 || !input.is_multiple_of(feature_dim) || (input / feature_dim).is_multiple_of(2) {
        return Err(Error::usage(format!(
            "model input width {input} is not an odd multiple of feature dim {feature_dim}"
        )));
    }
    Ok(input / feature_dim)
}

/// Scores a model on raw utterances, splicing with the context its input
/// width implies.
pub fn evaluate_utterances(
    model: &ModelParams,
    utterances: &[ParallelUtterance],
    use_far: bool,
    model_name: &str,
    split_name: &str,
) -> Result<MetricsReport> {
    let mut tally = ErrorTally::default();
    for u in utterances {
        let view = u.view(use_far);
        let context = context_for(model, view.frames.cols())?;
        let x = crate::corpus::splice(&view.frames, context)?;
        let q = model.posteriors(&x, 1.0)?;
        tally.add_utterance(&q, &view.labels)?;
    }
    tally.report(model_name, split_name)
}

/// Fraction of frames whose argmax posterior (ties to the lowest class)
/// differs from the label.
pub fn frame_error_rate(
    model: &ModelParams,
    utterances: &[ParallelUtterance],
    use_far: bool,
) -> Result<f64> {
    evaluate_utterances(model, utterances, use_far, "", "").map(|m| m.frame_error_rate)
}

pub fn segment_error_rate(
    model: &ModelParams,
    utterances: &[ParallelUtterance],
    use_far: bool,
) -> Result<f64> {
    evaluate_utterances(model, utterances, use_far, "", "").map(|m| m.segment_error_rate)
}

/// Class priors, strictly positive when `smoothing > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector(pub Vec<f64>);

/// `(count_i + smoothing) / (N + S * smoothing)`.
pub fn estimate_priors(labels: &[u16], num_classes: usize, smoothing: f64) -> Result<PriorVector> {
    if labels.is_empty() {
        return Err(Error::validation("cannot estimate priors from zero frames"));
    }
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::usage("prior smoothing must be >= 0"));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        let slot = counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::validation(format!("label {l} out of range")))?;
        *slot += 1;
    }
    let denom = labels.len() as f64 + num_classes as f64 * smoothing;
    Ok(PriorVector(
        counts.iter().map(|&c| (c as f64 + smoothing) / denom).collect(),
    ))
}

/// Scaled log-likelihoods `ln q_i - ln prior_i`; only differences between
/// classes are meaningful.
pub fn posterior_to_loglik(q: &[f64], priors: &PriorVector) -> Result<Vec<f64>> {
    if q.len() != priors.0.len() {
        return Err(Error::usage(format!(
            "{} posteriors for {} priors",
            q.len(),
            priors.0.len()
        )));
    }
    if priors.0.iter().any(|&p| p.is_nan() || p <= 0.0) {
        return Err(Error::usage("priors must be strictly positive"));
    }
    Ok(q.iter()
        .zip(&priors.0)
        .map(|(&qi, &pi)| qi.max(PROB_FLOOR).ln() - pi.ln())
        .collect())
}

/// Spearman rank correlation (average ranks for ties). `None` when either
/// side has no variance or fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Everything `run_experiment` needs besides the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub context: usize,
    /// Hidden widths of the baselines and every student.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub tiers: Vec<TeacherTier>,
    pub temperature: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    FarHard,
    MultiCond,
    Teacher,
    Student,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FarHard => "far-hard",
            ModelKind::MultiCond => "multi-cond",
            ModelKind::Teacher => "teacher",
            ModelKind::Student => "student",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub kind: ModelKind,
    pub tier: Option<String>,
    pub eval_far: MetricsReport,
    /// Teachers only.
    pub eval_clean: Option<MetricsReport>,
    pub best_dev_loss: f64,
    pub best_epoch: usize,
    pub stopping_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub models: Vec<ModelRow>,
}

impl SeedReport {
    pub fn find(&self, kind: ModelKind, tier: Option<&str>) -> Option<&ModelRow> {
        self.models
            .iter()
            .find(|m| m.kind == kind && m.tier.as_deref() == tier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTrend {
    pub tier: String,
    /// Teacher on clean eval features.
    pub teacher_fer: f64,
    pub teacher_ser: f64,
    pub teacher_dev_loss: f64,
    /// Student on corrupted eval features.
    pub student_fer: f64,
    pub student_ser: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    /// Seed means per tier, in ladder order.
    pub tiers: Vec<TierTrend>,
    pub far_hard_fer: f64,
    pub far_hard_ser: f64,
    pub multi_cond_fer: f64,
    pub multi_cond_ser: f64,
    /// Spearman correlation of teacher vs student mean FER across tiers.
    pub teacher_student_spearman: Option<f64>,
    /// Seeds where the top-tier student beats far-hard on both FER and SER.
    pub student_wins: usize,
    /// Seeds where multi-cond FER lies strictly between the top-tier
    /// student's and far-hard's.
    pub multi_cond_between: usize,
    pub num_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub setup: ExperimentSetup,
    pub seeds: Vec<SeedReport>,
    pub trend: TrendSummary,
}

impl ExperimentReport {
    /// Flat `seed,model,tier,split,fer,ser,loss` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,model,tier,split,fer,ser,loss\n");
        for seed in &self.seeds {
            for m in &seed.models {
                let tier = m.tier.as_deref().unwrap_or("");
                for r in std::iter::once(&m.eval_far).chain(&m.eval_clean) {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        seed.seed,
                        m.kind.name(),
                        tier,
                        r.split,
                        r.frame_error_rate,
                        r.segment_error_rate,
                        r.mean_loss
                    ));
                }
            }
        }
        s
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn row(
    kind: ModelKind,
    tier: Option<&str>,
    eval_far: MetricsReport,
    eval_clean: Option<MetricsReport>,
    history: &TrainHistory,
) -> ModelRow {
    ModelRow {
        kind,
        tier: tier.map(str::to_owned),
        eval_far,
        eval_clean,
        best_dev_loss: history.best().dev_loss,
        best_epoch: history.best_epoch,
        stopping_epoch: history.stopping_epoch,
    }
}

pub const EVAL_FAR: &str = "eval-far";
pub const EVAL_CLEAN: &str = "eval-clean";

/// Trains and scores every model for one seed. Soft labels are rounded to
/// their on-disk precision so this matches chaining the CLI subcommands.
pub fn run_seed(
    data: &SplicedCorpus,
    setup: &ExperimentSetup,
    seed: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<SeedReport> {
    let cfg = TrainConfig {
        seed,
        ..setup.train.clone()
    };
    let tag = |e: Error, what: &str| e.context(format!("seed {seed}, {what}"));
    let eval = &data.eval;
    let mut models = Vec::new();

    for mode in [BaselineMode::FarHard, BaselineMode::MultiCond] {
        progress(&format!("seed {seed}: {}", mode.name()));
        let kind = match mode {
            BaselineMode::FarHard => ModelKind::FarHard,
            BaselineMode::MultiCond => ModelKind::MultiCond,
        };
        let (model, hist) =
            train_baseline(data, mode, &setup.hidden, &cfg).map_err(|e| tag(e, mode.name()))?;
        let far = evaluate_split(&model, eval, true, kind.name(), EVAL_FAR)?;
        models.push(row(kind, None, far, None, &hist));
    }

    for tier in &setup.tiers {
        let what = format!("tier {}", tier.name);
        progress(&format!("seed {seed}: teacher {}", tier.name));
        let (teacher, t_hist) = train_teacher(data, tier, &cfg).map_err(|e| tag(e, &what))?;
        let t_far = evaluate_split(&teacher, eval, true, "teacher", EVAL_FAR)?;
        let t_clean = evaluate_split(&teacher, eval, false, "teacher", EVAL_CLEAN)?;
        models.push(row(ModelKind::Teacher, Some(&tier.name), t_far, Some(t_clean), &t_hist));

        progress(&format!("seed {seed}: student of {}", tier.name));
        let soft = compute_soft_labels(&teacher, data, setup.temperature)
            .map_err(|e| tag(e, &what))?
            .quantized();
        let (student, s_hist) =
            distill_student(data, &soft, &setup.hidden, &cfg).map_err(|e| tag(e, &what))?;
        let s_far = evaluate_split(&student, eval, true, "student", EVAL_FAR)?;
        models.push(row(ModelKind::Student, Some(&tier.name), s_far, None, &s_hist));
    }
    Ok(SeedReport { seed, models })
}

pub fn summarize(seeds: &[SeedReport], tiers: &[TeacherTier]) -> TrendSummary {
    let metric = |kind: ModelKind, tier: Option<&str>, f: &dyn Fn(&ModelRow) -> f64| {
        mean(seeds.iter().filter_map(|s| s.find(kind, tier)).map(f))
    };
    let tier_trends: Vec<TierTrend> = tiers
        .iter()
        .map(|t| {
            let name = Some(t.name.as_str());
            let clean = |m: &ModelRow| {
                m.eval_clean
                    .as_ref()
                    .map_or(f64::NAN, |c| c.frame_error_rate)
            };
            let clean_ser = |m: &ModelRow| {
                m.eval_clean
                    .as_ref()
                    .map_or(f64::NAN, |c| c.segment_error_rate)
            };
            TierTrend {
                tier: t.name.clone(),
                teacher_fer: metric(ModelKind::Teacher, name, &clean),
                teacher_ser: metric(ModelKind::Teacher, name, &clean_ser),
                teacher_dev_loss: metric(ModelKind::Teacher, name, &|m| m.best_dev_loss),
                student_fer: metric(ModelKind::Student, name, &|m| m.eval_far.frame_error_rate),
                student_ser: metric(ModelKind::Student, name, &|m| {
                    m.eval_far.segment_error_rate
                }),
            }
        })
        .collect();

    let top = tiers.last().map(|t| t.name.as_str());
    let mut student_wins = 0;
    let mut multi_cond_between = 0;
    for s in seeds {
        let (Some(fh), Some(mc), Some(st)) = (
            s.find(ModelKind::FarHard, None),
            s.find(ModelKind::MultiCond, None),
            s.find(ModelKind::Student, top),
        ) else {
            continue;
        };
        if st.eval_far.frame_error_rate < fh.eval_far.frame_error_rate
            && st.eval_far.segment_error_rate < fh.eval_far.segment_error_rate
        {
            student_wins += 1;
        }
        let m = mc.eval_far.frame_error_rate;
        if st.eval_far.frame_error_rate < m && m < fh.eval_far.frame_error_rate {
            multi_cond_between += 1;
        }
    }

    let teacher: Vec<f64> = tier_trends.iter().map(|t| t.teacher_fer).collect();
    let student: Vec<f64> = tier_trends.iter().map(|t| t.student_fer).collect();
    TrendSummary {
        teacher_student_spearman: spearman(&teacher, &student),
        tiers: tier_trends,
        far_hard_fer: metric(ModelKind::FarHard, None, &|m| m.eval_far.frame_error_rate),
        far_hard_ser: metric(ModelKind::FarHard, None, &|m| m.eval_far.segment_error_rate),
        multi_cond_fer: metric(ModelKind::MultiCond, None, &|m| m.eval_far.frame_error_rate),
        multi_cond_ser: metric(ModelKind::MultiCond, None, &|m| {
            m.eval_far.segment_error_rate
        }),
        student_wins,
        multi_cond_between,
        num_seeds: seeds.len(),
    }
}

pub fn validate_setup(setup: &ExperimentSetup) -> Result<()> {
    if setup.tiers.is_empty() {
        return Err(Error::validation("tiers: at least one teacher tier is required"));
    }
    if setup.seeds.is_empty() {
        return Err(Error::validation("seeds: at least one seed is required"));
    }
    if setup.context == 0 || setup.context.is_multiple_of(2) {
        return Err(Error::validation("model.context must be a positive odd number"));
    }
    if !(setup.temperature.is_finite() && setup.temperature > 0.0) {
        return Err(Error::validation("temperature must be > 0"));
    }
    for (i, t) in setup.tiers.iter().enumerate() {
        if t.max_epochs == 0 || t.hidden.contains(&0) {
            return Err(Error::validation(format!(
                "tiers[{i}] needs non-zero widths and max_epochs"
            )));
        }
    }
    if setup.hidden.contains(&0) {
        return Err(Error::validation("model.hidden widths must be >= 1"));
    }
    setup.train.validate()
}

/// Runs baselines, the teacher ladder and the distilled students for every
/// seed on an already spliced corpus.
pub fn run_experiment_on(
    data: &SplicedCorpus,
    setup: &ExperimentSetup,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    validate_setup(setup)?;
    if data.context != setup.context {
        return Err(Error::usage(format!(
            "corpus spliced with context {}, setup asks for {}",
            data.context, setup.context
        )));
    }
    let seeds = setup
        .seeds
        .iter()
        .map(|&seed| run_seed(data, setup, seed, progress))
        .collect::<Result<Vec<_>>>()?;
    let trend = summarize(&seeds, &setup.tiers);
    Ok(ExperimentReport {
        version: REPORT_FORMAT_VERSION,
        setup: setup.clone(),
        seeds,
        trend,
    })
}

/// Loads the corpus directory and runs the experiment on it.
pub fn run_experiment(
    corpus_dir: &Path,
    setup: &ExperimentSetup,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    validate_setup(setup)?;
    let corpus = load_corpus(corpus_dir)?;
    let data = SplicedCorpus::new(&corpus, setup.context)?;
    run_experiment_on(&data, setup, progress)
}

/// Labels of one split, for prior estimation.
pub fn split_labels(data: &SplicedCorpus, split: Split) -> &[u16] {
    &data.split(split).labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::network::Architecture;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    #[test]
    fn edit_distance_cases() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[]), 3);
        assert_eq!(edit_distance::<u8>(&[], &[]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance(&[1, 2, 3], &[3, 2, 1]), 2);
    }

    /// Shortest edit script by breadth-first search over all sequences
    /// reachable with single edits; exact for small distances.
    fn bfs_distance(a: &[u8], b: &[u8], alphabet: &[u8], limit: usize) -> usize {
        use std::collections::{HashSet, VecDeque};
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        queue.push_back((a.to_vec(), 0usize));
        seen.insert(a.to_vec());
        while let Some((s, d)) = queue.pop_front() {
            if s == b {
                return d;
            }
            if d == limit {
                continue;
            }
            let mut next = Vec::new();
            for i in 0..s.len() {
                let mut del = s.clone();
                del.remove(i);
                next.push(del);
                for &c in alphabet {
                    let mut sub = s.clone();
                    sub[i] = c;
                    next.push(sub);
                }
            }
            for i in 0..=s.len() {
                for &c in alphabet {
                    let mut ins = s.clone();
                    ins.insert(i, c);
                    next.push(ins);
                }
            }
            for n in next {
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        usize::MAX
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn edit_distance_is_a_metric(
            a in prop::collection::vec(0u8..3, 0..4),
            b in prop::collection::vec(0u8..3, 0..4),
            c in prop::collection::vec(0u8..3, 0..4),
        ) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert_eq!(ab, bfs_distance(&a, &b, &[0, 1, 2], 4));
        }
    }

    #[test]
    fn collapse_runs_cases() {
        assert_eq!(collapse_runs(&[0, 0, 1, 1, 0]), vec![0, 1, 0]);
        assert_eq!(collapse_runs::<u16>(&[]), Vec::<u16>::new());
    }

    fn utt(id: &str, frames: Matrix, labels: Vec<u16>) -> ParallelUtterance {
        let u = Utterance {
            id: id.into(),
            frames,
            labels,
        };
        ParallelUtterance {
            clean: u.clone(),
            far: u,
        }
    }

    #[test]
    fn zero_model_tie_break() {
        let model = ModelParams::zeros(&Architecture::new(2, vec![3], 2)).unwrap();
        let zeros = utt("a", Matrix::zeros(4, 2), vec![0; 4]);
        assert_eq!(frame_error_rate(&model, &[zeros], true).unwrap(), 0.0);
        let ones = utt("b", Matrix::zeros(4, 2), vec![1; 4]);
        assert_eq!(frame_error_rate(&model, &[ones], false).unwrap(), 1.0);
    }

    #[test]
    fn segment_error_rate_by_hand() {
        // predictions are all class 0, reference [0,0,1,1]
        let model = ModelParams::zeros(&Architecture::new(1, vec![], 2)).unwrap();
        let u = utt("a", Matrix::zeros(4, 1), vec![0, 0, 1, 1]);
        assert_eq!(segment_error_rate(&model, std::slice::from_ref(&u), true).unwrap(), 0.5);
        let m = evaluate_utterances(&model, &[u], true, "zero", "x").unwrap();
        assert_eq!(m.frame_error_rate, 0.5);
        assert_eq!(m.num_segments, 2);
        assert_eq!(m.num_frames, 4);
        assert!((m.mean_loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identity_model_has_zero_error() {
        // affine+softmax with a large identity map recovers one-hot features
        let mut model = ModelParams::zeros(&Architecture::new(3, vec![], 3)).unwrap();
        model.layers[0].weights =
            Matrix::from_rows(&[vec![10.0, 0.0, 0.0], vec![0.0, 10.0, 0.0], vec![0.0, 0.0, 10.0]])
                .unwrap();
        let labels = vec![2u16, 2, 0, 1, 1];
        let mut x = Matrix::zeros(5, 3);
        for (r, &l) in labels.iter().enumerate() {
            x.set(r, l as usize, 1.0);
        }
        let u = utt("a", x, labels);
        assert_eq!(frame_error_rate(&model, std::slice::from_ref(&u), true).unwrap(), 0.0);
        assert_eq!(segment_error_rate(&model, &[u], true).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_rejects_mismatched_model() {
        let model = ModelParams::zeros(&Architecture::new(4, vec![], 2)).unwrap();
        let u = utt("a", Matrix::zeros(3, 1), vec![0; 3]);
        assert!(matches!(frame_error_rate(&model, &[u], true), Err(Error::Usage(_))));
    }

    #[test]
    fn priors_cases() {
        let p = estimate_priors(&[0, 1, 2, 3, 0, 1, 2, 3], 4, 1.0).unwrap();
        assert!(p.0.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = estimate_priors(&[1; 10], 2, 1.0).unwrap();
        assert_eq!(p.0, vec![1.0 / 12.0, 11.0 / 12.0]);
        let p = estimate_priors(&[0, 1, 1, 1], 2, 0.0).unwrap();
        assert_eq!(p.0, vec![0.25, 0.75]);
        assert!(estimate_priors(&[], 2, 1.0).is_err());
        assert!(estimate_priors(&[5], 2, 1.0).is_err());
    }

    #[test]
    fn loglik_cases() {
        let uniform = PriorVector(vec![0.25; 4]);
        let q = [0.1, 0.4, 0.4, 0.1];
        let ll = posterior_to_loglik(&q, &uniform).unwrap();
        for (l, qi) in ll.iter().zip(q) {
            assert!((l - (qi.ln() + 4f64.ln())).abs() < 1e-12);
        }
        assert_eq!(argmax(&ll), argmax(&q));

        let pri = PriorVector(vec![0.3, 0.7]);
        assert!(posterior_to_loglik(&[0.3, 0.7], &pri).unwrap().iter().all(|v| v.abs() < 1e-15));

        let ll = posterior_to_loglik(&[0.8, 0.2], &PriorVector(vec![0.5, 0.5])).unwrap();
        assert!((ll[0] - 1.6f64.ln()).abs() < 1e-15);
        assert!((ll[1] - 0.4f64.ln()).abs() < 1e-15);

        assert!(posterior_to_loglik(&[1.0], &PriorVector(vec![0.0])).is_err());
    }

    #[test]
    fn loglik_argmax_invariant_under_uniform_priors() {
        let mut rng = RngStream::new(12);
        for _ in 0..200 {
            let s = 2 + rng.next_below(8) as usize;
            let mut q: Vec<f64> = (0..s).map(|_| rng.next_below(4) as f64).collect();
            let total: f64 = q.iter().sum::<f64>() + 1e-9;
            q.iter_mut().for_each(|v| *v = (*v + 1e-9 / s as f64) / total);
            let ll = posterior_to_loglik(&q, &PriorVector(vec![1.0 / s as f64; s])).unwrap();
            assert_eq!(argmax(&ll), argmax(&q));
        }
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[0.3, 0.2, 0.1], &[0.5, 0.4, 0.35]), Some(1.0));
        assert_eq!(spearman(&[0.3, 0.2, 0.1], &[0.1, 0.2, 0.3]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[3.0, 3.0]), None);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }
}
