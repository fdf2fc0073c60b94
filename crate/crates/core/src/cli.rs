//! Command-line front end.
//!
//! Every subcommand reads an optional JSON config (`--config`), applies the
//! flag overrides, writes its artifacts under `--out` and records the
//! effective config plus artifact hashes in `<out>/run.json`.
//!
//! Artifact names inside the output directory:
//!
//! ```text
//! corpus/                         gen-corpus
//! teacher-<tier>-seed<N>.model    train-teacher (+ .history.csv)
//! soft-<tier>-seed<N>/            soft-labels
//! student-<tier>-seed<N>.model    distill (+ .history.csv)
//! <mode>-seed<N>.model            train-baseline (+ .history.csv)
//! metrics-<model>.json            eval
//! report.json, report.csv         experiment
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 validation or data, 3 I/O.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{gen_corpus, load_corpus, save_corpus, write_json, CorpusSpec, Split};
use crate::error::{Error, Result};
use crate::eval::{
    estimate_priors, evaluate_split, posterior_to_loglik, run_experiment_on, ExperimentSetup,
    MetricsReport,
};
use crate::network::ModelParams;
use crate::numerics::argmax;
use crate::training::{
    compute_soft_labels, distill_student, train_baseline, train_teacher, BaselineMode,
    SoftLabelSet, SplicedCorpus, TeacherTier, TrainConfig, TrainHistory,
};

pub const RUN_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Context window in frames (odd).
    pub context: usize,
    /// Hidden widths of baselines and students.
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            context: 11,
            hidden: vec![64, 64],
        }
    }
}

/// Full configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub corpus: CorpusSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tiers: Vec<TeacherTier>,
    /// Softmax temperature for teacher soft labels.
    pub temperature: f64,
    /// Add-k smoothing for class priors.
    pub prior_smoothing: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            tiers: TeacherTier::default_ladder(),
            temperature: 1.0,
            prior_smoothing: 1.0,
            seeds: vec![1, 2, 3, 4, 5],
            out: PathBuf::from("out"),
        }
    }
}

impl CliConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.setup().map(|_| ())?;
        if !(self.prior_smoothing.is_finite() && self.prior_smoothing >= 0.0) {
            return Err(Error::validation("prior_smoothing must be >= 0"));
        }
        let mut names = std::collections::HashSet::new();
        for t in &self.tiers {
            if !names.insert(&t.name) {
                return Err(Error::validation(format!("tiers: duplicate tier name {}", t.name)));
            }
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<ExperimentSetup> {
        let setup = ExperimentSetup {
            context: self.model.context,
            hidden: self.model.hidden.clone(),
            train: self.train.clone(),
            tiers: self.tiers.clone(),
            temperature: self.temperature,
            seeds: self.seeds.clone(),
        };
        crate::eval::validate_setup(&setup)?;
        Ok(setup)
    }

    pub fn tier(&self, name: Option<&str>) -> Result<&TeacherTier> {
        match name {
            None => self
                .tiers
                .last()
                .ok_or_else(|| Error::validation("no teacher tiers configured")),
            Some(n) => self
                .tiers
                .iter()
                .find(|t| t.name == n)
                .ok_or_else(|| Error::usage(format!("unknown tier {n:?}"))),
        }
    }
}

/// Strict parse of a JSON config: unknown keys and type errors are reported
/// with their key path, then every invariant is checked.
pub fn load_config(path: &Path) -> Result<CliConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| e.context(path.display()))
}

pub fn parse_config(text: &str) -> Result<CliConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: CliConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::validation(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Parser)]
#[command(
    name = "kd-parallel",
    about = "Teacher-student distillation on parallel clean/corrupted frame corpora",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON config file; defaults apply to every absent field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus directory (default `<out>/corpus`).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus into `<out>/corpus`.
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Train a teacher on clean features with hard labels.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        /// Tier name (default: the last configured tier).
        #[arg(long)]
        tier: Option<String>,
    },
    /// Extract soft labels from a frozen teacher.
    SoftLabels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tier: Option<String>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Teacher model (default `<out>/teacher-<tier>-seed<N>.model`).
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Train a student on corrupted features against soft labels.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tier: Option<String>,
        /// Soft-label directory (default `<out>/soft-<tier>-seed<N>`).
        #[arg(long)]
        soft_labels: Option<PathBuf>,
    },
    /// Train a hard-label baseline.
    TrainBaseline {
        #[command(flatten)]
        common: Common,
        /// far-hard or multi-cond
        #[arg(long, default_value = "far-hard")]
        mode: String,
    },
    /// Score a model on a corpus split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// train, dev or eval
        #[arg(long, default_value = "eval")]
        split: String,
        /// Score clean instead of corrupted features.
        #[arg(long)]
        clean: bool,
    },
    /// Baselines, teacher ladder and students for every seed.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        temperature: Option<f64>,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    cfg: CliConfig,
    out: PathBuf,
    seed: u64,
    corpus_dir: PathBuf,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => load_config(p)?,
            None => CliConfig::default(),
        };
        if let Some(out) = &common.out {
            cfg.out = out.clone();
        }
        let seed = common.seed.unwrap_or(cfg.seeds[0]);
        let corpus_dir = common
            .corpus
            .clone()
            .unwrap_or_else(|| cfg.out.join("corpus"));
        fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        Ok(Self {
            out: cfg.out.clone(),
            cfg,
            seed,
            corpus_dir,
        })
    }

    fn train_cfg(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.cfg.train.clone()
        }
    }

    fn spliced(&self) -> Result<SplicedCorpus> {
        let corpus = load_corpus(&self.corpus_dir)?;
        SplicedCorpus::new(&corpus, self.cfg.model.context)
    }

    fn write_run(&self, command: &str, artifacts: &[PathBuf]) -> Result<()> {
        let mut hashes = serde_json::Map::new();
        for a in artifacts {
            let key = a
                .strip_prefix(&self.out)
                .unwrap_or(a)
                .to_string_lossy()
                .into_owned();
            hashes.insert(key, serde_json::Value::String(hash_path(a)?));
        }
        let manifest = serde_json::json!({
            "version": RUN_MANIFEST_VERSION,
            "command": command,
            "seed": self.seed,
            "config": self.cfg,
            "artifacts": hashes,
        });
        write_json(&self.out.join("run.json"), &manifest)
    }
}

/// SHA-256 of a file, or of every file below a directory in sorted order.
fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        files.sort();
        for f in files {
            hasher.update(f.file_name().unwrap_or_default().as_encoded_bytes());
            hasher.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
        }
    } else {
        hasher.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_trained(model: &ModelParams, history: &TrainHistory, path: &Path) -> Result<Vec<PathBuf>> {
    model.save(path)?;
    let csv = path.with_extension("history.csv");
    write_text(&csv, &history.to_csv())?;
    Ok(vec![path.to_path_buf(), csv])
}

fn teacher_path(out: &Path, tier: &str, seed: u64) -> PathBuf {
    out.join(format!("teacher-{tier}-seed{seed}.model"))
}

fn soft_dir(out: &Path, tier: &str, seed: u64) -> PathBuf {
    out.join(format!("soft-{tier}-seed{seed}"))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus { common } => {
            let mut ctx = Context::new(&common)?;
            if let Some(seed) = common.seed {
                ctx.cfg.corpus.seed = seed;
            }
            let corpus = gen_corpus(&ctx.cfg.corpus)?;
            let manifest = save_corpus(&corpus, &ctx.corpus_dir)?;
            println!(
                "wrote {} utterances ({} classes, dim {}) to {}",
                manifest.num_utterances(),
                manifest.num_classes,
                manifest.feature_dim,
                ctx.corpus_dir.display()
            );
            ctx.write_run("gen-corpus", &[ctx.corpus_dir.clone()])
        }
        Command::TrainTeacher { common, tier } => {
            let ctx = Context::new(&common)?;
            let tier = ctx.cfg.tier(tier.as_deref())?.clone();
            let data = ctx.spliced()?;
            let (model, hist) = train_teacher(&data, &tier, &ctx.train_cfg())?;
            let path = teacher_path(&ctx.out, &tier.name, ctx.seed);
            let artifacts = save_trained(&model, &hist, &path)?;
            println!(
                "teacher {}: best epoch {} dev loss {:.6} dev fer {:.4} -> {}",
                tier.name,
                hist.best_epoch,
                hist.best().dev_loss,
                hist.best().dev_fer,
                path.display()
            );
            ctx.write_run("train-teacher", &artifacts)
        }
        Command::SoftLabels {
            common,
            tier,
            temperature,
            teacher,
        } => {
            let mut ctx = Context::new(&common)?;
            if let Some(t) = temperature {
                ctx.cfg.temperature = t;
                ctx.cfg.validate()?;
            }
            let tier = ctx.cfg.tier(tier.as_deref())?.name.clone();
            let teacher_file = teacher.unwrap_or_else(|| teacher_path(&ctx.out, &tier, ctx.seed));
            let model = ModelParams::load(&teacher_file)?;
            let data = ctx.spliced()?;
            let soft = compute_soft_labels(&model, &data, ctx.cfg.temperature)?;
            let dir = soft_dir(&ctx.out, &tier, ctx.seed);
            soft.save(&dir)?;
            println!(
                "soft labels for {} utterances (T={}) -> {}",
                soft.utterances.len(),
                soft.temperature,
                dir.display()
            );
            ctx.write_run("soft-labels", &[dir])
        }
        Command::Distill {
            common,
            tier,
            soft_labels,
        } => {
            let ctx = Context::new(&common)?;
            let tier = ctx.cfg.tier(tier.as_deref())?.name.clone();
            let dir = soft_labels.unwrap_or_else(|| soft_dir(&ctx.out, &tier, ctx.seed));
            let soft = SoftLabelSet::load(&dir)?;
            let data = ctx.spliced()?;
            let (model, hist) = distill_student(&data, &soft, &ctx.cfg.model.hidden, &ctx.train_cfg())?;
            let path = ctx.out.join(format!("student-{tier}-seed{}.model", ctx.seed));
            let artifacts = save_trained(&model, &hist, &path)?;
            println!(
                "student of {tier}: best epoch {} dev loss {:.6} dev fer {:.4} -> {}",
                hist.best_epoch,
                hist.best().dev_loss,
                hist.best().dev_fer,
                path.display()
            );
            ctx.write_run("distill", &artifacts)
        }
        Command::TrainBaseline { common, mode } => {
            let ctx = Context::new(&common)?;
            let mode: BaselineMode = mode.parse()?;
            let data = ctx.spliced()?;
            let (model, hist) = train_baseline(&data, mode, &ctx.cfg.model.hidden, &ctx.train_cfg())?;
            let path = ctx.out.join(format!("{}-seed{}.model", mode.name(), ctx.seed));
            let artifacts = save_trained(&model, &hist, &path)?;
            println!(
                "{}: best epoch {} dev loss {:.6} dev fer {:.4} -> {}",
                mode.name(),
                hist.best_epoch,
                hist.best().dev_loss,
                hist.best().dev_fer,
                path.display()
            );
            ctx.write_run("train-baseline", &artifacts)
        }
        Command::Eval {
            common,
            model,
            split,
            clean,
        } => {
            let ctx = Context::new(&common)?;
            let split = match split.as_str() {
                "train" => Split::Train,
                "dev" => Split::Dev,
                "eval" => Split::Eval,
                other => return Err(Error::usage(format!("unknown split {other:?}"))),
            };
            let params = ModelParams::load(&model)?;
            let data = ctx.spliced()?;
            let stem = model
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            let split_name = format!("{}-{}", split.name(), if clean { "clean" } else { "far" });
            let metrics = evaluate_split(&params, data.split(split), !clean, &stem, &split_name)?;
            let prior_fer = prior_scaled_fer(&params, &data, split, !clean, ctx.cfg.prior_smoothing)?;
            let report = EvalOutput {
                metrics,
                prior_scaled_fer: prior_fer,
            };
            let path = ctx.out.join(format!("metrics-{stem}.json"));
            write_json(&path, &report)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("metrics serialize")
            );
            ctx.write_run("eval", &[path])
        }
        Command::Experiment {
            common,
            temperature,
        } => {
            let mut ctx = Context::new(&common)?;
            if let Some(t) = temperature {
                ctx.cfg.temperature = t;
            }
            if let Some(seed) = common.seed {
                ctx.cfg.seeds = vec![seed];
            }
            let setup = ctx.cfg.setup()?;
            let data = ctx.spliced()?;
            let report = run_experiment_on(&data, &setup, &mut |msg| eprintln!("{msg}"))?;
            let json = ctx.out.join("report.json");
            let csv = ctx.out.join("report.csv");
            write_json(&json, &report)?;
            write_text(&csv, &report.to_csv())?;
            print_trend(&report);
            ctx.write_run("experiment", &[json, csv])
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    metrics: MetricsReport,
    /// Frame error rate of the argmax of prior-scaled log-likelihoods.
    prior_scaled_fer: f64,
}

fn prior_scaled_fer(
    model: &ModelParams,
    data: &SplicedCorpus,
    split: Split,
    far: bool,
    smoothing: f64,
) -> Result<f64> {
    let priors = estimate_priors(&data.train.labels, data.num_classes, smoothing)?;
    let s = data.split(split);
    let q = model.posteriors(s.features(far), 1.0)?;
    let mut errors = 0usize;
    for (row, &label) in q.row_iter().zip(&s.labels) {
        let ll = posterior_to_loglik(row, &priors)?;
        if argmax(&ll) != label as usize {
            errors += 1;
        }
    }
    Ok(errors as f64 / s.num_frames() as f64)
}

fn print_trend(report: &crate::eval::ExperimentReport) {
    let t = &report.trend;
    println!("model        tier   fer      ser");
    println!("far-hard     -      {:.4}   {:.4}", t.far_hard_fer, t.far_hard_ser);
    println!("multi-cond   -      {:.4}   {:.4}", t.multi_cond_fer, t.multi_cond_ser);
    for tier in &t.tiers {
        println!(
            "teacher      {:<6} {:.4}   {:.4}   (clean)",
            tier.tier, tier.teacher_fer, tier.teacher_ser
        );
        println!(
            "student      {:<6} {:.4}   {:.4}",
            tier.tier, tier.student_fer, tier.student_ser
        );
    }
    match t.teacher_student_spearman {
        Some(r) => println!("teacher/student spearman: {r:+.3}"),
        None => println!("teacher/student spearman: undefined"),
    }
    println!(
        "top student beats far-hard in {}/{} seeds",
        t.student_wins, t.num_seeds
    );
}
