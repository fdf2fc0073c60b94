//! Knowledge distillation over parallel clean/corrupted frame corpora.
//!
//! A teacher network trained on clean features with hard labels is frozen
//! and its per-frame posteriors become soft labels for a student that only
//! sees the time-aligned corrupted features. The student minimizes the
//! soft-label cross-entropy, which differs from the KL divergence to the
//! teacher by the teacher's entropy alone.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: matrix, activations, softmax, seeded random stream
//! * [`corpus`]: synthetic parallel corpora, corruption channel, splicing, files
//! * [`network`]: sigmoid feed-forward classifier, backprop, model files
//! * [`losses`]: hard/soft cross-entropy, entropy, KL, logit gradients
//! * [`training`]: teachers, soft labels, students, baselines, early stopping
//! * [`eval`]: error rates, priors, the teacher-ladder experiment
//! * [`cli`]: command-line front end

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
