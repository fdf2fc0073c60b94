//! Frame-level objectives for teacher and student training.
//!
//! For a teacher distribution `p` (soft label) and a student distribution `q`:
//!
//! ```text
//! kl(p, q)      = sum_i p_i ln(p_i / q_i)
//!               = soft_ce(p, q) - entropy(p)
//! soft_ce(p, q) = sum_i -p_i ln q_i
//! entropy(p)    = sum_i -p_i ln p_i
//! ```
//!
//! `entropy(p)` does not depend on the student, so minimizing the soft-label
//! cross-entropy minimizes the KL divergence. With a one-hot `p` the soft
//! cross-entropy is exactly the ordinary hard-label cross-entropy, and the
//! gradient with respect to the student's logits is `q - p` in both cases.
//!
//! Terms with `p_i = 0` contribute nothing; `q` is floored at [`PROB_FLOOR`]
//! inside logarithms only.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
fn neg_ln_floored(q: f64) -> f64 {
    -q.max(PROB_FLOOR).ln()
}

fn check_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::usage(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Cross-entropy against a class index: `-ln q[label]`.
pub fn hard_ce(q: &[f64], label: usize) -> Result<f64> {
    match q.get(label) {
        Some(&ql) => Ok(neg_ln_floored(ql)),
        None => Err(Error::usage(format!(
            "label {label} out of range for {} classes",
            q.len()
        ))),
    }
}

/// Cross-entropy of `q` under the soft target `p`.
pub fn soft_ce(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi != 0.0 {
            sum += pi * neg_ln_floored(qi);
        }
    }
    Ok(sum)
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| -pi * pi.ln())
        .sum()
}

/// KL divergence `D(p || q)`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            sum += pi * (pi.ln() - qi.max(PROB_FLOOR).ln());
        }
    }
    Ok(sum)
}

/// Per-row gradient of `soft_ce(p, softmax(z))` with respect to `z`: `q - p`.
/// Not averaged; callers scale by `1 / batch` for a mean objective.
pub fn grad_logits(p: &Matrix, q: &Matrix) -> Result<Matrix> {
    if p.rows() != q.rows() || p.cols() != q.cols() {
        return Err(Error::usage(format!(
            "target shape {}x{} does not match posterior shape {}x{}",
            p.rows(),
            p.cols(),
            q.rows(),
            q.cols()
        )));
    }
    let mut g = q.clone();
    for (gi, pi) in g.data_mut().iter_mut().zip(p.data()) {
        *gi -= pi;
    }
    Ok(g)
}

/// Hard-label form of [`grad_logits`]: `q` with one subtracted at each label.
pub fn grad_logits_hard(labels: &[usize], q: &Matrix) -> Result<Matrix> {
    if labels.len() != q.rows() {
        return Err(Error::usage(format!(
            "{} labels for {} posterior rows",
            labels.len(),
            q.rows()
        )));
    }
    let mut g = q.clone();
    for (r, &label) in labels.iter().enumerate() {
        if label >= q.cols() {
            return Err(Error::usage(format!(
                "label {label} out of range for {} classes",
                q.cols()
            )));
        }
        let row = g.row_mut(r);
        row[label] -= 1.0;
    }
    Ok(g)
}

/// Validates a probability vector: non-negative, finite, sums to one within `tol`.
pub fn check_distribution(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::validation("empty distribution"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("distribution has a negative or non-finite entry"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::validation(format!("distribution sums to {s}")));
    }
    Ok(())
}
