//! Per-trace confidence estimators.
//!
//! The primary estimator averages the low-probability tail of a trace:
//! for a trace of length `L` and a cutoff of `p` percent, it takes the
//! `m = max(1, floor(p*L/100))` smallest chosen-token probabilities and
//! returns their mean. Low-probability tokens concentrate the model's
//! uncertainty, so the tail separates strong traces from weak ones better
//! than the full-trace average.
//!
//! Two alternatives are provided for robustness checks: the full-trace
//! mean log-probability, and self-consistency confidence computed purely
//! from answer agreement with no logit access.

use crate::ingest::normalize_answer;
use crate::metrics::{self, MetricsError};
use crate::model::{EstimatorId, TracePool, TraceRecord};

#[derive(Debug, thiserror::Error)]
pub enum ConfidenceError {
    #[error("token probability sequence is empty")]
    EmptySequence,
    #[error("no traces supplied")]
    NoTraces,
    #[error("tail percent {0} outside (0, 100]")]
    InvalidPercent(f64),
    #[error("epsilon {0} must be positive")]
    InvalidEpsilon(f64),
    #[error("undefined separation: pool needs at least one correct and one incorrect trace")]
    UndefinedSeparation,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Configuration for one confidence estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorConfig {
    /// Mean of the lowest `percent`% token probabilities.
    Tail { percent: f64 },
    /// Full-trace mean log-probability with floor `epsilon`.
    MeanLogprob { epsilon: f64 },
    /// Answer-agreement fraction within each problem.
    SelfConsistency,
}

/// Default tail cutoff: the lowest 10% of tokens.
pub const DEFAULT_TAIL_PERCENT: f64 = 10.0;
/// Default log-probability floor.
pub const DEFAULT_EPSILON: f64 = 1e-12;

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::Tail { percent: DEFAULT_TAIL_PERCENT }
    }
}

impl EstimatorConfig {
    pub fn tail(percent: f64) -> Result<Self, ConfidenceError> {
        if !(percent > 0.0 && percent <= 100.0) {
            return Err(ConfidenceError::InvalidPercent(percent));
        }
        Ok(Self::Tail { percent })
    }

    pub fn mean_logprob(epsilon: f64) -> Result<Self, ConfidenceError> {
        if !(epsilon > 0.0) {
            return Err(ConfidenceError::InvalidEpsilon(epsilon));
        }
        Ok(Self::MeanLogprob { epsilon })
    }

    pub fn id(&self) -> EstimatorId {
        match self {
            Self::Tail { percent } => EstimatorId::Tail { percent: *percent },
            Self::MeanLogprob { .. } => EstimatorId::MeanLogprob,
            Self::SelfConsistency => EstimatorId::SelfConsistency,
        }
    }
}

/// Number of tail tokens at cutoff `percent` for a trace of length `len`.
///
/// `max(1, floor(percent * len / 100))`, multiplied before dividing so
/// integer-valued cutoffs stay exact (30% of 10 tokens is 3, not 2.999…).
pub fn tail_count(len: usize, percent: f64) -> usize {
    let m = (percent * len as f64 / 100.0).floor() as usize;
    m.max(1)
}

/// Mean of the `m` lowest token probabilities, `m = max(1, floor(p*L/100))`.
///
/// Ties in probability are taken earliest token first; since the statistic
/// is a mean over the selected values, tie resolution never changes the
/// result, only the nominal membership of the tail set.
pub fn tail_confidence(token_probs: &[f64], percent: f64) -> Result<f64, ConfidenceError> {
    if token_probs.is_empty() {
        return Err(ConfidenceError::EmptySequence);
    }
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(ConfidenceError::InvalidPercent(percent));
    }
    let m = tail_count(token_probs.len(), percent);
    let mut order: Vec<usize> = (0..token_probs.len()).collect();
    order.sort_by(|&a, &b| {
        token_probs[a]
            .total_cmp(&token_probs[b])
            .then_with(|| a.cmp(&b))
    });
    let sum: f64 = order[..m].iter().map(|&i| token_probs[i]).sum();
    Ok(sum / m as f64)
}

/// Full-trace mean log-probability: `(1/L) * sum(ln(max(p_j, epsilon)))`.
///
/// Kept in log space; only its ranking is consumed downstream.
pub fn mean_logprob_confidence(token_probs: &[f64], epsilon: f64) -> Result<f64, ConfidenceError> {
    if token_probs.is_empty() {
        return Err(ConfidenceError::EmptySequence);
    }
    if !(epsilon > 0.0) {
        return Err(ConfidenceError::InvalidEpsilon(epsilon));
    }
    let sum: f64 = token_probs.iter().map(|&p| p.max(epsilon).ln()).sum();
    Ok(sum / token_probs.len() as f64)
}

/// Self-consistency confidence for every trace of one problem.
///
/// For trace `j`, the fraction of the problem's traces (including `j`
/// itself) whose normalized final answer equals trace `j`'s. With `k`
/// traces the values lie in `{1/k, 2/k, ..., 1}`. The returned vector is
/// aligned with the input order.
pub fn self_consistency_confidence(traces: &[&TraceRecord]) -> Result<Vec<f64>, ConfidenceError> {
    if traces.is_empty() {
        return Err(ConfidenceError::NoTraces);
    }
    debug_assert!(
        traces.iter().all(|t| t.problem_id == traces[0].problem_id),
        "self-consistency is defined within one problem"
    );
    let k = traces.len() as f64;
    let answers: Vec<&str> = traces.iter().map(|t| normalize_answer(&t.final_answer)).collect();
    Ok(answers
        .iter()
        .map(|a| answers.iter().filter(|b| *b == a).count() as f64 / k)
        .collect())
}

/// Confidence for every trace of a pool under `config`, aligned with the
/// pool's canonical trace order.
pub fn pool_confidences(
    pool: &TracePool,
    config: &EstimatorConfig,
) -> Result<Vec<f64>, ConfidenceError> {
    match config {
        EstimatorConfig::Tail { percent } => pool
            .traces()
            .iter()
            .map(|t| tail_confidence(&t.token_probs, *percent))
            .collect(),
        EstimatorConfig::MeanLogprob { epsilon } => pool
            .traces()
            .iter()
            .map(|t| mean_logprob_confidence(&t.token_probs, *epsilon))
            .collect(),
        EstimatorConfig::SelfConsistency => {
            let mut out = vec![0.0; pool.len()];
            for (_, idxs) in pool.problems() {
                let group: Vec<&TraceRecord> =
                    idxs.iter().map(|&i| &pool.traces()[i]).collect();
                let values = self_consistency_confidence(&group)?;
                for (&i, v) in idxs.iter().zip(values) {
                    out[i] = v;
                }
            }
            Ok(out)
        }
    }
}

/// One row of the percentile-sweep diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cutoff_percent: f64,
    pub snr: f64,
    /// Absolute gap between mean confidence of correct and incorrect traces.
    pub mean_gap: f64,
}

/// Sweep tail cutoffs and measure how well each separates correct from
/// incorrect traces (SNR and absolute mean-confidence gap per cutoff).
///
/// Rows come back in the order of `cutoffs`. The pool must contain both
/// correct and incorrect traces, otherwise separation is undefined.
pub fn percentile_sweep(
    pool: &TracePool,
    cutoffs: &[f64],
) -> Result<Vec<SweepRow>, ConfidenceError> {
    let correctness: Vec<bool> = pool
        .traces()
        .iter()
        .map(|t| t.correct.unwrap_or(false))
        .collect();
    let n_correct = correctness.iter().filter(|&&c| c).count();
    if n_correct == 0 || n_correct == correctness.len() {
        return Err(ConfidenceError::UndefinedSeparation);
    }

    let mut rows = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let confidences = pool_confidences(pool, &EstimatorConfig::tail(cutoff)?)?;
        let snr = metrics::snr(&confidences, &correctness)?;
        let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
        for (&conf, &ok) in confidences.iter().zip(&correctness) {
            if ok {
                sum_c += conf;
                n_c += 1;
            } else {
                sum_i += conf;
                n_i += 1;
            }
        }
        let mean_gap = (sum_c / n_c as f64 - sum_i / n_i as f64).abs();
        rows.push(SweepRow { cutoff_percent: cutoff, snr, mean_gap });
    }
    Ok(rows)
}
