//! Shared domain types: traces, pools, verdicts, rankings, filtered sets.
//!
//! Everything here is an immutable value after construction; validation is
//! a reporting operation ([`validate_pool`]) rather than a constructor
//! failure, so pools from messy logs can be loaded, inspected, and rejected
//! with a full list of problems instead of failing on the first one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// How a trace was decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled,
}

/// One sampled reasoning trace for one problem.
///
/// `token_probs` holds the chosen-token conditional probabilities, each in
/// `(0, 1]`. `correct` is optional at ingest: raw dumps without a grading
/// pass carry `null` and the grader fills it in from the gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub model_id: String,
    pub benchmark_id: String,
    pub problem_id: String,
    pub trace_index: u32,
    pub token_probs: Vec<f64>,
    pub final_answer: String,
    pub gold_answer: String,
    pub correct: Option<bool>,
    pub output_text: String,
    pub problem_text: String,
    pub temperature: f64,
    pub decode_mode: DecodeMode,
}

impl TraceRecord {
    /// Key identifying this trace within its pool.
    pub fn key(&self) -> TraceKey {
        TraceKey {
            problem_id: self.problem_id.clone(),
            trace_index: self.trace_index,
        }
    }
}

/// (problem, sample index) identity of a trace within one pool.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceKey {
    pub problem_id: String,
    pub trace_index: u32,
}

impl fmt::Display for TraceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.problem_id, self.trace_index)
    }
}

/// All traces for one (model, benchmark) pair.
///
/// The unit of pooling, ranking, and filtering. `k` is the declared sample
/// count per problem; problems may hold fewer traces (ragged logs are
/// allowed and flagged, never silently dropped).
#[derive(Debug, Clone)]
pub struct TracePool {
    pub model_id: String,
    pub benchmark_id: String,
    pub k: u32,
    traces: Vec<TraceRecord>,
    problems: BTreeMap<String, Vec<usize>>,
}

impl TracePool {
    /// Build a pool, canonicalizing trace order to (problem_id, trace_index).
    ///
    /// Construction never fails; run [`validate_pool`] to check invariants.
    pub fn new(
        model_id: impl Into<String>,
        benchmark_id: impl Into<String>,
        k: u32,
        mut traces: Vec<TraceRecord>,
    ) -> Self {
        traces.sort_by(|a, b| {
            (a.problem_id.as_str(), a.trace_index).cmp(&(b.problem_id.as_str(), b.trace_index))
        });
        let mut problems: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, trace) in traces.iter().enumerate() {
            problems.entry(trace.problem_id.clone()).or_default().push(idx);
        }
        Self {
            model_id: model_id.into(),
            benchmark_id: benchmark_id.into(),
            k,
            traces,
            problems,
        }
    }

    pub fn traces(&self) -> &[TraceRecord] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Problem ids in sorted order with the pool indices of their traces.
    pub fn problems(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.problems.iter().map(|(id, idxs)| (id.as_str(), idxs.as_slice()))
    }

    pub fn problem_count(&self) -> usize {
        self.problems.len()
    }

    /// Pool indices of one problem's traces, ordered by trace_index.
    pub fn problem_traces(&self, problem_id: &str) -> Option<&[usize]> {
        self.problems.get(problem_id).map(Vec::as_slice)
    }
}

/// The four rubric dimension scores for one trace from one judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub faithfulness: u8,
    pub utility: u8,
    pub coherence: u8,
    pub factuality: u8,
    pub judge_id: String,
    pub raw_response: String,
}

impl JudgeVerdict {
    /// Construct a verdict, enforcing that all four scores lie in 1..=5.
    pub fn new(
        faithfulness: u8,
        utility: u8,
        coherence: u8,
        factuality: u8,
        judge_id: impl Into<String>,
        raw_response: impl Into<String>,
    ) -> Result<Self, VerdictRangeError> {
        for (dim, score) in [
            ("faithfulness", faithfulness),
            ("utility", utility),
            ("coherence", coherence),
            ("factuality", factuality),
        ] {
            if !(1..=5).contains(&score) {
                return Err(VerdictRangeError { dimension: dim, score });
            }
        }
        Ok(Self {
            faithfulness,
            utility,
            coherence,
            factuality,
            judge_id: judge_id.into(),
            raw_response: raw_response.into(),
        })
    }

    pub fn scores(&self) -> [u8; 4] {
        [self.faithfulness, self.utility, self.coherence, self.factuality]
    }
}

/// A rubric dimension score fell outside 1..=5.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{dimension} score {score} outside 1..=5")]
pub struct VerdictRangeError {
    pub dimension: &'static str,
    pub score: u8,
}

/// Which confidence estimator produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorId {
    /// Mean of the lowest `percent`% token probabilities.
    Tail { percent: f64 },
    /// Full-trace mean log-probability.
    MeanLogprob,
    /// Answer-agreement fraction, no logit access.
    SelfConsistency,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Canonical ids: tail_p10, tail_p20.
            Self::Tail { percent } => {
                if percent.fract() == 0.0 {
                    write!(f, "tail_p{}", *percent as u64)
                } else {
                    write!(f, "tail_p{percent}")
                }
            }
            Self::MeanLogprob => f.write_str("mean_logprob"),
            Self::SelfConsistency => f.write_str("self_consistency"),
        }
    }
}

/// A trace annotated with confidence, rank, and percentile.
///
/// `trace_idx` references the trace's position in its pool's canonical
/// order; rank 1 is the most confident; `percentile` is `100 * rank / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTrace {
    pub trace_idx: usize,
    pub confidence: f64,
    pub rank: u32,
    pub percentile: f64,
    pub estimator_id: EstimatorId,
}

/// What a [`FilteredSet`] selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// The top `k_percent`% most-confident traces.
    TopKPercent { k_percent: f64 },
    /// The half-open percentile interval `[lo, hi)`.
    Bin { lo: f64, hi: f64 },
}

/// A top-K% or bin selection out of a ranked pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSet {
    pub selection: Selection,
    pub traces: Vec<RankedTrace>,
}

impl FilteredSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// One invariant violation found by [`validate_pool`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A token probability outside (0, 1] (or non-finite).
    ProbabilityOutOfRange {
        key: TraceKey,
        token_pos: usize,
        value: f64,
    },
    /// A trace with no token probabilities at all.
    EmptyTokenProbs { key: TraceKey },
    /// Two records share (problem_id, trace_index).
    DuplicateTraceKey { key: TraceKey },
    /// trace_index at or beyond the pool's declared sample count.
    TraceIndexBeyondK { key: TraceKey, k: u32 },
    /// A record whose model or benchmark differs from the pool's.
    ForeignRecord {
        key: TraceKey,
        model_id: String,
        benchmark_id: String,
    },
    /// A problem holding more traces than the declared sample count.
    ProblemOverK {
        problem_id: String,
        count: usize,
        k: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ProbabilityOutOfRange { key, token_pos, value } => write!(
                f,
                "trace {key}: token {token_pos} probability {value} out of (0,1]"
            ),
            Self::EmptyTokenProbs { key } => {
                write!(f, "trace {key}: token_probs is empty")
            }
            Self::DuplicateTraceKey { key } => {
                write!(f, "trace {key}: duplicate (problem_id, trace_index)")
            }
            Self::TraceIndexBeyondK { key, k } => {
                write!(f, "trace {key}: trace_index >= declared sample count k={k}")
            }
            Self::ForeignRecord { key, model_id, benchmark_id } => write!(
                f,
                "trace {key}: record from ({model_id}, {benchmark_id}) does not match pool"
            ),
            Self::ProblemOverK { problem_id, count, k } => {
                write!(f, "problem {problem_id}: {count} traces exceed k={k}")
            }
        }
    }
}

/// A non-fatal flag: the pool is usable but irregular.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolWarning {
    /// A problem with fewer than `k` traces (judge refusals, truncation).
    RaggedProblem {
        problem_id: String,
        count: usize,
        k: u32,
    },
}

impl fmt::Display for PoolWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RaggedProblem { problem_id, count, k } => {
                write!(f, "problem {problem_id}: only {count} of k={k} traces present")
            }
        }
    }
}

/// Outcome of [`validate_pool`]: hard violations plus advisory warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<PoolWarning>,
}

impl ValidationReport {
    /// True iff every type invariant holds (warnings do not count).
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Check every pool invariant and report all violations found.
///
/// Pure: the report is a function of the pool alone. An empty violation
/// list means the pool satisfies the type invariants; ragged problems are
/// reported as warnings because they are legal but worth surfacing.
pub fn validate_pool(pool: &TracePool) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen: BTreeMap<TraceKey, usize> = BTreeMap::new();
    for trace in pool.traces() {
        let key = trace.key();

        if trace.model_id != pool.model_id || trace.benchmark_id != pool.benchmark_id {
            report.violations.push(Violation::ForeignRecord {
                key: key.clone(),
                model_id: trace.model_id.clone(),
                benchmark_id: trace.benchmark_id.clone(),
            });
        }

        if trace.token_probs.is_empty() {
            report.violations.push(Violation::EmptyTokenProbs { key: key.clone() });
        }
        for (pos, &p) in trace.token_probs.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                report.violations.push(Violation::ProbabilityOutOfRange {
                    key: key.clone(),
                    token_pos: pos,
                    value: p,
                });
            }
        }

        if trace.trace_index >= pool.k {
            report.violations.push(Violation::TraceIndexBeyondK {
                key: key.clone(),
                k: pool.k,
            });
        }

        *seen.entry(key).or_insert(0) += 1;
    }

    for (key, count) in &seen {
        if *count > 1 {
            report.violations.push(Violation::DuplicateTraceKey { key: key.clone() });
        }
    }

    for (problem_id, idxs) in pool.problems() {
        let count = idxs.len();
        if count > pool.k as usize {
            report.violations.push(Violation::ProblemOverK {
                problem_id: problem_id.to_string(),
                count,
                k: pool.k,
            });
        } else if count < pool.k as usize {
            report.warnings.push(PoolWarning::RaggedProblem {
                problem_id: problem_id.to_string(),
                count,
                k: pool.k,
            });
        }
    }

    report
}

#[cfg(test)]
pub(crate) fn test_trace(problem_id: &str, trace_index: u32, token_probs: Vec<f64>) -> TraceRecord {
    TraceRecord {
        model_id: "m".into(),
        benchmark_id: "b".into(),
        problem_id: problem_id.into(),
        trace_index,
        token_probs,
        final_answer: "42".into(),
        gold_answer: "42".into(),
        correct: Some(true),
        output_text: "the answer is 42".into(),
        problem_text: "what is the answer".into(),
        temperature: 0.7,
        decode_mode: DecodeMode::Sampled,
    }
}
