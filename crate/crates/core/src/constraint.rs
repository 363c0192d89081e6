//! Constraint-aware API selection checks: does a chosen API satisfy the
//! user's stated metric constraint (accuracy thresholds, parameter counts).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::CandidateSet;
use crate::error::{Error, Result};
use crate::eval::{self, round2, EvalExample, EvalReport};
use crate::matcher::MatchSpec;
use crate::registry::{ApiDatabase, ApiRecord};

/// Comparison direction for a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
}

impl Comparator {
    pub fn holds(self, actual: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => actual >= threshold,
            Comparator::Le => actual <= threshold,
            Comparator::Gt => actual > threshold,
            Comparator::Lt => actual < threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
        }
    }
}

/// A user-stated requirement on one metric of one dataset. Accuracy
/// thresholds are in percent; parameter-count constraints use the metric
/// name "parameters" with absolute counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub metric_name: String,
    pub dataset_name: String,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl Constraint {
    pub fn new(
        metric_name: &str,
        dataset_name: &str,
        comparator: Comparator,
        threshold: f64,
    ) -> Result<Self> {
        if metric_name.trim().is_empty() || dataset_name.trim().is_empty() {
            return Err(Error::Invalid(
                "constraint metric and dataset names must be non-empty".to_string(),
            ));
        }
        if !threshold.is_finite() {
            return Err(Error::Invalid("constraint threshold must be finite".to_string()));
        }
        Ok(Constraint {
            metric_name: metric_name.to_string(),
            dataset_name: dataset_name.to_string(),
            comparator,
            threshold,
        })
    }
}

/// Whether a record meets a constraint; `Unknown` means the record's card
/// does not report the metric, which never counts as satisfying.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintVerdict {
    Satisfied,
    Violated { actual: f64 },
    Unknown { missing: String },
}

impl ConstraintVerdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, ConstraintVerdict::Satisfied)
    }

    pub fn label(&self) -> &'static str {
        match self {
            ConstraintVerdict::Satisfied => "satisfied",
            ConstraintVerdict::Violated { .. } => "violated",
            ConstraintVerdict::Unknown { .. } => "unknown",
        }
    }
}

/// Looks up the constraint's (dataset, metric) in the record's performance
/// groups with normalized name matching and compares against the threshold.
pub fn satisfies(record: &ApiRecord, constraint: &Constraint) -> ConstraintVerdict {
    match record.metric(&constraint.dataset_name, &constraint.metric_name) {
        Some(actual) => {
            if constraint.comparator.holds(actual, constraint.threshold) {
                ConstraintVerdict::Satisfied
            } else {
                ConstraintVerdict::Violated { actual }
            }
        }
        None => ConstraintVerdict::Unknown {
            missing: format!(
                "{} on {}",
                constraint.metric_name, constraint.dataset_name
            ),
        },
    }
}

/// The records whose cards define a metric for at least one dataset,
/// together with the retained fraction of the input database.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub database: ApiDatabase,
    pub retained: usize,
    pub total: usize,
}

impl FilterResult {
    pub fn fraction_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.retained as f64 * 100.0 / self.total as f64
        }
    }
}

/// Keeps records that define `metric_name` (normalized matching) for at
/// least one dataset.
pub fn filter_with_metrics(db: &ApiDatabase, metric_name: &str) -> FilterResult {
    let total = db.len();
    let kept: Vec<ApiRecord> = db
        .records()
        .iter()
        .filter(|r| r.has_metric(metric_name))
        .cloned()
        .collect();
    let retained = kept.len();
    let database = ApiDatabase::new(db.hub(), kept).expect("filtered records stay valid");
    FilterResult {
        database,
        retained,
        total,
    }
}

/// Loads per-example constraints from JSON Lines of
/// `{example_id, metric, dataset, comparator, threshold}`.
pub fn load_constraints(path: &Path) -> Result<HashMap<String, Constraint>> {
    #[derive(Deserialize)]
    struct Line {
        example_id: String,
        metric: String,
        dataset: String,
        comparator: Comparator,
        threshold: f64,
    }
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || eval::is_meta_line(trimmed) {
            continue;
        }
        let parsed: Line = serde_json::from_str(trimmed).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.insert(
            parsed.example_id,
            Constraint::new(&parsed.metric, &parsed.dataset, parsed.comparator, parsed.threshold)?,
        );
    }
    Ok(out)
}

/// Per-example constraint verdict for examples whose call was correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOutcome {
    pub example_id: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<f64>,
}

/// The plain evaluation report plus the constraint-accuracy row: an
/// example counts toward constraint accuracy iff its call was correct AND
/// the matched record satisfies the example's constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub report: EvalReport,
    pub constraint_correct: usize,
    pub verdicts: Vec<ConstraintOutcome>,
}

impl ConstraintReport {
    pub fn constraint_accuracy_pct(&self) -> f64 {
        let total = self.report.counts.total();
        if total == 0 {
            0.0
        } else {
            self.constraint_correct as f64 * 100.0 / total as f64
        }
    }

    pub fn to_file_json(&self) -> serde_json::Value {
        let mut value = self.report.to_file_json();
        value["constraint"] = serde_json::json!({
            "satisfied_count": self.constraint_correct,
            "accuracy_pct": round2(self.constraint_accuracy_pct()),
            "verdicts": self.verdicts,
        });
        value
    }
}

/// Runs the plain evaluation, then gates each correct example on its
/// constraint. Every example must carry a constraint.
pub fn constraint_evaluate(
    examples: &[EvalExample],
    constraints: &HashMap<String, Constraint>,
    candidates: &CandidateSet,
    db: &ApiDatabase,
    spec: &MatchSpec,
) -> Result<ConstraintReport> {
    for example in examples {
        if !constraints.contains_key(&example.id) {
            return Err(Error::MissingConstraint {
                example_id: example.id.clone(),
            });
        }
    }
    let report = eval::evaluate(examples, candidates, db, spec)?;
    let mut constraint_correct = 0;
    let mut verdicts = Vec::new();
    for (example, outcome) in examples.iter().zip(report.outcomes.iter()) {
        if outcome.outcome != "correct" {
            continue;
        }
        let constraint = &constraints[&example.id];
        let record = db.get(&example.reference_id)?;
        let verdict = satisfies(record, constraint);
        if verdict.is_satisfied() {
            constraint_correct += 1;
        }
        verdicts.push(ConstraintOutcome {
            example_id: example.id.clone(),
            verdict: verdict.label().to_string(),
            actual: match &verdict {
                ConstraintVerdict::Violated { actual } => Some(*actual),
                ConstraintVerdict::Satisfied => {
                    record.metric(&constraint.dataset_name, &constraint.metric_name)
                }
                ConstraintVerdict::Unknown { .. } => None,
            },
        });
    }
    Ok(ConstraintReport {
        report,
        constraint_correct,
        verdicts,
    })
}
