//! Scores candidate sets against the database and aggregates per-setting
//! reports: overall accuracy, hallucination rate, and wrong-API error rate
//! partition every example set.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::CandidateSet;
use crate::error::{Error, Result};
use crate::matcher::{self, MatchSpec, Outcome};
use crate::parser;
use crate::registry::{ApiDatabase, Hub};

/// One evaluation example: an instruction paired with its ground-truth API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub instruction: String,
    pub reference_id: String,
    pub hub: Hub,
}

/// Loads examples from JSON Lines, skipping blank and header lines.
pub fn load_examples(path: &Path) -> Result<Vec<EvalExample>> {
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_meta_line(trimmed) {
            continue;
        }
        let example: EvalExample =
            serde_json::from_str(trimmed).map_err(|e| Error::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}

/// Artifact files may start with a `{"meta": ...}` header line.
pub(crate) fn is_meta_line(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| {
            v.as_object()
                .map(|o| o.len() == 1 && o.contains_key("meta"))
        })
        .unwrap_or(false)
}

/// The (model, retriever) pair a report describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting {
    pub model: String,
    pub retriever: String,
}

/// Integer outcome counts; percentages are always derived from these at
/// render time so they cannot drift from the counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub correct: usize,
    pub wrong_api: usize,
    pub hallucination: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.correct + self.wrong_api + self.hallucination
    }

    fn bump(&mut self, outcome: &Outcome) {
        match outcome {
            Outcome::Correct => self.correct += 1,
            Outcome::WrongApi { .. } => self.wrong_api += 1,
            Outcome::Hallucination => self.hallucination += 1,
        }
    }
}

/// Per-example classification, persisted so misclassifications can be
/// audited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub example_id: String,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_api_id: Option<String>,
}

impl ExampleOutcome {
    fn new(example_id: &str, outcome: &Outcome) -> Self {
        ExampleOutcome {
            example_id: example_id.to_string(),
            outcome: outcome.label().to_string(),
            matched_api_id: outcome.matched_api_id().map(str::to_string),
        }
    }
}

/// Aggregated results for one (model, retriever) setting on one hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub hub: Hub,
    pub counts: OutcomeCounts,
    pub outcomes: Vec<ExampleOutcome>,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

/// Rounds to the two decimals used in rendered tables.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl EvalReport {
    pub fn overall_pct(&self) -> f64 {
        pct(self.counts.correct, self.counts.total())
    }

    pub fn hallucination_pct(&self) -> f64 {
        pct(self.counts.hallucination, self.counts.total())
    }

    pub fn error_pct(&self) -> f64 {
        pct(self.counts.wrong_api, self.counts.total())
    }

    pub fn example_ids(&self) -> BTreeSet<&str> {
        self.outcomes.iter().map(|o| o.example_id.as_str()).collect()
    }

    /// The report-file layout: counts plus derived percentages.
    pub fn to_file_json(&self) -> serde_json::Value {
        serde_json::json!({
            "setting": self.setting,
            "hub": self.hub,
            "counts": self.counts,
            "percentages": {
                "overall": round2(self.overall_pct()),
                "hallucination": round2(self.hallucination_pct()),
                "error": round2(self.error_pct()),
            },
            "outcomes": self.outcomes,
        })
    }

    pub fn from_file_json(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone())
            .map_err(|e| Error::Invalid(format!("report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&content).map_err(|e| Error::Invalid(format!("report: {e}")))?;
        Self::from_file_json(&value)
    }
}

fn build_report(
    setting: Setting,
    hub: Hub,
    classified: Vec<(String, Outcome)>,
) -> EvalReport {
    let mut counts = OutcomeCounts::default();
    let mut outcomes = Vec::with_capacity(classified.len());
    for (example_id, outcome) in &classified {
        counts.bump(outcome);
        outcomes.push(ExampleOutcome::new(example_id, outcome));
    }
    EvalReport {
        setting,
        hub,
        counts,
        outcomes,
    }
}

/// Classifies every example's candidate via sub-tree matching and
/// aggregates the counts. Candidates that failed generation count as
/// hallucinations: no real tool was invoked.
pub fn evaluate(
    examples: &[EvalExample],
    candidates: &CandidateSet,
    db: &ApiDatabase,
    spec: &MatchSpec,
) -> Result<EvalReport> {
    let mut classified = Vec::with_capacity(examples.len());
    for example in examples {
        let entry = candidates
            .get(&example.id)
            .ok_or_else(|| Error::MissingCandidate {
                example_id: example.id.clone(),
            })?;
        let outcome = if !entry.ok {
            Outcome::Hallucination
        } else {
            matcher::classify(&entry.text, &example.reference_id, db, spec)?
        };
        classified.push((example.id.clone(), outcome));
    }
    Ok(build_report(candidates.setting(), db.hub(), classified))
}

fn fold_domain(domain: &str) -> String {
    domain.trim().to_lowercase()
}

/// Domain-only scoring: an example is correct iff the candidate names the
/// reference record's domain (case-folded, whitespace-trimmed). Other
/// domains present in the database count as wrong-API picks; anything else
/// is a hallucination. The domain is read from a structured `<domain>` tag
/// when present, otherwise the whole trimmed candidate is the domain.
pub fn evaluate_domain_only(
    examples: &[EvalExample],
    candidates: &CandidateSet,
    db: &ApiDatabase,
) -> Result<EvalReport> {
    let mut known: Vec<(String, String)> = Vec::new(); // folded domain -> first id
    for record in db.records() {
        let folded = fold_domain(&record.domain);
        if !known.iter().any(|(d, _)| *d == folded) {
            known.push((folded, record.id.clone()));
        }
    }
    let mut classified = Vec::with_capacity(examples.len());
    for example in examples {
        let entry = candidates
            .get(&example.id)
            .ok_or_else(|| Error::MissingCandidate {
                example_id: example.id.clone(),
            })?;
        let reference = db.get(&example.reference_id)?;
        let outcome = if !entry.ok {
            Outcome::Hallucination
        } else {
            let candidate_domain = match parser::parse_structured_output(&entry.text) {
                Ok(out) => out.domain.unwrap_or_else(|| entry.text.trim().to_string()),
                Err(_) => entry.text.trim().to_string(),
            };
            let folded = fold_domain(&candidate_domain);
            if folded == fold_domain(&reference.domain) {
                Outcome::Correct
            } else if let Some((_, id)) = known.iter().find(|(d, _)| *d == folded) {
                Outcome::WrongApi {
                    matched_api_id: id.clone(),
                }
            } else {
                Outcome::Hallucination
            }
        };
        classified.push((example.id.clone(), outcome));
    }
    Ok(build_report(candidates.setting(), db.hub(), classified))
}

/// One line of a settings-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub retriever: String,
    pub overall_pct: f64,
    pub hallucination_pct: f64,
    pub error_pct: f64,
}

/// A grid of (model, retriever) settings over one shared example set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub hub: Hub,
    pub example_count: usize,
    pub rows: Vec<ComparisonRow>,
}

impl std::fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} ({} examples)",
            self.hub.as_str(),
            self.example_count
        )?;
        writeln!(
            f,
            "{:<28} {:<12} {:>9} {:>9} {:>9}",
            "model", "retriever", "overall", "hallu", "err"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<28} {:<12} {:>8.2}% {:>8.2}% {:>8.2}%",
                row.model, row.retriever, row.overall_pct, row.hallucination_pct, row.error_pct
            )?;
        }
        Ok(())
    }
}

/// Lines up reports that cover the same example set into one grid.
pub fn compare_settings(reports: &[EvalReport]) -> Result<ComparisonTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Invalid("no reports to compare".to_string()))?;
    let expected = first.example_ids();
    for report in &reports[1..] {
        if report.example_ids() != expected {
            return Err(Error::MismatchedExampleSets);
        }
        if report.hub != first.hub {
            return Err(Error::Invalid(
                "reports to compare span different hubs".to_string(),
            ));
        }
    }
    Ok(ComparisonTable {
        hub: first.hub,
        example_count: expected.len(),
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                model: r.setting.model.clone(),
                retriever: r.setting.retriever.clone(),
                overall_pct: round2(r.overall_pct()),
                hallucination_pct: round2(r.hallucination_pct()),
                error_pct: round2(r.error_pct()),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{CandidateSet, Provenance};
    use crate::matcher::default_spec;
    use crate::registry::{ApiRecord, ArgSpec};

    fn torch_record(id: &str, repo: &str, model: &str, domain: &str) -> ApiRecord {
        ApiRecord {
            id: id.to_string(),
            domain: domain.to_string(),
            framework: "PyTorch".to_string(),
            functionality: "vision".to_string(),
            api_name: model.to_string(),
            api_call: format!("torch.hub.load(repo_or_dir='{repo}', model='{model}')"),
            api_arguments: vec![ArgSpec::required("repo_or_dir"), ArgSpec::required("model")],
            environment_requirements: "torch".to_string(),
            example_code: String::new(),
            performance: Vec::new(),
            description: String::new(),
            extra: serde_json::Map::new(),
        }
    }

    fn db() -> ApiDatabase {
        ApiDatabase::new(
            Hub::TorchHub,
            vec![
                torch_record("a", "r1", "m1", "Classification"),
                torch_record("b", "r2", "m2", "Object Detection"),
                torch_record("c", "r3", "m3", "Semantic Segmentation"),
            ],
        )
        .unwrap()
    }

    fn example(id: &str, reference: &str) -> EvalExample {
        EvalExample {
            id: id.to_string(),
            instruction: format!("use {reference}"),
            reference_id: reference.to_string(),
            hub: Hub::TorchHub,
        }
    }

    fn candidates(entries: &[(&str, &str)]) -> CandidateSet {
        let mut set = CandidateSet::new(Provenance::Mock("test".to_string()), "zero-shot");
        for (id, text) in entries {
            set.insert_ok(id, text);
        }
        set
    }

    #[test]
    fn ground_truth_candidates_score_perfectly() {
        let db = db();
        let examples = vec![example("e1", "a"), example("e2", "b")];
        let texts: Vec<(String, String)> = examples
            .iter()
            .map(|e| (e.id.clone(), db.get(&e.reference_id).unwrap().api_call.clone()))
            .collect();
        let refs: Vec<(&str, &str)> = texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let report =
            evaluate(&examples, &candidates(&refs), &db, &default_spec(Hub::TorchHub)).unwrap();
        assert_eq!(report.counts.correct, 2);
        assert_eq!(report.overall_pct(), 100.0);
        assert_eq!(report.hallucination_pct(), 0.0);
    }

    #[test]
    fn counts_partition_the_example_set() {
        let db = db();
        let examples = vec![
            example("e1", "a"),
            example("e2", "a"),
            example("e3", "a"),
        ];
        let set = candidates(&[
            ("e1", "torch.hub.load('r1', 'm1')"),
            ("e2", "torch.hub.load('r2', 'm2')"),
            ("e3", "nothing to see"),
        ]);
        let report = evaluate(&examples, &set, &db, &default_spec(Hub::TorchHub)).unwrap();
        assert_eq!(report.counts.correct, 1);
        assert_eq!(report.counts.wrong_api, 1);
        assert_eq!(report.counts.hallucination, 1);
        assert_eq!(report.counts.total(), 3);
        assert_eq!(report.outcomes[1].matched_api_id.as_deref(), Some("b"));
    }

    #[test]
    fn six_three_one_mix_scores_sixty_thirty_ten() {
        let db = db();
        let mut examples = Vec::new();
        let mut set = CandidateSet::new(Provenance::Mock("test".to_string()), "zero-shot");
        for i in 0..10 {
            let id = format!("e{i}");
            examples.push(example(&id, "a"));
            let text = if i < 6 {
                "torch.hub.load('r1', 'm1')"
            } else if i < 9 {
                "torch.hub.load('r2', 'm2')"
            } else {
                "nothing callable"
            };
            set.insert_ok(&id, text);
        }
        let report = evaluate(&examples, &set, &db, &default_spec(Hub::TorchHub)).unwrap();
        assert_eq!(
            (report.counts.correct, report.counts.wrong_api, report.counts.hallucination),
            (6, 3, 1)
        );
        assert_eq!(report.overall_pct(), 60.0);
        assert_eq!(report.error_pct(), 30.0);
        assert_eq!(report.hallucination_pct(), 10.0);
    }

    #[test]
    fn failed_candidates_count_as_hallucination() {
        let db = db();
        let examples = vec![example("e1", "a")];
        let mut set = CandidateSet::new(Provenance::Mock("test".to_string()), "zero-shot");
        set.insert_failed("e1", "timeout");
        let report = evaluate(&examples, &set, &db, &default_spec(Hub::TorchHub)).unwrap();
        assert_eq!(report.counts.hallucination, 1);
    }

    #[test]
    fn missing_candidate_names_the_example() {
        let db = db();
        let examples = vec![example("e9", "a")];
        let set = candidates(&[]);
        match evaluate(&examples, &set, &db, &default_spec(Hub::TorchHub)) {
            Err(Error::MissingCandidate { example_id }) => assert_eq!(example_id, "e9"),
            other => panic!("expected missing-candidate error, got {other:?}"),
        }
    }

    #[test]
    fn shuffling_examples_keeps_aggregates() {
        let db = db();
        let examples = vec![example("e1", "a"), example("e2", "b"), example("e3", "c")];
        let set = candidates(&[
            ("e1", "torch.hub.load('r1', 'm1')"),
            ("e2", "torch.hub.load('r9', 'm9')"),
            ("e3", "torch.hub.load('r1', 'm1')"),
        ]);
        let spec = default_spec(Hub::TorchHub);
        let forward = evaluate(&examples, &set, &db, &spec).unwrap();
        let mut reversed = examples.clone();
        reversed.reverse();
        let backward = evaluate(&reversed, &set, &db, &spec).unwrap();
        assert_eq!(forward.counts, backward.counts);
    }

    #[test]
    fn domain_only_matches_case_folded() {
        let db = db();
        let examples = vec![example("e1", "b")];
        let set = candidates(&[("e1", "<domain>: object detection")]);
        let report = evaluate_domain_only(&examples, &set, &db).unwrap();
        assert_eq!(report.counts.correct, 1);
    }

    #[test]
    fn domain_only_known_other_domain_is_wrong_api() {
        let db = db();
        let examples = vec![example("e1", "b")];
        let set = candidates(&[("e1", "Semantic Segmentation")]);
        let report = evaluate_domain_only(&examples, &set, &db).unwrap();
        assert_eq!(report.counts.wrong_api, 1);
        assert_eq!(report.outcomes[0].matched_api_id.as_deref(), Some("c"));
    }

    #[test]
    fn domain_only_unknown_domain_is_hallucination() {
        let db = db();
        let examples = vec![example("e1", "b")];
        let set = candidates(&[("e1", "Quantum Chemistry")]);
        let report = evaluate_domain_only(&examples, &set, &db).unwrap();
        assert_eq!(report.counts.hallucination, 1);
    }

    #[test]
    fn report_file_json_round_trips() {
        let db = db();
        let examples = vec![example("e1", "a")];
        let set = candidates(&[("e1", "torch.hub.load('r1', 'm1')")]);
        let report = evaluate(&examples, &set, &db, &default_spec(Hub::TorchHub)).unwrap();
        let json = report.to_file_json();
        assert_eq!(json["percentages"]["overall"], serde_json::json!(100.0));
        let back = EvalReport::from_file_json(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn compare_requires_same_example_set() {
        let db = db();
        let spec = default_spec(Hub::TorchHub);
        let e1 = vec![example("e1", "a")];
        let e2 = vec![example("e2", "a")];
        let r1 = evaluate(&e1, &candidates(&[("e1", "x")]), &db, &spec).unwrap();
        let r2 = evaluate(&e2, &candidates(&[("e2", "x")]), &db, &spec).unwrap();
        assert!(matches!(
            compare_settings(&[r1.clone(), r2]),
            Err(Error::MismatchedExampleSets)
        ));
        let table = compare_settings(&[r1.clone(), r1]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.example_count, 1);
    }

    #[test]
    fn comparison_grid_reflects_settings() {
        let db = db();
        let spec = default_spec(Hub::TorchHub);
        let examples = vec![example("e1", "a")];
        let good = evaluate(
            &examples,
            &candidates(&[("e1", "torch.hub.load('r1', 'm1')")]),
            &db,
            &spec,
        )
        .unwrap();
        let mut garbage_set = CandidateSet::new(Provenance::Mock("test".to_string()), "oracle");
        garbage_set.insert_ok("e1", "garbage");
        let bad = evaluate(&examples, &garbage_set, &db, &spec).unwrap();
        let table = compare_settings(&[good, bad]).unwrap();
        assert_eq!(table.rows[0].overall_pct, 100.0);
        assert_eq!(table.rows[1].overall_pct, 0.0);
        assert_eq!(table.rows[1].hallucination_pct, 100.0);
        let rendered = table.to_string();
        assert!(rendered.contains("retriever"));
    }
}
