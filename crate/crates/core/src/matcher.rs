//! AST sub-tree matching.
//!
//! Decides whether a candidate call is a sub-tree of a reference API call
//! and classifies candidate outputs as correct, wrong-API error, or
//! hallucination. A hallucination is a call that matches no API in the
//! database at all; a wrong-API error matches a real API other than the
//! reference.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{self, CallNode, Value};
use crate::registry::{ApiDatabase, ApiRecord, Hub};

/// One accepted callee path with the argument names that must match.
/// A callee of `["*"]` accepts any path (the candidate must still equal
/// the reference's own callee).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRule {
    pub callee: Vec<String>,
    pub required_args: Vec<String>,
}

impl MatchRule {
    pub fn new(callee: &str, required_args: &[&str]) -> Self {
        MatchRule {
            callee: callee.split('.').map(str::to_string).collect(),
            required_args: required_args.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn accepts(&self, path: &[String]) -> bool {
        (self.callee.len() == 1 && self.callee[0] == "*") || self.callee == path
    }
}

/// Named per-hub exceptions to the plain required-argument rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecialRule {
    /// The task argument alone identifies the API; a model argument, when
    /// supplied by the candidate, must match whenever the reference
    /// specifies one.
    PipelineTask { callee: Vec<String> },
}

impl SpecialRule {
    fn callee(&self) -> &[String] {
        match self {
            SpecialRule::PipelineTask { callee } => callee,
        }
    }
}

/// Per-hub matching configuration: accepted callee paths and which
/// argument names participate in sub-tree matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchSpec {
    pub hub: Hub,
    pub rules: Vec<MatchRule>,
    pub special_rules: Vec<SpecialRule>,
}

#[derive(Serialize, Deserialize)]
struct MatchSpecRepr {
    hub: Hub,
    rules: Vec<RuleRepr>,
    #[serde(default)]
    special_rules: Vec<SpecialRuleRepr>,
}

#[derive(Serialize, Deserialize)]
struct RuleRepr {
    callee: String,
    required_args: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SpecialRuleRepr {
    name: String,
    callee: String,
}

impl MatchSpec {
    /// Loads a spec from JSON, so new hubs can be added without code
    /// changes. Callee paths are dotted strings.
    pub fn from_json(json: &str) -> Result<Self> {
        let repr: MatchSpecRepr =
            serde_json::from_str(json).map_err(|e| Error::Invalid(format!("match spec: {e}")))?;
        let rules = repr
            .rules
            .into_iter()
            .map(|r| {
                if r.callee.is_empty() {
                    return Err(Error::Invalid("match spec: empty callee path".to_string()));
                }
                let mut seen = std::collections::BTreeSet::new();
                for name in &r.required_args {
                    if !seen.insert(name.as_str()) {
                        return Err(Error::Invalid(format!(
                            "match spec: rule `{}` repeats required argument `{name}`",
                            r.callee
                        )));
                    }
                }
                Ok(MatchRule {
                    callee: r.callee.split('.').map(str::to_string).collect(),
                    required_args: r.required_args,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let special_rules = repr
            .special_rules
            .into_iter()
            .map(|s| match s.name.as_str() {
                "pipeline_task" => Ok(SpecialRule::PipelineTask {
                    callee: s.callee.split('.').map(str::to_string).collect(),
                }),
                other => Err(Error::Invalid(format!(
                    "match spec: unknown special rule `{other}`"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatchSpec {
            hub: repr.hub,
            rules,
            special_rules,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&content)
    }

    pub fn to_json(&self) -> String {
        let repr = MatchSpecRepr {
            hub: self.hub,
            rules: self
                .rules
                .iter()
                .map(|r| RuleRepr {
                    callee: r.callee.join("."),
                    required_args: r.required_args.clone(),
                })
                .collect(),
            special_rules: self
                .special_rules
                .iter()
                .map(|s| SpecialRuleRepr {
                    name: match s {
                        SpecialRule::PipelineTask { .. } => "pipeline_task".to_string(),
                    },
                    callee: s.callee().join("."),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&repr).expect("spec serializes")
    }

    fn special_for(&self, path: &[String]) -> Option<&SpecialRule> {
        self.special_rules.iter().find(|s| s.callee() == path)
    }

    fn rule_for(&self, path: &[String]) -> Option<&MatchRule> {
        self.rules.iter().find(|r| r.accepts(path))
    }
}

/// The built-in per-hub matching rules.
///
/// TorchHub checks `torch.hub.load` on `repo_or_dir` and `model`; TensorHub
/// checks `hub.KerasLayer` and `hub.load` on `handle`. HuggingFace has many
/// entry points, so its rule accepts any callee (a candidate still has to
/// name the reference record's own callee, which confines accepted paths to
/// the database's api_name set) and requires
/// `pretrained_model_name_or_path`, except for `pipeline`, where the task
/// argument alone suffices.
pub fn default_spec(hub: Hub) -> MatchSpec {
    match hub {
        Hub::TorchHub => MatchSpec {
            hub,
            rules: vec![MatchRule::new("torch.hub.load", &["repo_or_dir", "model"])],
            special_rules: vec![],
        },
        Hub::TensorHub => MatchSpec {
            hub,
            rules: vec![
                MatchRule::new("hub.KerasLayer", &["handle"]),
                MatchRule::new("hub.load", &["handle"]),
            ],
            special_rules: vec![],
        },
        Hub::HuggingFace => MatchSpec {
            hub,
            rules: vec![MatchRule::new("*", &["pretrained_model_name_or_path"])],
            special_rules: vec![SpecialRule::PipelineTask {
                callee: vec!["pipeline".to_string()],
            }],
        },
    }
}

/// Classification of one evaluated example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    WrongApi { matched_api_id: String },
    Hallucination,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Correct => "correct",
            Outcome::WrongApi { .. } => "wrong_api",
            Outcome::Hallucination => "hallucination",
        }
    }

    pub fn matched_api_id(&self) -> Option<&str> {
        match self {
            Outcome::WrongApi { matched_api_id } => Some(matched_api_id),
            _ => None,
        }
    }
}

/// Equality of two argument values under the call-parser normalization
/// rules: string content is compared whitespace-trimmed and case-sensitive,
/// identifiers (variables) only ever equal the same identifier text.
fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::StringLit(x), Value::StringLit(y)) => x.trim() == y.trim(),
        (Value::NumberLit(x), Value::NumberLit(y)) => x == y,
        (Value::BoolLit(x), Value::BoolLit(y)) => x == y,
        (Value::Identifier(x), Value::Identifier(y)) => x == y,
        (Value::Call(x), Value::Call(y)) => call_eq(x, y),
        (Value::ListLit(x), Value::ListLit(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| value_eq(a, b))
        }
        _ => false,
    }
}

fn call_eq(a: &CallNode, b: &CallNode) -> bool {
    a.callee == b.callee
        && a.positional.len() == b.positional.len()
        && a.positional
            .iter()
            .zip(b.positional.iter())
            .all(|(x, y)| value_eq(x, y))
        && a.keyword.len() == b.keyword.len()
        && a.keyword
            .iter()
            .all(|(n, v)| b.kwarg(n).is_some_and(|other| value_eq(v, other)))
}

/// A required argument matches when both sides carry equal values or both
/// leave it unspecified; a value present on only one side never matches.
fn required_arg_eq(candidate: &CallNode, reference: &CallNode, name: &str) -> bool {
    match (candidate.kwarg(name), reference.kwarg(name)) {
        (Some(c), Some(r)) => value_eq(c, r),
        (None, None) => true,
        _ => false,
    }
}

fn task_of(call: &CallNode) -> Option<&Value> {
    call.kwarg("task").or_else(|| call.positional.first())
}

fn pipeline_match(candidate: &CallNode, reference: &CallNode) -> bool {
    let task_matches = match (task_of(candidate), task_of(reference)) {
        (Some(c), Some(r)) => value_eq(c, r),
        _ => false,
    };
    if !task_matches {
        return false;
    }
    match (candidate.kwarg("model"), reference.kwarg("model")) {
        (Some(c), Some(r)) => value_eq(c, r),
        // Task alone suffices when either side leaves the model unpinned.
        _ => true,
    }
}

/// True iff `candidate` is a sub-tree of `reference` under `spec`: the
/// callee must be spec-accepted and equal to the reference's, and every
/// required argument of the matching rule must agree. All other arguments,
/// present or absent, are ignored. Both calls are expected canonicalized
/// against the reference's argument order.
pub fn is_subtree_match(candidate: &CallNode, reference: &CallNode, spec: &MatchSpec) -> bool {
    if candidate.callee != reference.callee {
        return false;
    }
    if let Some(special) = spec.special_for(&candidate.callee) {
        return match special {
            SpecialRule::PipelineTask { .. } => pipeline_match(candidate, reference),
        };
    }
    match spec.rule_for(&candidate.callee) {
        Some(rule) => rule
            .required_args
            .iter()
            .all(|name| required_arg_eq(candidate, reference, name)),
        None => false,
    }
}

/// Checks one raw candidate call against one database record, handling
/// canonicalization of both sides. Any canonicalization failure (for
/// example, more positional arguments than the record declares) counts as
/// a non-match rather than an error.
pub fn matches_record(candidate: &CallNode, record: &ApiRecord, spec: &MatchSpec) -> bool {
    let order = record.arg_order();
    let Ok(reference) = record
        .parsed_call()
        .and_then(|c| parser::canonicalize(&c, &order))
    else {
        return false;
    };
    let Ok(candidate) = parser::canonicalize(candidate, &order) else {
        return false;
    };
    is_subtree_match(&candidate, &reference, spec)
}

/// Scans candidate calls in textual order and returns the id of the first
/// database record matched by any of them.
pub fn find_match(calls: &[CallNode], db: &ApiDatabase, spec: &MatchSpec) -> Option<String> {
    for call in calls {
        for record in db.records() {
            if matches_record(call, record, spec) {
                return Some(record.id.clone());
            }
        }
    }
    None
}

/// Classifies a raw candidate text against the reference record:
/// any extracted call matching the reference wins as `Correct`; otherwise
/// a call matching some other record is a `WrongApi` error; anything else
/// (including unparseable or call-free text) is a `Hallucination`.
pub fn classify(
    candidate_text: &str,
    reference_id: &str,
    db: &ApiDatabase,
    spec: &MatchSpec,
) -> Result<Outcome> {
    let reference = db.get(reference_id)?;
    let calls = parser::parse_calls(candidate_text);
    if calls
        .iter()
        .any(|call| matches_record(call, reference, spec))
    {
        return Ok(Outcome::Correct);
    }
    for call in &calls {
        for record in db.records() {
            if record.id != reference.id && matches_record(call, record, spec) {
                return Ok(Outcome::WrongApi {
                    matched_api_id: record.id.clone(),
                });
            }
        }
    }
    Ok(Outcome::Hallucination)
}
