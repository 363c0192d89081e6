//! API-documentation registry.
//!
//! Loads, validates, indexes, and splits the JSON Lines database that serves
//! as both retrieval corpus and evaluation ground truth.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{self, CallNode};

/// The three model hubs the corpus covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hub {
    TorchHub,
    TensorHub,
    HuggingFace,
}

impl Hub {
    pub const ALL: [Hub; 3] = [Hub::TorchHub, Hub::TensorHub, Hub::HuggingFace];

    /// Fraction of examples held out for evaluation when splitting.
    pub fn test_fraction(self) -> f64 {
        match self {
            Hub::HuggingFace => 0.10,
            Hub::TorchHub | Hub::TensorHub => 0.20,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hub::TorchHub => "torchhub",
            Hub::TensorHub => "tensorhub",
            Hub::HuggingFace => "huggingface",
        }
    }
}

impl fmt::Display for Hub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hub {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "torchhub" => Ok(Hub::TorchHub),
            "tensorhub" => Ok(Hub::TensorHub),
            "huggingface" => Ok(Hub::HuggingFace),
            other => Err(format!(
                "unknown hub `{other}` (expected torchhub, tensorhub, or huggingface)"
            )),
        }
    }
}

/// One argument descriptor of an API call. Ingestion accepts either a plain
/// string (treated as required) or a `{name, optional}` object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ArgSpecRepr")]
pub struct ArgSpec {
    pub name: String,
    #[serde(default)]
    pub optional: bool,
}

impl ArgSpec {
    pub fn required(name: &str) -> Self {
        ArgSpec {
            name: name.to_string(),
            optional: false,
        }
    }

    pub fn optional(name: &str) -> Self {
        ArgSpec {
            name: name.to_string(),
            optional: true,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArgSpecRepr {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        optional: bool,
    },
}

impl From<ArgSpecRepr> for ArgSpec {
    fn from(repr: ArgSpecRepr) -> Self {
        match repr {
            ArgSpecRepr::Name(name) => ArgSpec {
                name,
                optional: false,
            },
            ArgSpecRepr::Full { name, optional } => ArgSpec { name, optional },
        }
    }
}

/// Metric values reported for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceGroup {
    pub dataset: String,
    pub metrics: BTreeMap<String, f64>,
}

/// One model-card entry: the unit of retrieval and the ground truth of
/// evaluation. Field order here is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiRecord {
    pub id: String,
    pub domain: String,
    pub framework: String,
    pub functionality: String,
    pub api_name: String,
    pub api_call: String,
    pub api_arguments: Vec<ArgSpec>,
    pub environment_requirements: String,
    pub example_code: String,
    pub performance: Vec<PerformanceGroup>,
    pub description: String,
    /// Unknown keys from the source file, preserved but ignored.
    #[serde(flatten, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ApiRecord {
    /// Argument names in declared order, for canonicalizing calls.
    pub fn arg_order(&self) -> Vec<String> {
        self.api_arguments.iter().map(|a| a.name.clone()).collect()
    }

    /// Parses `api_call`. Fails unless it contains exactly one top-level
    /// call expression.
    pub fn parsed_call(&self) -> Result<CallNode> {
        let calls = parser::parse_calls(&self.api_call);
        if calls.len() == 1 {
            Ok(calls.into_iter().next().unwrap())
        } else {
            Err(Error::UnparseableApiCall {
                id: self.id.clone(),
            })
        }
    }

    /// The reference call with positional arguments rewritten to keywords
    /// using this record's own argument order.
    pub fn canonical_call(&self) -> Result<CallNode> {
        parser::canonicalize(&self.parsed_call()?, &self.arg_order())
    }

    /// Looks up a metric value by (dataset, metric) with the normalized
    /// name matching used by constraint checks.
    pub fn metric(&self, dataset: &str, metric: &str) -> Option<f64> {
        let want_ds = normalize_name(dataset);
        let want_m = normalize_name(metric);
        for group in &self.performance {
            if normalize_name(&group.dataset) == want_ds {
                for (name, value) in &group.metrics {
                    if normalize_name(name) == want_m {
                        return Some(*value);
                    }
                }
            }
        }
        None
    }

    /// Whether any dataset defines the given metric.
    pub fn has_metric(&self, metric: &str) -> bool {
        let want = normalize_name(metric);
        self.performance
            .iter()
            .any(|g| g.metrics.keys().any(|m| normalize_name(m) == want))
    }
}

/// Case-insensitive, punctuation-stripped form used to match metric and
/// dataset names across inconsistently formatted model cards
/// ("mAP@0.5 (%)" matches "map@0.5").
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// A description of one violated record invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks the per-record invariants. Returns an empty list iff they all
/// hold; uniqueness of ids is a database-level check.
pub fn validate_record(record: &ApiRecord) -> Vec<Violation> {
    let mut violations = Vec::new();
    let calls = parser::parse_calls(&record.api_call);
    if calls.len() != 1 {
        violations.push(Violation {
            field: "api_call",
            message: format!(
                "expected exactly one call expression, found {}",
                calls.len()
            ),
        });
    }
    for group in &record.performance {
        for (metric, value) in &group.metrics {
            if !value.is_finite() {
                violations.push(Violation {
                    field: "performance",
                    message: format!(
                        "metric `{}` on dataset `{}` is not a finite number",
                        metric, group.dataset
                    ),
                });
            }
        }
    }
    violations
}

/// An ordered, immutable collection of API records with id lookup.
#[derive(Debug, Clone)]
pub struct ApiDatabase {
    hub: Hub,
    records: Vec<ApiRecord>,
    by_id: HashMap<String, usize>,
}

impl ApiDatabase {
    /// Builds a database from records, enforcing id uniqueness and the
    /// per-record invariants. Record order is preserved.
    pub fn new(hub: Hub, records: Vec<ApiRecord>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r));
        Self::from_numbered(hub, numbered)
    }

    fn from_numbered(hub: Hub, numbered: impl Iterator<Item = (usize, ApiRecord)>) -> Result<Self> {
        let mut records = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();
        let mut first_seen: HashMap<String, usize> = HashMap::new();
        for (line, record) in numbered {
            if let Some(&first) = first_seen.get(&record.id) {
                return Err(Error::DuplicateId {
                    id: record.id,
                    first,
                    second: line,
                });
            }
            if let Some(violation) = validate_record(&record).into_iter().next() {
                if violation.field == "api_call" {
                    return Err(Error::UnparseableApiCall { id: record.id });
                }
                return Err(Error::InvalidRecord {
                    id: record.id,
                    details: violation.to_string(),
                });
            }
            first_seen.insert(record.id.clone(), line);
            by_id.insert(record.id.clone(), records.len());
            records.push(record);
        }
        Ok(ApiDatabase {
            hub,
            records,
            by_id,
        })
    }

    pub fn hub(&self) -> Hub {
        self.hub
    }

    pub fn records(&self) -> &[ApiRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Option<&ApiRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    /// Total over present ids; fails for absent ones.
    pub fn get(&self, id: &str) -> Result<&ApiRecord> {
        self.lookup(id).ok_or_else(|| Error::UnknownId {
            id: id.to_string(),
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Serializes the database back to JSON Lines in canonical field order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Loads a JSON Lines database file. Every record must satisfy the record
/// invariants; ids must be unique; record order follows file order. Metric
/// values in [0, 1] are normalized to percentages with a warning.
pub fn load_database(path: &Path, hub: Hub) -> Result<ApiDatabase> {
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_database_str(&content, hub)
}

/// Same as [`load_database`] but from in-memory content.
pub fn load_database_str(content: &str, hub: Hub) -> Result<ApiDatabase> {
    let mut numbered = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: ApiRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        normalize_performance(&mut record);
        numbered.push((line_no, record));
    }
    ApiDatabase::from_numbered(hub, numbered.into_iter())
}

/// Multiplies metric values in [0, 1] by 100: the corpus mixes fractional
/// and percentage styles, and downstream constraint thresholds are stated
/// in percent.
fn normalize_performance(record: &mut ApiRecord) {
    for group in &mut record.performance {
        for (metric, value) in group.metrics.iter_mut() {
            if (0.0..=1.0).contains(value) {
                let scaled = *value * 100.0;
                if scaled != *value {
                    log::warn!(
                        "record `{}`: metric `{}` on `{}` looks fractional ({}); storing {}",
                        record.id,
                        metric,
                        group.dataset,
                        value,
                        scaled
                    );
                }
                *value = scaled;
            }
        }
    }
}

/// A reproducible train/test partition of example ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Splits example ids into train/test sets: 90/10 for HuggingFace, 80/20
/// for TorchHub and TensorHub. Ids are shuffled with a Fisher-Yates pass
/// over a ChaCha20 stream seeded by `seed`, so splits reproduce exactly;
/// the test set takes `round(fraction * n)` ids (at least 1 when n >= 2)
/// from the front of the shuffled sequence.
pub fn split_dataset(example_ids: &[String], hub: Hub, seed: u64) -> Result<DatasetSplit> {
    if example_ids.is_empty() {
        return Err(Error::EmptyIdList);
    }
    let mut ids = example_ids.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let n = ids.len();
    let mut test_size = (hub.test_fraction() * n as f64).round() as usize;
    if n >= 2 {
        test_size = test_size.max(1);
    }
    let train = ids.split_off(test_size);
    Ok(DatasetSplit {
        train,
        test: ids,
        seed,
    })
}
