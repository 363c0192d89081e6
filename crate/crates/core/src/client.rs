//! Completion backends and batch candidate generation.
//!
//! Evaluation never requires network access: the replay, echo, and
//! copy-doc backends cover every offline path, while the remote backend
//! exists for studies against live models. Batch generation isolates
//! per-example failures so one timeout cannot kill a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{is_meta_line, EvalExample, Setting};
use crate::prompt::{self, PromptMode, RETRIEVAL_MARKER};
use crate::registry::{ApiDatabase, ApiRecord};
use crate::retrieval::{self, Bm25Index};

/// One completion request. `example_id` keys replay lookups and batch
/// bookkeeping; remote backends ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub example_id: Option<String>,
}

impl CompletionRequest {
    /// A request with the reproducibility defaults: temperature 0.
    pub fn new(prompt: &str) -> Self {
        CompletionRequest {
            prompt: prompt.to_string(),
            model_name: String::new(),
            max_tokens: 512,
            temperature: 0.0,
            example_id: None,
        }
    }

    pub fn for_example(mut self, example_id: &str) -> Self {
        self.example_id = Some(example_id.to_string());
        self
    }
}

/// Where a candidate set came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Remote(String),
    Replay(PathBuf),
    Mock(String),
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::Remote(model_name) => model_name.clone(),
            Provenance::Replay(path) => format!(
                "replay:{}",
                path.file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string())
            ),
            Provenance::Mock(label) => label.clone(),
        }
    }
}

/// A source of completions.
pub trait CompletionBackend: Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String>;
    fn provenance(&self) -> Provenance;
}

/// Returns the prompt itself; useful for wiring tests.
pub struct EchoBackend;

impl CompletionBackend for EchoBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        Ok(request.prompt.clone())
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock("echo".to_string())
    }
}

/// Answers with the `api_call` of the document embedded in the prompt.
/// Under oracle retrieval this backend is exactly right every time, so
/// overall accuracy equals the retriever's top-1 recall for any retriever.
pub struct CopyDocBackend;

impl CompletionBackend for CopyDocBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let Some(idx) = request.prompt.find(RETRIEVAL_MARKER) else {
            return Err(Error::Backend {
                message: "prompt carries no retrieved document".to_string(),
                status: None,
                retriable: false,
            });
        };
        let json = &request.prompt[idx + RETRIEVAL_MARKER.len()..];
        let record: ApiRecord = serde_json::from_str(json).map_err(|e| Error::Backend {
            message: format!("retrieved document does not parse: {e}"),
            status: None,
            retriable: false,
        })?;
        Ok(record.api_call)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock("copy-doc".to_string())
    }
}

/// Replays canned texts keyed by example id; fully deterministic.
pub struct ReplayBackend {
    entries: BTreeMap<String, String>,
    path: PathBuf,
}

impl ReplayBackend {
    /// Loads a candidate file (JSON Lines of `{example_id, text, ...}`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let entries = read_candidate_lines(path)?
            .into_iter()
            .map(|(id, entry)| (id, entry.text))
            .collect();
        Ok(ReplayBackend {
            entries,
            path: path.to_path_buf(),
        })
    }

    pub fn from_entries(entries: BTreeMap<String, String>, label: &str) -> Self {
        ReplayBackend {
            entries,
            path: PathBuf::from(label),
        }
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let id = request.example_id.as_deref().unwrap_or("");
        self.entries
            .get(id)
            .cloned()
            .ok_or_else(|| Error::ReplayMiss {
                example_id: if id.is_empty() {
                    "<missing example id>".to_string()
                } else {
                    id.to_string()
                },
            })
    }

    fn provenance(&self) -> Provenance {
        Provenance::Replay(self.path.clone())
    }
}

/// Remote completion endpoint configuration; the API key is read from the
/// named environment variable at request time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    2
}

pub struct RemoteBackend {
    config: RemoteBackendConfig,
    http: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteBackendConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Backend {
                message: e.to_string(),
                status: None,
                retriable: false,
            })?;
        Ok(RemoteBackend { config, http })
    }

    fn request_once(&self, request: &CompletionRequest) -> Result<String> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| Error::Backend {
            message: format!("environment variable {} is not set", self.config.api_key_env),
            status: None,
            retriable: false,
        })?;
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        let response = self
            .http
            .post(&self.config.base_url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| Error::Backend {
                message: e.to_string(),
                status: None,
                retriable: true,
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Backend {
                message: format!("completion request failed: {status}"),
                status: Some(status.as_u16()),
                retriable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let parsed: serde_json::Value = response.json().map_err(|e| Error::Backend {
            message: e.to_string(),
            status: Some(status.as_u16()),
            retriable: false,
        })?;
        extract_completion_text(&parsed).ok_or_else(|| Error::Backend {
            message: "response carried no completion text".to_string(),
            status: Some(status.as_u16()),
            retriable: false,
        })
    }
}

fn extract_completion_text(value: &serde_json::Value) -> Option<String> {
    value["text"]
        .as_str()
        .or_else(|| value["choices"][0]["text"].as_str())
        .or_else(|| value["choices"][0]["message"]["content"].as_str())
        .map(str::to_string)
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let mut last = None;
        for _ in 0..=self.config.max_retries {
            match self.request_once(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retriable() => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or(Error::Backend {
            message: "exhausted retries".to_string(),
            status: None,
            retriable: false,
        }))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Remote(self.config.model.clone())
    }
}

/// One generated candidate; failed generations keep their error message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub text: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CandidateLine {
    example_id: String,
    text: String,
    #[serde(default = "default_true")]
    ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn default_true() -> bool {
    true
}

/// Candidate texts keyed by example id, with provenance and the retriever
/// label used to build the prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    entries: BTreeMap<String, CandidateEntry>,
    pub provenance: Provenance,
    pub retriever: String,
}

impl CandidateSet {
    pub fn new(provenance: Provenance, retriever: &str) -> Self {
        CandidateSet {
            entries: BTreeMap::new(),
            provenance,
            retriever: retriever.to_string(),
        }
    }

    pub fn insert_ok(&mut self, example_id: &str, text: &str) {
        self.entries.insert(
            example_id.to_string(),
            CandidateEntry {
                text: text.to_string(),
                ok: true,
                error: None,
            },
        );
    }

    pub fn insert_failed(&mut self, example_id: &str, error: &str) {
        self.entries.insert(
            example_id.to_string(),
            CandidateEntry {
                text: String::new(),
                ok: false,
                error: Some(error.to_string()),
            },
        );
    }

    pub fn get(&self, example_id: &str) -> Option<&CandidateEntry> {
        self.entries.get(example_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CandidateEntry)> {
        self.entries.iter()
    }

    pub fn setting(&self) -> Setting {
        Setting {
            model: self.provenance.label(),
            retriever: self.retriever.clone(),
        }
    }

    /// JSON Lines body, ids ascending: byte-stable for equal content.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, entry) in &self.entries {
            let line = CandidateLine {
                example_id: id.clone(),
                text: entry.text.clone(),
                ok: entry.ok,
                error: entry.error.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("candidate serializes"));
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

    /// Loads a candidate file; provenance becomes `Replay(path)`.
    pub fn load(path: &Path, retriever: &str) -> Result<Self> {
        let mut set = CandidateSet::new(
            Provenance::Replay(path.to_path_buf()),
            retriever,
        );
        for (id, entry) in read_candidate_lines(path)? {
            set.entries.insert(id, entry);
        }
        Ok(set)
    }
}

fn read_candidate_lines(path: &Path) -> Result<Vec<(String, CandidateEntry)>> {
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_meta_line(trimmed) {
            continue;
        }
        let parsed: CandidateLine =
            serde_json::from_str(trimmed).map_err(|e| Error::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push((
            parsed.example_id,
            CandidateEntry {
                text: parsed.text,
                ok: parsed.ok,
                error: parsed.error,
            },
        ));
    }
    Ok(out)
}

/// How each example's prompt gets its (optional) retrieved document.
pub enum PromptSource<'a> {
    ZeroShot,
    /// Always the ground-truth document.
    Oracle(&'a ApiDatabase),
    /// Top-1 BM25 document for the example's instruction.
    Bm25(&'a Bm25Index, &'a ApiDatabase),
    /// Any custom per-example mode.
    Custom(&'a (dyn Fn(&EvalExample) -> Result<PromptMode> + Sync)),
}

impl PromptSource<'_> {
    pub fn label(&self) -> &str {
        match self {
            PromptSource::ZeroShot => "zero-shot",
            PromptSource::Oracle(_) => "oracle",
            PromptSource::Bm25(_, _) => "bm25",
            PromptSource::Custom(_) => "custom",
        }
    }

    fn mode_for(&self, example: &EvalExample) -> Result<PromptMode> {
        match self {
            PromptSource::ZeroShot => Ok(PromptMode::ZeroShot),
            PromptSource::Oracle(db) => {
                let record = db.get(&example.reference_id)?;
                Ok(PromptMode::WithRetrieval(Box::new(record.clone())))
            }
            PromptSource::Bm25(index, db) => {
                let result = retrieval::bm25_retrieve(index, &example.instruction, 1)?;
                let top = result.top().ok_or_else(|| {
                    Error::Invalid(format!("no document retrieved for `{}`", example.id))
                })?;
                Ok(PromptMode::WithRetrieval(Box::new(db.get(top)?.clone())))
            }
            PromptSource::Custom(f) => f(example),
        }
    }
}

/// Options for batch generation.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub max_tokens: u32,
    pub temperature: f64,
    /// Upper bound on concurrent backend calls.
    pub jobs: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            max_tokens: 512,
            temperature: 0.0,
            jobs: 4,
        }
    }
}

/// Builds every example's prompt, calls the backend (at most `jobs` calls
/// in flight), and records one candidate per example id. Failures are
/// recorded per example; the batch always completes.
pub fn generate_candidates(
    examples: &[EvalExample],
    source: &PromptSource<'_>,
    backend: &dyn CompletionBackend,
    options: &GenerateOptions,
) -> CandidateSet {
    let results: Mutex<Vec<(String, CandidateEntry)>> = Mutex::new(Vec::new());
    let cursor = AtomicUsize::new(0);
    let workers = options.jobs.clamp(1, examples.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(example) = examples.get(i) else {
                    break;
                };
                let entry = match run_one(example, source, backend, options) {
                    Ok(text) => CandidateEntry {
                        text,
                        ok: true,
                        error: None,
                    },
                    Err(e) => CandidateEntry {
                        text: String::new(),
                        ok: false,
                        error: Some(e.to_string()),
                    },
                };
                results.lock().unwrap().push((example.id.clone(), entry));
            });
        }
    });
    let mut set = CandidateSet::new(backend.provenance(), source.label());
    for (id, entry) in results.into_inner().unwrap() {
        set.entries.insert(id, entry);
    }
    set
}

fn run_one(
    example: &EvalExample,
    source: &PromptSource<'_>,
    backend: &dyn CompletionBackend,
    options: &GenerateOptions,
) -> Result<String> {
    let mode = source.mode_for(example)?;
    let prompt = prompt::build_prompt(&example.instruction, &mode)?;
    let request = CompletionRequest {
        prompt,
        model_name: backend.provenance().label(),
        max_tokens: options.max_tokens,
        temperature: options.temperature,
        example_id: Some(example.id.clone()),
    };
    backend.complete(&request)
}
