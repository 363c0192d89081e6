//! Synthetic instruction generation: per API record, sample in-context
//! seed pairs, prompt a completion backend, and lint the results so no
//! instruction leaks the API it is supposed to elicit.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::client::{CompletionBackend, CompletionRequest};
use crate::error::{Error, Result};
use crate::eval::is_meta_line;
use crate::parser::{CallNode, Value};
use crate::prompt::{self, SeedPair};
use crate::registry::ApiRecord;

/// Where an instruction came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstructionSource {
    Generated { model: String },
    Handwritten,
}

/// One instruction paired with the API it should elicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub instruction: String,
    pub reference_id: String,
    pub source: InstructionSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Generation output for one record: the pairs plus an optional failure
/// marker when the backend could not deliver everything asked for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionBatch {
    pub pairs: Vec<InstructionPair>,
    pub failure: Option<String>,
}

/// Loads seed pairs from JSON Lines of `{instruction, api_call}`.
pub fn load_seed_pool(path: &Path) -> Result<Vec<SeedPair>> {
    let content = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pool = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || is_meta_line(trimmed) {
            continue;
        }
        let pair: SeedPair = serde_json::from_str(trimmed).map_err(|e| Error::MalformedLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        pool.push(pair);
    }
    Ok(pool)
}

/// Uniformly samples 3 distinct pairs from a pool of exactly 6,
/// deterministic per seed (Fisher-Yates over a ChaCha20 stream, first
/// three of the shuffled order).
pub fn sample_incontext(pool: &[SeedPair], seed: u64) -> Result<Vec<SeedPair>> {
    if pool.len() != 6 {
        return Err(Error::PoolSize { got: pool.len() });
    }
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices[..3].iter().map(|&i| pool[i].clone()).collect())
}

/// Splits a completion into instruction lines, stripping list numbering
/// ("3.", "3)", "3:") and bullets. A number without a delimiter is kept:
/// it belongs to the instruction text.
pub fn parse_instruction_lines(text: &str) -> Vec<String> {
    fn strip_numbering(line: &str) -> &str {
        let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            if let Some(rest) = line[digits..].strip_prefix(['.', ')', ':']) {
                return rest.trim_start();
            }
        }
        line
    }
    text.lines()
        .map(|line| {
            strip_numbering(line.trim())
                .trim_start_matches(['-', '*'])
                .trim()
                .to_string()
        })
        .filter(|line| !line.is_empty())
        .collect()
}

fn string_values(call: &CallNode) -> Vec<String> {
    fn walk(value: &Value, out: &mut Vec<String>) {
        match value {
            Value::StringLit(s) => out.push(s.clone()),
            Value::Call(c) => collect(c, out),
            Value::ListLit(items) => items.iter().for_each(|v| walk(v, out)),
            _ => {}
        }
    }
    fn collect(call: &CallNode, out: &mut Vec<String>) {
        call.positional.iter().for_each(|v| walk(v, out));
        call.keyword.iter().for_each(|(_, v)| walk(v, out));
    }
    let mut out = Vec::new();
    collect(call, &mut out);
    out
}

/// Flags instructions that leak the API: the api_name verbatim, the callee
/// path, or any distinctive string argument of the reference call (three
/// characters or longer). Case-insensitive substring checks.
pub fn lint_instruction(record: &ApiRecord, instruction: &str) -> Vec<String> {
    let lowered = instruction.to_lowercase();
    let mut flags = Vec::new();
    if !record.api_name.trim().is_empty()
        && lowered.contains(&record.api_name.to_lowercase())
    {
        flags.push("contains_api_name".to_string());
    }
    if let Ok(call) = record.parsed_call() {
        let mut hints = vec![call.callee_path()];
        hints.extend(string_values(&call));
        for hint in hints {
            if hint.len() >= 3 && lowered.contains(&hint.to_lowercase()) {
                flags.push(format!("contains_api_hint:{hint}"));
            }
        }
    }
    flags
}

fn complete_with_one_retry(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
) -> Result<String> {
    match backend.complete(request) {
        Ok(text) => Ok(text),
        Err(_) => backend.complete(request),
    }
}

/// Generates `n` instruction pairs for one record: builds the generation
/// prompt from 3 seeded in-context pairs, asks the backend, and lints each
/// instruction. Flagged instructions are regenerated once and kept (still
/// flagged) when the retry does not improve on them.
pub fn generate_instructions(
    record: &ApiRecord,
    pool: &[SeedPair],
    backend: &dyn CompletionBackend,
    seed: u64,
    n: usize,
) -> Result<InstructionBatch> {
    let incontext = sample_incontext(pool, seed)?;
    let gen_prompt = prompt::build_selfinstruct_prompt(record, &incontext)?;
    let request = CompletionRequest {
        prompt: gen_prompt,
        model_name: backend.provenance().label(),
        max_tokens: 1024,
        temperature: 0.0,
        example_id: Some(record.id.clone()),
    };
    let text = match complete_with_one_retry(backend, &request) {
        Ok(text) => text,
        Err(e) => {
            return Ok(InstructionBatch {
                pairs: Vec::new(),
                failure: Some(format!("backend failed after retry: {e}")),
            });
        }
    };
    let mut lines = parse_instruction_lines(&text);
    lines.truncate(n);

    let mut flags_per_line: Vec<Vec<String>> = lines
        .iter()
        .map(|line| lint_instruction(record, line))
        .collect();
    if flags_per_line.iter().any(|f| !f.is_empty()) {
        if let Ok(retry_text) = backend.complete(&request) {
            let retry_lines = parse_instruction_lines(&retry_text);
            for (i, flags) in flags_per_line.iter_mut().enumerate() {
                if flags.is_empty() {
                    continue;
                }
                if let Some(replacement) = retry_lines.get(i) {
                    let retry_flags = lint_instruction(record, replacement);
                    if retry_flags.is_empty() {
                        lines[i] = replacement.clone();
                        flags.clear();
                    } else {
                        log::warn!(
                            "record `{}`: instruction {} still flagged after regeneration",
                            record.id,
                            i + 1
                        );
                    }
                }
            }
        }
    }

    let model = backend.provenance().label();
    let pairs: Vec<InstructionPair> = lines
        .into_iter()
        .zip(flags_per_line)
        .map(|(instruction, flags)| InstructionPair {
            instruction,
            reference_id: record.id.clone(),
            source: InstructionSource::Generated {
                model: model.clone(),
            },
            flags,
        })
        .collect();
    let failure = if pairs.len() < n {
        Some(format!("backend yielded {} of {} instructions", pairs.len(), n))
    } else {
        None
    };
    Ok(InstructionBatch { pairs, failure })
}

/// Serializes pairs to the JSON Lines output format.
pub fn pairs_to_jsonl(pairs: &[InstructionPair]) -> String {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair).expect("pair serializes"));
        out.push('\n');
    }
    out
}
