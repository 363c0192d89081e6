//! Prompt construction for zero-shot and retrieval-augmented inference,
//! plus the instruction-generation prompt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::ApiRecord;

/// The sentence inserted between the user prompt and the retrieved
/// document. The trailing space is part of the marker.
pub const RETRIEVAL_MARKER: &str = "Use this API documentation for reference: ";

/// How a prompt is assembled.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptMode {
    /// The bare user instruction, unchanged.
    ZeroShot,
    /// User instruction plus exactly one retrieved document.
    WithRetrieval(Box<ApiRecord>),
}

/// The canonical compact JSON form of a record, in fixed field order, as
/// embedded into prompts.
pub fn record_json(record: &ApiRecord) -> String {
    serde_json::to_string(record).expect("record serializes")
}

/// Builds the inference prompt. Zero-shot mode returns the user prompt
/// unchanged; retrieval mode appends a single space, the marker sentence,
/// and the document JSON. Nothing else is added.
pub fn build_prompt(user_prompt: &str, mode: &PromptMode) -> Result<String> {
    if user_prompt.trim().is_empty() {
        return Err(Error::EmptyPrompt);
    }
    match mode {
        PromptMode::ZeroShot => Ok(user_prompt.to_string()),
        PromptMode::WithRetrieval(record) => Ok(format!(
            "{user_prompt} {RETRIEVAL_MARKER}{}",
            record_json(record)
        )),
    }
}

/// An (instruction, api_call) pair used as in-context seed material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPair {
    pub instruction: String,
    pub api_call: String,
}

const SELFINSTRUCT_TEMPLATE: &str = include_str!("data/selfinstruct_template.txt");

/// Builds the instruction-generation prompt from exactly three in-context
/// pairs and the reference record. The template never mentions the API
/// name outside the embedded JSON block.
pub fn build_selfinstruct_prompt(record: &ApiRecord, incontext: &[SeedPair]) -> Result<String> {
    if incontext.len() != 3 {
        return Err(Error::IncontextCount {
            got: incontext.len(),
        });
    }
    let mut prompt = SELFINSTRUCT_TEMPLATE.to_string();
    for (i, pair) in incontext.iter().enumerate() {
        prompt = prompt
            .replace(&format!("{{instruction_{}}}", i + 1), &pair.instruction)
            .replace(&format!("{{api_{}}}", i + 1), &pair.api_call);
    }
    Ok(prompt.replace("{api_doc_json}", &record_json(record)))
}
