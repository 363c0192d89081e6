//! Verify and score model-generated API calls against hub documentation.
//!
//! The pieces, bottom to top:
//!
//! - [`registry`]: the JSON Lines API database (load, validate, split)
//! - [`parser`]: call-expression and structured-output parsing
//! - [`matcher`]: sub-tree matching and correct / wrong-API /
//!   hallucination classification
//! - [`retrieval`]: BM25, embedding, and oracle document retrieval
//! - [`prompt`]: zero-shot, retrieval-augmented, and instruction-generation
//!   prompts
//! - [`client`]: completion backends (replay, echo, copy-doc, remote) and
//!   batch candidate generation
//! - [`eval`]: per-setting reports and setting comparison
//! - [`constraint`]: constraint-aware selection checks
//! - [`instruct`]: synthetic instruction generation

pub mod client;
pub mod constraint;
pub mod error;
pub mod eval;
pub mod instruct;
pub mod matcher;
pub mod parser;
pub mod prompt;
pub mod registry;
pub mod retrieval;

pub use client::{
    CandidateEntry, CandidateSet, CompletionBackend, CompletionRequest, CopyDocBackend,
    EchoBackend, GenerateOptions, PromptSource, Provenance, RemoteBackend, RemoteBackendConfig,
    ReplayBackend,
};
pub use constraint::{
    constraint_evaluate, filter_with_metrics, load_constraints, satisfies, Comparator, Constraint,
    ConstraintReport, ConstraintVerdict, FilterResult,
};
pub use error::{Error, Result};
pub use eval::{
    compare_settings, evaluate, evaluate_domain_only, load_examples, ComparisonRow,
    ComparisonTable, EvalExample, EvalReport, ExampleOutcome, OutcomeCounts, Setting,
};
pub use instruct::{
    generate_instructions, lint_instruction, load_seed_pool, sample_incontext, InstructionBatch,
    InstructionPair, InstructionSource,
};
pub use matcher::{
    classify, default_spec, find_match, is_subtree_match, matches_record, MatchRule, MatchSpec,
    Outcome, SpecialRule,
};
pub use parser::{
    canonicalize, parse_calls, parse_structured_output, CallNode, StructuredOutput, Value,
};
pub use prompt::{
    build_prompt, build_selfinstruct_prompt, record_json, PromptMode, SeedPair, RETRIEVAL_MARKER,
};
pub use registry::{
    load_database, load_database_str, normalize_name, split_dataset, validate_record, ApiDatabase,
    ApiRecord, ArgSpec, DatasetSplit, Hub, PerformanceGroup, Violation,
};
pub use retrieval::{
    bm25_retrieve, build_bm25, build_bm25_with, cosine, document_text, embed_retrieve,
    oracle_retrieve, tokenize, Bm25Index, EmbeddingProvider, HashedBagOfWords,
    RemoteEmbeddingClient, RemoteEmbeddingConfig, RetrievalResult,
};
