//! Command-line entry point wiring the library into reproducible commands.
//!
//! Exit codes: 0 success, 1 operational failure (a machine-readable error
//! record lands in the output directory), 2 usage or configuration error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use apieval::{
    client, constraint, eval, instruct, matcher, parser, prompt, registry, retrieval,
    CandidateSet, CompletionBackend, CopyDocBackend, EchoBackend, EvalReport, GenerateOptions,
    HashedBagOfWords, Hub, MatchSpec, PromptMode, PromptSource, Provenance, RemoteBackend,
    ReplayBackend,
};

use config::{load_file_config, RunConfig};

fn hub_parser(s: &str) -> Result<Hub, String> {
    s.parse()
}

#[derive(Debug, Parser)]
#[command(name = "apieval", version)]
#[command(about = "Verify and score model-generated API calls against hub documentation")]
struct Cli {
    /// Path to the TOML config file.
    #[arg(long, global = true, default_value = "apieval.toml")]
    config: PathBuf,

    /// Output directory for artifacts (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed recorded in artifacts and used by seeded operations.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Upper bound on parallel backend calls.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DbArgs {
    /// Database file (JSON Lines); falls back to the config's per-hub path.
    #[arg(long)]
    db: Option<PathBuf>,

    #[arg(long, value_parser = hub_parser)]
    hub: Hub,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a database file record by record
    Validate {
        db: PathBuf,
        #[arg(long, value_parser = hub_parser)]
        hub: Hub,
    },

    /// Split example ids into train and test id files
    Split {
        ids_file: PathBuf,
        #[arg(long, value_parser = hub_parser)]
        hub: Hub,
    },

    /// Parse call expressions out of text (debugging aid)
    Parse {
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
    },

    /// Index operations
    #[command(subcommand)]
    Index(IndexCommand),

    /// Retrieve the most relevant API documents for a query
    Retrieve {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long, value_parser = ["bm25", "embed", "oracle"])]
        mode: String,
        /// Query text (bm25/embed modes).
        #[arg(long)]
        query: Option<String>,
        #[arg(short, default_value_t = 1)]
        k: usize,
        /// Example id whose reference the oracle returns.
        #[arg(long)]
        example_id: Option<String>,
        /// Examples file (oracle mode).
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Embedding dimension for the offline hashed-bag-of-words provider.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        /// Use the configured remote embedding endpoint (network I/O)
        /// instead of the offline provider.
        #[arg(long)]
        remote_embed: bool,
        /// Load a previously built index artifact instead of indexing the
        /// database (bm25 mode).
        #[arg(long)]
        index: Option<PathBuf>,
    },

    /// Print the exact inference prompt for a query
    Prompt {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        query: String,
        /// Append this record's documentation to the prompt.
        #[arg(long)]
        with_doc: Option<String>,
    },

    /// Generate candidate completions for an example set
    Generate {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long, value_parser = ["zeroshot", "bm25", "oracle"], default_value = "zeroshot")]
        mode: String,
        #[arg(long, value_parser = ["echo", "copydoc", "replay", "remote"])]
        backend: String,
        /// Replay file for the replay backend.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },

    /// Score a candidate set against the database
    Evaluate {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Domain-name scoring instead of call matching.
        #[arg(long)]
        domain_only: bool,
        /// Match-spec JSON file; defaults to the hub's built-in rules.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },

    /// Line up evaluation reports over one example set
    Compare {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },

    /// Evaluate with per-example metric constraints
    ConstraintEval {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },

    /// Generate synthetic instruction-API pairs for database records
    GenInstructions {
        #[command(flatten)]
        db: DbArgs,
        /// Seed pool file (exactly six instruction-API pairs).
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_parser = ["echo", "replay", "remote"])]
        backend: String,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Instructions requested per record.
        #[arg(short, default_value_t = 10)]
        n: usize,
        /// Only the first N records (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    /// Build and persist a BM25 index over a database
    Build {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        out_file: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Op(String),
}

impl From<apieval::Error> for CliError {
    fn from(e: apieval::Error) -> Self {
        CliError::Op(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let explicit_config = cli.config.as_os_str() != "apieval.toml";
    let file = match load_file_config(&cli.config, explicit_config) {
        Ok(file) => file,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    let cfg = RunConfig::resolve(file, cli.seed, cli.out, cli.jobs);
    match run(cli.command, &cfg) {
        Ok(code) => code,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Op(message)) => {
            eprintln!("error: {message}");
            let record = json!({ "meta": meta(&cfg), "error": message });
            let _ = fs::create_dir_all(&cfg.output_dir);
            let _ = fs::write(cfg.output_dir.join("error.json"), format!("{record:#}\n"));
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact helpers
// ---------------------------------------------------------------------------

fn meta(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
    })
}

fn artifact_path(cfg: &RunConfig, flag: Option<&Path>, default_name: &str) -> CliResult<PathBuf> {
    let path = flag
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join(default_name));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Op(format!("{}: {e}", parent.display())))?;
        }
    }
    Ok(path)
}

fn write_json_artifact(cfg: &RunConfig, path: &Path, mut value: serde_json::Value) -> CliResult<()> {
    value["meta"] = meta(cfg);
    fs::write(path, format!("{value:#}\n"))
        .map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_jsonl_artifact(
    cfg: &RunConfig,
    path: &Path,
    extra_meta: serde_json::Value,
    body: &str,
) -> CliResult<()> {
    let mut header = meta(cfg);
    if let (Some(header_map), Some(extra)) = (header.as_object_mut(), extra_meta.as_object()) {
        for (key, value) in extra {
            header_map.insert(key.clone(), value.clone());
        }
    }
    let content = format!("{}\n{body}", json!({ "meta": header }));
    fs::write(path, content).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_id_file(cfg: &RunConfig, path: &Path, ids: &[String]) -> CliResult<()> {
    let mut content = format!(
        "# apieval tool_version={} config_hash={} seed={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        cfg.seed
    );
    for id in ids {
        content.push_str(id);
        content.push('\n');
    }
    fs::write(path, content).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

fn load_db(cfg: &RunConfig, args: &DbArgs) -> CliResult<apieval::ApiDatabase> {
    let path = cfg
        .database_for(args.hub, args.db.as_deref())
        .ok_or_else(|| {
            CliError::Usage(format!(
                "no database for {}: pass --db or add [databases].{} to the config",
                args.hub, args.hub
            ))
        })?;
    require_exists(&path, "database")?;
    Ok(registry::load_database(&path, args.hub)?)
}

fn load_spec(cfg: &RunConfig, hub: Hub, flag: Option<&Path>) -> CliResult<MatchSpec> {
    match cfg.match_spec_for(hub, flag) {
        Some(path) => {
            require_exists(&path, "match spec")?;
            Ok(MatchSpec::from_json_file(&path)?)
        }
        None => Ok(matcher::default_spec(hub)),
    }
}

/// Reads an id file: one id per line, `#` lines and blanks skipped.
fn read_ids(path: &Path) -> CliResult<Vec<String>> {
    let content =
        fs::read_to_string(path).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Loads a candidate file, restoring the (model, retriever) labels its
/// header line recorded at generation time.
fn load_candidates(path: &Path) -> CliResult<CandidateSet> {
    require_exists(path, "candidate file")?;
    let mut set = CandidateSet::load(path, "zero-shot")?;
    let content =
        fs::read_to_string(path).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    if let Some(first) = content.lines().next() {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(first) {
            if let Some(header) = value.get("meta") {
                if let Some(model) = header.get("model").and_then(|v| v.as_str()) {
                    set.provenance = Provenance::Mock(model.to_string());
                }
                if let Some(retriever) = header.get("retriever").and_then(|v| v.as_str()) {
                    set.retriever = retriever.to_string();
                }
            }
        }
    }
    Ok(set)
}

/// Reads the index out of an `index build` artifact.
fn load_index_artifact(path: &Path) -> CliResult<apieval::Bm25Index> {
    require_exists(path, "index artifact")?;
    let content =
        fs::read_to_string(path).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&content)
        .map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    serde_json::from_value(value["index"].clone())
        .map_err(|e| CliError::Op(format!("{}: not an index artifact: {e}", path.display())))
}

fn make_backend(
    cfg: &RunConfig,
    kind: &str,
    replay: Option<&Path>,
) -> CliResult<Box<dyn CompletionBackend>> {
    match kind {
        "echo" => Ok(Box::new(EchoBackend)),
        "copydoc" => Ok(Box::new(CopyDocBackend)),
        "replay" => {
            let path = replay
                .map(Path::to_path_buf)
                .or_else(|| cfg.replay_path.clone())
                .ok_or_else(|| {
                    CliError::Usage(
                        "replay backend needs --replay or [backend].replay_path".to_string(),
                    )
                })?;
            require_exists(&path, "replay file")?;
            Ok(Box::new(ReplayBackend::from_file(&path)?))
        }
        "remote" => {
            let remote = cfg.remote.clone().ok_or_else(|| {
                CliError::Usage("remote backend needs [backend.remote] in the config".to_string())
            })?;
            Ok(Box::new(RemoteBackend::new(remote)?))
        }
        other => Err(CliError::Usage(format!("unknown backend `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Command dispatch
// ---------------------------------------------------------------------------

fn run(command: Command, cfg: &RunConfig) -> CliResult<ExitCode> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Op(format!("{}: {e}", cfg.output_dir.display())))?;
    match command {
        Command::Validate { db, hub } => cmd_validate(cfg, &db, hub),
        Command::Split { ids_file, hub } => cmd_split(cfg, &ids_file, hub),
        Command::Parse { text, file } => cmd_parse(text, file),
        Command::Index(IndexCommand::Build { db, out_file }) => {
            cmd_index_build(cfg, &db, out_file.as_deref())
        }
        Command::Retrieve {
            db,
            mode,
            query,
            k,
            example_id,
            examples,
            dim,
            remote_embed,
            index,
        } => cmd_retrieve(
            cfg,
            &db,
            &mode,
            query,
            k,
            example_id,
            examples,
            dim,
            remote_embed,
            index.as_deref(),
        ),
        Command::Prompt { db, query, with_doc } => cmd_prompt(cfg, &db, &query, with_doc),
        Command::Generate {
            db,
            examples,
            mode,
            backend,
            replay,
            out_file,
        } => cmd_generate(
            cfg,
            &db,
            &examples,
            &mode,
            &backend,
            replay.as_deref(),
            out_file.as_deref(),
        ),
        Command::Evaluate {
            db,
            examples,
            candidates,
            domain_only,
            spec,
            out_file,
        } => cmd_evaluate(
            cfg,
            &db,
            &examples,
            &candidates,
            domain_only,
            spec.as_deref(),
            out_file.as_deref(),
        ),
        Command::Compare { reports, out_file } => cmd_compare(cfg, &reports, out_file.as_deref()),
        Command::ConstraintEval {
            db,
            examples,
            candidates,
            constraints,
            spec,
            out_file,
        } => cmd_constraint_eval(
            cfg,
            &db,
            &examples,
            &candidates,
            &constraints,
            spec.as_deref(),
            out_file.as_deref(),
        ),
        Command::GenInstructions {
            db,
            pool,
            backend,
            replay,
            n,
            limit,
            out_file,
        } => cmd_gen_instructions(
            cfg,
            &db,
            &pool,
            &backend,
            replay.as_deref(),
            n,
            limit,
            out_file.as_deref(),
        ),
    }
}

fn cmd_validate(cfg: &RunConfig, db_path: &Path, hub: Hub) -> CliResult<ExitCode> {
    require_exists(db_path, "database")?;
    let content = fs::read_to_string(db_path)
        .map_err(|e| CliError::Op(format!("{}: {e}", db_path.display())))?;
    let mut issues: Vec<serde_json::Value> = Vec::new();
    let mut first_seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut records = 0usize;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<apieval::ApiRecord>(line) {
            Err(e) => issues.push(json!({
                "line": line_no,
                "field": "-",
                "message": format!("malformed line: {e}"),
            })),
            Ok(record) => {
                records += 1;
                if let Some(first) = first_seen.get(&record.id) {
                    issues.push(json!({
                        "line": line_no,
                        "id": record.id,
                        "field": "id",
                        "message": format!("duplicate id (first seen on line {first})"),
                    }));
                } else {
                    first_seen.insert(record.id.clone(), line_no);
                }
                for violation in registry::validate_record(&record) {
                    issues.push(json!({
                        "line": line_no,
                        "id": record.id,
                        "field": violation.field,
                        "message": violation.message,
                    }));
                }
            }
        }
    }
    let issue_count = issues.len();
    let artifact = artifact_path(cfg, None, &format!("validate_{}.json", hub.as_str()))?;
    write_json_artifact(
        cfg,
        &artifact,
        json!({
            "hub": hub.as_str(),
            "path": db_path.display().to_string(),
            "records": records,
            "issues": issues,
        }),
    )?;
    println!("{}: {records} records, {issue_count} issue(s)", hub.as_str());
    Ok(if issue_count == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_split(cfg: &RunConfig, ids_file: &Path, hub: Hub) -> CliResult<ExitCode> {
    require_exists(ids_file, "ids file")?;
    let ids = read_ids(ids_file)?;
    let split = registry::split_dataset(&ids, hub, cfg.seed)?;
    let train_path = artifact_path(cfg, None, &format!("{}_train_ids.txt", hub.as_str()))?;
    let test_path = artifact_path(cfg, None, &format!("{}_test_ids.txt", hub.as_str()))?;
    write_id_file(cfg, &train_path, &split.train)?;
    write_id_file(cfg, &test_path, &split.test)?;
    println!(
        "{}: {} train / {} test (seed {})",
        hub.as_str(),
        split.train.len(),
        split.test.len(),
        cfg.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_parse(text: Option<String>, file: Option<PathBuf>) -> CliResult<ExitCode> {
    let source = match (text, file) {
        (Some(text), None) => text,
        (None, Some(path)) => {
            require_exists(&path, "input file")?;
            fs::read_to_string(&path)
                .map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?
        }
        _ => {
            return Err(CliError::Usage(
                "pass exactly one of --text or --file".to_string(),
            ))
        }
    };
    let calls = parser::parse_calls(&source);
    let rendered: Vec<serde_json::Value> = calls
        .iter()
        .map(|c| {
            json!({
                "callee": c.callee_path(),
                "positional": c.positional.len(),
                "keyword": c.keyword.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
                "source": c.to_source(),
            })
        })
        .collect();
    println!("{:#}", json!({ "count": calls.len(), "calls": rendered }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_index_build(cfg: &RunConfig, db_args: &DbArgs, out_file: Option<&Path>) -> CliResult<ExitCode> {
    let db = load_db(cfg, db_args)?;
    let index = retrieval::build_bm25_with(&db, cfg.k1, cfg.b)?;
    let artifact = artifact_path(cfg, out_file, &format!("bm25_{}.json", db_args.hub.as_str()))?;
    write_json_artifact(
        cfg,
        &artifact,
        json!({
            "hub": db_args.hub.as_str(),
            "doc_count": index.doc_count(),
            "avg_doc_length": index.avg_doc_length(),
            "index": serde_json::to_value(&index).map_err(|e| CliError::Op(e.to_string()))?,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_retrieve(
    cfg: &RunConfig,
    db_args: &DbArgs,
    mode: &str,
    query: Option<String>,
    k: usize,
    example_id: Option<String>,
    examples: Option<PathBuf>,
    dim: usize,
    remote_embed: bool,
    index_file: Option<&Path>,
) -> CliResult<ExitCode> {
    let db = load_db(cfg, db_args)?;
    let (result, described_query) = match mode {
        "bm25" => {
            let query =
                query.ok_or_else(|| CliError::Usage("bm25 mode needs --query".to_string()))?;
            let index = match index_file {
                Some(path) => load_index_artifact(path)?,
                None => retrieval::build_bm25_with(&db, cfg.k1, cfg.b)?,
            };
            (retrieval::bm25_retrieve(&index, &query, k)?, query)
        }
        "embed" => {
            let query =
                query.ok_or_else(|| CliError::Usage("embed mode needs --query".to_string()))?;
            let result = if remote_embed {
                let remote = cfg.embedding.clone().ok_or_else(|| {
                    CliError::Usage(
                        "--remote-embed needs [retriever.embedding] in the config".to_string(),
                    )
                })?;
                let provider = apieval::RemoteEmbeddingClient::new(remote)?;
                retrieval::embed_retrieve(&db, &provider, &query, k)?
            } else {
                let provider = HashedBagOfWords::new(dim);
                retrieval::embed_retrieve(&db, &provider, &query, k)?
            };
            (result, query)
        }
        "oracle" => {
            let example_id = example_id
                .ok_or_else(|| CliError::Usage("oracle mode needs --example-id".to_string()))?;
            let examples_path = examples
                .ok_or_else(|| CliError::Usage("oracle mode needs --examples".to_string()))?;
            require_exists(&examples_path, "examples file")?;
            let examples = eval::load_examples(&examples_path)?;
            let example = examples
                .iter()
                .find(|e| e.id == example_id)
                .ok_or_else(|| CliError::Usage(format!("no example `{example_id}`")))?;
            (
                retrieval::oracle_retrieve(example, &db)?,
                example.instruction.clone(),
            )
        }
        other => return Err(CliError::Usage(format!("unknown mode `{other}`"))),
    };
    for (rank, (id, score)) in result.ranked.iter().enumerate() {
        println!("{:>2}. {id}  {score:.6}", rank + 1);
    }
    let artifact = artifact_path(cfg, None, "retrieval.json")?;
    write_json_artifact(
        cfg,
        &artifact,
        json!({
            "hub": db_args.hub.as_str(),
            "mode": mode,
            "query": described_query,
            "k": k,
            "ranked": result.ranked,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_prompt(
    cfg: &RunConfig,
    db_args: &DbArgs,
    query: &str,
    with_doc: Option<String>,
) -> CliResult<ExitCode> {
    let mode = match with_doc {
        None => PromptMode::ZeroShot,
        Some(api_id) => {
            let db = load_db(cfg, db_args)?;
            PromptMode::WithRetrieval(Box::new(db.get(&api_id)?.clone()))
        }
    };
    let built = prompt::build_prompt(query, &mode)?;
    let artifact = artifact_path(cfg, None, "prompt.txt")?;
    fs::write(&artifact, &built)
        .map_err(|e| CliError::Op(format!("{}: {e}", artifact.display())))?;
    println!("{built}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(
    cfg: &RunConfig,
    db_args: &DbArgs,
    examples_path: &Path,
    mode: &str,
    backend_kind: &str,
    replay: Option<&Path>,
    out_file: Option<&Path>,
) -> CliResult<ExitCode> {
    require_exists(examples_path, "examples file")?;
    let db = load_db(cfg, db_args)?;
    let examples = eval::load_examples(examples_path)?;
    let index = if mode == "bm25" {
        Some(retrieval::build_bm25_with(&db, cfg.k1, cfg.b)?)
    } else {
        None
    };
    let source = match mode {
        "zeroshot" => PromptSource::ZeroShot,
        "oracle" => PromptSource::Oracle(&db),
        "bm25" => PromptSource::Bm25(index.as_ref().expect("index built"), &db),
        other => return Err(CliError::Usage(format!("unknown mode `{other}`"))),
    };
    let backend = make_backend(cfg, backend_kind, replay)?;
    let options = GenerateOptions {
        jobs: cfg.jobs,
        ..GenerateOptions::default()
    };
    let set = client::generate_candidates(&examples, &source, backend.as_ref(), &options);
    let failed = set.iter().filter(|(_, e)| !e.ok).count();
    let artifact = artifact_path(
        cfg,
        out_file,
        &format!(
            "candidates_{}_{mode}_{backend_kind}.jsonl",
            db_args.hub.as_str()
        ),
    )?;
    write_jsonl_artifact(
        cfg,
        &artifact,
        json!({
            "model": set.provenance.label(),
            "retriever": set.retriever,
        }),
        &set.to_jsonl(),
    )?;
    println!(
        "{} candidates ({failed} failed) via {} / {}",
        set.len(),
        set.provenance.label(),
        set.retriever
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(
    cfg: &RunConfig,
    db_args: &DbArgs,
    examples_path: &Path,
    candidates_path: &Path,
    domain_only: bool,
    spec_path: Option<&Path>,
    out_file: Option<&Path>,
) -> CliResult<ExitCode> {
    require_exists(examples_path, "examples file")?;
    let db = load_db(cfg, db_args)?;
    let examples = eval::load_examples(examples_path)?;
    let candidates = load_candidates(candidates_path)?;
    let report = if domain_only {
        eval::evaluate_domain_only(&examples, &candidates, &db)?
    } else {
        let spec = load_spec(cfg, db_args.hub, spec_path)?;
        eval::evaluate(&examples, &candidates, &db, &spec)?
    };
    let artifact = artifact_path(
        cfg,
        out_file,
        &format!(
            "report_{}_{}.json",
            db_args.hub.as_str(),
            if domain_only { "domain" } else { "ast" }
        ),
    )?;
    write_json_artifact(cfg, &artifact, report.to_file_json())?;
    println!(
        "{} [{} / {}]: overall {:.2}%  hallucination {:.2}%  error {:.2}%  ({} examples)",
        db_args.hub.as_str(),
        report.setting.model,
        report.setting.retriever,
        report.overall_pct(),
        report.hallucination_pct(),
        report.error_pct(),
        report.counts.total()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(cfg: &RunConfig, reports: &[PathBuf], out_file: Option<&Path>) -> CliResult<ExitCode> {
    if reports.is_empty() {
        return Err(CliError::Usage("pass at least one report file".to_string()));
    }
    let mut loaded = Vec::new();
    for path in reports {
        require_exists(path, "report")?;
        loaded.push(EvalReport::load(path)?);
    }
    let table = eval::compare_settings(&loaded)?;
    print!("{table}");
    let artifact = artifact_path(cfg, out_file, "comparison.json")?;
    write_json_artifact(
        cfg,
        &artifact,
        serde_json::to_value(&table).map_err(|e| CliError::Op(e.to_string()))?,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_constraint_eval(
    cfg: &RunConfig,
    db_args: &DbArgs,
    examples_path: &Path,
    candidates_path: &Path,
    constraints_path: &Path,
    spec_path: Option<&Path>,
    out_file: Option<&Path>,
) -> CliResult<ExitCode> {
    require_exists(examples_path, "examples file")?;
    require_exists(constraints_path, "constraints file")?;
    let db = load_db(cfg, db_args)?;
    let examples = eval::load_examples(examples_path)?;
    let candidates = load_candidates(candidates_path)?;
    let constraints = constraint::load_constraints(constraints_path)?;
    let spec = load_spec(cfg, db_args.hub, spec_path)?;
    let report = constraint::constraint_evaluate(&examples, &constraints, &candidates, &db, &spec)?;
    let artifact = artifact_path(
        cfg,
        out_file,
        &format!("constraint_report_{}.json", db_args.hub.as_str()),
    )?;
    write_json_artifact(cfg, &artifact, report.to_file_json())?;
    println!(
        "{}: overall {:.2}%  constraint accuracy {:.2}%  ({} examples)",
        db_args.hub.as_str(),
        report.report.overall_pct(),
        report.constraint_accuracy_pct(),
        report.report.counts.total()
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_instructions(
    cfg: &RunConfig,
    db_args: &DbArgs,
    pool_path: &Path,
    backend_kind: &str,
    replay: Option<&Path>,
    n: usize,
    limit: usize,
    out_file: Option<&Path>,
) -> CliResult<ExitCode> {
    require_exists(pool_path, "seed pool")?;
    let db = load_db(cfg, db_args)?;
    let pool = instruct::load_seed_pool(pool_path)?;
    let backend = make_backend(cfg, backend_kind, replay)?;
    let records: Vec<&apieval::ApiRecord> = match limit {
        0 => db.records().iter().collect(),
        n => db.records().iter().take(n).collect(),
    };
    let mut pairs = Vec::new();
    let mut failures = 0usize;
    for (i, record) in records.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let batch = instruct::generate_instructions(record, &pool, backend.as_ref(), seed, n)?;
        if let Some(reason) = &batch.failure {
            failures += 1;
            log::warn!("record `{}`: {reason}", record.id);
        }
        pairs.extend(batch.pairs);
    }
    let flagged = pairs.iter().filter(|p| !p.flags.is_empty()).count();
    let artifact = artifact_path(
        cfg,
        out_file,
        &format!("instructions_{}.jsonl", db_args.hub.as_str()),
    )?;
    write_jsonl_artifact(
        cfg,
        &artifact,
        json!({ "model": backend.provenance().label() }),
        &instruct::pairs_to_jsonl(&pairs),
    )?;
    println!(
        "{} instruction pairs over {} records ({flagged} flagged, {failures} records with failures)",
        pairs.len(),
        records.len()
    );
    Ok(ExitCode::SUCCESS)
}
