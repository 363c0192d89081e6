//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Everything runs offline against the shipped 50-record fixture corpus
//! plus in-test generators with independent brute-force comparators.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use apieval::client::{CandidateSet, CopyDocBackend, GenerateOptions, PromptSource, Provenance};
use apieval::constraint::{self, Comparator, Constraint, ConstraintVerdict};
use apieval::eval::{self, EvalExample};
use apieval::matcher::{self, default_spec, Outcome};
use apieval::parser::{self, Value};
use apieval::prompt::{self, PromptMode, RETRIEVAL_MARKER};
use apieval::registry::{self, ApiDatabase, ApiRecord, ArgSpec, Hub};
use apieval::retrieval::{self, document_text, tokenize};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_db(hub: Hub) -> ApiDatabase {
    registry::load_database(&fixtures().join(format!("db/{}.jsonl", hub.as_str())), hub)
        .expect("fixture database loads")
}

fn fixture_examples(hub: Hub) -> Vec<EvalExample> {
    eval::load_examples(&fixtures().join(format!("examples/{}.jsonl", hub.as_str())))
        .expect("fixture examples load")
}

fn pass(line: &str) {
    println!("[PASS] {line}");
}

// ---------------------------------------------------------------------------
// Criterion 1: matcher fixture suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_matcher_fixture_suite() {
    let start = Instant::now();

    // densenet121: optional `pretrained` must be ignored.
    let torch_db = fixture_db(Hub::TorchHub);
    let torch_spec = default_spec(Hub::TorchHub);
    let candidate = "torch.hub.load('pytorch/vision', 'densenet121', pretrained=True)";
    let outcome = matcher::classify(candidate, "th-densenet121", &torch_db, &torch_spec).unwrap();
    assert_eq!(outcome, Outcome::Correct);
    let without_optional = "torch.hub.load('pytorch/vision', 'densenet121')";
    let outcome =
        matcher::classify(without_optional, "th-densenet121", &torch_db, &torch_spec).unwrap();
    assert_eq!(outcome, Outcome::Correct, "optional argument must be ignored");

    // The three hallucinated pipeline outputs, against references that share
    // their task, which is the most adversarial pairing.
    let hf_db = fixture_db(Hub::HuggingFace);
    let hf_spec = default_spec(Hub::HuggingFace);
    let hallucinated = [
        (
            r#"generate_video = pipeline("text-to-video", model="your_model_name")"#,
            "hf-text-to-video",
        ),
        (
            r#"vqa = pipeline("visual-question-answering", model="microsoft/clip-vqa-base", tokenizer="microsoft/clip-vqa-base")"#,
            "hf-vqa",
        ),
        (
            r#"depth_estimator = pipeline("depth-estimation", model="intel-isl/MiDaS", tokenizer="intel-isl/MiDaS")"#,
            "hf-depth-estimation",
        ),
    ];
    for (text, reference) in hallucinated {
        let outcome = matcher::classify(text, reference, &hf_db, &hf_spec).unwrap();
        assert_eq!(outcome, Outcome::Hallucination, "{text}");
    }

    // The structured assistant output for the HybridNets request.
    let assistant = "<domain>: Object Detection, \
         <api_call>: model = torch.hub.load('datvuthanh/hybridnets', 'hybridnets', pretrained=True),\n\
         <api_provider>: PyTorch,\n\
         <explanation>: Load the pretrained HybridNets model for object detection \
         to classify pedestrians, cars, etc. in an image of the scene,\n\
         <code>: import torch; model = torch.hub.load('datvuthanh/hybridnets', 'hybridnets', pretrained=True)";
    let outcome = matcher::classify(assistant, "th-hybridnets", &torch_db, &torch_spec).unwrap();
    assert_eq!(outcome, Outcome::Correct);
    let structured = parser::parse_structured_output(assistant).unwrap();
    assert_eq!(structured.domain.as_deref(), Some("Object Detection"));
    assert_eq!(structured.api_provider.as_deref(), Some("PyTorch"));

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(&format!(
        "criterion 1: matcher fixture suite (densenet121 correct, 3 pipeline hallucinations, hybridnets assistant output) in {elapsed:?}"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 2: self-match sweep with perturbations
// ---------------------------------------------------------------------------

/// The hub-specific argument whose value identifies the model.
fn perturbation_target(hub: Hub, record: &ApiRecord) -> &'static str {
    match hub {
        Hub::TorchHub => "model",
        Hub::TensorHub => "handle",
        Hub::HuggingFace => {
            let call = record.canonical_call().unwrap();
            if call.kwarg("pretrained_model_name_or_path").is_some() {
                "pretrained_model_name_or_path"
            } else if call.kwarg("model").is_some() {
                "model"
            } else {
                "task"
            }
        }
    }
}

fn perturbed_call(record: &ApiRecord, target: &str) -> String {
    let mut call = record.canonical_call().unwrap();
    let slot = call
        .keyword
        .iter_mut()
        .find(|(name, _)| name == target)
        .unwrap_or_else(|| panic!("record {} has no `{target}` argument", record.id));
    match &mut slot.1 {
        Value::StringLit(s) => s.push_str("-x"),
        other => panic!("unexpected value kind {other:?}"),
    }
    call.to_source()
}

#[test]
fn criterion_2_self_match_sweep() {
    let start = Instant::now();
    let mut total = 0;
    for hub in Hub::ALL {
        let db = fixture_db(hub);
        let spec = default_spec(hub);
        for record in db.records() {
            total += 1;
            let outcome = matcher::classify(&record.api_call, &record.id, &db, &spec).unwrap();
            assert_eq!(outcome, Outcome::Correct, "self-match failed for {}", record.id);

            let target = perturbation_target(hub, record);
            let perturbed = perturbed_call(record, target);
            let outcome = matcher::classify(&perturbed, &record.id, &db, &spec).unwrap();
            assert_ne!(outcome, Outcome::Correct, "{perturbed} still matched {}", record.id);
            // Perturbed identifiers exist nowhere in the fixtures, so the
            // appropriate flip here is all the way to hallucination.
            assert_eq!(outcome, Outcome::Hallucination, "{perturbed}");
        }
    }
    assert!(total >= 50, "fixture corpus must hold at least 50 records, got {total}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(&format!(
        "criterion 2: self-match sweep over {total} records with 100% perturbation flips in {elapsed:?}"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 3: partition invariant on 1,000 randomized cases
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_partition_invariant() {
    let db = fixture_db(Hub::TorchHub);
    let spec = default_spec(Hub::TorchHub);
    let records = db.records();
    let mut rng = ChaCha20Rng::seed_from_u64(303);

    let mut examples = Vec::new();
    let mut candidates = CandidateSet::new(Provenance::Mock("synthetic".to_string()), "zero-shot");
    let (mut want_correct, mut want_wrong, mut want_hallu) = (0usize, 0usize, 0usize);
    for i in 0..1000 {
        let reference = &records[rng.random_range(0..records.len())];
        let id = format!("case-{i}");
        examples.push(EvalExample {
            id: id.clone(),
            instruction: "synthetic".to_string(),
            reference_id: reference.id.clone(),
            hub: Hub::TorchHub,
        });
        let style = rng.random_range(0..10);
        let text = if style < 4 {
            want_correct += 1;
            reference.api_call.clone()
        } else if style < 7 {
            // Another record's exact call: matches that record only.
            let mut other = &records[rng.random_range(0..records.len())];
            while other.id == reference.id {
                other = &records[rng.random_range(0..records.len())];
            }
            want_wrong += 1;
            other.api_call.clone()
        } else if style < 9 {
            want_hallu += 1;
            format!(
                "torch.hub.load(repo_or_dir='nowhere/repo{i}', model='ghost{i}', pretrained=True)"
            )
        } else {
            want_hallu += 1;
            "I would suggest training a model from scratch.".to_string()
        };
        candidates.insert_ok(&id, &text);
    }

    let report = eval::evaluate(&examples, &candidates, &db, &spec).unwrap();
    assert_eq!(
        report.counts.correct + report.counts.wrong_api + report.counts.hallucination,
        1000
    );
    assert_eq!(report.counts.correct, want_correct);
    assert_eq!(report.counts.wrong_api, want_wrong);
    assert_eq!(report.counts.hallucination, want_hallu);

    let hand_overall = want_correct as f64 * 100.0 / 1000.0;
    let hand_hallu = want_hallu as f64 * 100.0 / 1000.0;
    let hand_err = want_wrong as f64 * 100.0 / 1000.0;
    assert!((report.overall_pct() - hand_overall).abs() < 0.01);
    assert!((report.hallucination_pct() - hand_hallu).abs() < 0.01);
    assert!((report.error_pct() - hand_err).abs() < 0.01);
    pass(&format!(
        "criterion 3: partition invariant on 1000 randomized cases ({want_correct}/{want_wrong}/{want_hallu}), percentages match hand computation"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 4: brute-force oracle equivalence
// ---------------------------------------------------------------------------

/// Test-only record constructor over a small (repo, model) universe.
fn tiny_record(repo: &str, model: &str) -> ApiRecord {
    ApiRecord {
        id: format!("rec-{repo}-{model}"),
        domain: "Classification".to_string(),
        framework: "PyTorch".to_string(),
        functionality: "test".to_string(),
        api_name: model.to_string(),
        api_call: format!("torch.hub.load(repo_or_dir='{repo}', model='{model}', pretrained=True)"),
        api_arguments: vec![
            ArgSpec::required("repo_or_dir"),
            ArgSpec::required("model"),
            ArgSpec::optional("pretrained"),
        ],
        environment_requirements: String::new(),
        example_code: String::new(),
        performance: Vec::new(),
        description: String::new(),
        extra: serde_json::Map::new(),
    }
}

/// Independent comparator: extracts (repo, model) string literals from each
/// call by hand-mapped positions and compares against the known tuples, with
/// no use of the matcher or canonicalizer.
fn brute_force_classify(
    candidate_text: &str,
    db_tuples: &[(String, String, String)], // (id, repo, model)
    reference_id: &str,
) -> Outcome {
    fn literal(value: Option<&Value>) -> Option<String> {
        match value {
            Some(Value::StringLit(s)) => Some(s.trim().to_string()),
            _ => None,
        }
    }
    fn repo_model(call: &parser::CallNode) -> Option<(String, String)> {
        if call.callee_path() != "torch.hub.load" {
            return None;
        }
        let repo = literal(call.positional.first()).or_else(|| literal(call.kwarg("repo_or_dir")))?;
        let model = literal(call.positional.get(1)).or_else(|| literal(call.kwarg("model")))?;
        Some((repo, model))
    }
    let calls = parser::parse_calls(candidate_text);
    let reference = db_tuples.iter().find(|(id, _, _)| id == reference_id).unwrap();
    for call in &calls {
        if let Some((repo, model)) = repo_model(call) {
            if repo == reference.1 && model == reference.2 {
                return Outcome::Correct;
            }
        }
    }
    for call in &calls {
        if let Some((repo, model)) = repo_model(call) {
            for (id, r, m) in db_tuples {
                if id != reference_id && *r == repo && *m == model {
                    return Outcome::WrongApi {
                        matched_api_id: id.clone(),
                    };
                }
            }
        }
    }
    Outcome::Hallucination
}

#[test]
fn criterion_4_brute_force_oracle_equivalence() {
    let repos = ["r0", "r1"];
    let models = ["m0", "m1", "m2", "m3"];
    let universe: Vec<ApiRecord> = repos
        .iter()
        .flat_map(|r| models.iter().map(move |m| tiny_record(r, m)))
        .collect();

    let mut candidates: Vec<String> = Vec::new();
    for repo in &repos {
        for model in &models {
            candidates.push(format!("torch.hub.load('{repo}', '{model}')"));
            candidates.push(format!(
                "torch.hub.load(repo_or_dir='{repo}', model='{model}', pretrained=True)"
            ));
            candidates.push(format!("x = torch.hub.load('{repo}', '{model}', True)"));
        }
    }
    candidates.push("torch.hub.load('r0')".to_string());
    candidates.push("torch.hub.load(the_repo, 'm0')".to_string());
    candidates.push("no call at all".to_string());
    candidates.push("torch.hub.load('r9', 'm9')".to_string());
    candidates.push("some.other.fn('r0', 'm0')".to_string());

    let spec = default_spec(Hub::TorchHub);
    let mut cases = 0usize;
    for mask in 1u32..(1 << universe.len()) {
        let subset: Vec<ApiRecord> = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, r)| r.clone())
            .collect();
        let tuples: Vec<(String, String, String)> = subset
            .iter()
            .map(|r| {
                let call = r.canonical_call().unwrap();
                let repo = match call.kwarg("repo_or_dir").unwrap() {
                    Value::StringLit(s) => s.clone(),
                    _ => unreachable!(),
                };
                let model = match call.kwarg("model").unwrap() {
                    Value::StringLit(s) => s.clone(),
                    _ => unreachable!(),
                };
                (r.id.clone(), repo, model)
            })
            .collect();
        let db = ApiDatabase::new(Hub::TorchHub, subset).unwrap();
        for reference in db.records() {
            for candidate in &candidates {
                cases += 1;
                let got = matcher::classify(candidate, &reference.id, &db, &spec).unwrap();
                let want = brute_force_classify(candidate, &tuples, &reference.id);
                assert_eq!(got, want, "candidate `{candidate}` vs reference {}", reference.id);
            }
        }
    }
    assert!(cases >= 10_000, "only {cases} cases enumerated");
    pass(&format!(
        "criterion 4: classify agrees with brute-force comparator on {cases} exhaustive cases"
    ));
}

// ---------------------------------------------------------------------------
// Criterion 5: BM25 correctness
// ---------------------------------------------------------------------------

/// From-scratch BM25 over raw documents, no index structure involved.
fn brute_force_bm25(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, text)| tokenize(text)).collect();
    let n = docs.len() as f64;
    let avg_len = tokenized.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    tokenized
        .iter()
        .map(|doc_tokens| {
            let len = doc_tokens.len() as f64;
            tokenize(query)
                .iter()
                .map(|term| {
                    let df = tokenized
                        .iter()
                        .filter(|t| t.iter().any(|x| x == term))
                        .count() as f64;
                    let tf = doc_tokens.iter().filter(|x| *x == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = (((n - df + 0.5) / (df + 0.5)) + 1.0).ln().max(0.0);
                    idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg_len))
                })
                .sum()
        })
        .collect()
}

fn merged_corpus() -> ApiDatabase {
    let mut records = Vec::new();
    for hub in Hub::ALL {
        records.extend(fixture_db(hub).records().to_vec());
    }
    ApiDatabase::new(Hub::TorchHub, records).unwrap()
}

#[test]
fn criterion_5_bm25_correctness() {
    let db = merged_corpus();
    assert_eq!(db.len(), 50);
    let index = retrieval::build_bm25(&db).unwrap();
    let docs: Vec<(String, String)> = db
        .records()
        .iter()
        .map(|r| (r.id.clone(), document_text(r)))
        .collect();

    // Index-based scores equal the from-scratch pass within 1e-9 relative.
    let queries: Vec<String> = fixture_examples(Hub::TorchHub)
        .iter()
        .chain(fixture_examples(Hub::TensorHub).iter())
        .chain(fixture_examples(Hub::HuggingFace).iter())
        .map(|e| e.instruction.clone())
        .collect();
    for query in &queries {
        let expected = brute_force_bm25(&docs, query, 1.2, 0.75);
        let result = retrieval::bm25_retrieve(&index, query, db.len()).unwrap();
        assert_eq!(result.ranked.len(), db.len());
        for (doc_id, score) in &result.ranked {
            let pos = docs.iter().position(|(id, _)| id == doc_id).unwrap();
            let want = expected[pos];
            let tolerance = 1e-9 * want.abs().max(1.0);
            assert!(
                (score - want).abs() <= tolerance,
                "query `{query}` doc `{doc_id}`: {score} vs {want}"
            );
        }
    }

    // A query with a token unique to one record ranks that record first.
    let mut df: HashMap<String, usize> = HashMap::new();
    let doc_tokens: Vec<(String, Vec<String>)> = docs
        .iter()
        .map(|(id, text)| (id.clone(), tokenize(text)))
        .collect();
    for (_, tokens) in &doc_tokens {
        let mut seen: Vec<&String> = tokens.iter().collect();
        seen.sort();
        seen.dedup();
        for token in seen {
            *df.entry(token.clone()).or_insert(0) += 1;
        }
    }
    let mut trials = 0;
    for (record, (id, tokens)) in db.records().iter().zip(&doc_tokens) {
        // Prefer a unique token from the identifier fields (api_name and
        // api_call); any unique document token works as a fallback.
        let is_unique =
            |t: &&String| df[*t] == 1 && t.len() >= 4 && t.chars().any(|c| c.is_alphabetic());
        let identifier_tokens = tokenize(&format!("{} {}", record.api_name, record.api_call));
        let unique = identifier_tokens
            .iter()
            .filter(is_unique)
            .max_by_key(|t| t.len())
            .cloned()
            .or_else(|| tokens.iter().filter(is_unique).max_by_key(|t| t.len()).cloned())
            .unwrap_or_else(|| panic!("record {id} has no unique token"));
        let result = retrieval::bm25_retrieve(&index, &unique, 1).unwrap();
        assert_eq!(result.top(), Some(id.as_str()), "token `{unique}`");
        trials += 1;
    }
    assert_eq!(trials, 50);
    pass(&format!(
        "criterion 5: index scores match brute-force BM25 on {} queries over 50 docs; unique-token rank-1 in {trials}/50 trials",
        queries.len()
    ));
}

// ---------------------------------------------------------------------------
// Criterion 6: oracle-retriever upper bound
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_oracle_upper_bound() {
    let db = fixture_db(Hub::TorchHub);
    let spec = default_spec(Hub::TorchHub);
    let examples = fixture_examples(Hub::TorchHub);
    let options = GenerateOptions::default();

    let oracle_set =
        apieval::client::generate_candidates(&examples, &PromptSource::Oracle(&db), &CopyDocBackend, &options);
    let oracle_report = eval::evaluate(&examples, &oracle_set, &db, &spec).unwrap();
    assert_eq!(eval::round2(oracle_report.overall_pct()), 100.00);
    assert_eq!(eval::round2(oracle_report.hallucination_pct()), 0.00);

    let index = retrieval::build_bm25(&db).unwrap();
    let bm25_set = apieval::client::generate_candidates(
        &examples,
        &PromptSource::Bm25(&index, &db),
        &CopyDocBackend,
        &options,
    );
    let bm25_report = eval::evaluate(&examples, &bm25_set, &db, &spec).unwrap();

    let recall_hits = examples
        .iter()
        .filter(|e| {
            retrieval::bm25_retrieve(&index, &e.instruction, 1)
                .unwrap()
                .top()
                == Some(e.reference_id.as_str())
        })
        .count();
    let recall_pct = recall_hits as f64 * 100.0 / examples.len() as f64;
    assert_eq!(bm25_report.counts.correct, recall_hits);
    assert_eq!(bm25_report.overall_pct(), recall_pct);
    pass(&format!(
        "criterion 6: oracle+copy-doc scores 100.00/0.00; BM25 overall {:.2}% equals its top-1 recall exactly",
        bm25_report.overall_pct()
    ));
}

// ---------------------------------------------------------------------------
// Criterion 7: constraint logic
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_constraint_logic() {
    let db = fixture_db(Hub::TorchHub);
    let at_least_80 =
        Constraint::new("top-1 accuracy", "ImageNet", Comparator::Ge, 80.0).unwrap();
    let resnext = db.get("th-resnext101-32x16d-wsl").unwrap();
    assert_eq!(
        constraint::satisfies(resnext, &at_least_80),
        ConstraintVerdict::Satisfied
    );
    let mobilenet = db.get("th-mobilenet-v2").unwrap();
    assert_eq!(
        constraint::satisfies(mobilenet, &at_least_80),
        ConstraintVerdict::Violated { actual: 71.88 }
    );

    // 1,000 randomized constrained evaluations across 50 runs.
    let spec = default_spec(Hub::TorchHub);
    let records = db.records();
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    let mut total_examples = 0;
    for run in 0..50 {
        let mut examples = Vec::new();
        let mut constraints = HashMap::new();
        let mut candidates =
            CandidateSet::new(Provenance::Mock("synthetic".to_string()), "zero-shot");
        for i in 0..20 {
            let reference = &records[rng.random_range(0..records.len())];
            let id = format!("run{run}-case{i}");
            examples.push(EvalExample {
                id: id.clone(),
                instruction: "synthetic".to_string(),
                reference_id: reference.id.clone(),
                hub: Hub::TorchHub,
            });
            let threshold = rng.random_range(40.0..95.0);
            constraints.insert(
                id.clone(),
                Constraint::new("top-1 accuracy", "ImageNet", Comparator::Ge, threshold).unwrap(),
            );
            let text = match rng.random_range(0..3) {
                0 => reference.api_call.clone(),
                1 => records[rng.random_range(0..records.len())].api_call.clone(),
                _ => format!("torch.hub.load('void/none', 'missing{i}')"),
            };
            candidates.insert_ok(&id, &text);
            total_examples += 1;
        }
        let report =
            constraint::constraint_evaluate(&examples, &constraints, &candidates, &db, &spec)
                .unwrap();
        assert!(
            report.constraint_accuracy_pct() <= report.report.overall_pct() + 1e-12,
            "run {run}: constraint accuracy exceeded overall accuracy"
        );
    }
    assert_eq!(total_examples, 1000);
    pass("criterion 7: ResNeXt/MobileNetV2 verdicts match stated values; constraint <= overall in 50/50 randomized runs (1000 examples)");
}

// ---------------------------------------------------------------------------
// Criterion 8: split determinism and ratios
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_split_determinism_and_ratios() {
    let ids: Vec<String> = (0..100).map(|i| format!("id-{i}")).collect();
    for (hub, expected_test) in [
        (Hub::HuggingFace, 10),
        (Hub::TorchHub, 20),
        (Hub::TensorHub, 20),
    ] {
        let split = registry::split_dataset(&ids, hub, 99).unwrap();
        assert_eq!(split.test.len(), expected_test, "{hub}");
        assert_eq!(split.train.len(), 100 - expected_test);
        let again = registry::split_dataset(&ids, hub, 99).unwrap();
        assert_eq!(split, again, "split must be identical across runs");
    }
    // Rounding stays within one element of the exact fraction.
    for n in [3usize, 7, 11, 23, 57, 94, 626, 925] {
        let ids: Vec<String> = (0..n).map(|i| format!("id-{i}")).collect();
        for hub in Hub::ALL {
            let split = registry::split_dataset(&ids, hub, 5).unwrap();
            let exact = hub.test_fraction() * n as f64;
            assert!(
                (split.test.len() as f64 - exact).abs() <= 1.0,
                "{hub} n={n}: test {} vs exact {exact}",
                split.test.len()
            );
            assert_eq!(split.test.len() + split.train.len(), n);
        }
    }
    pass("criterion 8: 90/10 and 80/20 splits with deterministic seeds and <=1-element rounding");
}

// ---------------------------------------------------------------------------
// Criterion 9: prompt byte-exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_prompt_byte_exactness() {
    let db = fixture_db(Hub::TorchHub);
    let record = db.get("th-densenet121").unwrap();
    let mode = PromptMode::WithRetrieval(Box::new(record.clone()));
    let built = prompt::build_prompt("identify objects in an image", &mode).unwrap();

    assert_eq!(built.matches(RETRIEVAL_MARKER).count(), 1);
    let json_part = built.split(RETRIEVAL_MARKER).nth(1).unwrap();
    let parsed: ApiRecord = serde_json::from_str(json_part).unwrap();
    assert_eq!(&parsed, record, "embedded JSON must parse back to the record");

    let golden = std::fs::read_to_string(fixtures().join("golden/prompt_with_retrieval.txt"))
        .expect("golden file");
    assert_eq!(built, golden, "prompt must match the golden file byte-for-byte");
    pass("criterion 9: retrieval prompt matches golden file byte-for-byte, marker exactly once, JSON round-trips");
}

// ---------------------------------------------------------------------------
// Supporting paper-anchored checks used by several criteria
// ---------------------------------------------------------------------------

#[test]
fn fig2_oracle_retriever_has_full_recall() {
    let db = fixture_db(Hub::TensorHub);
    let examples = fixture_examples(Hub::TensorHub);
    let hits = examples
        .iter()
        .filter(|e| {
            retrieval::oracle_retrieve(e, &db).unwrap().top() == Some(e.reference_id.as_str())
        })
        .count();
    assert_eq!(hits, examples.len(), "oracle top-1 recall must be 1.0");
    pass("supporting: oracle retriever top-1 recall is 1.0 over the test set");
}

#[test]
fn fig7_candidate_set_evaluates_to_full_hallucination() {
    let db = fixture_db(Hub::HuggingFace);
    let spec = default_spec(Hub::HuggingFace);
    let texts = [
        ("h1", "hf-text-to-video", r#"generate_video = pipeline("text-to-video", model="your_model_name")"#),
        ("h2", "hf-vqa", r#"vqa = pipeline("visual-question-answering", model="microsoft/clip-vqa-base", tokenizer="microsoft/clip-vqa-base")"#),
        ("h3", "hf-depth-estimation", r#"depth_estimator = pipeline("depth-estimation", model="intel-isl/MiDaS", tokenizer="intel-isl/MiDaS")"#),
    ];
    let mut candidates = CandidateSet::new(Provenance::Mock("gpt-4-like".to_string()), "zero-shot");
    let mut examples = Vec::new();
    for (id, reference, text) in texts {
        candidates.insert_ok(id, text);
        examples.push(EvalExample {
            id: id.to_string(),
            instruction: "do the task".to_string(),
            reference_id: reference.to_string(),
            hub: Hub::HuggingFace,
        });
    }
    let report = eval::evaluate(&examples, &candidates, &db, &spec).unwrap();
    assert_eq!(report.hallucination_pct(), 100.0);
    pass("supporting: the three hallucinated pipeline outputs evaluate to 100% hallucination");
}

#[test]
fn fixture_match_specs_equal_builtin_defaults() {
    for hub in Hub::ALL {
        let path = fixtures().join(format!("specs/{}.json", hub.as_str()));
        let loaded = matcher::MatchSpec::from_json_file(&path).unwrap();
        assert_eq!(loaded, default_spec(hub), "{hub:?}");
    }
    pass("supporting: shipped match-spec JSON files load to the built-in hub rules");
}

#[test]
fn incontext_sampling_is_uniform_over_subsets() {
    let pool: Vec<prompt::SeedPair> = (0..6)
        .map(|i| prompt::SeedPair {
            instruction: format!("i{i}"),
            api_call: format!("c{i}()"),
        })
        .collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seed in 0..10_000u64 {
        let sample = apieval::instruct::sample_incontext(&pool, seed).unwrap();
        let mut key: Vec<&str> = sample.iter().map(|p| p.instruction.as_str()).collect();
        key.sort();
        *counts.entry(key.join("|")).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 20, "all C(6,3) subsets must appear");
    for (subset, count) in &counts {
        let freq = *count as f64 / 10_000.0;
        assert!(
            (freq - 0.05).abs() <= 0.01,
            "subset {subset} frequency {freq} outside 0.05 +/- 0.01"
        );
    }
    pass("supporting: 3-of-6 sampling uniform over 10,000 seeded draws (each subset 0.05 +/- 0.01)");
}
