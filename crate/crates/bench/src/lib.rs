//! Synthetic corpora for the benchmarks.

use apieval::{ApiDatabase, ApiRecord, ArgSpec, Hub};

/// A deterministic database of `n` torch-style records with distinct
/// repo/model identifiers and a few lines of surrounding text each.
pub fn synthetic_db(n: usize) -> ApiDatabase {
    let records: Vec<ApiRecord> = (0..n)
        .map(|i| ApiRecord {
            id: format!("rec-{i:04}"),
            domain: "Classification".to_string(),
            framework: "PyTorch".to_string(),
            functionality: "Image Classification".to_string(),
            api_name: format!("model_{i:04}"),
            api_call: format!(
                "torch.hub.load(repo_or_dir='org{}/repo{i}', model='model_{i:04}', pretrained=True)",
                i % 7
            ),
            api_arguments: vec![
                ArgSpec::required("repo_or_dir"),
                ArgSpec::required("model"),
                ArgSpec::optional("pretrained"),
            ],
            environment_requirements: "torch, torchvision".to_string(),
            example_code: format!(
                "import torch; m = torch.hub.load('org{}/repo{i}', 'model_{i:04}')",
                i % 7
            ),
            performance: Vec::new(),
            description: format!(
                "Synthetic network number {i} that classifies images of kind {} into {} classes.",
                i % 11,
                100 + i
            ),
            extra: serde_json::Map::new(),
        })
        .collect();
    ApiDatabase::new(Hub::TorchHub, records).expect("synthetic records are valid")
}

/// Model-output text containing prose, an assignment, and a chained call.
pub fn candidate_text(i: usize) -> String {
    format!(
        "To solve this, load the pretrained checkpoint.\n\
         model = torch.hub.load('org{}/repo{i}', 'model_{i:04}', pretrained=True).eval()\n\
         result = model(image)",
        i % 7
    )
}
