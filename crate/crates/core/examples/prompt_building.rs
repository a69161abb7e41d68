//! Shows the retrieval plan and the assembled prompt for every mode.
//!
//!     cargo run --example prompt_building

use std::path::Path;

use ragtest::corpus::{read_api_records, read_raw_documents, CorpusBuilder, SourceKind};
use ragtest::promptgen::{build_prompt, retrieval_plan, PromptTemplate, RagMode, TestBudget};
use ragtest::retrieval::{build_store, retrieve, HashingEmbedder};
use ragtest::tokens::{CharQuarterCounter, TokenCounter};

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy/corpus");
    let counter = CharQuarterCounter;
    let mut builder = CorpusBuilder::new(&counter);
    builder
        .add_apis(read_api_records(&dir.join("apis.jsonl"))?)
        .add_documents(read_raw_documents(&dir.join("issues.jsonl"), Some(SourceKind::Issue))?)
        .add_documents(read_raw_documents(&dir.join("qas.jsonl"), Some(SourceKind::Qa))?);
    let corpus = builder.build()?;
    let embedder = HashingEmbedder::new(256);
    let template = PromptTemplate::default();
    let api = corpus.api("toypkg", "toypkg.counter.Counter").expect("toy api");

    for mode in RagMode::ALL {
        let plan = retrieval_plan(mode, &api.api_name);
        let mut docs = Vec::new();
        for step in &plan {
            let store = build_store(&corpus, step.scope.clone(), &embedder)?;
            let query = template.render_query(&api.api_name, "toypkg");
            for hit in retrieve(&store, &embedder, &query, step.k)? {
                docs.push(corpus.document(&hit.doc_id).expect("stored doc").clone());
            }
        }
        let spec = build_prompt(api, "toypkg", mode, docs, TestBudget::Fixed(3), &template)?;
        let ids: Vec<&str> = spec.augmented_docs.iter().map(|d| d.doc_id.as_str()).collect();
        println!("{:<20} {} steps, docs {ids:?}, {} tokens", mode.id(), plan.len(), counter.count(&spec.final_text));
    }

    let spec = build_prompt(api, "toypkg", RagMode::ZeroShot, Vec::new(), TestBudget::Fixed(3), &template)?;
    println!("\n--- zero-shot prompt ---\n{}", spec.final_text);
    Ok(())
}
