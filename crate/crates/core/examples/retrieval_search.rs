//! Embeds the toy corpus into a pooled store and a per-API store, then
//! searches both with the same query.
//!
//!     cargo run --example retrieval_search

use std::path::Path;

use ragtest::corpus::{read_api_records, read_raw_documents, CorpusBuilder, SourceKind};
use ragtest::promptgen::build_query;
use ragtest::retrieval::{build_store, retrieve, HashingEmbedder, SourceSelector, StoreScope};
use ragtest::tokens::CharQuarterCounter;

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

    let api = "toypkg.stack.Stack";
    let query = build_query(api, "toypkg");
    println!("query: {query}\n");

    let scopes = [
        StoreScope::basic(SourceSelector::Combined),
        StoreScope::api_level(api, SourceSelector::Issues),
    ];
    for scope in scopes {
        let store = build_store(&corpus, scope, &embedder)?;
        println!("{} ({} docs)", store.store_id(), store.len());
        for hit in retrieve(&store, &embedder, &query, 3)? {
            let title = &corpus.document(&hit.doc_id).expect("stored doc").title;
            println!("  #{} {:<10} {:.4}  {title}", hit.rank, hit.doc_id, hit.similarity);
        }
    }
    Ok(())
}
