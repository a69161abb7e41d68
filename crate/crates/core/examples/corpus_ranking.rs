//! Builds the toy corpus and ranks its APIs by issue and Q&A popularity.
//!
//!     cargo run --example corpus_ranking

use std::path::Path;

use ragtest::corpus::{read_api_records, read_raw_documents, select_target_apis, CorpusBuilder, SourceKind};
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

    for kind in [SourceKind::ApiDoc, SourceKind::Issue, SourceKind::Qa] {
        println!("{kind:>8}: {} documents", corpus.documents_of(kind).count());
    }
    // threads that name no API are dropped during ingestion
    for doc in corpus.documents_of(SourceKind::Issue).take(3) {
        println!("{} -> {:?}", doc.doc_id, doc.mentions);
    }

    let rankings = corpus.rankings("toypkg");
    println!("\n{:<26} {:>6} {:>4} {:>8}", "api", "issues", "qas", "score");
    for r in &rankings {
        println!("{:<26} {:>6} {:>4} {:>8.3}", r.api_name, r.issue_count, r.qa_count, r.harmonic_score);
    }
    println!("\ntop 10%: {:?}", select_target_apis(&rankings, 0.10));
    println!("all:     {:?}", select_target_apis(&rankings, 1.0));
    Ok(())
}
