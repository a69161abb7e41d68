//! Runs the whole toy campaign offline with the mock model and prints the
//! headline table. A second run reuses every stage.
//!
//!     cargo run --example mock_campaign

use std::path::Path;

use ragtest::campaign::{Campaign, CampaignConfig, RunOptions, Stage};

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy/campaign.toml");
    let mut config = CampaignConfig::load(&path)?;
    let out = tempfile::tempdir()?;
    config.output_root = out.path().to_owned();

    for attempt in 1..=2 {
        let summary = Campaign::open(config.clone(), RunOptions::default())?.run(Stage::Report)?;
        println!(
            "run {attempt}: {} cells, {} generated, {} executed, {} failures",
            summary.cells,
            summary.generated,
            summary.executed,
            summary.failures.len()
        );
    }
    let reports = out.path().join("reports");
    println!("\n{}", std::fs::read_to_string(reports.join("headline.md"))?);
    println!("{}", std::fs::read_to_string(reports.join("wins.md"))?);
    println!("{}", std::fs::read_to_string(reports.join("friedman.json"))?);
    Ok(())
}
