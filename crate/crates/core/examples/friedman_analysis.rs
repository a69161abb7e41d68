//! Win counts and the Friedman rank test over a small coverage matrix.
//!
//!     cargo run --example friedman_analysis

use ragtest::analysis::{descending_ranks, friedman_with, win_counts, CoverageMatrix, FriedmanOptions, PValueMethod};

fn main() -> anyhow::Result<()> {
    let approaches = ["zero_shot", "basic", "api_level"].map(String::from).to_vec();
    let blocks = ["p1/m1", "p1/m2", "p2/m1", "p2/m2", "p3/m1", "p3/m2"].map(String::from).to_vec();
    let values = vec![
        vec![41.0, 52.5, 55.0],
        vec![38.0, 47.0, 47.0],
        vec![60.0, 58.0, 71.0],
        vec![22.5, 30.0, 36.0],
        vec![50.0, 49.0, 62.0],
        vec![45.0, 51.0, 49.5],
    ];
    for (b, row) in blocks.iter().zip(&values) {
        println!("{b:<6} {row:?} ranks {:?}", descending_ranks(row));
    }
    let m = CoverageMatrix::new(blocks, approaches, values)?;

    let (w, l, t) = win_counts(&m, "api_level", "zero_shot")?;
    println!("\napi_level vs zero_shot: {w} wins, {l} losses, {t} ties");

    for (tie_correction, method) in [
        (false, PValueMethod::ChiSquare),
        (true, PValueMethod::ChiSquare),
        (false, PValueMethod::ImanDavenport),
    ] {
        let r = friedman_with(&m, FriedmanOptions { tie_correction, method })?;
        println!(
            "{method:?} tie_correction={tie_correction}: statistic {:.4}, p {:.4}, ranks {:?}",
            r.statistic, r.p_value, r.avg_ranks
        );
    }
    Ok(())
}
