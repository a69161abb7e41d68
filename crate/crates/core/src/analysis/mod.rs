//! Comparison of approaches: win counts, Friedman ranks, covered-line set
//! algebra and token-cost tables.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llmclient::CostRecord;
use crate::metrics::MetricRow;
use crate::promptgen::{RagMode, TestBudget};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix needs at least 2 blocks and 2 approaches, got {blocks}x{approaches}")]
    TooSmall { blocks: usize, approaches: usize },
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("non-finite value at block {block}, approach {approach}")]
    NonFinite { block: String, approach: String },
    #[error("unknown approach {0}")]
    UnknownApproach(String),
    #[error("duplicate {what} {name}")]
    Duplicate { what: &'static str, name: String },
    #[error("missing coverage for block {block}, approach {approach}")]
    MissingCell { block: String, approach: String },
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Blocks (project x model cases) by approaches, fully populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    blocks: Vec<String>,
    approaches: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn check_unique(names: &[String], what: &'static str) -> Result<(), AnalysisError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(AnalysisError::Duplicate { what, name: n.clone() });
        }
    }
    Ok(())
}

impl CoverageMatrix {
    pub fn new(blocks: Vec<String>, approaches: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        if blocks.len() < 2 || approaches.len() < 2 || values.len() != blocks.len() {
            return Err(AnalysisError::TooSmall {
                blocks: blocks.len().min(values.len()),
                approaches: approaches.len(),
            });
        }
        check_unique(&blocks, "block")?;
        check_unique(&approaches, "approach")?;
        for (i, row) in values.iter().enumerate() {
            if row.len() != approaches.len() {
                return Err(AnalysisError::Ragged {
                    row: i,
                    got: row.len(),
                    expected: approaches.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(AnalysisError::NonFinite {
                    block: blocks[i].clone(),
                    approach: approaches[j].clone(),
                });
            }
        }
        Ok(CoverageMatrix {
            blocks,
            approaches,
            values,
        })
    }

    /// Builds the matrix from metric rows at one budget, with blocks named
    /// `project/model`. Every block must have a coverage value for every
    /// requested mode.
    pub fn from_rows(rows: &[MetricRow], modes: &[RagMode], budget: TestBudget) -> Result<Self, AnalysisError> {
        let mut by_block: BTreeMap<String, BTreeMap<RagMode, Option<f64>>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.budget == budget) {
            by_block
                .entry(format!("{}/{}", r.project, r.model_id))
                .or_default()
                .insert(r.mode, r.line_coverage_pct);
        }
        let mut values = Vec::new();
        for (block, cells) in &by_block {
            let row = modes
                .iter()
                .map(|m| {
                    cells.get(m).copied().flatten().ok_or_else(|| AnalysisError::MissingCell {
                        block: block.clone(),
                        approach: m.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            values.push(row);
        }
        CoverageMatrix::new(
            by_block.into_keys().collect(),
            modes.iter().map(|m| m.to_string()).collect(),
            values,
        )
    }

    pub fn blocks(&self) -> &[String] {
        &self.blocks
    }

    pub fn approaches(&self) -> &[String] {
        &self.approaches
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn column(&self, approach: &str) -> Result<usize, AnalysisError> {
        self.approaches
            .iter()
            .position(|a| a == approach)
            .ok_or_else(|| AnalysisError::UnknownApproach(approach.to_owned()))
    }

    /// Header `block,<approach>...`, one row per block.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let approaches: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut blocks = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut it = rec.iter();
            blocks.push(it.next().unwrap_or_default().to_owned());
            let row = it
                .map(|v| v.parse::<f64>().map_err(|e| AnalysisError::Malformed(format!("{v:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            values.push(row);
        }
        CoverageMatrix::new(blocks, approaches, values)
    }

    pub fn to_csv(&self) -> Result<String, AnalysisError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["block".to_owned()];
        header.extend(self.approaches.iter().cloned());
        w.write_record(&header)?;
        for (b, row) in self.blocks.iter().zip(&self.values) {
            let mut rec = vec![b.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Per-block comparison of `a` against `b`: (wins of a, wins of b, ties).
pub fn win_counts(matrix: &CoverageMatrix, a: &str, b: &str) -> Result<(usize, usize, usize), AnalysisError> {
    let (ia, ib) = (matrix.column(a)?, matrix.column(b)?);
    Ok(matrix.values.iter().fold((0, 0, 0), |(wa, wb, t), row| {
        if row[ia] > row[ib] {
            (wa + 1, wb, t)
        } else if row[ib] > row[ia] {
            (wa, wb + 1, t)
        } else {
            (wa, wb, t + 1)
        }
    }))
}

/// Square grid: `grid[i][j]` is how often approach i beat approach j.
pub fn win_grid(matrix: &CoverageMatrix, approaches: &[String]) -> Result<Vec<Vec<usize>>, AnalysisError> {
    approaches
        .iter()
        .map(|a| approaches.iter().map(|b| win_counts(matrix, a, b).map(|w| w.0)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    #[default]
    ChiSquare,
    ImanDavenport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FriedmanOptions {
    pub tie_correction: bool,
    pub method: PValueMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub avg_ranks: BTreeMap<String, f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub method: PValueMethod,
    pub tie_corrected: bool,
    pub n_blocks: usize,
}

/// Mid-ranks of `values` in descending order (largest gets rank 1).
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1..=end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

/// Friedman statistic from per-block rank rows.
pub fn friedman_statistic(rank_rows: &[Vec<f64>]) -> f64 {
    let n = rank_rows.len() as f64;
    let k = rank_rows[0].len();
    let sums: Vec<f64> = (0..k).map(|j| rank_rows.iter().map(|r| r[j]).sum()).collect();
    let k = k as f64;
    let stat = 12.0 / (n * k * (k + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * n * (k + 1.0);
    // cancellation can leave tiny negative residue
    if stat.abs() < 1e-9 * n * k { 0.0 } else { stat }
}

pub fn friedman(matrix: &CoverageMatrix) -> Result<FriedmanResult, AnalysisError> {
    friedman_with(matrix, FriedmanOptions::default())
}

pub fn friedman_with(matrix: &CoverageMatrix, options: FriedmanOptions) -> Result<FriedmanResult, AnalysisError> {
    let n = matrix.blocks.len();
    let k = matrix.approaches.len();
    if n < 2 || k < 2 {
        return Err(AnalysisError::TooSmall { blocks: n, approaches: k });
    }
    let rank_rows: Vec<Vec<f64>> = matrix.values.iter().map(|r| descending_ranks(r)).collect();
    let mut statistic = friedman_statistic(&rank_rows);
    if options.tie_correction {
        let ties: f64 = matrix
            .values
            .iter()
            .map(|row| {
                let mut groups: BTreeMap<u64, f64> = BTreeMap::new();
                for v in row {
                    *groups.entry(v.to_bits()).or_default() += 1.0;
                }
                groups.values().map(|t| t * t * t - t).sum::<f64>()
            })
            .sum();
        let (nf, kf) = (n as f64, k as f64);
        let c = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
        statistic = if c > 0.0 { statistic / c } else { 0.0 };
    }
    let dof = k - 1;
    let p_value = match options.method {
        PValueMethod::ChiSquare => stats::chi_square_sf(statistic, dof as f64),
        PValueMethod::ImanDavenport => {
            let (nf, df) = (n as f64, dof as f64);
            let denom = nf * df - statistic;
            let f = if denom <= 0.0 { f64::INFINITY } else { (nf - 1.0) * statistic / denom };
            stats::f_sf(f, df, df * (nf - 1.0))
        }
    };
    let avg_ranks = matrix
        .approaches
        .iter()
        .enumerate()
        .map(|(j, a)| (a.clone(), rank_rows.iter().map(|r| r[j]).sum::<f64>() / n as f64))
        .collect();
    Ok(FriedmanResult {
        avg_ranks,
        statistic,
        dof,
        p_value,
        method: options.method,
        tie_corrected: options.tie_correction,
        n_blocks: n,
    })
}

/// A covered or executable line: (file relative to the source root, line).
pub type LineKey = (String, u32);
pub type LineSet = BTreeSet<LineKey>;

/// Lines covered by `target` and by no other approach.
pub fn unique_lines(target: &str, covered: &BTreeMap<String, LineSet>) -> Result<LineSet, AnalysisError> {
    let mine = covered
        .get(target)
        .ok_or_else(|| AnalysisError::UnknownApproach(target.to_owned()))?;
    Ok(mine
        .iter()
        .filter(|l| covered.iter().all(|(a, s)| a == target || !s.contains(*l)))
        .cloned()
        .collect())
}

/// Executable lines that no approach covered.
pub fn uncovered_intersection(executable: &LineSet, covered: &BTreeMap<String, LineSet>) -> LineSet {
    executable
        .iter()
        .filter(|l| covered.values().all(|s| !s.contains(*l)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSetReport {
    pub api_name: String,
    pub approach: String,
    pub unique_lines: LineSet,
    pub uncovered_common: LineSet,
}

pub fn line_set_reports(
    api_name: &str,
    executable: &LineSet,
    covered: &BTreeMap<String, LineSet>,
) -> Result<Vec<LineSetReport>, AnalysisError> {
    let uncovered = uncovered_intersection(executable, covered);
    covered
        .keys()
        .map(|a| {
            Ok(LineSetReport {
                api_name: api_name.to_owned(),
                approach: a.clone(),
                unique_lines: unique_lines(a, covered)?,
                uncovered_common: uncovered.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub mode: RagMode,
    pub budget: TestBudget,
    pub generations: usize,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
}

/// Token usage grouped by (mode, budget).
pub fn cost_report(records: &[CostRecord]) -> Vec<CostRow> {
    let mut groups: BTreeMap<(RagMode, TestBudget), (usize, u64, u64)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.mode, r.budget)).or_default();
        g.0 += 1;
        g.1 += r.input_tokens;
        g.2 += r.output_tokens;
    }
    groups
        .into_iter()
        .map(|((mode, budget), (n, i, o))| CostRow {
            mode,
            budget,
            generations: n,
            mean_input_tokens: i as f64 / n as f64,
            mean_output_tokens: o as f64 / n as f64,
            total_input_tokens: i,
            total_output_tokens: o,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> CoverageMatrix {
        let k = rows[0].len();
        CoverageMatrix::new(
            (0..rows.len()).map(|i| format!("b{i}")).collect(),
            (0..k).map(|j| format!("a{j}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn win_count_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 1.0], &[2.0, 2.0]]);
        assert_eq!(win_counts(&x, "a0", "a1").unwrap(), (1, 1, 1));
        assert_eq!(win_counts(&x, "a0", "a0").unwrap(), (0, 0, 3));
        assert!(win_counts(&x, "a0", "zz").is_err());
        assert_eq!(win_grid(&x, &["a0".into(), "a1".into()]).unwrap(), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn ranks_are_descending_midranks() {
        assert_eq!(descending_ranks(&[10.0, 30.0, 20.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(descending_ranks(&[5.0, 5.0, 1.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(descending_ranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn friedman_hand_example() {
        // ranks per block: [1,2,3], [1,3,2], [2,1,3] -> sums 4, 6, 8
        let x = m(&[&[9.0, 5.0, 1.0], &[9.0, 1.0, 5.0], &[5.0, 9.0, 1.0]]);
        let r = friedman(&x).unwrap();
        // 12/(3*3*4) * (16+36+64) - 3*3*4 = 116/3 - 36
        assert!((r.statistic - (116.0 / 3.0 - 36.0)).abs() < 1e-12);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - (-r.statistic / 2.0).exp()).abs() < 1e-12);
        assert!((r.avg_ranks["a0"] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn friedman_identical_columns() {
        let x = m(&[&[1.0, 1.0, 1.0], &[4.0, 4.0, 4.0]]);
        let r = friedman(&x).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.avg_ranks.values().all(|v| *v == 2.0));
        let c = friedman_with(&x, FriedmanOptions { tie_correction: true, ..Default::default() }).unwrap();
        assert_eq!(c.statistic, 0.0);
    }

    #[test]
    fn iman_davenport_variant() {
        let x = m(&[&[9.0, 5.0, 1.0], &[9.0, 1.0, 5.0], &[5.0, 9.0, 1.0], &[8.0, 2.0, 1.0]]);
        let chi = friedman(&x).unwrap();
        let opts = FriedmanOptions { method: PValueMethod::ImanDavenport, ..Default::default() };
        let id = friedman_with(&x, opts).unwrap();
        assert_eq!(chi.statistic, id.statistic);
        let f = 3.0 * chi.statistic / (4.0 * 2.0 - chi.statistic);
        assert!((id.p_value - stats::f_sf(f, 2.0, 6.0)).abs() < 1e-12);
    }

    #[test]
    fn matrix_validation_and_csv() {
        assert!(CoverageMatrix::new(vec!["b".into()], vec!["x".into(), "y".into()], vec![vec![1.0, 2.0]]).is_err());
        let x = m(&[&[1.5, 2.0], &[3.0, 0.25]]);
        let back = CoverageMatrix::from_csv(x.to_csv().unwrap().as_bytes()).unwrap();
        assert_eq!(back, x);
        let ragged = "block,a,b\nb0,1,2\nb1,3\n";
        assert!(CoverageMatrix::from_csv(ragged.as_bytes()).is_err());
    }

    #[test]
    fn line_set_examples() {
        let l = |v: &[u32]| -> LineSet { v.iter().map(|n| ("f.py".to_string(), *n)).collect() };
        let covered = BTreeMap::from([("t".to_string(), l(&[1, 2, 3])), ("o1".into(), l(&[2])), ("o2".into(), l(&[3]))]);
        assert_eq!(unique_lines("t", &covered).unwrap(), l(&[1]));
        assert!(unique_lines("missing", &covered).is_err());
        assert_eq!(uncovered_intersection(&l(&[1, 2, 3, 7]), &covered), l(&[7]));
        let reports = line_set_reports("p.A", &l(&[1, 2, 3, 7]), &covered).unwrap();
        assert_eq!(reports.len(), 3);
    }

    #[test]
    fn cost_report_example() {
        let rec = |i, o| CostRecord {
            api_name: "p.A".into(),
            model_id: "m".into(),
            mode: RagMode::ZeroShot,
            budget: TestBudget::Fixed(3),
            input_tokens: i,
            output_tokens: o,
        };
        let rows = cost_report(&[rec(100, 50), rec(300, 150)]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].mean_input_tokens, rows[0].mean_output_tokens), (200.0, 100.0));
        assert_eq!((rows[0].total_input_tokens, rows[0].total_output_tokens), (400, 200));
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..8, 2usize..6).prop_flat_map(|(n, k)| {
            prop::collection::vec(prop::collection::vec((0u32..10).prop_map(f64::from), k), n)
        })
    }

    proptest! {
        #[test]
        fn rank_sum_and_monotone_invariance(rows in matrix_strategy()) {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let x = m(&refs);
            let r = friedman(&x).unwrap();
            let k = rows[0].len() as f64;
            prop_assert!((r.avg_ranks.values().sum::<f64>() - k * (k + 1.0) / 2.0).abs() < 1e-9);
            prop_assert!(r.statistic >= 0.0 && r.p_value > 0.0 && r.p_value <= 1.0);
            let warped: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|v| v * v * v + 3.0 * v - 7.0).collect()).collect();
            let wrefs: Vec<&[f64]> = warped.iter().map(|r| r.as_slice()).collect();
            prop_assert_eq!(friedman(&m(&wrefs)).unwrap().avg_ranks, r.avg_ranks.clone());
            let equal_sums = {
                let first = r.avg_ranks.values().next().copied().unwrap();
                r.avg_ranks.values().all(|v| (v - first).abs() < 1e-12)
            };
            prop_assert_eq!(r.statistic == 0.0, equal_sums);
        }

        #[test]
        fn wins_antisymmetric(rows in matrix_strategy()) {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let x = m(&refs);
            let (wa, wb, t) = win_counts(&x, "a0", "a1").unwrap();
            let (vb, va, u) = win_counts(&x, "a1", "a0").unwrap();
            prop_assert_eq!((wa, wb, t), (va, vb, u));
            prop_assert_eq!(wa + wb + t, rows.len());
        }

        #[test]
        fn unique_sets_pairwise_disjoint(sets in prop::collection::vec(prop::collection::btree_set(0u32..30, 0..20), 2..5)) {
            let covered: BTreeMap<String, LineSet> = sets.iter().enumerate()
                .map(|(i, s)| (format!("a{i}"), s.iter().map(|n| ("f".to_string(), *n)).collect()))
                .collect();
            let uniques: Vec<LineSet> = covered.keys().map(|a| unique_lines(a, &covered).unwrap()).collect();
            for i in 0..uniques.len() {
                for j in i + 1..uniques.len() {
                    prop_assert!(uniques[i].is_disjoint(&uniques[j]));
                }
            }
        }
    }
}
