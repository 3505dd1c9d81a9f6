//! Word-similarity evaluation: cosine similarities between embedding
//! vectors, ranked against human judgments with Spearman's rho.
//!
//! Benchmark files are TSVs whose word and score columns vary by dataset;
//! a `BenchmarkFormat` names the columns instead of hardcoding any one
//! layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_word;
use crate::embeddings::{EmbeddingTable, Level};
use crate::error::{Error, Result};

/// Reference scores reported for this task on the three standard
/// benchmarks; emitted as annotation rows in reports, never asserted.
pub const REFERENCE_SCORES: [(&str, usize, f64); 3] =
    [("SimVerb", 275, 0.31), ("WS-SIM", 33, 0.51), ("WS-REL", 53, 0.23)];

/// Column layout of a benchmark TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkFormat {
    pub word_a_col: usize,
    pub word_b_col: usize,
    pub score_col: usize,
    pub has_header: bool,
}

impl Default for BenchmarkFormat {
    fn default() -> Self {
        BenchmarkFormat::wordsim()
    }
}

impl BenchmarkFormat {
    /// WordSim-style: word, word, score.
    pub fn wordsim() -> Self {
        BenchmarkFormat { word_a_col: 0, word_b_col: 1, score_col: 2, has_header: false }
    }

    /// SimVerb-style: word, word, POS, score.
    pub fn simverb() -> Self {
        BenchmarkFormat { word_a_col: 0, word_b_col: 1, score_col: 3, has_header: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPair {
    pub word_a: String,
    pub word_b: String,
    pub human_score: f64,
}

/// Evaluation result for one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub n_pairs_used: usize,
    pub total_pairs: usize,
    pub coverage: f64,
    pub rho: f64,
}

/// Parse a tab-separated benchmark file according to `format`.
pub fn load_benchmark(path: &Path, format: &BenchmarkFormat) -> Result<Vec<BenchmarkPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let needed = format.word_a_col.max(format.word_b_col).max(format.score_col);
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if format.has_header && idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() <= needed {
            return Err(Error::BenchmarkParse {
                path: path.into(),
                line: line_no,
                detail: format!("{} columns, need at least {}", cols.len(), needed + 1),
            });
        }
        let score: f64 = cols[format.score_col].trim().parse().map_err(|_| {
            Error::BenchmarkParse {
                path: path.into(),
                line: line_no,
                detail: format!("non-numeric score {:?}", cols[format.score_col]),
            }
        })?;
        if !score.is_finite() {
            return Err(Error::BenchmarkParse {
                path: path.into(),
                line: line_no,
                detail: "non-finite score".into(),
            });
        }
        pairs.push(BenchmarkPair {
            word_a: normalize_word(cols[format.word_a_col]),
            word_b: normalize_word(cols[format.word_b_col]),
            human_score: score,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyBenchmark { path: path.into() });
    }
    Ok(pairs)
}

/// Cosine similarity; errors on zero-norm input.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { xs: u.len(), ys: v.len() });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Fractional (average) ranks; ties share the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of tie-averaged ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { xs: xs.len(), ys: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::LengthMismatch { xs: xs.len(), ys: ys.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) {
        return Err(Error::ConstantInput { side: "first" });
    }
    if constant(ys) {
        return Err(Error::ConstantInput { side: "second" });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean_x: f64 = rx.iter().sum::<f64>() / n;
    let mean_y: f64 = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Score a type-level table against a benchmark: keep pairs with both words
/// in the table, rank cosine similarities against human scores.
pub fn evaluate(
    table: &EmbeddingTable,
    pairs: &[BenchmarkPair],
    benchmark: &str,
) -> Result<EvalReport> {
    table.expect_level(Level::Type)?;
    if table.entries.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut model_scores = Vec::new();
    let mut human_scores = Vec::new();
    for pair in pairs {
        if let (Some(u), Some(v)) = (table.get(&pair.word_a), table.get(&pair.word_b)) {
            model_scores.push(cosine(u, v)?);
            human_scores.push(pair.human_score);
        }
    }
    let covered = model_scores.len();
    let coverage = covered as f64 / pairs.len() as f64;
    if covered < 2 {
        return Err(Error::TooFewCoveredPairs { covered, total: pairs.len(), coverage });
    }
    let rho = spearman(&model_scores, &human_scores)?;
    Ok(EvalReport {
        benchmark: benchmark.to_string(),
        n_pairs_used: covered,
        total_pairs: pairs.len(),
        coverage,
        rho,
    })
}

/// Render reports as the output TSV, optionally with reference annotation
/// rows.
pub fn render_report_tsv(reports: &[EvalReport], include_reference: bool) -> String {
    let mut out = String::from("benchmark\tn_pairs\tcoverage\trho\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\n",
            r.benchmark, r.n_pairs_used, r.coverage, r.rho
        ));
    }
    if include_reference {
        for (name, n_pairs, rho) in REFERENCE_SCORES {
            out.push_str(&format!("{name} (paper-reported)\t{n_pairs}\t-\t{rho:.2}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: rank via sorted position scan, then the textbook
    /// Pearson formula.
    fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
        fn ranks(v: &[f64]) -> Vec<f64> {
            v.iter()
                .map(|&x| {
                    let below = v.iter().filter(|&&o| o < x).count();
                    let equal = v.iter().filter(|&&o| o == x).count();
                    // average of positions below+1 ..= below+equal
                    (2.0 * below as f64 + equal as f64 + 1.0) / 2.0
                })
                .collect()
        }
        let rx = ranks(xs);
        let ry = ranks(ys);
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx.sqrt() * vy.sqrt())
    }

    fn table_with(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut table = EmbeddingTable::new(Level::Type, entries[0].1.len());
        for (word, v) in entries {
            table.insert(word.to_string(), v.to_vec()).unwrap();
        }
        table
    }

    #[test]
    fn load_wordsim_style_line() {
        let path = std::env::temp_dir().join(format!("cawe-bench-{}.tsv", std::process::id()));
        std::fs::write(&path, "old\tnew\t1.58\ncar\tauto\t8.94\n").unwrap();
        let pairs = load_benchmark(&path, &BenchmarkFormat::wordsim()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].word_a, "old");
        assert_eq!(pairs[0].human_score, 1.58);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn load_simverb_style_line() {
        let path = std::env::temp_dir().join(format!("cawe-bench-sv-{}.tsv", std::process::id()));
        std::fs::write(&path, "take\tcarry\tV\t5.12\ngive\ttake\tV\t2.0\n").unwrap();
        let pairs = load_benchmark(&path, &BenchmarkFormat::simverb()).unwrap();
        assert_eq!(pairs[0].human_score, 5.12);
        assert_eq!(pairs[1].word_b, "take");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn header_rows_are_skippable() {
        let path = std::env::temp_dir().join(format!("cawe-bench-hdr-{}.tsv", std::process::id()));
        std::fs::write(&path, "Word 1\tWord 2\tHuman (mean)\nold\tnew\t1.58\n").unwrap();
        let fmt = BenchmarkFormat { has_header: true, ..BenchmarkFormat::wordsim() };
        let pairs = load_benchmark(&path, &fmt).unwrap();
        assert_eq!(pairs.len(), 1);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn non_numeric_score_names_line() {
        let path = std::env::temp_dir().join(format!("cawe-bench-bad-{}.tsv", std::process::id()));
        std::fs::write(&path, "old\tnew\t1.58\ncar\tauto\toops\n").unwrap();
        match load_benchmark(&path, &BenchmarkFormat::wordsim()) {
            Err(Error::BenchmarkParse { line: 2, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_benchmark_is_error() {
        let path = std::env::temp_dir().join(format!("cawe-bench-empty-{}.tsv", std::process::id()));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_benchmark(&path, &BenchmarkFormat::wordsim()),
            Err(Error::EmptyBenchmark { .. })
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() + 1.0).abs() < 1e-12);
        let v = [0.3, -0.7, 2.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn spearman_monotone_and_reversed() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_tie_case_matches_oracle() {
        let xs = [1.0, 2.0, 2.0, 4.0];
        let ys = [1.0, 3.0, 2.0, 4.0];
        let got = spearman(&xs, &ys).unwrap();
        let want = spearman_oracle(&xs, &ys);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn spearman_random_cases_match_oracle() {
        let mut rng = crate::rng::Rng::new(6);
        for _ in 0..200 {
            let n = 2 + rng.next_below(30);
            // Quantized draws so ties happen often.
            let xs: Vec<f64> = (0..n).map(|_| (rng.next_below(8)) as f64).collect();
            let ys: Vec<f64> = (0..n).map(|_| (rng.next_below(8)) as f64).collect();
            if xs.iter().all(|&v| v == xs[0]) || ys.iter().all(|&v| v == ys[0]) {
                continue;
            }
            let got = spearman(&xs, &ys).unwrap();
            let want = spearman_oracle(&xs, &ys);
            assert!((got - want).abs() < 1e-12, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn spearman_rejects_degenerate_input() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantInput { side: "first" })
        ));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn evaluate_without_coverage_is_error() {
        let table = table_with(&[("alpha", &[1.0, 0.0]), ("beta", &[0.0, 1.0])]);
        let pairs = vec![BenchmarkPair {
            word_a: "missing".into(),
            word_b: "also".into(),
            human_score: 5.0,
        }];
        match evaluate(&table, &pairs, "toy") {
            Err(Error::TooFewCoveredPairs { covered: 0, coverage, .. }) => {
                assert_eq!(coverage, 0.0);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn constructed_monotone_benchmark_scores_one() {
        // Four words placed so cosine(a, x) strictly increases along the
        // human ordering.
        let table = table_with(&[
            ("anchor", &[1.0, 0.0]),
            ("near", &[0.95, 0.3122]),
            ("mid", &[0.7, 0.7141]),
            ("far", &[0.1, 0.9950]),
        ]);
        let pairs = vec![
            BenchmarkPair { word_a: "anchor".into(), word_b: "near".into(), human_score: 9.0 },
            BenchmarkPair { word_a: "anchor".into(), word_b: "mid".into(), human_score: 5.0 },
            BenchmarkPair { word_a: "anchor".into(), word_b: "far".into(), human_score: 1.0 },
        ];
        let report = evaluate(&table, &pairs, "constructed").unwrap();
        assert!((report.rho - 1.0).abs() < 1e-12);
        assert_eq!(report.n_pairs_used, 3);
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn evaluate_refuses_token_level_tables() {
        let mut table = EmbeddingTable::new(Level::Token, 2);
        table.insert("a#0".into(), vec![1.0, 0.0]).unwrap();
        let pairs =
            vec![BenchmarkPair { word_a: "a".into(), word_b: "b".into(), human_score: 1.0 }];
        assert!(matches!(
            evaluate(&table, &pairs, "toy"),
            Err(Error::WrongTableLevel { expected: "type", .. })
        ));
    }

    #[test]
    fn report_tsv_shape() {
        let reports = vec![EvalReport {
            benchmark: "toy".into(),
            n_pairs_used: 3,
            total_pairs: 4,
            coverage: 0.75,
            rho: 0.5,
        }];
        let tsv = render_report_tsv(&reports, true);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "benchmark\tn_pairs\tcoverage\trho");
        assert_eq!(lines[1], "toy\t3\t0.7500\t0.5000");
        assert_eq!(lines.len(), 2 + REFERENCE_SCORES.len());
        assert!(lines[2].contains("paper-reported"));
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_transform(seed in 0u64..500) {
            let mut rng = crate::rng::Rng::new(seed);
            let n = 3 + rng.next_below(20);
            let xs: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 5.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 5.0)).collect();
            prop_assume!(!xs.iter().all(|&v| v == xs[0]) && !ys.iter().all(|&v| v == ys[0]));
            let base = spearman(&xs, &ys).unwrap();
            let cubed: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
            let transformed = spearman(&cubed, &ys).unwrap();
            prop_assert!((base - transformed).abs() < 1e-12);
        }

        #[test]
        fn cosine_scale_invariant(seed in 0u64..500, alpha in 0.01f64..100.0, beta in 0.01f64..100.0) {
            let mut rng = crate::rng::Rng::new(seed);
            let n = 2 + rng.next_below(10);
            let u: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            prop_assume!(u.iter().any(|&x| x != 0.0) && v.iter().any(|&x| x != 0.0));
            let base = cosine(&u, &v).unwrap();
            let su: Vec<f64> = u.iter().map(|x| alpha * x).collect();
            let sv: Vec<f64> = v.iter().map(|x| beta * x).collect();
            let scaled = cosine(&su, &sv).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }
    }
}
