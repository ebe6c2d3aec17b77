//! ROUGE-1/2/L scoring and the dataset evaluation harness.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChatSession;
use crate::embed::tokenize;
use crate::pipeline::{self, PipelineConfig};

pub const DEFAULT_BETA: f64 = 1.2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("dataset line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("beta must be a positive finite number, got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeConfig {
    pub beta: f64,
}

impl Default for RougeConfig {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f: f64,
}

impl RougeScore {
    fn from_counts(matched: usize, reference_total: usize, candidate_total: usize, beta: f64) -> Self {
        let recall = ratio(matched, reference_total);
        let precision = ratio(matched, candidate_total);
        Self { recall, precision, f: f_measure(recall, precision, beta) }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(1 + b^2) R P / (R + b^2 P)`, zero when both sides are zero.
pub fn f_measure(recall: f64, precision: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = recall + b2 * precision;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * recall * precision / den
    }
}

/// Contiguous `n`-token windows with multiplicity.
pub fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Clipped n-gram overlap; F uses beta = 1.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let cand_grams = ngrams(&cand, n);
    let ref_grams = ngrams(&refr, n);
    let matched: usize = cand_grams.iter().map(|(g, &c)| ref_grams.get(g).map_or(0, |&r| c.min(r))).sum();
    let cand_total: usize = cand_grams.values().sum();
    let ref_total: usize = ref_grams.values().sum();
    RougeScore::from_counts(matched, ref_total, cand_total, 1.0)
}

/// Longest common subsequence length with a two-row table over the
/// shorter sequence.
pub fn lcs_length(x: &[String], y: &[String]) -> usize {
    let (outer, inner) = if x.len() >= y.len() { (x, y) } else { (y, x) };
    if inner.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; inner.len() + 1];
    let mut cur = vec![0usize; inner.len() + 1];
    for a in outer {
        for (j, b) in inner.iter().enumerate() {
            cur[j + 1] = if a == b { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner.len()]
}

/// LCS recall against the reference, precision against the candidate,
/// and the beta-weighted F.
pub fn rouge_l(candidate: &str, reference: &str, beta: f64) -> RougeScore {
    let x = tokenize(reference);
    let y = tokenize(candidate);
    if x.is_empty() || y.is_empty() {
        return RougeScore::default();
    }
    RougeScore::from_counts(lcs_length(&x, &y), x.len(), y.len(), beta)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(rename = "id")]
    pub record_id: String,
    #[serde(rename = "document")]
    pub document_path: PathBuf,
    pub question: String,
    pub reference: String,
}

/// Reads a JSON Lines dataset. Relative document paths are resolved
/// against the dataset file's directory. Blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: EvalRecord =
            serde_json::from_str(line).map_err(|e| EvalError::InvalidRecord { line: i + 1, message: e.to_string() })?;
        if rec.reference.trim().is_empty() {
            return Err(EvalError::InvalidRecord { line: i + 1, message: "reference is empty".into() });
        }
        if rec.document_path.is_relative() {
            rec.document_path = base.join(&rec.document_path);
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RecordScores {
    pub fn compute(candidate: &str, reference: &str, config: &RougeConfig) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference, config.beta),
        }
    }

    pub fn f_values(&self) -> MetricTriple {
        MetricTriple { rouge1: self.rouge1.f, rouge2: self.rouge2.f, rouge_l: self.rouge_l.f }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<RecordScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta: f64,
    pub records: Vec<RecordOutcome>,
    /// Means of the per-record F values over successful records.
    pub averages: MetricTriple,
    pub succeeded: usize,
    pub failed: usize,
}

impl EvalReport {
    pub fn from_outcomes(mut records: Vec<RecordOutcome>, beta: f64) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let scored: Vec<MetricTriple> = records.iter().filter_map(|r| r.scores.map(|s| s.f_values())).collect();
        let n = scored.len();
        let mean = |f: fn(&MetricTriple) -> f64| {
            if n == 0 {
                0.0
            } else {
                scored.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let averages =
            MetricTriple { rouge1: mean(|m| m.rouge1), rouge2: mean(|m| m.rouge2), rouge_l: mean(|m| m.rouge_l) };
        Self { beta, failed: records.len() - n, succeeded: n, records, averages }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn run_record(record: &EvalRecord, config: &PipelineConfig, rouge: &RougeConfig) -> RecordOutcome {
    let attempt = || -> Result<(String, RecordScores), String> {
        let doc = pipeline::read_document(&record.document_path, &record.record_id).map_err(|e| e.to_string())?;
        let (_, store) =
            pipeline::index_document(&doc, &config.chunking, &config.embedder).map_err(|e| e.to_string())?;
        let mut session =
            ChatSession::new(Arc::new(store), config.embedder.clone(), config.llm.clone()).with_k(config.k);
        let answer = session.ask(&record.question).map_err(|e| e.to_string())?;
        let scores = RecordScores::compute(&answer.text, &record.reference, rouge);
        Ok((answer.text, scores))
    };
    match attempt() {
        Ok((answer, scores)) => {
            RecordOutcome { id: record.record_id.clone(), answer: Some(answer), scores: Some(scores), error: None }
        }
        Err(e) => RecordOutcome { id: record.record_id.clone(), answer: None, scores: None, error: Some(e) },
    }
}

/// Runs every record through ingest, retrieval and answering, then scores
/// the answer against the record's reference. Records are processed in
/// parallel; the report is ordered by record id.
pub fn evaluate_dataset(
    records: &[EvalRecord],
    config: &PipelineConfig,
    rouge: &RougeConfig,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if !(rouge.beta.is_finite() && rouge.beta > 0.0) {
        return Err(EvalError::InvalidBeta(rouge.beta));
    }
    let outcomes: Vec<RecordOutcome> = records.par_iter().map(|r| run_record(r, config, rouge)).collect();
    Ok(EvalReport::from_outcomes(outcomes, rouge.beta))
}

/// A published comparison row: model name and ROUGE-1/2/L.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub model: &'static str,
    pub scores: [f64; 3],
}

/// Reported averages of the original RAG-PDF system.
pub const REPORTED_RAG_PDF: ReferenceRow =
    ReferenceRow { model: "RAG-PDF (reported)", scores: [0.4604, 0.3576, 0.4283] };

pub const BASELINES: [ReferenceRow; 6] = [
    ReferenceRow { model: "ML + RL ROUGE + Novel, with LM", scores: [0.4019, 0.1738, 0.3752] },
    ReferenceRow { model: "COSUM", scores: [0.4908, 0.2379, 0.2834] },
    ReferenceRow { model: "Latent Semantic Analysis", scores: [0.4621, 0.2618, 0.3479] },
    ReferenceRow { model: "EdgeSumm", scores: [0.5379, 0.2858, 0.4979] },
    ReferenceRow { model: "Generative Adversarial Network", scores: [0.3992, 0.1765, 0.3671] },
    ReferenceRow { model: "TFRSP", scores: [0.2483, 0.2874, 0.2043] },
];

pub const LOCAL_ROW_LABEL: &str = "This run";

pub fn format_averages(avg: &MetricTriple) -> String {
    format!("{:.4} / {:.4} / {:.4}", avg.rouge1, avg.rouge2, avg.rouge_l)
}

/// Per-metric averages, one row per metric.
pub fn render_table(report: &EvalReport) -> String {
    let rows = [
        ("ROUGE-1", report.averages.rouge1),
        ("ROUGE-2", report.averages.rouge2),
        ("ROUGE-L", report.averages.rouge_l),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{:<20}  Average", "Metric");
    for (name, v) in rows {
        let _ = writeln!(out, "{name:<20}  {v:.4}");
    }
    let _ = writeln!(out, "records: {} scored, {} failed", report.succeeded, report.failed);
    out
}

/// The local averages next to the reported system and the published
/// summarization baselines.
pub fn render_comparison(report: &EvalReport) -> String {
    let a = &report.averages;
    let mut rows: Vec<(&str, [f64; 3])> = vec![(LOCAL_ROW_LABEL, [a.rouge1, a.rouge2, a.rouge_l])];
    rows.push((REPORTED_RAG_PDF.model, REPORTED_RAG_PDF.scores));
    rows.extend(BASELINES.iter().map(|r| (r.model, r.scores)));

    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(5).max("Model".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}", "Model", "ROUGE-1", "ROUGE-2", "ROUGE-L");
    for (model, [r1, r2, rl]) in rows {
        let _ = writeln!(out, "{model:<width$}  {r1:>7.4}  {r2:>7.4}  {rl:>7.4}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ngram_examples() {
        let abc = t("a b c");
        let g = ngrams(&abc, 2);
        assert_eq!(g.len(), 2);
        assert_eq!(g[&abc[0..2]], 1);
        assert_eq!(g[&abc[1..3]], 1);
        let aaa = t("a a a");
        assert_eq!(ngrams(&aaa, 1)[&aaa[0..1]], 3);
        assert!(ngrams(&t("a"), 2).is_empty());
    }

    #[test]
    fn rouge_n_worked_pair() {
        let r1 = rouge_n("the cat", "the cat sat on mat", 1);
        assert!((r1.recall - 0.4).abs() < 1e-12);
        assert!((r1.precision - 1.0).abs() < 1e-12);
        let r2 = rouge_n("the cat", "the cat sat on mat", 2);
        assert!((r2.recall - 0.25).abs() < 1e-12);
        assert!((r2.precision - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_n_degenerate() {
        assert_eq!(rouge_n("", "abc", 1), RougeScore::default());
        assert_eq!(rouge_n("abc", "", 1), RougeScore::default());
        assert_eq!(rouge_n("a", "a", 2), RougeScore::default());
        let same = rouge_n("x y z", "x y z", 2);
        assert_eq!((same.recall, same.precision, same.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&t("a b c b d a b"), &t("b d c a b a")), 4);
        assert_eq!(lcs_length(&t("a b"), &t("c d")), 0);
        assert_eq!(lcs_length(&t("a b c"), &t("a b c")), 3);
        assert_eq!(lcs_length(&[], &t("a")), 0);
    }

    #[test]
    fn rouge_l_worked_pair() {
        let s = rouge_l("the cat the mat", "the cat sat on the mat", 1.2);
        assert!((s.recall - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(s.precision, 1.0);
        // 2.44 * (2/3) / (2/3 + 1.44)
        assert!((s.f - 0.772151898734).abs() < 1e-9, "{}", s.f);
        assert_eq!(rouge_l("zebra", "the cat", 1.2), RougeScore::default());
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(
            evaluate_dataset(&[], &PipelineConfig::default(), &RougeConfig::default()),
            Err(EvalError::EmptyDataset)
        ));
    }

    #[test]
    fn averages_cover_successes_only() {
        let ok = |id: &str, f: f64| RecordOutcome {
            id: id.into(),
            answer: Some(String::new()),
            scores: Some(RecordScores {
                rouge1: RougeScore { recall: f, precision: f, f },
                rouge2: RougeScore { recall: f, precision: f, f },
                rouge_l: RougeScore { recall: f, precision: f, f },
            }),
            error: None,
        };
        let bad = RecordOutcome { id: "b".into(), answer: None, scores: None, error: Some("x".into()) };
        let report = EvalReport::from_outcomes(vec![ok("c", 0.5), bad, ok("a", 1.0)], 1.2);
        assert_eq!(report.succeeded, 2);
        assert_eq!(report.failed, 1);
        assert_eq!(report.averages.rouge1, 0.75);
        let ids: Vec<_> = report.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn comparison_rows() {
        let report = EvalReport::from_outcomes(Vec::new(), 1.2);
        let table = render_comparison(&report);
        assert_eq!(table.lines().count(), 1 + 1 + 7);
        assert!(table.contains("EdgeSumm"));
        assert!(table.lines().any(|l| l.starts_with("EdgeSumm") && l.ends_with("0.5379   0.2858   0.4979")));
    }
}
