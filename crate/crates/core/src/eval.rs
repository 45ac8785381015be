//! nDCG@k and recall@k with trec_eval-style per-query reporting.
//!
//! A query is evaluated when the qrels hold at least one positive judgment
//! (grade at least 1) for it; a judged query missing from the run scores 0.
//! Everything else seen in the run or the qrels is counted as skipped.
//! Gains are linear in the grade (`rel / log2(rank + 1)`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::corpus::JudgmentSet;
use crate::error::{Error, Result};
use crate::run::Run;
use crate::textio::{fmt_score, Header};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Ndcg,
    Recall,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Ndcg => "ndcg",
            MetricKind::Recall => "recall",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndcg" => Ok(MetricKind::Ndcg),
            "recall" => Ok(MetricKind::Recall),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
}

impl MetricReport {
    pub fn name(&self) -> String {
        format!("{}@{}", self.metric, self.k)
    }

    pub fn write_tsv<W: Write + ?Sized>(&self, w: &mut W, per_query: bool, header: &Header) -> std::io::Result<()> {
        header.write_to(w)?;
        let name = self.name();
        if per_query {
            for (q, v) in &self.per_query {
                writeln!(w, "{name}\t{q}\t{}", fmt_score(*v))?;
            }
        }
        writeln!(w, "{name}\tall\t{}", fmt_score(self.mean))?;
        writeln!(w, "num_q\tall\t{}", self.evaluated_queries)?;
        writeln!(w, "skipped_q\tall\t{}", self.skipped_queries)
    }

    pub fn summary(&self) -> String {
        format!(
            "{} = {:.4} over {} queries ({} skipped)",
            self.name(),
            self.mean,
            self.evaluated_queries,
            self.skipped_queries
        )
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

fn ndcg_query(ranking: &[&str], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| grades.get(*d).copied().unwrap_or(0) as f64 / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| g as f64 / discount(i + 1))
        .sum();
    if idcg > 0.0 {
        (dcg / idcg).min(1.0)
    } else {
        0.0
    }
}

fn recall_query(ranking: &[&str], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let relevant = grades.values().filter(|&&g| g >= 1).count();
    if relevant == 0 {
        return 0.0;
    }
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| grades.get(**d).is_some_and(|&g| g >= 1))
        .count();
    hits as f64 / relevant as f64
}

fn evaluate(run: &Run, qrels: &JudgmentSet, k: usize, metric: MetricKind) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut seen: BTreeSet<&str> = run.qids().collect();
    for (qid, grades) in qrels.queries() {
        seen.insert(qid);
        if !grades.values().any(|&g| g >= 1) {
            continue;
        }
        let ranking = run.ranking(qid);
        let v = match metric {
            MetricKind::Ndcg => ndcg_query(&ranking, grades, k),
            MetricKind::Recall => recall_query(&ranking, grades, k),
        };
        per_query.insert(qid.to_string(), v);
    }
    let evaluated = per_query.len();
    let skipped = seen.len() - evaluated;
    if skipped > 0 {
        log::warn!("{metric}@{k}: {skipped} queries skipped (no positive judgments)");
    }
    let mean = if evaluated == 0 {
        0.0
    } else {
        per_query.values().sum::<f64>() / evaluated as f64
    };
    MetricReport {
        metric,
        k,
        per_query,
        mean,
        evaluated_queries: evaluated,
        skipped_queries: skipped,
    }
}

pub fn ndcg_at_k(run: &Run, qrels: &JudgmentSet, k: usize) -> MetricReport {
    evaluate(run, qrels, k, MetricKind::Ndcg)
}

pub fn recall_at_k(run: &Run, qrels: &JudgmentSet, k: usize) -> MetricReport {
    evaluate(run, qrels, k, MetricKind::Recall)
}

pub fn evaluate_metric(run: &Run, qrels: &JudgmentSet, metric: MetricKind, k: usize) -> MetricReport {
    evaluate(run, qrels, k, metric)
}

/// Unweighted mean of per-language means.
pub fn macro_average(reports: &[MetricReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Invalid("macro average of zero reports".into()));
    }
    Ok(reports.iter().map(|r| r.mean).sum::<f64>() / reports.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::ScoredDoc;

    fn run_from(q: &str, docs: &[&str]) -> Run {
        let n = docs.len();
        let mut r = Run::new("t");
        r.insert(q, docs.iter().enumerate().map(|(i, d)| ScoredDoc::new(*d, (n - i) as f64)).collect())
            .unwrap();
        r
    }

    fn qrels(q: &str, rel: &[&str]) -> JudgmentSet {
        let mut j = JudgmentSet::new();
        for d in rel {
            j.insert(q, *d, 1);
        }
        j
    }

    #[test]
    fn ideal_ordering() {
        let r = run_from("q", &["a", "b", "x", "y"]);
        let j = qrels("q", &["a", "b"]);
        assert_eq!(ndcg_at_k(&r, &j, 10).mean, 1.0);
        assert_eq!(recall_at_k(&r, &j, 10).mean, 1.0);
    }

    #[test]
    fn nothing_relevant_retrieved() {
        let r = run_from("q", &["x", "y"]);
        let j = qrels("q", &["a"]);
        assert_eq!(ndcg_at_k(&r, &j, 10).mean, 0.0);
    }

    #[test]
    fn worked_ranks_1_3_12() {
        let docs: Vec<String> = (1..=12).map(|i| format!("d{i:02}")).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let r = run_from("q", &refs);
        let j = qrels("q", &["d01", "d03", "d12"]);
        let got = ndcg_at_k(&r, &j, 10).mean;
        let dcg = 1.0 + 1.0 / 4f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        assert!((dcg - 1.5).abs() < 1e-15);
        assert!((idcg - 2.1309).abs() < 1e-4);
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.7039).abs() < 1e-4);
    }

    #[test]
    fn recall_k_zero() {
        let r = run_from("q", &["a"]);
        let j = qrels("q", &["a"]);
        assert_eq!(recall_at_k(&r, &j, 0).mean, 0.0);
        assert_eq!(ndcg_at_k(&r, &j, 0).mean, 0.0);
    }

    #[test]
    fn skipping_rules() {
        let mut r = run_from("q1", &["a"]);
        r.insert("q2", vec![ScoredDoc::new("b", 1.0)]).unwrap();
        let mut j = qrels("q1", &["a"]);
        j.insert("q3", "c", 0);
        j.insert("q4", "d", 1);
        let rep = ndcg_at_k(&r, &j, 10);
        assert_eq!(rep.evaluated_queries, 2);
        // q2 (unjudged) and q3 (no positives)
        assert_eq!(rep.skipped_queries, 2);
        assert_eq!(rep.per_query["q4"], 0.0);
        assert_eq!(rep.mean, 0.5);
    }

    #[test]
    fn macro_examples() {
        let mk = |m| MetricReport {
            metric: MetricKind::Ndcg,
            k: 10,
            per_query: BTreeMap::new(),
            mean: m,
            evaluated_queries: 1,
            skipped_queries: 0,
        };
        assert!((macro_average(&[mk(0.8), mk(0.6)]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(macro_average(&[mk(0.42)]).unwrap(), 0.42);
        let means: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let reports: Vec<_> = means.iter().map(|&m| mk(m)).collect();
        let direct = means.iter().sum::<f64>() / 16.0;
        assert!((macro_average(&reports).unwrap() - direct).abs() < 1e-15);
        assert!(macro_average(&[]).is_err());
    }

    #[test]
    fn graded_gains_are_linear() {
        let r = run_from("q", &["a", "b"]);
        let mut j = JudgmentSet::new();
        j.insert("q", "a", 1);
        j.insert("q", "b", 2);
        let want = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&r, &j, 10).mean - want).abs() < 1e-12);
    }
}
