//! Correlation-aware ensembling of reranker runs.
//!
//! Base weights (typically each model's validation score) are damped for
//! models whose rankings correlate strongly with the rest of the ensemble:
//!
//! ```text
//! w_i = max(0, base_i * (1 - lambda * clamp(mean_{j != i} rho_ij, 0, 1)))
//! ```
//!
//! then renormalized to sum to 1. `rho` is Spearman rank correlation averaged
//! over shared queries.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::fusion::{fuse, normalize_run, Normalization};
use crate::run::Run;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub base_weights: Vec<f64>,
    /// Correlation penalty in [0, 1].
    pub lambda: f64,
}

impl EnsembleConfig {
    pub fn new(base_weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if base_weights.is_empty() {
            return Err(Error::Invalid("no base weights".into()));
        }
        if base_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("base weights must be finite and >= 0".into()));
        }
        if base_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Invalid("base weights must not all be zero".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Invalid(format!("lambda must be in [0, 1], got {lambda}")));
        }
        Ok(EnsembleConfig { base_weights, lambda })
    }
}

/// Average ranks (1-based; ties share the mean of their positions).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman correlation between two score vectors over the same items;
/// `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean per-query Spearman correlation between two runs over their shared
/// candidates. Queries with fewer than two shared candidates, or with a
/// constant score vector on either side, are skipped. Returns `Err` when the
/// runs share no query, and 0.0 when every shared query was skipped.
fn run_correlation(a: &Run, b: &Run) -> Result<f64> {
    let mut shared = 0usize;
    let mut total = 0.0;
    let mut used = 0usize;
    for (qid, la) in a.queries() {
        let Some(lb) = b.get(qid) else { continue };
        shared += 1;
        let sb: HashMap<&str, f64> = lb.iter().map(|d| (d.docid.as_str(), d.score)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = la
            .iter()
            .filter_map(|d| sb.get(d.docid.as_str()).map(|&s| (d.score, s)))
            .unzip();
        if let Some(r) = spearman(&xs, &ys) {
            total += r;
            used += 1;
        }
    }
    if shared == 0 {
        return Err(Error::Invalid(format!(
            "runs `{}` and `{}` share no query",
            a.tag, b.tag
        )));
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

pub fn correlation_matrix(runs: &[Run]) -> Result<Vec<Vec<f64>>> {
    if runs.is_empty() {
        return Err(Error::Invalid("no runs".into()));
    }
    let n = runs.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = run_correlation(&runs[i], &runs[j])?;
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}

/// Mean off-diagonal correlation per run, clamped to [0, 1].
pub fn mean_correlations(corr: &[Vec<f64>]) -> Vec<f64> {
    let n = corr.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return 0.0;
            }
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| corr[i][j]).sum();
            (s / (n - 1) as f64).clamp(0.0, 1.0)
        })
        .collect()
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn adjust_weights(config: &EnsembleConfig, corr: &[Vec<f64>]) -> Result<Vec<f64>> {
    if corr.len() != config.base_weights.len() || corr.iter().any(|r| r.len() != corr.len()) {
        return Err(Error::Invalid(format!(
            "correlation matrix is not {0}x{0}",
            config.base_weights.len()
        )));
    }
    let rho = mean_correlations(corr);
    let damped: Vec<f64> = config
        .base_weights
        .iter()
        .zip(&rho)
        .map(|(b, r)| (b * (1.0 - config.lambda * r)).max(0.0))
        .collect();
    if damped.iter().sum::<f64>() > 0.0 {
        Ok(normalized(&damped))
    } else {
        Ok(normalized(&config.base_weights))
    }
}

/// Min-max normalize each run per query, then weighted-sum over the
/// candidate union (absent documents score 0).
pub fn ensemble_runs(runs: &[Run], weights: &[f64]) -> Result<Run> {
    let normalized: Vec<Run> = runs
        .iter()
        .map(|r| normalize_run(r, Normalization::MinMax))
        .collect();
    fuse(&normalized, weights, "ensemble")
}

/// Queries present in every run.
pub fn shared_queries(runs: &[Run]) -> BTreeSet<String> {
    let mut it = runs.iter();
    let Some(first) = it.next() else {
        return BTreeSet::new();
    };
    let mut set: BTreeSet<String> = first.qids().map(str::to_string).collect();
    for r in it {
        set.retain(|q| r.get(q).is_some());
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::ScoredDoc;

    fn run_of(tag: &str, q: &[(&str, &[(&str, f64)])]) -> Run {
        let mut r = Run::new(tag);
        for (qid, docs) in q {
            r.insert(*qid, docs.iter().map(|(d, s)| ScoredDoc::new(*d, *s)).collect()).unwrap();
        }
        r
    }

    /// Textbook Spearman for untied data: 1 - 6 * sum d^2 / (n (n^2 - 1)).
    fn textbook(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn self_correlation_is_one() {
        let a = run_of("a", &[("q", &[("x", 3.0), ("y", 2.0), ("z", 1.0)])]);
        let m = correlation_matrix(&[a.clone(), a]).unwrap();
        assert!(m.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reversed_is_minus_one() {
        let a = run_of("a", &[("q", &[("x", 3.0), ("y", 2.0), ("z", 1.0)])]);
        let b = run_of("b", &[("q", &[("x", 1.0), ("y", 2.0), ("z", 3.0)])]);
        let m = correlation_matrix(&[a, b]).unwrap();
        assert!((m[0][1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_runs_match_textbook_spearman() {
        let docs = ["a", "b", "c", "d", "e"];
        let s = [
            [[0.9, 0.8, 0.5, 0.3, 0.1], [0.2, 0.4, 0.6, 0.8, 0.7]],
            [[0.1, 0.7, 0.5, 0.3, 0.9], [0.25, 0.35, 0.15, 0.95, 0.45]],
            [[0.5, 0.4, 0.3, 0.2, 0.6], [0.9, 0.1, 0.8, 0.2, 0.7]],
        ];
        let runs: Vec<Run> = s
            .iter()
            .enumerate()
            .map(|(i, per_q)| {
                let mut r = Run::new(format!("r{i}"));
                for (qi, scores) in per_q.iter().enumerate() {
                    r.insert(
                        format!("q{qi}"),
                        docs.iter().zip(scores).map(|(d, s)| ScoredDoc::new(*d, *s)).collect(),
                    )
                    .unwrap();
                }
                r
            })
            .collect();
        let m = correlation_matrix(&runs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let want = (textbook(&s[i][0], &s[j][0]) + textbook(&s[i][1], &s[j][1])) / 2.0;
                assert!((m[i][j] - want).abs() < 1e-12, "{i}{j}: {} vs {want}", m[i][j]);
            }
        }
    }

    #[test]
    fn no_shared_queries_is_error() {
        let a = run_of("a", &[("q1", &[("x", 1.0)])]);
        let b = run_of("b", &[("q2", &[("x", 1.0)])]);
        assert!(correlation_matrix(&[a, b]).is_err());
    }

    #[test]
    fn ties_use_average_ranks() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn lambda_zero_keeps_bases() {
        let cfg = EnsembleConfig::new(vec![2.0, 1.0, 1.0], 0.0).unwrap();
        let corr = vec![vec![1.0, 0.9, 0.2], vec![0.9, 1.0, 0.4], vec![0.2, 0.4, 1.0]];
        assert_eq!(adjust_weights(&cfg, &corr).unwrap(), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn identical_runs_fall_back_to_bases() {
        let cfg = EnsembleConfig::new(vec![1.0, 1.0], 1.0).unwrap();
        let corr = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(adjust_weights(&cfg, &corr).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn leaderboard_bases_hand_computed() {
        let cfg = EnsembleConfig::new(vec![0.802, 0.792, 0.730], 0.5).unwrap();
        let corr = vec![
            vec![1.0, 0.9, 0.6],
            vec![0.9, 1.0, 0.7],
            vec![0.6, 0.7, 1.0],
        ];
        // rho = (0.75, 0.8, 0.65); damp = 1 - 0.5 * rho
        let raw = [0.802 * 0.625, 0.792 * 0.6, 0.730 * 0.675];
        let sum: f64 = raw.iter().sum();
        let got = adjust_weights(&cfg, &corr).unwrap();
        for (g, r) in got.iter().zip(raw) {
            assert!((g - r / sum).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_correlation_is_not_rewarded() {
        let cfg = EnsembleConfig::new(vec![1.0, 1.0], 1.0).unwrap();
        let corr = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        assert_eq!(adjust_weights(&cfg, &corr).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn ensemble_examples() {
        let a = run_of("a", &[("q", &[("x", 5.0), ("y", 3.0), ("z", 1.0)])]);
        let e = ensemble_runs(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(e.ranking("q"), a.ranking("q"));
        assert_eq!(e.tag, "ensemble");
        let e3 = ensemble_runs(&[a.clone(), a.clone(), a.clone()], &[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(e3.ranking("q"), a.ranking("q"));
        let b = run_of("b", &[("q", &[("u", 2.0), ("v", 1.0)])]);
        let e = ensemble_runs(&[a.clone(), b], &[1.0, 0.0]).unwrap();
        assert_eq!(e.ranking("q"), a.ranking("q"));
        assert!(ensemble_runs(&[a], &[0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EnsembleConfig::new(vec![], 0.5).is_err());
        assert!(EnsembleConfig::new(vec![0.0, 0.0], 0.5).is_err());
        assert!(EnsembleConfig::new(vec![1.0], 1.5).is_err());
    }
}
