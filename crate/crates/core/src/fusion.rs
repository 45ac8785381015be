//! Score normalization, weighted run fusion and candidate pooling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::run::{Run, ScoredDoc};

pub const DEFAULT_POOL_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    MinMax,
    None,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MinMax => "minmax",
            Normalization::None => "none",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "none" => Ok(Normalization::None),
            other => Err(Error::Invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Per-query min-max rescaling to `[0, 1]`; a query whose scores are all
/// equal maps to 1.0. List order is kept as is.
pub fn normalize_scores(list: &[ScoredDoc]) -> Vec<ScoredDoc> {
    let (min, max) = list.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d.score), hi.max(d.score))
    });
    let range = max - min;
    list.iter()
        .map(|d| {
            let s = if range > 0.0 {
                ((d.score - min) / range).clamp(0.0, 1.0)
            } else {
                1.0
            };
            ScoredDoc::new(d.docid.clone(), s)
        })
        .collect()
}

pub fn normalize_run(run: &Run, method: Normalization) -> Run {
    match method {
        Normalization::None => run.clone(),
        Normalization::MinMax => {
            let mut out = Run::new(run.tag.clone());
            for (qid, list) in run.queries() {
                out.insert_ordered(qid.to_string(), normalize_scores(list));
            }
            out
        }
    }
}

pub(crate) fn check_weights(n_runs: usize, weights: &[f64]) -> Result<()> {
    if n_runs == 0 {
        return Err(Error::Invalid("no runs to combine".into()));
    }
    if weights.len() != n_runs {
        return Err(Error::Invalid(format!(
            "{} weights for {} runs",
            weights.len(),
            n_runs
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Invalid("weights must be finite and >= 0".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Invalid("weights must not all be zero".into()));
    }
    Ok(())
}

/// Weighted sum of (already normalized) runs over the union of candidates.
///
/// A document missing from a run scores 0 there. Runs with weight 0
/// contribute neither score nor candidates. Per-document contributions are
/// summed in sorted order so the result does not depend on run order.
pub fn fuse(runs: &[Run], weights: &[f64], tag: &str) -> Result<Run> {
    check_weights(runs.len(), weights)?;
    let active: Vec<(&Run, f64)> = runs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, &w)| (r, w))
        .collect();
    let qids: BTreeSet<&str> = active.iter().flat_map(|(r, _)| r.qids()).collect();

    let fused: Vec<(String, Vec<ScoredDoc>)> = qids
        .into_par_iter()
        .map(|qid| {
            let mut parts: HashMap<&str, Vec<f64>> = HashMap::new();
            for (run, w) in &active {
                for d in run.get(qid).unwrap_or(&[]) {
                    parts.entry(d.docid.as_str()).or_default().push(w * d.score);
                }
            }
            let list = parts
                .into_iter()
                .map(|(docid, mut terms)| {
                    terms.sort_by(f64::total_cmp);
                    ScoredDoc::new(docid, terms.iter().sum())
                })
                .collect();
            (qid.to_string(), list)
        })
        .collect();

    let mut out = Run::new(tag);
    for (qid, list) in fused {
        out.insert(qid, list)?;
    }
    Ok(out)
}

/// Per-query top-`k` candidates of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    k: usize,
    run: Run,
}

impl CandidatePool {
    pub fn depth(&self) -> usize {
        self.k
    }

    pub fn provenance(&self) -> &str {
        &self.run.tag
    }

    pub fn get(&self, qid: &str) -> Option<&[ScoredDoc]> {
        self.run.get(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.run.queries()
    }

    pub fn as_run(&self) -> &Run {
        &self.run
    }

    pub fn into_run(self) -> Run {
        self.run
    }

    pub fn num_candidates(&self) -> usize {
        self.run.num_entries()
    }
}

pub fn cut_pool(run: &Run, k: usize) -> CandidatePool {
    let mut out = Run::new(run.tag.clone());
    for (qid, list) in run.queries() {
        out.insert_ordered(qid.to_string(), list.iter().take(k).cloned().collect());
    }
    CandidatePool { k, run: out }
}

/// Convenience for the common case: normalize each run, fuse, cut.
pub fn hybrid_pool(runs: &[Run], weights: &[f64], norm: Normalization, k: usize) -> Result<(Run, CandidatePool)> {
    let normalized: Vec<Run> = runs.iter().map(|r| normalize_run(r, norm)).collect();
    let fused = fuse(&normalized, weights, "hybrid")?;
    let pool = cut_pool(&fused, k);
    Ok((fused, pool))
}

/// Group rankings for comparison in tests and diagnostics.
pub fn rankings(run: &Run) -> BTreeMap<String, Vec<String>> {
    run.queries()
        .map(|(q, l)| (q.to_string(), l.iter().map(|d| d.docid.clone()).collect()))
        .collect()
}
