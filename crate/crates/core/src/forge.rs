//! Training-data manufacturing for pairwise relevance models.
//!
//! - [`sample_negatives`]: label-0 pairs drawn from a retrieval candidate
//!   pool, skipping anything judged positive;
//! - [`sample_negatives_corpus`]: the same draw over the whole corpus;
//! - [`q2q2d_augment`]: transfer judgments from similar train queries to test
//!   queries with `label = sim * label * alpha`;
//! - [`pseudo_label`]: a seeded global sample of model-scored pairs with soft
//!   labels `0.9 * score`.
//!
//! All sampling is keyed per query (see [`crate::rng`]) and uses a prefix-
//! stable permutation, so `n` negatives are always the first `n` of `n + m`.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{JudgmentSet, Topics};
use crate::dense::{cosine, EmbeddingStore};
use crate::error::{Error, Result};
use crate::fusion::CandidatePool;
use crate::rng::{derive_rng, Permutation};
use crate::run::Run;
use crate::textio::{self, escape_field, fmt_score, unescape_field, Header, Lines};

/// Soft-label scale applied to pseudo labels.
pub const PSEUDO_SCALE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairSource {
    Annotation,
    Negative,
    Q2q2d,
    Pseudo,
}

impl PairSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PairSource::Annotation => "annotation",
            PairSource::Negative => "negative",
            PairSource::Q2q2d => "q2q2d",
            PairSource::Pseudo => "pseudo",
        }
    }
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annotation" => Ok(PairSource::Annotation),
            "negative" => Ok(PairSource::Negative),
            "q2q2d" => Ok(PairSource::Q2q2d),
            "pseudo" => Ok(PairSource::Pseudo),
            other => Err(Error::Invalid(format!("unknown pair source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub qid: String,
    pub query_text: String,
    pub docid: String,
    pub label: f64,
    pub source: PairSource,
}

impl TrainingPair {
    /// Check the label range and the per-source label rules.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.label) {
            return Err(format!("label {} outside [0, 1]", self.label));
        }
        match self.source {
            PairSource::Negative if self.label != 0.0 => {
                Err(format!("negative pair with label {}", self.label))
            }
            PairSource::Annotation if self.label != 0.0 && self.label != 1.0 => {
                Err(format!("annotation pair with non-binary label {}", self.label))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationParams {
    /// Noise damping for transferred labels, in (0, 1].
    pub alpha: f64,
    /// Train queries linked per test query.
    pub top_m: usize,
    /// Minimum cosine similarity for a link, in [-1, 1].
    pub tau: f64,
    /// Fraction of scored pairs kept as pseudo labels, in (0, 1].
    pub pseudo_fraction: f64,
    pub n_negatives: usize,
    pub seed: u64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        AugmentationParams {
            alpha: 0.9,
            top_m: 1,
            tau: 0.8,
            pseudo_fraction: 0.5,
            n_negatives: 100,
            seed: 0,
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Invalid(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.top_m == 0 {
            return Err(Error::Invalid("top_m must be >= 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::Invalid(format!("tau must be in [-1, 1], got {}", self.tau)));
        }
        if !(self.pseudo_fraction > 0.0 && self.pseudo_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "pseudo fraction must be in (0, 1], got {}",
                self.pseudo_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeSample {
    pub pairs: Vec<TrainingPair>,
    /// Pool queries with no judgments at all; they yield no negatives.
    pub skipped_queries: usize,
}

/// Annotated judgments as training pairs (label 1 for grade >= 1, else 0).
pub fn annotation_pairs(qrels: &JudgmentSet, topics: &Topics) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for (qid, docs) in qrels.queries() {
        let text = topics.text(qid)?;
        for (docid, &grade) in docs {
            out.push(TrainingPair {
                qid: qid.to_string(),
                query_text: text.to_string(),
                docid: docid.clone(),
                label: if grade >= 1 { 1.0 } else { 0.0 },
                source: PairSource::Annotation,
            });
        }
    }
    Ok(out)
}

fn draw_negatives<'a>(
    candidates: &'a [&'a str],
    positives: &HashSet<&str>,
    n: usize,
    seed: u64,
    stage: &str,
    qid: &str,
) -> Vec<&'a str> {
    if n == 0 {
        return Vec::new();
    }
    Permutation::new(candidates.len(), derive_rng(seed, stage, qid))
        .map(|i| candidates[i])
        .filter(|d| !positives.contains(d))
        .take(n)
        .collect()
}

/// Draw up to `n` negatives per query uniformly without replacement from
/// the pool entries that are not judged positive. Judged-zero documents are
/// eligible.
pub fn sample_negatives(
    pool: &CandidatePool,
    qrels: &JudgmentSet,
    topics: &Topics,
    n: usize,
    seed: u64,
) -> Result<NegativeSample> {
    let per_query: Vec<Result<Option<Vec<TrainingPair>>>> = pool
        .queries()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(qid, list)| {
            if qrels.query(qid).is_none() {
                return Ok(None);
            }
            let text = topics.text(qid)?;
            let positives = qrels.positives(qid);
            let ids: Vec<&str> = list.iter().map(|d| d.docid.as_str()).collect();
            Ok(Some(
                draw_negatives(&ids, &positives, n, seed, "negatives", qid)
                    .into_iter()
                    .map(|d| TrainingPair {
                        qid: qid.to_string(),
                        query_text: text.to_string(),
                        docid: d.to_string(),
                        label: 0.0,
                        source: PairSource::Negative,
                    })
                    .collect(),
            ))
        })
        .collect();

    let mut out = NegativeSample::default();
    for r in per_query {
        match r? {
            Some(pairs) => out.pairs.extend(pairs),
            None => out.skipped_queries += 1,
        }
    }
    if out.skipped_queries > 0 {
        log::warn!("{} pool queries have no judgments; skipped", out.skipped_queries);
    }
    Ok(out)
}

/// Corpus-wide negatives for every judged query.
pub fn sample_negatives_corpus(
    corpus_ids: &[&str],
    qrels: &JudgmentSet,
    topics: &Topics,
    n: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    let qids: Vec<&str> = qrels.queries().map(|(q, _)| q).collect();
    let per_query: Vec<Result<Vec<TrainingPair>>> = qids
        .into_par_iter()
        .map(|qid| {
            let text = topics.text(qid)?;
            let positives = qrels.positives(qid);
            Ok(draw_negatives(corpus_ids, &positives, n, seed, "negatives-corpus", qid)
                .into_iter()
                .map(|d| TrainingPair {
                    qid: qid.to_string(),
                    query_text: text.to_string(),
                    docid: d.to_string(),
                    label: 0.0,
                    source: PairSource::Negative,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_query {
        out.extend(r?);
    }
    Ok(out)
}

/// Link each test query to its `top_m` most similar train queries (cosine
/// similarity at least `tau`) and copy their judgments over with
/// `label' = sim * label * alpha`. Zero-labelled judgments are copied with
/// label 0.
pub fn q2q2d_augment(
    test_queries: &Topics,
    train_queries: &Topics,
    train_qrels: &JudgmentSet,
    query_vectors: &EmbeddingStore,
    params: &AugmentationParams,
) -> Result<Vec<TrainingPair>> {
    params.validate()?;
    let vector = |qid: &str| {
        query_vectors
            .vector(qid)
            .ok_or_else(|| Error::Invalid(format!("no query vector for `{qid}`")))
    };
    let train: Vec<(&str, &[f32])> = train_queries
        .iter()
        .map(|q| Ok((q.qid.as_str(), vector(&q.qid)?)))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for qt in test_queries.iter() {
        let v = vector(&qt.qid)?;
        let mut links: Vec<(&str, f64)> = train
            .iter()
            .map(|(id, tv)| (*id, cosine(v, tv)))
            .filter(|&(_, s)| s >= params.tau)
            .collect();
        links.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        links.truncate(params.top_m);
        for (qs, sim) in links {
            let Some(judged) = train_qrels.query(qs) else { continue };
            for (docid, &grade) in judged {
                let label = if grade >= 1 { 1.0 } else { 0.0 };
                out.push(TrainingPair {
                    qid: qt.qid.clone(),
                    query_text: qt.text.clone(),
                    docid: docid.clone(),
                    label: (sim.max(0.0) * label * params.alpha).clamp(0.0, params.alpha),
                    source: PairSource::Q2q2d,
                });
            }
        }
    }
    Ok(out)
}

/// Keep a seeded uniform sample of `floor(fraction * total)` scored pairs
/// (sampled globally, emitted in run order) with soft label `0.9 * score`.
pub fn pseudo_label(
    scored_run: &Run,
    topics: &Topics,
    fraction: f64,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Invalid(format!("pseudo fraction must be in (0, 1], got {fraction}")));
    }
    let triples: Vec<(&str, &str, f64)> = scored_run
        .queries()
        .flat_map(|(q, l)| l.iter().map(move |d| (q, d.docid.as_str(), d.score)))
        .collect();
    if let Some((q, d, s)) = triples.iter().find(|t| !(0.0..=1.0).contains(&t.2)) {
        return Err(Error::Invalid(format!(
            "score {s} for ({q}, {d}) is outside [0, 1]; pseudo labels need probabilities"
        )));
    }
    let m = (fraction * triples.len() as f64).floor() as usize;
    let mut picked: Vec<usize> = Permutation::new(triples.len(), derive_rng(seed, "pseudo", ""))
        .take(m)
        .collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| {
            let (q, d, s) = triples[i];
            Ok(TrainingPair {
                qid: q.to_string(),
                query_text: topics.text(q)?.to_string(),
                docid: d.to_string(),
                label: PSEUDO_SCALE * s,
                source: PairSource::Pseudo,
            })
        })
        .collect()
}

pub fn write_pairs<W: Write + ?Sized>(w: &mut W, pairs: &[TrainingPair], header: &Header) -> std::io::Result<()> {
    header.write_to(w)?;
    for p in pairs {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            p.qid,
            p.docid,
            fmt_score(p.label),
            p.source,
            escape_field(&p.query_text)
        )?;
    }
    Ok(())
}

pub fn save_pairs(path: &Path, pairs: &[TrainingPair], header: &Header) -> Result<()> {
    let mut w = textio::create_writer(path)?;
    write_pairs(&mut w, pairs, header)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_pairs<R: BufRead>(reader: R, name: &str) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for item in Lines::new(reader, name) {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let cols: Vec<&str> = line.splitn(5, '\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(name, line_no, format!("expected 5 columns, found {}", cols.len())));
        }
        let label = textio::parse_f64(cols[2])
            .ok_or_else(|| Error::parse(name, line_no, format!("bad label `{}`", cols[2])))?;
        let source: PairSource = cols[3]
            .parse()
            .map_err(|e: Error| Error::parse(name, line_no, e.to_string()))?;
        let pair = TrainingPair {
            qid: cols[0].to_string(),
            docid: cols[1].to_string(),
            label,
            source,
            query_text: unescape_field(cols[4]),
        };
        pair.check().map_err(|m| Error::parse(name, line_no, m))?;
        out.push(pair);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    read_pairs(textio::open_reader(path)?, &textio::display_name(path))
}
