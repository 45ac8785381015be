use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;

use super::tokenize::{tokenize, ScriptPolicy};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::run::{top_k, ScoredDoc};

/// Lucene-style BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::Invalid(format!("k1 must be > 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Invalid(format!("b must be in [0, 1], got {b}")));
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(crate) policy: ScriptPolicy,
    pub(crate) docids: Vec<String>,
    pub(crate) doc_lengths: Vec<u32>,
    pub(crate) avgdl: f64,
    pub(crate) postings: BTreeMap<String, Vec<Posting>>,
    pub(crate) metadata: String,
}

impl InvertedIndex {
    pub fn policy(&self) -> ScriptPolicy {
        self.policy
    }

    pub fn doc_count(&self) -> usize {
        self.docids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn docid(&self, ordinal: u32) -> &str {
        &self.docids[ordinal as usize]
    }

    pub fn docids(&self) -> &[String] {
        &self.docids
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    /// Free-form provenance string stored in the index file header.
    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    pub fn set_metadata(&mut self, metadata: impl Into<String>) {
        self.metadata = metadata.into();
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; never negative.
    pub fn idf(&self, term: &str) -> f64 {
        idf(self.doc_count(), self.df(term))
    }
}

pub(crate) fn idf(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

const BATCH: usize = 4096;

/// Build an inverted index over `title + " " + text` of each document.
///
/// Tokenization runs in parallel per batch; postings are appended in
/// document order, so the result is identical to a sequential build.
pub fn build_index<I>(documents: I, policy: ScriptPolicy) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut docids = Vec::new();
    let mut doc_lengths = Vec::new();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut batch: Vec<Document> = Vec::with_capacity(BATCH);

    let mut flush = |batch: &mut Vec<Document>| -> Result<()> {
        let counted: Vec<(u32, Vec<(String, u32)>)> = batch
            .par_iter()
            .map(|d| {
                let text = format!("{} {}", d.title, d.text);
                let tokens = tokenize(&text, policy).into_tokens();
                let len = tokens.len() as u32;
                let mut tf: HashMap<String, u32> = HashMap::new();
                for t in tokens {
                    *tf.entry(t).or_insert(0) += 1;
                }
                let mut tf: Vec<_> = tf.into_iter().collect();
                tf.sort_unstable();
                (len, tf)
            })
            .collect();
        for (doc, (len, tf)) in batch.drain(..).zip(counted) {
            if !seen.insert(doc.docid.clone()) {
                return Err(Error::Invalid(format!("duplicate docid `{}`", doc.docid)));
            }
            let ord = u32::try_from(docids.len())
                .map_err(|_| Error::Invalid("corpus exceeds 2^32 documents".into()))?;
            docids.push(doc.docid);
            doc_lengths.push(len);
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting { doc: ord, tf });
            }
        }
        Ok(())
    };

    for doc in documents {
        batch.push(doc?);
        if batch.len() == BATCH {
            flush(&mut batch)?;
        }
    }
    flush(&mut batch)?;

    if docids.is_empty() {
        return Err(Error::Invalid("cannot index an empty corpus".into()));
    }
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    let avgdl = total as f64 / doc_lengths.len() as f64;
    Ok(InvertedIndex {
        policy,
        docids,
        doc_lengths,
        avgdl,
        postings,
        metadata: String::new(),
    })
}

/// Top-`k` BM25 search. Only documents sharing at least one query term are
/// returned; a query with no tokens yields an empty list.
pub fn bm25_search(
    index: &InvertedIndex,
    query: &str,
    k: usize,
    params: Bm25Params,
) -> Vec<ScoredDoc> {
    let mut terms = tokenize(query, index.policy).into_tokens();
    terms.sort_unstable();
    terms.dedup();

    let n = index.doc_count();
    let avgdl = if index.avgdl > 0.0 { index.avgdl } else { 1.0 };
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for term in &terms {
        let plist = index.postings(term);
        if plist.is_empty() {
            continue;
        }
        let w = idf(n, plist.len());
        for p in plist {
            let tf = p.tf as f64;
            let dl = index.doc_lengths[p.doc as usize] as f64;
            let norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            *acc.entry(p.doc).or_insert(0.0) += w * tf / (tf + norm);
        }
    }
    let hits = acc
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(ord, s)| ScoredDoc::new(index.docid(ord), s))
        .collect();
    top_k(hits, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn docs(texts: &[&str]) -> Vec<Result<Document>> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Ok(Document::new(format!("d{i:03}"), "", *t)))
            .collect()
    }

    /// Independent scorer: recount everything from raw token lists.
    fn brute_force(corpus: &[(String, Vec<String>)], query: &str, p: Bm25Params) -> Vec<ScoredDoc> {
        let n = corpus.len() as f64;
        let avgdl = corpus.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
        let mut q: Vec<String> = tokenize(query, ScriptPolicy::Whitespace).into_tokens();
        q.sort();
        q.dedup();
        let mut out = Vec::new();
        for (id, toks) in corpus {
            let dl = toks.len() as f64;
            let mut s = 0.0;
            for t in &q {
                let df = corpus.iter().filter(|(_, d)| d.contains(t)).count() as f64;
                let tf = toks.iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf / (tf + p.k1 * (1.0 - p.b + p.b * dl / avgdl));
            }
            if s > 0.0 {
                out.push(ScoredDoc::new(id.clone(), s));
            }
        }
        out.sort_by(crate::run::rank_cmp);
        out
    }

    #[test]
    fn worked_single_doc_value() {
        let idx = build_index(docs(&["a b"]), ScriptPolicy::Whitespace).unwrap();
        let hits = bm25_search(&idx, "a", 10, Bm25Params::new(0.9, 0.4).unwrap());
        let expected = (4.0f64 / 3.0).ln() / 1.9;
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - expected).abs() < 1e-12);
        assert!((hits[0].score - 0.15141).abs() < 1e-5);
    }

    #[test]
    fn avgdl_and_df() {
        let idx = build_index(docs(&["x y z", "x a b c d"]), ScriptPolicy::Whitespace).unwrap();
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.avgdl(), 4.0);
        assert_eq!(idx.df("x"), 2);
        assert_eq!(idx.postings("x").len(), 2);
        assert_eq!(idx.df("nope"), 0);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(build_index(Vec::new(), ScriptPolicy::Auto).is_err());
    }

    #[test]
    fn duplicate_docid_rejected() {
        let d = vec![
            Ok(Document::new("x", "", "a")),
            Ok(Document::new("x", "", "b")),
        ];
        assert!(build_index(d, ScriptPolicy::Auto).is_err());
    }

    #[test]
    fn absent_term_and_empty_query() {
        let idx = build_index(docs(&["a b", "b c"]), ScriptPolicy::Whitespace).unwrap();
        let p = Bm25Params::default();
        let with = bm25_search(&idx, "b", 10, p);
        let with_absent = bm25_search(&idx, "b zzz", 10, p);
        assert_eq!(with, with_absent);
        assert!(bm25_search(&idx, " ,, ", 10, p).is_empty());
    }

    #[test]
    fn title_is_indexed() {
        let d = vec![Ok(Document::new("d1", "Kilimanjaro", "mlima mrefu"))];
        let idx = build_index(d, ScriptPolicy::Auto).unwrap();
        assert_eq!(idx.doc_lengths(), &[3]);
        assert_eq!(bm25_search(&idx, "kilimanjaro", 5, Bm25Params::default()).len(), 1);
    }

    #[test]
    fn idf_non_negative() {
        for n in 1..50 {
            for df in 0..=n {
                assert!(idf(n, df) >= 0.0);
            }
        }
    }

    #[test]
    fn twenty_doc_random_corpus_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let texts: Vec<String> = (0..20)
            .map(|_| {
                let len = rng.random_range(1..15);
                (0..len)
                    .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let corpus: Vec<(String, Vec<String>)> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (format!("d{i:03}"), tokenize(&format!(" {t}"), ScriptPolicy::Whitespace).into_tokens())
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let idx = build_index(docs(&refs), ScriptPolicy::Whitespace).unwrap();
        let p = Bm25Params::default();
        for q in ["w1", "w2 w3", "w0 w0 w11", "w5 w6 w7 w8"] {
            let expected = brute_force(&corpus, q, p);
            for k in [1, 5, 20, 100] {
                let got = bm25_search(&idx, q, k, p);
                let want: Vec<_> = expected.iter().take(k).cloned().collect();
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.docid, w.docid);
                    assert!((g.score - w.score).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_build() {
        let texts = ["alpha beta", "beta gamma", "北京 大学"];
        let a = build_index(docs(&texts), ScriptPolicy::Auto).unwrap();
        let b = build_index(docs(&texts), ScriptPolicy::Auto).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_boundary_build_matches() {
        // More than one batch to exercise the flush path.
        let texts: Vec<String> = (0..BATCH + 17).map(|i| format!("t{} common", i % 97)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let idx = build_index(docs(&refs), ScriptPolicy::Whitespace).unwrap();
        assert_eq!(idx.doc_count(), BATCH + 17);
        assert_eq!(idx.df("common"), BATCH + 17);
        let pl = idx.postings("t3");
        assert!(pl.windows(2).all(|w| w[0].doc < w[1].doc));
    }

    proptest! {
        #[test]
        fn insertion_order_does_not_change_scores(
            texts in proptest::collection::vec("[a-e]( [a-e]){0,6}", 2..12),
            seed in 0u64..1000,
        ) {
            let original: Vec<Result<Document>> = texts.iter().enumerate()
                .map(|(i, t)| Ok(Document::new(format!("d{i}"), "", t.clone()))).collect();
            let mut order: Vec<usize> = (0..texts.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let shuffled: Vec<Result<Document>> = order.iter()
                .map(|&i| Ok(Document::new(format!("d{i}"), "", texts[i].clone()))).collect();
            let a = build_index(original, ScriptPolicy::Whitespace).unwrap();
            let b = build_index(shuffled, ScriptPolicy::Whitespace).unwrap();
            for q in ["a", "b c", "e d a"] {
                prop_assert_eq!(
                    bm25_search(&a, q, 100, Bm25Params::default()),
                    bm25_search(&b, q, 100, Bm25Params::default())
                );
            }
        }

        #[test]
        fn extra_occurrence_never_lowers_score(
            base in proptest::collection::vec("[a-d]( [a-d]){0,5}", 3..8),
        ) {
            // Add one more "a" to doc 0 while it already contains "a": df is
            // unchanged, tf and dl both grow by one.
            let mut texts = base.clone();
            texts[0] = format!("a {}", texts[0]);
            let mut more = texts.clone();
            more[0] = format!("a {}", more[0]);
            let p = Bm25Params::default();
            let score_of = |ts: &[String]| {
                let d: Vec<Result<Document>> = ts.iter().enumerate()
                    .map(|(i, t)| Ok(Document::new(format!("d{i}"), "", t.clone()))).collect();
                let idx = build_index(d, ScriptPolicy::Whitespace).unwrap();
                bm25_search(&idx, "a", 100, p).into_iter().find(|h| h.docid == "d0").unwrap().score
            };
            let before = score_of(&texts);
            let after = score_of(&more);
            prop_assert!(after >= before - 1e-12);
        }
    }
}
