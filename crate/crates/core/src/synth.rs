//! Deterministic trilingual toy corpus with planted relevance.
//!
//! Each language (`en`, `sw`, `zh`) gets 10 evaluation queries of three
//! unique pseudo-word keywords, 5 paraphrased train queries and 100
//! passages. Per evaluation query `q` (query vector `e_q`):
//!
//! | doc      | text                         | vector                      |
//! |----------|------------------------------|-----------------------------|
//! | `L` (+)  | all three keywords           | `0.6 e_q + 0.8 e_a`         |
//! | `S` (+)  | no keyword                   | `e_q`                       |
//! | `Xa/Xb`  | one keyword each             | `e_a` / `e_b`               |
//! | `Va/Vb`  | no keyword                   | `0.7 e_q + sqrt(0.51) e_*`  |
//!
//! plus 40 keyword-free fillers on the noise plane `(e_a, e_b)`. Every
//! passage has the same token length, so BM25 finds `L` (then the `X`
//! distractors) but never `S`, while dot-product search ranks `S` first and
//! `L` behind both `V` distractors. After min-max fusion with equal weights
//! `L` scores 0.8, `S` 0.5 and everything else at most 0.35.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::corpus::{write_corpus, write_qrels, write_topics, Document, JudgmentSet, Query, Split, Topics};
use crate::dense::{write_embeddings, EmbeddingStore, Metric};
use crate::error::Result;
use crate::rng::derive_rng;
use crate::textio::{self, Header};

pub const LANGUAGES: [&str; 3] = ["en", "sw", "zh"];
pub const QUERIES_PER_LANGUAGE: usize = 10;
pub const TRAIN_QUERIES_PER_LANGUAGE: usize = 5;
pub const FILLERS_PER_LANGUAGE: usize = 40;
/// 30 query axes plus two noise axes.
pub const DIM: usize = 32;
const NOISE_A: usize = 30;
const NOISE_B: usize = 31;

const EN_FILLER: [&str; 30] = [
    "river", "market", "window", "garden", "village", "letter", "winter", "station", "harbor",
    "candle", "forest", "ladder", "pocket", "thunder", "meadow", "button", "silver", "basket",
    "engine", "valley", "mirror", "shadow", "orchard", "pillow", "bridge", "kettle", "lantern",
    "saddle", "timber", "castle",
];

const SW_FILLER: [&str; 30] = [
    "mto", "soko", "shule", "nyumba", "mlima", "chakula", "kitabu", "barabara", "mvua", "jua",
    "bahari", "kijiji", "mti", "maji", "rafiki", "kazi", "gari", "ndege", "samaki", "mwezi",
    "nyota", "upepo", "mchanga", "dirisha", "mlango", "kiti", "meza", "taa", "kalamu", "bustani",
];

/// One language's share of the toy data.
#[derive(Debug, Clone)]
pub struct SynthLanguage {
    pub language: String,
    pub docs: Vec<Document>,
    pub topics: Topics,
    pub qrels: JudgmentSet,
    pub train_topics: Topics,
    pub train_qrels: JudgmentSet,
    pub query_vectors: EmbeddingStore,
    pub doc_vectors: EmbeddingStore,
}

impl SynthLanguage {
    /// Planted positives for an evaluation query id.
    pub fn planted(&self, qid: &str) -> Vec<String> {
        self.qrels.positives(qid).into_iter().map(str::to_string).collect()
    }
}

fn unit(axis: usize) -> Vec<f32> {
    let mut v = vec![0.0; DIM];
    v[axis] = 1.0;
    v
}

fn mix(terms: &[(usize, f64)]) -> Vec<f32> {
    let mut v = vec![0.0f32; DIM];
    for &(axis, w) in terms {
        v[axis] += w as f32;
    }
    v
}

struct Vocab {
    cjk: bool,
    filler: Vec<String>,
}

impl Vocab {
    fn for_language(lang: &str) -> Self {
        match lang {
            "en" => Vocab { cjk: false, filler: EN_FILLER.iter().map(|s| s.to_string()).collect() },
            "sw" => Vocab { cjk: false, filler: SW_FILLER.iter().map(|s| s.to_string()).collect() },
            _ => Vocab {
                cjk: true,
                filler: (0..40).map(|i| char::from_u32(0x6A00 + i).unwrap().to_string()).collect(),
            },
        }
    }

    /// Tokens per keyword (CJK keywords are two characters, each a token).
    fn width(&self) -> usize {
        if self.cjk {
            2
        } else {
            1
        }
    }

    /// Passage length in tokens, title included.
    fn doc_len(&self) -> usize {
        if self.cjk {
            18
        } else {
            10
        }
    }

    fn join(&self, words: &[String]) -> String {
        words.join(if self.cjk { "" } else { " " })
    }
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    (0..3)
        .flat_map(|_| {
            [
                C[rng.random_range(0..C.len())] as char,
                V[rng.random_range(0..V.len())] as char,
            ]
        })
        .collect()
}

fn language(lang: &str, li: usize, seed: u64) -> Result<SynthLanguage> {
    let vocab = Vocab::for_language(lang);
    let mut rng = derive_rng(seed, "synth", lang);

    let n_kw = QUERIES_PER_LANGUAGE * 3;
    let mut keywords: Vec<String> = Vec::with_capacity(n_kw);
    if vocab.cjk {
        for i in 0..n_kw as u32 {
            let a = char::from_u32(0x5000 + 2 * i).unwrap();
            let b = char::from_u32(0x5001 + 2 * i).unwrap();
            keywords.push(format!("{a}{b}"));
        }
    } else {
        while keywords.len() < n_kw {
            let w = pseudo_word(&mut rng);
            if !keywords.contains(&w) && !vocab.filler.contains(&w) {
                keywords.push(w);
            }
        }
    }

    let mut filler = |n: usize| -> Vec<String> {
        (0..n).map(|_| vocab.filler[rng.random_range(0..vocab.filler.len())].clone()).collect()
    };
    let len = vocab.doc_len();
    let title_len = if vocab.cjk { 2 } else { 1 };
    let body_len = len - title_len;
    let mut doc = |id: String, kws: &[&String]| -> Document {
        let title = vocab.join(&filler(title_len));
        let mut words: Vec<String> = kws.iter().map(|s| s.to_string()).collect();
        words.extend(filler(body_len - kws.len() * vocab.width()));
        Document::new(id, title, vocab.join(&words))
    };

    let mut docs = Vec::new();
    let mut doc_vecs = Vec::new();
    let mut queries = Vec::new();
    let mut train = Vec::new();
    let mut query_vecs = Vec::new();
    let mut qrels = JudgmentSet::new();
    let mut train_qrels = JudgmentSet::new();
    let side = 0.51f64.sqrt();

    for q in 0..QUERIES_PER_LANGUAGE {
        let axis = li * QUERIES_PER_LANGUAGE + q;
        let kw = &keywords[3 * q..3 * q + 3];
        let id = |kind: &str| format!("{lang}-{kind}{q:02}");

        docs.push(doc(id("L"), &[&kw[0], &kw[1], &kw[2]]));
        doc_vecs.push((id("L"), mix(&[(axis, 0.6), (NOISE_A, 0.8)])));
        docs.push(doc(id("S"), &[]));
        doc_vecs.push((id("S"), unit(axis)));
        docs.push(doc(id("Xa"), &[&kw[0]]));
        doc_vecs.push((id("Xa"), unit(NOISE_A)));
        docs.push(doc(id("Xb"), &[&kw[1]]));
        doc_vecs.push((id("Xb"), unit(NOISE_B)));
        docs.push(doc(id("Va"), &[]));
        doc_vecs.push((id("Va"), mix(&[(axis, 0.7), (NOISE_A, side)])));
        docs.push(doc(id("Vb"), &[]));
        doc_vecs.push((id("Vb"), mix(&[(axis, 0.7), (NOISE_B, side)])));

        let qid = format!("{lang}-q{q:02}");
        queries.push(Query {
            qid: qid.clone(),
            text: vocab.join(kw),
            language: lang.to_string(),
            split: Split::Dev,
        });
        query_vecs.push((qid.clone(), unit(axis)));
        qrels.insert(qid.as_str(), id("L"), 1);
        qrels.insert(qid.as_str(), id("S"), 1);
        qrels.insert(qid.as_str(), id("Xa"), 0);

        if q < TRAIN_QUERIES_PER_LANGUAGE {
            let tid = format!("{lang}-t{q:02}");
            train.push(Query {
                qid: tid.clone(),
                text: vocab.join(&[kw[2].clone(), kw[0].clone()]),
                language: lang.to_string(),
                split: Split::Train,
            });
            query_vecs.push((tid.clone(), mix(&[(axis, 0.9), (NOISE_B, 0.19f64.sqrt())])));
            train_qrels.insert(tid.as_str(), id("L"), 1);
            train_qrels.insert(tid.as_str(), id("S"), 1);
            train_qrels.insert(tid.as_str(), id("Xb"), 0);
        }
    }

    for i in 0..FILLERS_PER_LANGUAGE {
        let id = format!("{lang}-F{i:02}");
        docs.push(doc(id.clone(), &[]));
        let t = (i as f64 + 0.5) / FILLERS_PER_LANGUAGE as f64 * std::f64::consts::FRAC_PI_2;
        doc_vecs.push((id, mix(&[(NOISE_A, t.cos()), (NOISE_B, t.sin())])));
    }

    Ok(SynthLanguage {
        language: lang.to_string(),
        docs,
        topics: Topics::from_queries(queries)?,
        qrels,
        train_topics: Topics::from_queries(train)?,
        train_qrels,
        query_vectors: EmbeddingStore::from_records(query_vecs, Metric::Dot)?,
        doc_vectors: EmbeddingStore::from_records(doc_vecs, Metric::Dot)?,
    })
}

/// Generate all three languages.
pub fn synth_corpus(seed: u64) -> Result<Vec<SynthLanguage>> {
    LANGUAGES
        .iter()
        .enumerate()
        .map(|(li, lang)| language(lang, li, seed))
        .collect()
}

/// File names written per language directory.
pub const FILES: [&str; 7] = [
    "corpus.jsonl",
    "topics.tsv",
    "qrels.txt",
    "train-topics.tsv",
    "train-qrels.txt",
    "queries.vec.tsv",
    "docs.vec.tsv",
];

/// Write the corpus under `dir/<lang>/` and return the written paths.
pub fn write_synth(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let header = Header::new().with(format!("mirank synthetic corpus seed={seed}"));
    let mut written = Vec::new();
    for lang in synth_corpus(seed)? {
        let base = dir.join(&lang.language);
        let save = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<PathBuf> {
            let path = base.join(name);
            textio::save_with(&path, f)?;
            Ok(path)
        };
        written.push(save(FILES[0], &|w| write_corpus(w, &lang.docs))?);
        written.push(save(FILES[1], &|w| write_topics(w, &lang.topics))?);
        written.push(save(FILES[2], &|w| write_qrels(w, &lang.qrels, &header))?);
        written.push(save(FILES[3], &|w| write_topics(w, &lang.train_topics))?);
        written.push(save(FILES[4], &|w| write_qrels(w, &lang.train_qrels, &header))?);
        written.push(save(FILES[5], &|w| write_embeddings(w, &lang.query_vectors, &header))?);
        written.push(save(FILES[6], &|w| write_embeddings(w, &lang.doc_vectors, &header))?);
    }
    Ok(written)
}
