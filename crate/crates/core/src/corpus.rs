//! Corpus, topic and qrels ingestion plus dataset statistics.
//!
//! Formats:
//! - corpus: one JSON object per line with string fields `docid`, `title`,
//!   `text` (extra fields ignored);
//! - topics: `qid<TAB>query text`, no header;
//! - qrels: `qid Q0 docid grade`, whitespace separated, no header.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio::{self, Header, Lines};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub docid: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(docid: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            docid: docid.into(),
            title: title.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    TestA,
    TestB,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::TestA, Split::TestB];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::TestA => "test-a",
            Split::TestB => "test-b",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test-a" | "testa" => Ok(Split::TestA),
            "test-b" | "testb" => Ok(Split::TestB),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub qid: String,
    pub text: String,
    pub language: String,
    pub split: Split,
}

/// Queries of one (language, split), in file order, with lookup by qid.
#[derive(Debug, Clone, Default)]
pub struct Topics {
    queries: Vec<Query>,
    by_id: HashMap<String, usize>,
}

impl Topics {
    pub fn from_queries(queries: Vec<Query>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if by_id.insert(q.qid.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate qid `{}`", q.qid)));
            }
        }
        Ok(Topics { queries, by_id })
    }

    pub fn get(&self, qid: &str) -> Option<&Query> {
        self.by_id.get(qid).map(|&i| &self.queries[i])
    }

    pub fn text(&self, qid: &str) -> Result<&str> {
        self.get(qid)
            .map(|q| q.text.as_str())
            .ok_or_else(|| Error::UnknownId(qid.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Query> {
        self.queries.iter()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Graded relevance labels keyed by `(qid, docid)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl JudgmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a judgment; returns false if `(qid, docid)` was already present.
    pub fn insert(&mut self, qid: impl Into<String>, docid: impl Into<String>, grade: u32) -> bool {
        let docs = self.entries.entry(qid.into()).or_default();
        match docs.entry(docid.into()) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(grade);
                true
            }
        }
    }

    pub fn grade(&self, qid: &str, docid: &str) -> Option<u32> {
        self.entries.get(qid).and_then(|d| d.get(docid)).copied()
    }

    pub fn is_positive(&self, qid: &str, docid: &str) -> bool {
        self.grade(qid, docid).is_some_and(|g| g >= 1)
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.entries.iter().map(|(q, d)| (q.as_str(), d))
    }

    pub fn positives(&self, qid: &str) -> HashSet<&str> {
        self.entries
            .get(qid)
            .map(|d| {
                d.iter()
                    .filter(|(_, &g)| g >= 1)
                    .map(|(id, _)| id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn num_queries(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One row of per-language dataset statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsRow {
    pub language: String,
    pub queries: BTreeMap<Split, usize>,
    pub judgments: BTreeMap<Split, usize>,
    pub passages: usize,
    /// Absent when article metadata is unavailable.
    pub articles: Option<usize>,
}

impl StatsRow {
    pub fn write_tsv<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "lang")?;
        for s in Split::ALL {
            write!(w, "\t{s}.q\t{s}.j")?;
        }
        writeln!(w, "\tpassages\tarticles")?;
        write!(w, "{}", self.language)?;
        for s in Split::ALL {
            write!(
                w,
                "\t{}\t{}",
                self.queries.get(&s).copied().unwrap_or(0),
                self.judgments.get(&s).copied().unwrap_or(0)
            )?;
        }
        let articles = self
            .articles
            .map(|a| a.to_string())
            .unwrap_or_else(|| "-".to_string());
        writeln!(w, "\t{}\t{}", self.passages, articles)
    }
}

/// Streaming reader over a line-delimited JSON corpus.
///
/// Yields documents in file order. Duplicate docids are detected with a set of
/// seen ids; nothing else is retained between records.
pub struct CorpusReader<R> {
    lines: Lines<R>,
    seen: HashSet<String>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, name: impl Into<String>) -> Self {
        CorpusReader {
            lines: Lines::new(reader, name),
            seen: HashSet::new(),
        }
    }
}

#[derive(Deserialize)]
struct RawDoc {
    docid: String,
    #[serde(default)]
    title: String,
    text: String,
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line_no, line) = match self.lines.next()? {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            if line.trim().is_empty() {
                continue;
            }
            let file = self.lines.file().to_string();
            let raw: RawDoc = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Some(Err(Error::parse(file, line_no, format!("malformed record: {e}")))),
            };
            if raw.text.trim().is_empty() {
                return Some(Err(Error::parse(
                    file,
                    line_no,
                    format!("document `{}` has empty text", raw.docid),
                )));
            }
            if !self.seen.insert(raw.docid.clone()) {
                return Some(Err(Error::DuplicateId {
                    file,
                    line: line_no,
                    id: raw.docid,
                }));
            }
            return Some(Ok(Document {
                docid: raw.docid,
                title: raw.title,
                text: raw.text,
            }));
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<CorpusReader<std::io::BufReader<std::fs::File>>> {
    Ok(CorpusReader::new(
        textio::open_reader(path)?,
        textio::display_name(path),
    ))
}

/// Load a whole corpus into a docid-keyed lookup.
pub fn load_corpus_map(path: &Path) -> Result<CorpusLookup> {
    let docs = load_corpus(path)?.collect::<Result<Vec<_>>>()?;
    Ok(CorpusLookup::new(docs))
}

/// In-memory corpus with lookup by docid; preserves file order.
#[derive(Debug, Clone, Default)]
pub struct CorpusLookup {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl CorpusLookup {
    pub fn new(docs: Vec<Document>) -> Self {
        let by_id = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.docid.clone(), i))
            .collect();
        CorpusLookup { docs, by_id }
    }

    pub fn get(&self, docid: &str) -> Option<&Document> {
        self.by_id.get(docid).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.docid.as_str())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub fn write_corpus<'a, W: Write + ?Sized>(
    w: &mut W,
    docs: impl IntoIterator<Item = &'a Document>,
) -> std::io::Result<()> {
    for d in docs {
        let line = serde_json::to_string(d).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_topics<R: BufRead>(
    reader: R,
    name: &str,
    language: &str,
    split: Split,
) -> Result<Topics> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for item in Lines::new(reader, name) {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let Some((qid, text)) = line.split_once('\t') else {
            return Err(Error::parse(name, line_no, "expected 2 tab-separated columns"));
        };
        if qid.is_empty() {
            return Err(Error::parse(name, line_no, "empty qid"));
        }
        if !seen.insert(qid.to_string()) {
            return Err(Error::DuplicateId {
                file: name.to_string(),
                line: line_no,
                id: qid.to_string(),
            });
        }
        queries.push(Query {
            qid: qid.to_string(),
            text: text.to_string(),
            language: language.to_string(),
            split,
        });
    }
    Topics::from_queries(queries)
}

pub fn load_topics(path: &Path, language: &str, split: Split) -> Result<Topics> {
    read_topics(
        textio::open_reader(path)?,
        &textio::display_name(path),
        language,
        split,
    )
}

/// Topics stay in the raw `qid<TAB>text` layout; tabs and line breaks inside
/// a query text cannot be represented there and are written as spaces.
pub fn write_topics<W: Write + ?Sized>(w: &mut W, topics: &Topics) -> std::io::Result<()> {
    for q in topics.iter() {
        let text = q.text.replace(['\t', '\n', '\r'], " ");
        writeln!(w, "{}\t{}", q.qid, text)?;
    }
    Ok(())
}

pub fn read_qrels<R: BufRead>(reader: R, name: &str) -> Result<JudgmentSet> {
    let mut set = JudgmentSet::new();
    for item in Lines::new(reader, name) {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                name,
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(name, line_no, format!("non-integer grade `{}`", cols[3])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(name, line_no, format!("grade {grade} out of range")))?;
        if !set.insert(cols[0], cols[2], grade) {
            return Err(Error::DuplicateId {
                file: name.to_string(),
                line: line_no,
                id: format!("{} {}", cols[0], cols[2]),
            });
        }
    }
    Ok(set)
}

pub fn load_qrels(path: &Path) -> Result<JudgmentSet> {
    read_qrels(textio::open_reader(path)?, &textio::display_name(path))
}

pub fn write_qrels<W: Write + ?Sized>(w: &mut W, qrels: &JudgmentSet, header: &Header) -> std::io::Result<()> {
    header.write_to(w)?;
    for (qid, docs) in qrels.queries() {
        for (docid, grade) in docs {
            writeln!(w, "{qid} Q0 {docid} {grade}")?;
        }
    }
    Ok(())
}

/// Count queries, judgments and passages for one language.
///
/// `passages` is the number of corpus records; article counts are left
/// absent since passages carry no article metadata.
pub fn corpus_stats<'a>(
    language: &str,
    passages: usize,
    topics: impl IntoIterator<Item = (Split, &'a Topics)>,
    qrels: impl IntoIterator<Item = (Split, &'a JudgmentSet)>,
) -> StatsRow {
    let mut queries = BTreeMap::new();
    for (split, t) in topics {
        *queries.entry(split).or_insert(0) += t.len();
    }
    let mut judgments = BTreeMap::new();
    for (split, j) in qrels {
        *judgments.entry(split).or_insert(0) += j.len();
    }
    StatsRow {
        language: language.to_string(),
        queries,
        judgments,
        passages,
        articles: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(data: &str) -> Vec<Result<Document>> {
        CorpusReader::new(data.as_bytes(), "c.jsonl").collect()
    }

    #[test]
    fn topics_fold_control_whitespace() {
        let q = Query { qid: "q1".into(), text: "a\tb\nc".into(), language: "sw".into(), split: Split::Dev };
        let mut out = Vec::new();
        write_topics(&mut out, &Topics::from_queries(vec![q]).unwrap()).unwrap();
        assert_eq!(out, b"q1\ta b c\n");
        let back = read_topics(&out[..], "t", "sw", Split::Dev).unwrap();
        assert_eq!(back.text("q1").unwrap(), "a b c");
    }

    #[test]
    fn corpus_field_mapping() {
        let docs = corpus(r#"{"docid":"d1","title":"T","text":"body"}"#);
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].as_ref().unwrap(), &Document::new("d1", "T", "body"));
    }

    #[test]
    fn corpus_extra_fields_ignored_and_title_optional() {
        let docs = corpus(r#"{"docid":"d1","text":"body","url":"x"}"#);
        assert_eq!(docs[0].as_ref().unwrap().title, "");
    }

    #[test]
    fn empty_corpus() {
        assert!(corpus("").is_empty());
    }

    #[test]
    fn duplicate_docid_reports_line() {
        let docs = corpus(
            "{\"docid\":\"d1\",\"title\":\"\",\"text\":\"a\"}\n{\"docid\":\"d1\",\"title\":\"\",\"text\":\"b\"}\n",
        );
        assert!(docs[0].is_ok());
        match &docs[1] {
            Err(Error::DuplicateId { line, id, .. }) => {
                assert_eq!(*line, 2);
                assert_eq!(id, "d1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_corpus_line() {
        let docs = corpus("{\"docid\":\"d1\",\"text\":\"a\"}\nnot json\n");
        assert!(matches!(docs[1], Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_text_rejected() {
        let docs = corpus(r#"{"docid":"d1","title":"t","text":"   "}"#);
        assert!(matches!(docs[0], Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn streaming_touches_each_record_once() {
        struct Counting<R> {
            inner: R,
            newlines: usize,
        }
        impl<R: std::io::Read> std::io::Read for Counting<R> {
            fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                let n = self.inner.read(buf)?;
                self.newlines += buf[..n].iter().filter(|&&b| b == b'\n').count();
                Ok(n)
            }
        }
        let mut data = String::new();
        for i in 0..500 {
            data.push_str(&format!("{{\"docid\":\"d{i}\",\"title\":\"\",\"text\":\"x\"}}\n"));
        }
        let mut counting = Counting {
            inner: data.as_bytes(),
            newlines: 0,
        };
        let n = {
            let reader = std::io::BufReader::new(&mut counting);
            CorpusReader::new(reader, "c").inspect(|d| assert!(d.is_ok())).count()
        };
        assert_eq!(n, 500);
        assert_eq!(counting.newlines, 500);
    }

    #[test]
    fn topics_line() {
        let t = read_topics("q1\twhat is bm25\n".as_bytes(), "t", "en", Split::Train).unwrap();
        let q = t.get("q1").unwrap();
        assert_eq!(q.text, "what is bm25");
        assert_eq!(q.split, Split::Train);
    }

    #[test]
    fn topics_missing_tab() {
        let err = read_topics("q1 no tab\n".as_bytes(), "t", "en", Split::Dev).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn qrels_line() {
        let q = read_qrels("q1 Q0 d7 1\n".as_bytes(), "q").unwrap();
        assert_eq!(q.grade("q1", "d7"), Some(1));
        assert!(q.is_positive("q1", "d7"));
    }

    #[test]
    fn qrels_bad_grade() {
        let err = read_qrels("q1 Q0 d7 x\n".as_bytes(), "q").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_qrels("q1 Q0 d7 -1\n".as_bytes(), "q").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn qrels_wrong_columns() {
        let err = read_qrels("q1 Q0 d7 1\nq1 d8 1\n".as_bytes(), "q").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn qrels_roundtrip() {
        let src = "q2 Q0 a 0\nq1 Q0 d7 1\nq1 Q0 d3 1\n";
        let q = read_qrels(src.as_bytes(), "q").unwrap();
        let mut out = Vec::new();
        write_qrels(&mut out, &q, &Header::new()).unwrap();
        let again = read_qrels(out.as_slice(), "q").unwrap();
        assert_eq!(q, again);
        let mut out2 = Vec::new();
        write_qrels(&mut out2, &again, &Header::new()).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn stats_synthetic() {
        let topics = Topics::from_queries(vec![
            Query { qid: "a".into(), text: "x".into(), language: "sw".into(), split: Split::Train },
            Query { qid: "b".into(), text: "y".into(), language: "sw".into(), split: Split::Train },
        ])
        .unwrap();
        let mut qrels = JudgmentSet::new();
        qrels.insert("a", "d1", 1);
        qrels.insert("a", "d2", 0);
        qrels.insert("b", "d1", 1);
        qrels.insert("b", "d3", 1);
        let row = corpus_stats("sw", 3, [(Split::Train, &topics)], [(Split::Train, &qrels)]);
        assert_eq!(row.queries[&Split::Train], 2);
        assert_eq!(row.judgments[&Split::Train], 4);
        assert_eq!(row.passages, 3);
        assert_eq!(row.articles, None);
    }

    #[test]
    fn stats_zero_queries() {
        let row = corpus_stats(
            "sw",
            0,
            [(Split::Dev, &Topics::default())],
            [(Split::Dev, &JudgmentSet::new())],
        );
        assert_eq!(row.queries[&Split::Dev], 0);
        assert_eq!(row.judgments[&Split::Dev], 0);
    }

    #[test]
    fn split_parse() {
        assert_eq!("test-a".parse::<Split>().unwrap(), Split::TestA);
        assert_eq!("TEST_B".parse::<Split>().unwrap(), Split::TestB);
        assert!("bogus".parse::<Split>().is_err());
    }
}
