//! Runs: per-query ranked `(docid, score)` lists, and the TREC run format.
//!
//! Within a query, entries are ordered by score descending with ties broken by
//! ascending docid. Queries are kept in qid order so every writer is
//! deterministic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::{self, fmt_score, Header, Lines};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub docid: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(docid: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            docid: docid.into(),
            score,
        }
    }
}

/// Score descending, then docid ascending.
pub fn rank_cmp(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.docid.cmp(&b.docid))
}

pub fn sort_ranked(list: &mut [ScoredDoc]) {
    list.sort_unstable_by(rank_cmp);
}

/// The `k` best entries in rank order.
pub fn top_k(mut list: Vec<ScoredDoc>, k: usize) -> Vec<ScoredDoc> {
    if k == 0 {
        return Vec::new();
    }
    if list.len() > k {
        list.select_nth_unstable_by(k - 1, rank_cmp);
        list.truncate(k);
    }
    sort_ranked(&mut list);
    list
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub tag: String,
    entries: BTreeMap<String, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Run {
            tag: tag.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Insert the list for `qid`, sorting it into rank order. Fails on a
    /// duplicate docid within the list or a non-finite score.
    pub fn insert(&mut self, qid: impl Into<String>, mut list: Vec<ScoredDoc>) -> Result<()> {
        let qid = qid.into();
        let mut seen = HashSet::with_capacity(list.len());
        for d in &list {
            if !d.score.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite score for ({qid}, {})",
                    d.docid
                )));
            }
            if !seen.insert(d.docid.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate docid `{}` for query `{qid}`",
                    d.docid
                )));
            }
        }
        sort_ranked(&mut list);
        self.entries.insert(qid, list);
        Ok(())
    }

    /// Insert a list whose order is already meaningful and must be kept as
    /// is (e.g. after a monotone rescoring).
    pub(crate) fn insert_ordered(&mut self, qid: String, list: Vec<ScoredDoc>) {
        self.entries.insert(qid, list);
    }

    pub fn get(&self, qid: &str) -> Option<&[ScoredDoc]> {
        self.entries.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.entries.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.entries.len()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-query docid order.
    pub fn ranking(&self, qid: &str) -> Vec<&str> {
        self.get(qid)
            .map(|l| l.iter().map(|d| d.docid.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }
}

/// Parse a TREC run: `qid Q0 docid rank score tag`. The rank column is
/// checked for shape but ordering is rebuilt from scores.
pub fn read_run<R: BufRead>(reader: R, name: &str) -> Result<Run> {
    let mut lists: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut tag: Option<String> = None;
    for item in Lines::new(reader, name) {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                name,
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        cols[3]
            .parse::<u64>()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(name, line_no, format!("bad rank `{}`", cols[3])))?;
        let score = textio::parse_f64(cols[4])
            .ok_or_else(|| Error::parse(name, line_no, format!("bad score `{}`", cols[4])))?;
        if !seen.insert((cols[0].to_string(), cols[2].to_string())) {
            return Err(Error::DuplicateId {
                file: name.to_string(),
                line: line_no,
                id: format!("{} {}", cols[0], cols[2]),
            });
        }
        tag.get_or_insert_with(|| cols[5].to_string());
        lists
            .entry(cols[0].to_string())
            .or_default()
            .push(ScoredDoc::new(cols[2], score));
    }
    let mut run = Run::new(tag.unwrap_or_else(|| "run".to_string()));
    for (qid, mut list) in lists {
        sort_ranked(&mut list);
        run.entries.insert(qid, list);
    }
    Ok(run)
}

pub fn load_run(path: &Path) -> Result<Run> {
    read_run(textio::open_reader(path)?, &textio::display_name(path))
}

pub fn write_run<W: Write + ?Sized>(w: &mut W, run: &Run, header: &Header) -> std::io::Result<()> {
    header.write_to(w)?;
    let tag = if run.tag.is_empty() { "run" } else { run.tag.as_str() };
    for (qid, list) in &run.entries {
        for (i, d) in list.iter().enumerate() {
            writeln!(w, "{qid} Q0 {} {} {} {tag}", d.docid, i + 1, fmt_score(d.score))?;
        }
    }
    Ok(())
}

pub fn save_run(path: &Path, run: &Run, header: &Header) -> Result<()> {
    let mut w = textio::create_writer(path)?;
    write_run(&mut w, run, header)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let v = vec![
            ScoredDoc::new("b", 1.0),
            ScoredDoc::new("a", 1.0),
            ScoredDoc::new("c", 2.0),
            ScoredDoc::new("d", 0.5),
        ];
        let got: Vec<_> = top_k(v, 3).into_iter().map(|d| d.docid).collect();
        assert_eq!(got, vec!["c", "a", "b"]);
    }

    #[test]
    fn read_sorts_by_score() {
        let src = "q1 Q0 d2 1 0.5 t\nq1 Q0 d1 2 0.9 t\n";
        let run = read_run(src.as_bytes(), "r").unwrap();
        assert_eq!(run.ranking("q1"), vec!["d1", "d2"]);
        assert_eq!(run.tag, "t");
    }

    #[test]
    fn read_rejects_duplicates_and_bad_rows() {
        let dup = "q1 Q0 d1 1 0.5 t\nq1 Q0 d1 2 0.4 t\n";
        assert!(matches!(
            read_run(dup.as_bytes(), "r"),
            Err(Error::DuplicateId { line: 2, .. })
        ));
        assert!(matches!(
            read_run("q1 Q0 d1 1 abc t\n".as_bytes(), "r"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_run("q1 Q0 d1 0 1 t\n".as_bytes(), "r"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn header_is_skipped() {
        let src = "# seed=7\nq1 Q0 d1 1 1 t\n";
        let run = read_run(src.as_bytes(), "r").unwrap();
        assert_eq!(run.num_entries(), 1);
    }

    proptest! {
        #[test]
        fn write_read_write_is_stable(
            lists in proptest::collection::btree_map(
                "q[0-9]{1,2}",
                proptest::collection::btree_map("d[0-9]{1,3}", -1e6f64..1e6, 1..8),
                1..5,
            )
        ) {
            let mut run = Run::new("sys");
            for (q, docs) in lists {
                run.insert(q, docs.into_iter().map(|(d, s)| ScoredDoc::new(d, s)).collect()).unwrap();
            }
            let header = Header::new().with("seed=1");
            let mut a = Vec::new();
            write_run(&mut a, &run, &header).unwrap();
            let back = read_run(a.as_slice(), "r").unwrap();
            prop_assert_eq!(&back, &run);
            let mut b = Vec::new();
            write_run(&mut b, &back, &header).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
