//! Format checker for every artifact the toolkit reads or writes.
//!
//! Unlike the loaders, which stop at the first problem, the checker keeps
//! going and reports every violation as a [`Diagnostic`] with file, line and
//! rule name. The artifact kind is inferred from the file name.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forge::{PairSource, TrainingPair};
use crate::sparse::read_index;
use crate::textio::{self, unescape_field, Lines};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArtifactKind {
    Corpus,
    Topics,
    Qrels,
    Run,
    Pairs,
    Vectors,
    Scores,
    Index,
    Eval,
    Summary,
    Weights,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 11] = [
        ArtifactKind::Corpus,
        ArtifactKind::Topics,
        ArtifactKind::Qrels,
        ArtifactKind::Run,
        ArtifactKind::Pairs,
        ArtifactKind::Vectors,
        ArtifactKind::Scores,
        ArtifactKind::Index,
        ArtifactKind::Eval,
        ArtifactKind::Summary,
        ArtifactKind::Weights,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Corpus => "corpus",
            ArtifactKind::Topics => "topics",
            ArtifactKind::Qrels => "qrels",
            ArtifactKind::Run => "run",
            ArtifactKind::Pairs => "pairs",
            ArtifactKind::Vectors => "vectors",
            ArtifactKind::Scores => "scores",
            ArtifactKind::Index => "index",
            ArtifactKind::Eval => "eval",
            ArtifactKind::Summary => "summary",
            ArtifactKind::Weights => "weights",
        }
    }

    /// Guess the kind from the file name.
    pub fn infer(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        let kind = if name.ends_with(".idx") {
            ArtifactKind::Index
        } else if name.ends_with(".trec") || name.ends_with(".run") {
            ArtifactKind::Run
        } else if name.ends_with(".pairs.tsv") {
            ArtifactKind::Pairs
        } else if name.ends_with(".vec.tsv") {
            ArtifactKind::Vectors
        } else if name.ends_with(".eval.tsv") {
            ArtifactKind::Eval
        } else if name.ends_with(".weights.tsv") {
            ArtifactKind::Weights
        } else if name == "summary.tsv" {
            ArtifactKind::Summary
        } else if name.ends_with(".jsonl") {
            ArtifactKind::Corpus
        } else if name.contains("qrels") {
            ArtifactKind::Qrels
        } else if name.contains("topics") || name.contains("queries") {
            ArtifactKind::Topics
        } else if name.contains("scores") {
            ArtifactKind::Scores
        } else {
            return None;
        };
        Some(kind)
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown artifact kind `{s}`")))
    }
}

/// One format violation. `line` is 0 for whole-file problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: PathBuf,
    pub line: usize,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: [{}] {}", self.file.display(), self.line, self.rule, self.message)
    }
}

struct Checker<'a> {
    file: &'a Path,
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn report(&mut self, line: usize, rule: &'static str, message: impl Into<String>) {
        self.out.push(Diagnostic {
            file: self.file.to_path_buf(),
            line,
            rule,
            message: message.into(),
        });
    }

    /// Data lines (comments and blanks skipped); stops at unreadable input.
    fn lines(&mut self) -> Vec<(usize, String)> {
        let mut v = Vec::new();
        let it = match Lines::open(self.file) {
            Ok(it) => it,
            Err(e) => {
                self.report(0, "io", e.to_string());
                return v;
            }
        };
        for item in it {
            match item {
                Ok((n, l)) if !textio::is_skippable(&l) => v.push((n, l)),
                Ok(_) => {}
                Err(e) => {
                    let line = match &e {
                        Error::Parse { line, .. } => *line,
                        _ => 0,
                    };
                    self.report(line, "encoding", e.to_string());
                    break;
                }
            }
        }
        v
    }

    fn columns<'l>(&mut self, n: usize, line: &'l str, want: usize, tabs: bool) -> Option<Vec<&'l str>> {
        let cols: Vec<&str> = if tabs {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        if cols.len() == want {
            Some(cols)
        } else {
            self.report(n, "columns", format!("expected {want} columns, found {}", cols.len()));
            None
        }
    }

    fn number(&mut self, n: usize, field: &str, what: &str) -> Option<f64> {
        let v = textio::parse_f64(field);
        if v.is_none() {
            self.report(n, "number", format!("{what} `{field}` is not a finite number"));
        }
        v
    }

    fn empty_file(&mut self, lines: &[(usize, String)]) {
        if lines.is_empty() {
            self.report(0, "empty", "no records");
        }
    }

    fn corpus(&mut self) {
        #[derive(serde::Deserialize)]
        struct Raw {
            docid: String,
            #[serde(default)]
            #[allow(dead_code)]
            title: String,
            text: String,
        }
        let lines = self.lines();
        self.empty_file(&lines);
        let mut seen = HashSet::new();
        for (n, l) in lines {
            match serde_json::from_str::<Raw>(&l) {
                Ok(r) => {
                    if r.docid.is_empty() {
                        self.report(n, "id", "empty docid");
                    }
                    if r.text.trim().is_empty() {
                        self.report(n, "text", format!("document `{}` has empty text", r.docid));
                    }
                    if !seen.insert(r.docid.clone()) {
                        self.report(n, "duplicate", format!("docid `{}` repeated", r.docid));
                    }
                }
                Err(e) => self.report(n, "json", e.to_string()),
            }
        }
    }

    fn topics(&mut self) {
        let lines = self.lines();
        self.empty_file(&lines);
        let mut seen = HashSet::new();
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, 2, true) else { continue };
            if cols[0].is_empty() {
                self.report(n, "id", "empty qid");
            }
            if !seen.insert(cols[0].to_string()) {
                self.report(n, "duplicate", format!("qid `{}` repeated", cols[0]));
            }
        }
    }

    fn qrels(&mut self) {
        let lines = self.lines();
        let mut seen = HashSet::new();
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, 4, false) else { continue };
            match cols[3].parse::<i64>() {
                Ok(g) if g < 0 => self.report(n, "grade", format!("negative grade {g}")),
                Ok(g) if g > u32::MAX as i64 => self.report(n, "grade", format!("grade {g} too large")),
                Ok(_) => {}
                Err(_) => self.report(n, "grade", format!("non-integer grade `{}`", cols[3])),
            }
            if !seen.insert((cols[0].to_string(), cols[2].to_string())) {
                self.report(n, "duplicate", format!("judgment ({}, {}) repeated", cols[0], cols[2]));
            }
        }
    }

    fn run(&mut self) {
        let lines = self.lines();
        let mut seen = HashSet::new();
        // qid -> (last rank, last score)
        let mut last: HashMap<String, (u64, f64)> = HashMap::new();
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, 6, false) else { continue };
            let (qid, docid) = (cols[0], cols[2]);
            if !seen.insert((qid.to_string(), docid.to_string())) {
                self.report(n, "duplicate", format!("({qid}, {docid}) repeated"));
            }
            let rank = match cols[3].parse::<u64>() {
                Ok(r) if r >= 1 => Some(r),
                _ => {
                    self.report(n, "rank", format!("rank `{}` is not an integer >= 1", cols[3]));
                    None
                }
            };
            let score = self.number(n, cols[4], "score");
            if let (Some(r), Some(s)) = (rank, score) {
                if let Some(&(pr, ps)) = last.get(qid) {
                    if r <= pr {
                        self.report(n, "rank", format!("rank {r} does not increase after {pr} for `{qid}`"));
                    } else if s > ps {
                        self.report(n, "order", format!("score {s} above the previous score {ps} for `{qid}`"));
                    }
                }
                last.insert(qid.to_string(), (r, s));
            }
        }
    }

    fn pairs(&mut self) {
        let lines = self.lines();
        let mut seen = HashSet::new();
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, 5, true) else { continue };
            let Some(label) = self.number(n, cols[2], "label") else { continue };
            let source = match PairSource::from_str(cols[3]) {
                Ok(s) => s,
                Err(e) => {
                    self.report(n, "source", e.to_string());
                    continue;
                }
            };
            let pair = TrainingPair {
                qid: cols[0].to_string(),
                query_text: unescape_field(cols[4]),
                docid: cols[1].to_string(),
                label,
                source,
            };
            if let Err(m) = pair.check() {
                self.report(n, "label", m);
            }
            if !seen.insert((cols[0].to_string(), cols[1].to_string(), cols[3].to_string())) {
                self.report(n, "duplicate", format!("pair ({}, {}, {}) repeated", cols[0], cols[1], cols[3]));
            }
        }
    }

    fn vectors(&mut self) {
        let lines = self.lines();
        self.empty_file(&lines);
        let mut dim = None;
        let mut seen = HashSet::new();
        for (n, l) in lines {
            let Some((id, values)) = l.split_once('\t') else {
                self.report(n, "columns", "expected `id<TAB>v1,v2,...`");
                continue;
            };
            if !seen.insert(id.to_string()) {
                self.report(n, "duplicate", format!("id `{id}` repeated"));
            }
            let parsed: Vec<Option<f32>> = values
                .split(',')
                .map(|x| x.trim().parse::<f32>().ok().filter(|v| v.is_finite()))
                .collect();
            if parsed.iter().any(Option::is_none) {
                self.report(n, "number", format!("`{id}` has a missing or non-finite value"));
                continue;
            }
            match dim {
                None => dim = Some(parsed.len()),
                Some(d) if d != parsed.len() => self.report(
                    n,
                    "dimension",
                    format!("`{id}` has dimension {} but earlier vectors have {d}", parsed.len()),
                ),
                _ => {}
            }
        }
    }

    fn scores(&mut self) {
        let lines = self.lines();
        let mut seen = HashSet::new();
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, 3, false) else { continue };
            if let Some(s) = self.number(n, cols[2], "score") {
                if !(0.0..=1.0).contains(&s) {
                    self.report(n, "range", format!("score {s} outside [0, 1]"));
                }
            }
            if !seen.insert((cols[0].to_string(), cols[1].to_string())) {
                self.report(n, "duplicate", format!("({}, {}) repeated", cols[0], cols[1]));
            }
        }
    }

    fn index(&mut self) {
        match textio::open_reader(self.file).and_then(|mut r| read_index(&mut r)) {
            Ok(_) => {}
            Err(e) => self.report(0, "index", e.to_string()),
        }
    }

    /// Tab-separated rows whose last `numeric` columns are numbers.
    fn table(&mut self, width: usize, numeric: usize) {
        let lines = self.lines();
        self.empty_file(&lines);
        for (n, l) in lines {
            let Some(cols) = self.columns(n, &l, width, true) else { continue };
            for c in &cols[width - numeric..] {
                self.number(n, c, "value");
            }
        }
    }
}

/// Check one file as `kind` (inferred from the name when `None`).
pub fn validate_file(path: &Path, kind: Option<ArtifactKind>) -> Vec<Diagnostic> {
    let mut c = Checker {
        file: path,
        out: Vec::new(),
    };
    let Some(kind) = kind.or_else(|| ArtifactKind::infer(path)) else {
        c.report(0, "kind", "cannot tell the artifact kind from the file name");
        return c.out;
    };
    match kind {
        ArtifactKind::Corpus => c.corpus(),
        ArtifactKind::Topics => c.topics(),
        ArtifactKind::Qrels => c.qrels(),
        ArtifactKind::Run => c.run(),
        ArtifactKind::Pairs => c.pairs(),
        ArtifactKind::Vectors => c.vectors(),
        ArtifactKind::Scores => c.scores(),
        ArtifactKind::Index => c.index(),
        ArtifactKind::Eval => c.table(3, 1),
        ArtifactKind::Summary => c.table(4, 1),
        ArtifactKind::Weights => c.table(4, 3),
    }
    c.out
}

/// Check every path; directories are walked recursively (sorted order).
pub fn validate_artifacts<P: AsRef<Path>>(paths: &[P]) -> Vec<Diagnostic> {
    let mut files = Vec::new();
    for p in paths {
        collect(p.as_ref(), &mut files);
    }
    files
        .iter()
        .flat_map(|(f, explicit)| {
            if !explicit && ArtifactKind::infer(f).is_none() {
                // Unrelated files inside a walked directory are ignored.
                Vec::new()
            } else {
                validate_file(f, None)
            }
        })
        .collect()
}

fn collect(p: &Path, out: &mut Vec<(PathBuf, bool)>) {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = match std::fs::read_dir(p) {
            Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
            Err(_) => {
                out.push((p.to_path_buf(), true));
                return;
            }
        };
        entries.sort();
        for e in entries {
            if e.is_dir() {
                collect(&e, out);
            } else {
                out.push((e, false));
            }
        }
    } else {
        out.push((p.to_path_buf(), true));
    }
}
