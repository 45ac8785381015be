//! Query–document pair construction and pluggable pair scoring.
//!
//! Scorers:
//! - `cmd:<command line>`: a child process speaking the line protocol below;
//! - `file:<path>`: precomputed `qid docid score` rows;
//! - `lexical`: built-in query-token coverage.
//!
//! Wire protocol (UTF-8, one message per line):
//!
//! ```text
//! -> HELLO 1
//! <- READY 1
//! -> SCORE<TAB>qid<TAB>docid<TAB>text      (one per pair, text escaped)
//! <- qid<TAB>docid<TAB>score               (one per request, same order)
//! ```
//!
//! The request stream is closed after the last pair. Scores must lie in
//! `[0, 1]`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{CorpusLookup, Topics};
use crate::error::{Error, Result};
use crate::fusion::CandidatePool;
use crate::run::{Run, ScoredDoc};
use crate::sparse::{resolve_policy, tokenize, tokenize_spans, ScriptPolicy};
use crate::textio::{self, escape_field, Lines};

pub const SEP: &str = "[SEP]";
pub const DEFAULT_BUDGET: usize = 256;
pub const PROTOCOL_VERSION: u32 = 1;
/// How long an external scorer may take to answer `HELLO`.
pub const HANDSHAKE_TIMEOUT: std::time::Duration = std::time::Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInput {
    pub qid: String,
    pub docid: String,
    pub query: String,
    pub title: String,
    pub body: String,
    pub budget: usize,
    /// Concrete tokenization policy, resolved once over the whole pair.
    pub policy: ScriptPolicy,
}

impl PairInput {
    /// `query [SEP] title [SEP] body`.
    pub fn text(&self) -> String {
        format!("{} {SEP} {} {SEP} {}", self.query, self.title, self.body)
    }

    pub fn query_tokens(&self) -> Vec<String> {
        tokenize(&self.query, self.policy).into_tokens()
    }

    pub fn doc_tokens(&self) -> Vec<String> {
        let mut t = tokenize(&self.title, self.policy).into_tokens();
        t.extend(tokenize(&self.body, self.policy).into_tokens());
        t
    }
}

fn strip_sep(s: &str) -> String {
    if s.contains(SEP) {
        s.replace(SEP, "[ SEP ]")
    } else {
        s.to_string()
    }
}

/// Cut `text` after its first `n` tokens (whole string if it has fewer).
fn keep_tokens(text: &str, n: usize, policy: ScriptPolicy) -> (String, usize) {
    let spans = tokenize_spans(text, policy);
    if spans.len() <= n {
        return (text.to_string(), spans.len());
    }
    if n == 0 {
        return (String::new(), 0);
    }
    (text[..spans[n - 1].span.end].to_string(), n)
}

/// Keep the query whole and trim title, then body, so the three segments
/// hold at most `budget` tokens together. Separator markers are not counted.
pub fn truncate_pair(pair: &mut PairInput) {
    let q = tokenize(&pair.query, pair.policy).len();
    let mut left = pair.budget.saturating_sub(q);
    let (title, used) = keep_tokens(&pair.title, left, pair.policy);
    left -= used;
    let (body, _) = keep_tokens(&pair.body, left, pair.policy);
    pair.title = title;
    pair.body = body;
}

/// One pair per pool candidate, in pool order. With `truncate`, segments are
/// trimmed to the token budget (used by the built-in scorer; model scorers
/// apply their own subword truncation).
pub fn build_pairs(
    pool: &CandidatePool,
    topics: &Topics,
    corpus: &CorpusLookup,
    budget: usize,
    policy: ScriptPolicy,
    truncate: bool,
) -> Result<Vec<PairInput>> {
    if budget == 0 {
        return Err(Error::Invalid("truncation budget must be > 0".into()));
    }
    let queries: Vec<(&str, &[ScoredDoc])> = pool.queries().collect();
    let per_query: Vec<Result<Vec<PairInput>>> = queries
        .into_par_iter()
        .map(|(qid, list)| {
            let query = strip_sep(topics.text(qid)?);
            list.iter()
                .map(|cand| {
                    let doc = corpus.get(&cand.docid).ok_or_else(|| {
                        Error::Invalid(format!("pool docid `{}` not found in corpus", cand.docid))
                    })?;
                    let title = strip_sep(&doc.title);
                    let body = strip_sep(&doc.text);
                    let resolved =
                        resolve_policy(&format!("{query} {title} {body}"), policy);
                    let mut pair = PairInput {
                        qid: qid.to_string(),
                        docid: cand.docid.clone(),
                        query: query.clone(),
                        title,
                        body,
                        budget,
                        policy: resolved,
                    };
                    if truncate {
                        truncate_pair(&mut pair);
                    }
                    Ok(pair)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_query {
        out.extend(r?);
    }
    Ok(out)
}

/// Fraction of distinct query tokens present in title + body; 0 for a query
/// without tokens.
pub fn lexical_score(pair: &PairInput) -> f64 {
    let q: HashSet<String> = pair.query_tokens().into_iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let d: HashSet<String> = pair.doc_tokens().into_iter().collect();
    q.intersection(&d).count() as f64 / q.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerHandle {
    External { command: String },
    ScoreFile(PathBuf),
    Lexical,
}

impl ScorerHandle {
    pub fn kind(&self) -> &'static str {
        match self {
            ScorerHandle::External { .. } => "external_process",
            ScorerHandle::ScoreFile(_) => "score_file",
            ScorerHandle::Lexical => "lexical_baseline",
        }
    }

    /// Whether pairs for this scorer should be budget-truncated locally.
    pub fn truncates_locally(&self) -> bool {
        matches!(self, ScorerHandle::Lexical)
    }
}

impl fmt::Display for ScorerHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerHandle::External { command } => write!(f, "cmd:{command}"),
            ScorerHandle::ScoreFile(p) => write!(f, "file:{}", p.display()),
            ScorerHandle::Lexical => f.write_str("lexical"),
        }
    }
}

impl FromStr for ScorerHandle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "lexical" {
            Ok(ScorerHandle::Lexical)
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(Error::Invalid("empty scorer command".into()));
            }
            Ok(ScorerHandle::External { command: cmd.to_string() })
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(ScorerHandle::ScoreFile(PathBuf::from(p)))
        } else {
            Err(Error::Invalid(format!(
                "unknown scorer `{s}` (expected lexical, cmd:<command> or file:<path>)"
            )))
        }
    }
}

fn check_score(qid: &str, docid: &str, score: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(Error::Protocol(format!("score {score} for ({qid}, {docid}) outside [0, 1]")))
    }
}

/// Score file rows `qid docid score`.
pub fn read_score_file(path: &Path) -> Result<HashMap<(String, String), f64>> {
    let name = textio::display_name(path);
    let mut out = HashMap::new();
    for item in Lines::open(path)? {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::Protocol(format!("{name}:{line_no}: expected `qid docid score`")));
        }
        let score = textio::parse_f64(cols[2])
            .ok_or_else(|| Error::Protocol(format!("{name}:{line_no}: bad score `{}`", cols[2])))?;
        let score = check_score(cols[0], cols[1], score)
            .map_err(|e| Error::Protocol(format!("{name}:{line_no}: {e}")))?;
        if out.insert((cols[0].to_string(), cols[1].to_string()), score).is_some() {
            return Err(Error::Protocol(format!(
                "{name}:{line_no}: duplicate pair ({}, {})",
                cols[0], cols[1]
            )));
        }
    }
    Ok(out)
}

fn score_external(pairs: &[PairInput], command: &str) -> Result<Vec<f64>> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Protocol(format!("cannot launch scorer `{command}`: {e}")))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let responses = BufReader::new(stdout);

    // The handshake read runs on a helper thread so a silent scorer cannot
    // block us forever.
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut responses = responses;
        let mut line = String::new();
        let r = responses.read_line(&mut line);
        let _ = tx.send((responses, line, r));
    });
    let sent = writeln!(stdin, "HELLO {PROTOCOL_VERSION}").and_then(|_| stdin.flush());
    let ready = format!("READY {PROTOCOL_VERSION}");
    let (mut responses, mut line) = match rx.recv_timeout(HANDSHAKE_TIMEOUT) {
        Ok((responses, line, Ok(_))) if sent.is_ok() && line.trim_end_matches(['\r', '\n']) == ready => {
            (responses, line)
        }
        outcome => {
            let _ = child.kill();
            let _ = child.wait();
            let got = match outcome {
                Ok((_, line, _)) => format!("got `{}`", line.trim_end()),
                Err(_) => format!("no reply within {}s", HANDSHAKE_TIMEOUT.as_secs()),
            };
            return Err(Error::Protocol(format!("handshake failed: expected `{ready}`, {got}")));
        }
    };

    let result = std::thread::scope(|scope| -> Result<Vec<f64>> {
        let writer = scope.spawn(move || -> std::io::Result<()> {
            let mut w = std::io::BufWriter::new(stdin);
            for p in pairs {
                writeln!(
                    w,
                    "SCORE\t{}\t{}\t{}",
                    escape_field(&p.qid),
                    escape_field(&p.docid),
                    escape_field(&p.text())
                )?;
            }
            w.flush()
            // stdin drops here, closing the request stream
        });

        let mut scores = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            line.clear();
            let n = responses
                .read_line(&mut line)
                .map_err(|e| Error::Protocol(format!("reading response {}: {e}", i + 1)))?;
            if n == 0 {
                return Err(Error::Protocol(format!(
                    "scorer returned {i} responses for {} requests",
                    pairs.len()
                )));
            }
            let resp = line.trim_end_matches(['\r', '\n']);
            let cols: Vec<&str> = resp.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Protocol(format!("malformed response {}: `{resp}`", i + 1)));
            }
            if cols[0] != p.qid || cols[1] != p.docid {
                return Err(Error::Protocol(format!(
                    "response {} is for ({}, {}) but request was ({}, {})",
                    i + 1,
                    cols[0],
                    cols[1],
                    p.qid,
                    p.docid
                )));
            }
            let s = textio::parse_f64(cols[2])
                .ok_or_else(|| Error::Protocol(format!("bad score in response {}: `{resp}`", i + 1)))?;
            scores.push(check_score(&p.qid, &p.docid, s)?);
        }
        line.clear();
        if responses.read_line(&mut line).map(|n| n > 0).unwrap_or(false) && !line.trim().is_empty() {
            return Err(Error::Protocol(format!(
                "scorer sent more than {} responses: `{}`",
                pairs.len(),
                line.trim_end()
            )));
        }
        writer
            .join()
            .expect("writer thread panicked")
            .map_err(|e| Error::Protocol(format!("writing requests: {e}")))?;
        Ok(scores)
    });

    if result.is_err() {
        let _ = child.kill();
    }
    let status = child
        .wait()
        .map_err(|e| Error::Protocol(format!("waiting for scorer: {e}")))?;
    let scores = result?;
    if !status.success() {
        return Err(Error::Protocol(format!("scorer exited with {status}")));
    }
    Ok(scores)
}

/// Score every pair and assemble a run (pure rerank: retrieval scores are
/// replaced).
pub fn score_pairs(pairs: &[PairInput], scorer: &ScorerHandle, tag: &str) -> Result<Run> {
    let scores: Vec<f64> = match scorer {
        ScorerHandle::Lexical => pairs.par_iter().map(lexical_score).collect(),
        ScorerHandle::ScoreFile(path) => {
            let table = read_score_file(path)?;
            pairs
                .iter()
                .map(|p| {
                    table
                        .get(&(p.qid.clone(), p.docid.clone()))
                        .copied()
                        .ok_or_else(|| {
                            Error::Protocol(format!(
                                "score file has no entry for ({}, {})",
                                p.qid, p.docid
                            ))
                        })
                })
                .collect::<Result<_>>()?
        }
        ScorerHandle::External { command } => score_external(pairs, command)?,
    };

    let mut grouped: BTreeMap<&str, Vec<ScoredDoc>> = BTreeMap::new();
    for (p, s) in pairs.iter().zip(scores) {
        grouped
            .entry(p.qid.as_str())
            .or_default()
            .push(ScoredDoc::new(p.docid.clone(), s));
    }
    let mut run = Run::new(tag);
    for (qid, list) in grouped {
        run.insert(qid, list)?;
    }
    Ok(run)
}
