//! External scorer and score-file round trips, driven by tiny shell
//! scorers.

use std::fs;

use mirank::rerank::{score_pairs, PairInput, ScorerHandle};
use mirank::run::Run;
use mirank::sparse::ScriptPolicy;
use mirank::Error;

fn pairs() -> Vec<PairInput> {
    let mk = |q: &str, d: &str, body: &str| PairInput {
        qid: q.into(),
        docid: d.into(),
        query: "tab\there".into(),
        title: "t".into(),
        body: body.into(),
        budget: 256,
        policy: ScriptPolicy::Whitespace,
    };
    vec![
        mk("q1", "d1", "one"),
        mk("q1", "d2", "three"),
        mk("q2", "d1", "multi\nline"),
        mk("q2", "d9", "x"),
    ]
}

/// A POSIX sh scorer: answers the handshake, then scores each request by
/// the byte length of its text field mod 10, over 10. `hook` runs inside
/// the loop before the response is printed (`$n` counts requests).
fn scorer(hook: &str) -> ScorerHandle {
    ScorerHandle::External {
        command: format!(
            r#"T=$(printf '\t'); IFS= read -r hello; echo "READY 1"; n=0
while IFS="$T" read -r tag q d text; do n=$((n+1)); s="0.$(( ${{#text}} % 10 ))"
{hook}
printf '%s\t%s\t%s\n' "$q" "$d" "$s"; done"#
        ),
    }
}

fn expected() -> Vec<f64> {
    pairs()
        .iter()
        .map(|p| {
            let escaped = mirank::textio::escape_field(&p.text());
            (escaped.chars().count() % 10) as f64 / 10.0
        })
        .collect()
}

fn score_of(run: &Run, q: &str, d: &str) -> f64 {
    run.get(q).unwrap().iter().find(|x| x.docid == d).unwrap().score
}

fn protocol_err(r: mirank::Result<Run>) -> String {
    match r {
        Err(e @ Error::Protocol(_)) => e.to_string(),
        other => panic!("expected a protocol error, got {other:?}"),
    }
}

#[test]
fn external_scorer_round_trip() {
    let ps = pairs();
    let run = score_pairs(&ps, &scorer(""), "x").unwrap();
    for (p, want) in ps.iter().zip(expected()) {
        assert_eq!(score_of(&run, &p.qid, &p.docid), want, "{}/{}", p.qid, p.docid);
    }
    assert_eq!(run.num_entries(), 4);
}

#[test]
fn handshake_must_match() {
    let h = ScorerHandle::External { command: "echo READY 2; cat >/dev/null".into() };
    assert!(protocol_err(score_pairs(&pairs(), &h, "x")).contains("handshake"));
    let h = ScorerHandle::External { command: "cat".into() };
    assert!(protocol_err(score_pairs(&pairs(), &h, "x")).contains("handshake"));
}

#[test]
fn too_few_responses() {
    let msg = protocol_err(score_pairs(&pairs(), &scorer("[ $n = 4 ] && continue"), "x"));
    assert!(msg.contains("3 responses for 4"), "{msg}");
}

#[test]
fn too_many_responses() {
    let msg = protocol_err(score_pairs(&pairs(), &scorer(r#"[ $n = 4 ] && printf '%s\t%s\t0\n' "$q" "$d""#), "x"));
    assert!(msg.contains("more than 4"), "{msg}");
}

#[test]
fn out_of_range_score() {
    let h = scorer("s=1.5");
    assert!(protocol_err(score_pairs(&pairs(), &h, "x")).contains("outside [0, 1]"));
}

#[test]
fn mismatched_ids() {
    let h = scorer("d=nope");
    assert!(protocol_err(score_pairs(&pairs(), &h, "x")).contains("request was"));
}

#[test]
fn failing_exit_status() {
    let ScorerHandle::External { command } = scorer("") else { unreachable!() };
    let h = ScorerHandle::External { command: format!("{command}; exit 4") };
    let msg = protocol_err(score_pairs(&pairs(), &h, "x"));
    assert!(msg.contains("exited"), "{msg}");
}

#[test]
fn score_file_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.tsv");
    let mut body = String::from("# scores\n");
    for (p, s) in pairs().iter().zip(expected()) {
        body.push_str(&format!("{} {} {s}\n", p.qid, p.docid));
    }
    fs::write(&path, &body).unwrap();
    let h = ScorerHandle::ScoreFile(path.clone());
    let a = score_pairs(&pairs(), &h, "f").unwrap();
    let b = score_pairs(&pairs(), &h, "f").unwrap();
    assert_eq!(a, b);
    // same numbers as the live scorer
    let live = score_pairs(&pairs(), &scorer(""), "f").unwrap();
    assert_eq!(a, live);
}

#[test]
fn score_file_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.tsv");
    let h = ScorerHandle::ScoreFile(path.clone());

    fs::write(&path, "q1 d1 0.5\nq1 d2 0.5\nq2 d1 0.5\n").unwrap();
    assert!(protocol_err(score_pairs(&pairs(), &h, "f")).contains("no entry"));

    fs::write(&path, "q1 d1 0.5\nq1 d2 2\nq2 d1 0.5\nq2 d9 0\n").unwrap();
    assert!(protocol_err(score_pairs(&pairs(), &h, "f")).contains("outside"));

    fs::write(&path, "q1 d1\n").unwrap();
    assert!(protocol_err(score_pairs(&pairs(), &h, "f")).contains("expected"));
}
