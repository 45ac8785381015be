use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mirank::pipeline::{example_config, run_pipeline, ExperimentConfig};
use mirank::synth::write_synth;
use mirank::validate::validate_artifacts;
use mirank::Error;

fn setup(root: &Path, out: &str) -> ExperimentConfig {
    write_synth(&root.join("data"), 11).unwrap();
    ExperimentConfig::from_toml(&example_config("data", out, 11), root).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn full_pipeline_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), "out1");
    let s1 = run_pipeline(&cfg).unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.output_dir = "out2".into();
    let s2 = run_pipeline(&cfg2).unwrap();
    assert_eq!(s1.metrics, s2.metrics);

    let a = snapshot(&tmp.path().join("out1"));
    let b = snapshot(&tmp.path().join("out2"));
    assert!(a.len() > 30, "only {} artifacts", a.len());
    assert_eq!(a, b);

    let diags = validate_artifacts(&[tmp.path().join("out1"), tmp.path().join("data")]);
    assert!(diags.is_empty(), "{diags:#?}");
}

#[test]
fn every_run_file_records_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), "out");
    let summary = run_pipeline(&cfg).unwrap();
    for p in summary.artifacts.iter().filter(|p| p.extension().is_some_and(|e| e != "idx")) {
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# mirank "), "{}", p.display());
        assert!(text.lines().next().unwrap().contains("seed=11"), "{}", p.display());
    }
}

#[test]
fn stages_compose() {
    // index, bm25, eval alone, then the remaining stages, gives the same
    // bm25 evaluation as a single full run.
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), "out");
    cfg.stages = vec!["index".into(), "bm25".into(), "eval".into()];
    let s = run_pipeline(&cfg).unwrap();
    assert_eq!(s.metrics.len(), 6, "{:?}", s.metrics);
    let bm25_only = s.metric("sw", "bm25", "ndcg@10").unwrap();
    let bm25_eval = fs::read(tmp.path().join("out/sw/bm25.eval.tsv")).unwrap();

    let mut full = cfg.clone();
    full.stages = vec!["index".into(), "retrieve".into(), "eval".into()];
    full.output_dir = "full".into();
    let f = run_pipeline(&full).unwrap();
    assert_eq!(f.metric("sw", "bm25", "ndcg@10"), Some(bm25_only));
    assert_eq!(fs::read(tmp.path().join("full/sw/bm25.eval.tsv")).unwrap(), bm25_eval);

    // eval-only picks up whatever runs are on disk
    cfg.stages = vec!["eval".into()];
    let e = run_pipeline(&cfg).unwrap();
    assert_eq!(e.metric("sw", "bm25", "ndcg@10"), Some(bm25_only));
}

#[test]
fn missing_upstream_artifacts_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), "out");
    for (stage, requires) in [
        ("bm25", "index"),
        ("fuse", "bm25"),
        ("rerank", "fuse"),
        ("negatives", "fuse"),
        ("pseudo", "rerank"),
        ("ensemble", "fuse"),
        ("eval", "bm25"),
    ] {
        cfg.stages = vec![stage.into()];
        match run_pipeline(&cfg) {
            Err(Error::MissingArtifact { stage: s, requires: r, .. }) => {
                assert_eq!((s.as_str(), r.as_str()), (stage, requires));
            }
            other => panic!("{stage}: expected dependency error, got {other:?}"),
        }
    }

    // bm25 present but dense missing: fuse still refuses
    cfg.stages = vec!["index".into(), "bm25".into()];
    run_pipeline(&cfg).unwrap();
    cfg.stages = vec!["fuse".into()];
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("run stage `dense` first"), "{err}");
}

#[test]
fn bundled_toy_corpus_is_current() {
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let tmp = tempfile::tempdir().unwrap();
    write_synth(tmp.path(), 0).unwrap();
    assert_eq!(snapshot(tmp.path()), snapshot(&repo.join("data/toy")), "regenerate with `mirank synth --out data/toy --seed 0`");

    let cfg = ExperimentConfig::load(&repo.join("configs/toy.toml")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.seed, 0);
}
