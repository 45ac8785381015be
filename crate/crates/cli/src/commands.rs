use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use mirank::corpus::{self, Split};
use mirank::dense::{self, Metric};
use mirank::ensemble::{adjust_weights, correlation_matrix, ensemble_runs, EnsembleConfig};
use mirank::eval::{evaluate_metric, MetricKind};
use mirank::forge::{self, AugmentationParams};
use mirank::fusion::{cut_pool, hybrid_pool, Normalization};
use mirank::pipeline::{example_config, run_pipeline, ExperimentConfig};
use mirank::rerank::{build_pairs, score_pairs, ScorerHandle};
use mirank::run::{load_run, write_run, Run};
use mirank::sparse::{self, Bm25Params, ScriptPolicy};
use mirank::textio::{self, Header};
use mirank::validate::{validate_artifacts, validate_file, ArtifactKind};

use crate::{
    Command, EnsembleArgs, EvalArgs, ForgeCmd, FuseArgs, IndexCmd, PipelineArgs, Reported, RerankArgs,
    RetrieveCmd, StatsArgs, SynthArgs, UsageError, ValidateArgs,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parse a flag value with the library's `FromStr`, mapping failure to a
/// usage error.
fn flag<T>(name: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr<Err = mirank::Error>,
{
    value.parse().map_err(|e: mirank::Error| usage(format!("--{name}: {e}")))
}

/// Write to `out` (parents created) or to stdout.
fn emit<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match out {
        Some(p) => {
            textio::save_with(p, |w: &mut BufWriter<File>| f(w))?;
            info!("wrote {}", p.display());
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            match f(&mut w).and_then(|_| w.flush()) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                r => r.context("writing to stdout")?,
            }
        }
    }
    Ok(())
}

fn header(command: &str, params: String) -> Header {
    Header::new().with(format!("mirank {command}")).with(params)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Index(IndexCmd::Build {
            corpus,
            out,
            script_policy,
        }) => {
            let policy: ScriptPolicy = flag("script-policy", &script_policy)?;
            let mut index = sparse::build_index(corpus::load_corpus(&corpus)?, policy)?;
            index.set_metadata(format!("mirank index build\nscript_policy={policy}"));
            textio::save_with(&out, |w| sparse::write_index(w, &index))?;
            info!(
                "indexed {} passages, {} terms -> {}",
                index.doc_count(),
                index.num_terms(),
                out.display()
            );
            Ok(())
        }
        Command::Retrieve(cmd) => retrieve(cmd),
        Command::Fuse(args) => fuse(args),
        Command::Forge(cmd) => forge_cmd(cmd),
        Command::Rerank(args) => rerank(args),
        Command::Ensemble(args) => ensemble(args),
        Command::Eval(args) => eval(args),
        Command::Stats(args) => stats(args),
        Command::Validate(args) => validate(args),
        Command::Pipeline(args) => pipeline(args),
        Command::Synth(SynthArgs { out, seed }) => {
            let files = mirank::synth::write_synth(&out, seed)?;
            info!("wrote {} files under {}", files.len(), out.display());
            Ok(())
        }
    }
}

fn retrieve(cmd: RetrieveCmd) -> Result<()> {
    match cmd {
        RetrieveCmd::Bm25 {
            index,
            topics,
            k,
            k1,
            b,
            tag,
            out,
        } => {
            let params = Bm25Params::new(k1, b).map_err(|e| usage(e.to_string()))?;
            let idx = sparse::read_index(&mut textio::open_reader(&index)?)
                .with_context(|| format!("reading {}", index.display()))?;
            let topics = corpus::load_topics(&topics, "", Split::Dev)?;
            let mut run = Run::new(tag);
            for q in topics.iter() {
                run.insert(q.qid.clone(), sparse::bm25_search(&idx, &q.text, k, params))?;
            }
            let h = header("retrieve bm25", format!("k1={k1} b={b} depth={k}"));
            emit(out.out.as_deref(), |w| write_run(w, &run, &h))
        }
        RetrieveCmd::Dense {
            queries,
            docs,
            topics,
            metric,
            k,
            tag,
            out,
        } => {
            let metric: Metric = flag("metric", &metric)?;
            let qstore = dense::load_embeddings(&queries, metric)?;
            let dstore = dense::load_embeddings(&docs, metric)?;
            let qids: Vec<String> = match topics {
                Some(t) => corpus::load_topics(&t, "", Split::Dev)?
                    .iter()
                    .map(|q| q.qid.clone())
                    .collect(),
                None => qstore.ids().to_vec(),
            };
            let mut run = Run::new(tag);
            for qid in qids {
                let hits = dense::dense_search(&dstore, &qstore, &qid, k)?;
                run.insert(qid, hits)?;
            }
            let h = header("retrieve dense", format!("metric={metric} depth={k}"));
            emit(out.out.as_deref(), |w| write_run(w, &run, &h))
        }
    }
}

fn fuse(args: FuseArgs) -> Result<()> {
    if args.runs.len() != args.weights.len() {
        return Err(usage(format!(
            "{} runs but {} weights",
            args.runs.len(),
            args.weights.len()
        )));
    }
    let norm: Normalization = flag("normalize", &args.normalize)?;
    let runs: Vec<Run> = args.runs.iter().map(|p| load_run(p)).collect::<mirank::Result<_>>()?;
    let (fused, pool) = hybrid_pool(&runs, &args.weights, norm, args.k)?;
    let weights: Vec<String> = args.weights.iter().map(|w| w.to_string()).collect();
    let h = header(
        "fuse",
        format!("weights={} normalize={norm} depth={}", weights.join(","), args.k),
    );
    if let Some(p) = &args.pool {
        let pool_run = pool.into_run().with_tag("pool");
        emit(Some(p), |w| write_run(w, &pool_run, &h))?;
    }
    let fused = fused.with_tag(args.tag);
    emit(args.out.out.as_deref(), |w| write_run(w, &fused, &h))
}

fn forge_cmd(cmd: ForgeCmd) -> Result<()> {
    match cmd {
        ForgeCmd::Negatives {
            pool,
            corpus: corpus_path,
            qrels,
            topics,
            n,
            seed,
            out,
        } => {
            let qrels = corpus::load_qrels(&qrels)?;
            let topics = corpus::load_topics(&topics, "", Split::Train)?;
            let pairs = match (pool, corpus_path) {
                (Some(p), _) => {
                    let run = load_run(&p)?;
                    let depth = run.queries().map(|(_, l)| l.len()).max().unwrap_or(0);
                    let sample = forge::sample_negatives(&cut_pool(&run, depth), &qrels, &topics, n, seed)?;
                    if sample.skipped_queries > 0 {
                        eprintln!("note: {} pool queries have no judgments", sample.skipped_queries);
                    }
                    sample.pairs
                }
                (None, Some(c)) => {
                    let lookup = corpus::load_corpus_map(&c)?;
                    let ids: Vec<&str> = lookup.ids().collect();
                    forge::sample_negatives_corpus(&ids, &qrels, &topics, n, seed)?
                }
                (None, None) => return Err(usage("one of --pool or --corpus is required")),
            };
            let h = header("forge negatives", format!("seed={seed} n={n}"));
            emit(out.out.as_deref(), |w| forge::write_pairs(w, &pairs, &h))
        }
        ForgeCmd::Q2q2d {
            test_topics,
            train_topics,
            train_qrels,
            query_vectors,
            alpha,
            tau,
            top_m,
            out,
        } => {
            let params = AugmentationParams {
                alpha,
                tau,
                top_m,
                ..Default::default()
            };
            params.validate().map_err(|e| usage(e.to_string()))?;
            let pairs = forge::q2q2d_augment(
                &corpus::load_topics(&test_topics, "", Split::TestA)?,
                &corpus::load_topics(&train_topics, "", Split::Train)?,
                &corpus::load_qrels(&train_qrels)?,
                &dense::load_embeddings(&query_vectors, Metric::Cosine)?,
                &params,
            )?;
            let h = header("forge q2q2d", format!("alpha={alpha} tau={tau} top_m={top_m}"));
            emit(out.out.as_deref(), |w| forge::write_pairs(w, &pairs, &h))
        }
        ForgeCmd::Pseudo {
            run,
            topics,
            fraction,
            seed,
            out,
        } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(usage(format!("--fraction must be in (0, 1], got {fraction}")));
            }
            let run = load_run(&run)?;
            let topics = corpus::load_topics(&topics, "", Split::TestA)?;
            let pairs = forge::pseudo_label(&run, &topics, fraction, seed)?;
            let h = header("forge pseudo", format!("seed={seed} fraction={fraction}"));
            emit(out.out.as_deref(), |w| forge::write_pairs(w, &pairs, &h))
        }
    }
}

fn rerank(args: RerankArgs) -> Result<()> {
    let scorer: ScorerHandle = flag("scorer", &args.scorer)?;
    let policy: ScriptPolicy = flag("script-policy", &args.script_policy)?;
    if args.budget == 0 {
        return Err(usage("--budget must be > 0"));
    }
    let run = load_run(&args.pool)?;
    let depth = args
        .k
        .unwrap_or_else(|| run.queries().map(|(_, l)| l.len()).max().unwrap_or(0));
    let pool = cut_pool(&run, depth);
    let topics = corpus::load_topics(&args.topics, "", Split::Dev)?;
    let lookup = corpus::load_corpus_map(&args.corpus)?;
    let pairs = build_pairs(&pool, &topics, &lookup, args.budget, policy, scorer.truncates_locally())?;
    info!("scoring {} pairs with {}", pairs.len(), scorer.kind());
    let scored = score_pairs(&pairs, &scorer, &args.tag)?;
    let h = header("rerank", format!("scorer={} budget={} depth={depth}", scorer.kind(), args.budget));
    emit(args.out.out.as_deref(), |w| write_run(w, &scored, &h))
}

fn ensemble(args: EnsembleArgs) -> Result<()> {
    let base = if args.base_weights.is_empty() {
        vec![1.0; args.runs.len()]
    } else {
        args.base_weights.clone()
    };
    if base.len() != args.runs.len() {
        return Err(usage(format!("{} runs but {} base weights", args.runs.len(), base.len())));
    }
    let config = EnsembleConfig::new(base, args.lambda).map_err(|e| usage(e.to_string()))?;
    let runs: Vec<Run> = args.runs.iter().map(|p| load_run(p)).collect::<mirank::Result<_>>()?;
    let corr = correlation_matrix(&runs)?;
    let weights = adjust_weights(&config, &corr)?;
    for (p, w) in args.runs.iter().zip(&weights) {
        eprintln!("weight {w:.6}  {}", p.display());
    }
    let fused = ensemble_runs(&runs, &weights)?;
    let ws: Vec<String> = weights.iter().map(|w| textio::fmt_score(*w)).collect();
    let h = header("ensemble", format!("lambda={} weights={}", args.lambda, ws.join(",")));
    emit(args.out.out.as_deref(), |w| write_run(w, &fused, &h))
}

fn eval(args: EvalArgs) -> Result<()> {
    let metric: MetricKind = flag("metric", &args.metric)?;
    let run = load_run(&args.run)?;
    let qrels = corpus::load_qrels(&args.qrels)?;
    let report = evaluate_metric(&run, &qrels, metric, args.k);
    eprintln!("{}", report.summary());
    emit(args.out.out.as_deref(), |w| report.write_tsv(w, args.per_query, &Header::new()))
}

fn split_arg(flag_name: &str, value: &str) -> Result<(Split, PathBuf)> {
    let Some((split, path)) = value.split_once('=') else {
        return Err(usage(format!("--{flag_name} expects split=path, got `{value}`")));
    };
    Ok((flag(flag_name, split)?, PathBuf::from(path)))
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut passages = 0usize;
    for doc in corpus::load_corpus(&args.corpus)? {
        doc?;
        passages += 1;
    }
    let mut topics = Vec::new();
    for t in &args.topics {
        let (split, path) = split_arg("topics", t)?;
        topics.push((split, corpus::load_topics(&path, &args.lang, split)?));
    }
    let mut qrels = Vec::new();
    for q in &args.qrels {
        let (split, path) = split_arg("qrels", q)?;
        qrels.push((split, corpus::load_qrels(&path)?));
    }
    let row = corpus::corpus_stats(
        &args.lang,
        passages,
        topics.iter().map(|(s, t)| (*s, t)),
        qrels.iter().map(|(s, j)| (*s, j)),
    );
    emit(None, |w| row.write_tsv(w))
}

fn validate(args: ValidateArgs) -> Result<()> {
    let diags = match &args.kind {
        Some(k) => {
            let kind: ArtifactKind = flag("kind", k)?;
            let mut v = Vec::new();
            for p in &args.paths {
                if p.is_dir() {
                    return Err(usage("--kind needs file paths, not directories"));
                }
                v.extend(validate_file(p, Some(kind)));
            }
            v
        }
        None => validate_artifacts(&args.paths),
    };
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        eprintln!("ok");
        Ok(())
    } else {
        eprintln!("{} problem(s)", diags.len());
        Err(Reported.into())
    }
}

fn pipeline(args: PipelineArgs) -> Result<()> {
    if args.example_config {
        print!("{}", example_config("data/toy", "out", 0));
        return Ok(());
    }
    let Some(path) = args.config else {
        bail!(UsageError("--config is required".into()));
    };
    let cfg = ExperimentConfig::load(&path).map_err(|e| match e {
        mirank::Error::Invalid(m) => usage(m),
        other => other.into(),
    })?;
    let summary = run_pipeline(&cfg)?;
    let stages: Vec<&str> = summary.stages.iter().map(|s| s.as_str()).collect();
    eprintln!("stages: {}", stages.join(" -> "));
    eprintln!("{} artifacts under {}", summary.artifacts.len(), cfg.output_root().display());
    for (run, metric, v) in &summary.macro_metrics {
        println!("{run}\t{metric}\t{v:.4}");
    }
    Ok(())
}
