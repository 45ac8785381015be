//! Experiment configuration and the staged pipeline driver.
//!
//! The config is a flat TOML file (one `key = value` per line, `#`
//! comments) carrying a schema id. Path values may contain `{lang}`, which
//! is replaced per language; relative paths resolve against the config
//! file's directory. Artifacts land in `<output_dir>/<lang>/`:
//!
//! ```text
//! index      index.idx
//! bm25       bm25.trec
//! dense      dense.trec
//! fuse       hybrid.trec, pool.trec
//! negatives  negatives.pairs.tsv
//! q2q2d      q2q2d.pairs.tsv
//! rerank     rerank.trec
//! pseudo     pseudo.pairs.tsv
//! ensemble   ensemble.trec, ensemble.weights.tsv
//! eval       <run>.eval.tsv, and <output_dir>/summary.tsv
//! ```
//!
//! Every text artifact starts with `#` header lines recording the schema,
//! seed and stage parameters; nothing time-dependent is written, so a rerun
//! reproduces every byte.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, load_corpus_map, load_qrels, load_topics, Split};
use crate::dense::{dense_search, load_embeddings, Metric};
use crate::ensemble::{adjust_weights, correlation_matrix, ensemble_runs, mean_correlations, EnsembleConfig};
use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, recall_at_k};
use crate::forge::{pseudo_label, q2q2d_augment, sample_negatives, save_pairs, AugmentationParams};
use crate::fusion::{cut_pool, hybrid_pool, Normalization};
use crate::rerank::{build_pairs, score_pairs, ScorerHandle};
use crate::run::{load_run, save_run, Run};
use crate::sparse::{bm25_search, build_index, read_index, write_index, Bm25Params, ScriptPolicy};
use crate::textio::{self, fmt_score, Header};

pub const SCHEMA: &str = "mirank.experiment/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Index,
    Bm25,
    Dense,
    Fuse,
    Negatives,
    Q2q2d,
    Rerank,
    Pseudo,
    Ensemble,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Index,
        Stage::Bm25,
        Stage::Dense,
        Stage::Fuse,
        Stage::Negatives,
        Stage::Q2q2d,
        Stage::Rerank,
        Stage::Pseudo,
        Stage::Ensemble,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::Bm25 => "bm25",
            Stage::Dense => "dense",
            Stage::Fuse => "fuse",
            Stage::Negatives => "negatives",
            Stage::Q2q2d => "q2q2d",
            Stage::Rerank => "rerank",
            Stage::Pseudo => "pseudo",
            Stage::Ensemble => "ensemble",
            Stage::Eval => "eval",
        }
    }

    /// Expand a stage name; `retrieve` and `forge` are group aliases.
    pub fn parse_group(name: &str) -> Result<Vec<Stage>> {
        match name {
            "retrieve" => Ok(vec![Stage::Bm25, Stage::Dense]),
            "forge" => Ok(vec![Stage::Negatives, Stage::Q2q2d, Stage::Pseudo]),
            other => Ok(vec![other.parse()?]),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown stage `{s}`")))
    }
}

/// Named run artifacts and the stage that writes each.
const RUNS: [(&str, Stage); 5] = [
    ("bm25", Stage::Bm25),
    ("dense", Stage::Dense),
    ("hybrid", Stage::Fuse),
    ("rerank", Stage::Rerank),
    ("ensemble", Stage::Ensemble),
];

fn run_producer(name: &str) -> Result<Stage> {
    RUNS.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "unknown run `{name}` (expected one of bm25, dense, hybrid, rerank, ensemble)"
            ))
        })
}

fn d_k1() -> f64 {
    0.9
}
fn d_b() -> f64 {
    0.4
}
fn d_depth() -> usize {
    200
}
fn d_policy() -> String {
    "auto".into()
}
fn d_metric() -> String {
    "dot".into()
}
fn d_fusion_weights() -> Vec<f64> {
    vec![0.5, 0.5]
}
fn d_normalize() -> String {
    "minmax".into()
}
fn d_negatives() -> usize {
    100
}
fn d_alpha() -> f64 {
    0.9
}
fn d_tau() -> f64 {
    0.8
}
fn d_top_m() -> usize {
    1
}
fn d_fraction() -> f64 {
    0.5
}
fn d_scorer() -> String {
    "lexical".into()
}
fn d_budget() -> usize {
    crate::rerank::DEFAULT_BUDGET
}
fn d_ensemble_runs() -> Vec<String> {
    vec!["hybrid".into(), "rerank".into()]
}
fn d_lambda() -> f64 {
    0.5
}
fn d_ndcg_k() -> usize {
    10
}
fn d_recall_k() -> usize {
    100
}

/// Flat experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub seed: u64,
    pub languages: Vec<String>,
    pub stages: Vec<String>,
    pub output_dir: PathBuf,

    pub corpus: String,
    pub topics: String,
    pub qrels: String,
    #[serde(default)]
    pub train_topics: Option<String>,
    #[serde(default)]
    pub train_qrels: Option<String>,
    #[serde(default)]
    pub query_vectors: Option<String>,
    #[serde(default)]
    pub doc_vectors: Option<String>,

    #[serde(default = "d_policy")]
    pub script_policy: String,
    #[serde(default = "d_k1")]
    pub bm25_k1: f64,
    #[serde(default = "d_b")]
    pub bm25_b: f64,
    #[serde(default = "d_depth")]
    pub bm25_depth: usize,
    #[serde(default = "d_metric")]
    pub dense_metric: String,
    #[serde(default = "d_depth")]
    pub dense_depth: usize,
    /// Sparse, dense.
    #[serde(default = "d_fusion_weights")]
    pub fusion_weights: Vec<f64>,
    #[serde(default = "d_normalize")]
    pub fusion_normalize: String,
    #[serde(default = "d_depth")]
    pub pool_depth: usize,
    #[serde(default = "d_negatives")]
    pub negatives: usize,
    #[serde(default = "d_alpha")]
    pub q2q2d_alpha: f64,
    #[serde(default = "d_tau")]
    pub q2q2d_tau: f64,
    #[serde(default = "d_top_m")]
    pub q2q2d_top_m: usize,
    #[serde(default = "d_fraction")]
    pub pseudo_fraction: f64,
    #[serde(default = "d_scorer")]
    pub rerank_scorer: String,
    #[serde(default = "d_budget")]
    pub rerank_budget: usize,
    #[serde(default = "d_ensemble_runs")]
    pub ensemble_runs: Vec<String>,
    /// Empty means equal weights.
    #[serde(default)]
    pub ensemble_base_weights: Vec<f64>,
    #[serde(default = "d_lambda")]
    pub ensemble_lambda: f64,
    /// Empty means every run produced by this config's stages (or, for an
    /// eval-only config, every run already on disk).
    #[serde(default)]
    pub eval_runs: Vec<String>,
    #[serde(default = "d_ndcg_k")]
    pub ndcg_k: usize,
    #[serde(default = "d_recall_k")]
    pub recall_k: usize,

    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Invalid(format!(
                "config schema `{}` is not supported (expected `{SCHEMA}`)",
                self.schema
            )));
        }
        if self.languages.is_empty() {
            return Err(Error::Invalid("config lists no languages".into()));
        }
        let mut langs = BTreeSet::new();
        for l in &self.languages {
            if l.is_empty() || l.contains(['/', '\\']) || !langs.insert(l) {
                return Err(Error::Invalid(format!("bad or repeated language `{l}`")));
            }
        }
        self.stage_list()?;
        self.script_policy.parse::<ScriptPolicy>()?;
        Bm25Params::new(self.bm25_k1, self.bm25_b)?;
        self.dense_metric.parse::<Metric>()?;
        self.fusion_normalize.parse::<Normalization>()?;
        if self.fusion_weights.len() != 2 {
            return Err(Error::Invalid("fusion_weights needs two values (sparse, dense)".into()));
        }
        crate::fusion::check_weights(2, &self.fusion_weights)?;
        if self.pool_depth == 0 || self.bm25_depth == 0 || self.dense_depth == 0 {
            return Err(Error::Invalid("depths must be > 0".into()));
        }
        self.augmentation().validate()?;
        self.scorer()?;
        if self.rerank_budget == 0 {
            return Err(Error::Invalid("rerank_budget must be > 0".into()));
        }
        for r in self.ensemble_runs.iter().chain(&self.eval_runs) {
            run_producer(r)?;
        }
        if self.ensemble_runs.iter().any(|r| r == "ensemble") {
            return Err(Error::Invalid("ensemble_runs cannot include `ensemble`".into()));
        }
        if self.ensemble_runs.is_empty() {
            return Err(Error::Invalid("ensemble_runs is empty".into()));
        }
        if !self.ensemble_base_weights.is_empty()
            && self.ensemble_base_weights.len() != self.ensemble_runs.len()
        {
            return Err(Error::Invalid(format!(
                "{} ensemble base weights for {} runs",
                self.ensemble_base_weights.len(),
                self.ensemble_runs.len()
            )));
        }
        self.ensemble_config()?;
        Ok(())
    }

    /// Requested stages, deduplicated, in dependency order.
    pub fn stage_list(&self) -> Result<Vec<Stage>> {
        if self.stages.is_empty() {
            return Err(Error::Invalid("config lists no stages".into()));
        }
        let mut set = BTreeSet::new();
        for s in &self.stages {
            set.extend(Stage::parse_group(s)?);
        }
        Ok(set.into_iter().collect())
    }

    fn augmentation(&self) -> AugmentationParams {
        AugmentationParams {
            alpha: self.q2q2d_alpha,
            top_m: self.q2q2d_top_m,
            tau: self.q2q2d_tau,
            pseudo_fraction: self.pseudo_fraction,
            n_negatives: self.negatives,
            seed: self.seed,
        }
    }

    fn scorer(&self) -> Result<ScorerHandle> {
        let h: ScorerHandle = self.rerank_scorer.parse()?;
        Ok(match h {
            ScorerHandle::ScoreFile(p) => ScorerHandle::ScoreFile(self.resolve_path(&p)),
            other => other,
        })
    }

    fn ensemble_config(&self) -> Result<EnsembleConfig> {
        let base = if self.ensemble_base_weights.is_empty() {
            vec![1.0; self.ensemble_runs.len()]
        } else {
            self.ensemble_base_weights.clone()
        };
        EnsembleConfig::new(base, self.ensemble_lambda)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Expand `{lang}` and resolve against the config directory.
    pub fn input(&self, template: &str, lang: &str) -> PathBuf {
        self.resolve_path(Path::new(&template.replace("{lang}", lang)))
    }

    pub fn output_root(&self) -> PathBuf {
        self.resolve_path(&self.output_dir)
    }

    pub fn output(&self, lang: &str, name: &str) -> PathBuf {
        self.output_root().join(lang).join(name)
    }
}

/// One mean metric value in the pipeline summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub language: String,
    pub run: String,
    pub metric: String,
    pub value: f64,
    pub queries: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineSummary {
    pub stages: Vec<Stage>,
    pub artifacts: Vec<PathBuf>,
    pub metrics: Vec<SummaryRow>,
    /// `(run, metric, macro average over languages)`.
    pub macro_metrics: Vec<(String, String, f64)>,
}

impl PipelineSummary {
    pub fn metric(&self, language: &str, run: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.language == language && r.run == run && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_tsv<W: Write + ?Sized>(&self, w: &mut W, header: &Header) -> std::io::Result<()> {
        header.write_to(w)?;
        for r in &self.metrics {
            writeln!(w, "{}\t{}\t{}\t{}", r.language, r.run, r.metric, fmt_score(r.value))?;
        }
        for (run, metric, v) in &self.macro_metrics {
            writeln!(w, "macro\t{run}\t{metric}\t{}", fmt_score(*v))?;
        }
        Ok(())
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    stages: &'a [Stage],
    summary: PipelineSummary,
}

impl Ctx<'_> {
    fn header(&self, stage: Stage, lang: &str) -> Header {
        let c = self.cfg;
        let params = match stage {
            Stage::Index => format!("script_policy={}", c.script_policy),
            Stage::Bm25 => format!(
                "k1={} b={} depth={} script_policy={}",
                c.bm25_k1, c.bm25_b, c.bm25_depth, c.script_policy
            ),
            Stage::Dense => format!("metric={} depth={}", c.dense_metric, c.dense_depth),
            Stage::Fuse => format!(
                "weights={} normalize={} pool_depth={}",
                join_f64(&c.fusion_weights),
                c.fusion_normalize,
                c.pool_depth
            ),
            Stage::Negatives => format!("n={} pool_depth={}", c.negatives, c.pool_depth),
            Stage::Q2q2d => format!(
                "alpha={} tau={} top_m={}",
                c.q2q2d_alpha, c.q2q2d_tau, c.q2q2d_top_m
            ),
            Stage::Rerank => format!("scorer={} budget={}", c.rerank_scorer, c.rerank_budget),
            Stage::Pseudo => format!("fraction={}", c.pseudo_fraction),
            Stage::Ensemble => format!(
                "runs={} base_weights={} lambda={}",
                c.ensemble_runs.join(","),
                join_f64(&c.ensemble_base_weights),
                c.ensemble_lambda
            ),
            Stage::Eval => format!("ndcg_k={} recall_k={}", c.ndcg_k, c.recall_k),
        };
        Header::new()
            .with(format!("mirank {stage} schema={SCHEMA} seed={} lang={lang}", c.seed))
            .with(params)
    }

    /// Path of an upstream artifact, or a dependency error naming the stage
    /// that writes it.
    fn need(&self, stage: Stage, lang: &str, name: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.cfg.output(lang, name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.to_string(),
                requires: producer.to_string(),
                detail: format!("{} not found", p.display()),
            })
        }
    }

    fn need_input(&self, stage: Stage, key: &str, value: &Option<String>, lang: &str) -> Result<PathBuf> {
        value
            .as_deref()
            .map(|t| self.cfg.input(t, lang))
            .ok_or_else(|| Error::Invalid(format!("stage `{stage}` needs `{key}` in the config")))
    }

    fn wrote(&mut self, p: PathBuf) {
        self.summary.artifacts.push(p);
    }

    fn save_run(&mut self, stage: Stage, lang: &str, name: &str, run: &Run) -> Result<()> {
        let p = self.cfg.output(lang, name);
        save_run(&p, run, &self.header(stage, lang))?;
        self.wrote(p);
        Ok(())
    }

    fn topics(&self, lang: &str) -> Result<crate::corpus::Topics> {
        load_topics(&self.cfg.input(&self.cfg.topics, lang), lang, Split::Dev)
    }

    fn run_stage(&mut self, stage: Stage, lang: &str) -> Result<()> {
        let cfg = self.cfg;
        match stage {
            Stage::Index => {
                let policy: ScriptPolicy = cfg.script_policy.parse()?;
                let mut index = build_index(load_corpus(&cfg.input(&cfg.corpus, lang))?, policy)?;
                index.set_metadata(self.header(stage, lang).0.join("\n"));
                let p = cfg.output(lang, "index.idx");
                textio::save_with(&p, |w| write_index(w, &index))?;
                self.wrote(p);
            }
            Stage::Bm25 => {
                let idx = self.need(stage, lang, "index.idx", Stage::Index)?;
                let index = read_index(&mut textio::open_reader(&idx)?)?;
                let params = Bm25Params::new(cfg.bm25_k1, cfg.bm25_b)?;
                let mut run = Run::new("bm25");
                for q in self.topics(lang)?.iter() {
                    run.insert(q.qid.clone(), bm25_search(&index, &q.text, cfg.bm25_depth, params))?;
                }
                self.save_run(stage, lang, "bm25.trec", &run)?;
            }
            Stage::Dense => {
                let metric: Metric = cfg.dense_metric.parse()?;
                let qv = self.need_input(stage, "query_vectors", &cfg.query_vectors, lang)?;
                let dv = self.need_input(stage, "doc_vectors", &cfg.doc_vectors, lang)?;
                let queries = load_embeddings(&qv, metric)?;
                let docs = load_embeddings(&dv, metric)?;
                let mut run = Run::new("dense");
                for q in self.topics(lang)?.iter() {
                    run.insert(q.qid.clone(), dense_search(&docs, &queries, &q.qid, cfg.dense_depth)?)?;
                }
                self.save_run(stage, lang, "dense.trec", &run)?;
            }
            Stage::Fuse => {
                let sparse = load_run(&self.need(stage, lang, "bm25.trec", Stage::Bm25)?)?;
                let dense = load_run(&self.need(stage, lang, "dense.trec", Stage::Dense)?)?;
                let (hybrid, pool) = hybrid_pool(
                    &[sparse, dense],
                    &cfg.fusion_weights,
                    cfg.fusion_normalize.parse()?,
                    cfg.pool_depth,
                )?;
                self.save_run(stage, lang, "hybrid.trec", &hybrid)?;
                self.save_run(stage, lang, "pool.trec", &pool.into_run().with_tag("pool"))?;
            }
            Stage::Negatives => {
                let pool = cut_pool(&load_run(&self.need(stage, lang, "pool.trec", Stage::Fuse)?)?, cfg.pool_depth);
                let qrels = load_qrels(&cfg.input(&cfg.qrels, lang))?;
                let sample = sample_negatives(&pool, &qrels, &self.topics(lang)?, cfg.negatives, cfg.seed)?;
                let p = cfg.output(lang, "negatives.pairs.tsv");
                save_pairs(&p, &sample.pairs, &self.header(stage, lang))?;
                self.wrote(p);
            }
            Stage::Q2q2d => {
                let tt = self.need_input(stage, "train_topics", &cfg.train_topics, lang)?;
                let tq = self.need_input(stage, "train_qrels", &cfg.train_qrels, lang)?;
                let qv = self.need_input(stage, "query_vectors", &cfg.query_vectors, lang)?;
                let pairs = q2q2d_augment(
                    &self.topics(lang)?,
                    &load_topics(&tt, lang, Split::Train)?,
                    &load_qrels(&tq)?,
                    &load_embeddings(&qv, Metric::Cosine)?,
                    &cfg.augmentation(),
                )?;
                let p = cfg.output(lang, "q2q2d.pairs.tsv");
                save_pairs(&p, &pairs, &self.header(stage, lang))?;
                self.wrote(p);
            }
            Stage::Rerank => {
                let pool = cut_pool(&load_run(&self.need(stage, lang, "pool.trec", Stage::Fuse)?)?, cfg.pool_depth);
                let scorer = cfg.scorer()?;
                let corpus = load_corpus_map(&cfg.input(&cfg.corpus, lang))?;
                let pairs = build_pairs(
                    &pool,
                    &self.topics(lang)?,
                    &corpus,
                    cfg.rerank_budget,
                    cfg.script_policy.parse()?,
                    scorer.truncates_locally(),
                )?;
                let run = score_pairs(&pairs, &scorer, "rerank")?;
                self.save_run(stage, lang, "rerank.trec", &run)?;
            }
            Stage::Pseudo => {
                let run = load_run(&self.need(stage, lang, "rerank.trec", Stage::Rerank)?)?;
                let pairs = pseudo_label(&run, &self.topics(lang)?, cfg.pseudo_fraction, cfg.seed)?;
                let p = cfg.output(lang, "pseudo.pairs.tsv");
                save_pairs(&p, &pairs, &self.header(stage, lang))?;
                self.wrote(p);
            }
            Stage::Ensemble => {
                let runs: Vec<Run> = cfg
                    .ensemble_runs
                    .iter()
                    .map(|name| {
                        let p = self.need(stage, lang, &format!("{name}.trec"), run_producer(name)?)?;
                        Ok(load_run(&p)?.with_tag(name.clone()))
                    })
                    .collect::<Result<_>>()?;
                let config = cfg.ensemble_config()?;
                let corr = correlation_matrix(&runs)?;
                let weights = adjust_weights(&config, &corr)?;
                let fused = ensemble_runs(&runs, &weights)?;
                self.save_run(stage, lang, "ensemble.trec", &fused)?;
                let rho = mean_correlations(&corr);
                let p = cfg.output(lang, "ensemble.weights.tsv");
                textio::save_with(&p, |w| {
                    self.header(stage, lang).write_to(w)?;
                    for (i, name) in cfg.ensemble_runs.iter().enumerate() {
                        writeln!(
                            w,
                            "{name}\t{}\t{}\t{}",
                            fmt_score(config.base_weights[i]),
                            fmt_score(rho[i]),
                            fmt_score(weights[i])
                        )?;
                    }
                    Ok(())
                })?;
                self.wrote(p);
            }
            Stage::Eval => {
                let qrels = load_qrels(&cfg.input(&cfg.qrels, lang))?;
                for name in self.eval_runs(lang)? {
                    let p = self.need(stage, lang, &format!("{name}.trec"), run_producer(&name)?)?;
                    let run = load_run(&p)?;
                    let reports = [ndcg_at_k(&run, &qrels, cfg.ndcg_k), recall_at_k(&run, &qrels, cfg.recall_k)];
                    let out = cfg.output(lang, &format!("{name}.eval.tsv"));
                    let header = self.header(stage, lang).with(format!("run={name}"));
                    textio::save_with(&out, |w| {
                        header.write_to(w)?;
                        for r in &reports {
                            r.write_tsv(w, true, &Header::new())?;
                        }
                        Ok(())
                    })?;
                    self.wrote(out);
                    for r in reports {
                        log::info!("{lang} {name}: {}", r.summary());
                        self.summary.metrics.push(SummaryRow {
                            language: lang.to_string(),
                            run: name.clone(),
                            metric: r.name(),
                            value: r.mean,
                            queries: r.evaluated_queries,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn eval_runs(&self, lang: &str) -> Result<Vec<String>> {
        if !self.cfg.eval_runs.is_empty() {
            return Ok(self.cfg.eval_runs.clone());
        }
        let produced: Vec<String> = RUNS
            .iter()
            .filter(|(_, s)| self.stages.contains(s))
            .map(|(n, _)| n.to_string())
            .collect();
        if !produced.is_empty() {
            return Ok(produced);
        }
        let on_disk: Vec<String> = RUNS
            .iter()
            .filter(|(n, _)| self.cfg.output(lang, &format!("{n}.trec")).is_file())
            .map(|(n, _)| n.to_string())
            .collect();
        if on_disk.is_empty() {
            return Err(Error::MissingArtifact {
                stage: Stage::Eval.to_string(),
                requires: Stage::Bm25.to_string(),
                detail: format!("no run files in {}", self.cfg.output_root().join(lang).display()),
            });
        }
        Ok(on_disk)
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| fmt_score(*x)).collect::<Vec<_>>().join(",")
}

/// Run the configured stages in dependency order, each over every language.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let stages = cfg.stage_list()?;
    let mut ctx = Ctx {
        cfg,
        stages: &stages,
        summary: PipelineSummary {
            stages: stages.clone(),
            ..Default::default()
        },
    };
    for &stage in &stages {
        for lang in &cfg.languages {
            log::info!("stage {stage} [{lang}]");
            ctx.run_stage(stage, lang)?;
        }
    }

    let mut summary = ctx.summary;
    if stages.contains(&Stage::Eval) {
        let mut keys: Vec<(String, String)> = Vec::new();
        for r in &summary.metrics {
            let k = (r.run.clone(), r.metric.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        for (run, metric) in keys {
            let values: Vec<f64> = summary
                .metrics
                .iter()
                .filter(|r| r.run == run && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            summary.macro_metrics.push((run, metric, mean));
        }
        let p = cfg.output_root().join("summary.tsv");
        let header = Header::new().with(format!(
            "mirank summary schema={SCHEMA} seed={} languages={}",
            cfg.seed,
            cfg.languages.join(",")
        ));
        textio::save_with(&p, |w| summary.write_tsv(w, &header))?;
        summary.artifacts.push(p);
    }
    Ok(summary)
}

/// A commented config for the bundled toy corpus at `data_dir`.
pub fn example_config(data_dir: &str, output_dir: &str, seed: u64) -> String {
    format!(
        r#"# mirank experiment config
schema = "{SCHEMA}"
seed = {seed}
languages = ["en", "sw", "zh"]
# index, bm25, dense, fuse, negatives, q2q2d, rerank, pseudo, ensemble, eval
# ("retrieve" = bm25 + dense, "forge" = negatives + q2q2d + pseudo)
stages = ["index", "retrieve", "fuse", "forge", "rerank", "ensemble", "eval"]
output_dir = "{output_dir}"

corpus = "{data_dir}/{{lang}}/corpus.jsonl"
topics = "{data_dir}/{{lang}}/topics.tsv"
qrels = "{data_dir}/{{lang}}/qrels.txt"
train_topics = "{data_dir}/{{lang}}/train-topics.tsv"
train_qrels = "{data_dir}/{{lang}}/train-qrels.txt"
query_vectors = "{data_dir}/{{lang}}/queries.vec.tsv"
doc_vectors = "{data_dir}/{{lang}}/docs.vec.tsv"

script_policy = "auto"
bm25_k1 = 0.9
bm25_b = 0.4
bm25_depth = 200
dense_metric = "dot"
dense_depth = 200
fusion_weights = [0.5, 0.5]   # sparse, dense
fusion_normalize = "minmax"
pool_depth = 50

negatives = 20
q2q2d_alpha = 0.9
q2q2d_tau = 0.8
q2q2d_top_m = 1
pseudo_fraction = 0.5

rerank_scorer = "lexical"     # or "cmd:<command>" / "file:<scores.tsv>"
rerank_budget = 256

ensemble_runs = ["hybrid", "rerank"]
ensemble_base_weights = []    # empty = equal
ensemble_lambda = 0.5

ndcg_k = 10
recall_k = 50
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("/tmp"))
    }

    #[test]
    fn example_config_parses() {
        let c = cfg(&example_config("data", "out", 3)).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.pool_depth, 50);
        assert_eq!(c.stage_list().unwrap(), Stage::ALL.to_vec());
        assert_eq!(c.input(&c.corpus, "sw"), PathBuf::from("/tmp/data/sw/corpus.jsonl"));
    }

    #[test]
    fn stages_sorted_and_deduplicated() {
        let mut c = cfg(&example_config("d", "o", 0)).unwrap();
        c.stages = vec!["eval".into(), "bm25".into(), "index".into(), "retrieve".into()];
        assert_eq!(
            c.stage_list().unwrap(),
            vec![Stage::Index, Stage::Bm25, Stage::Dense, Stage::Eval]
        );
        c.stages = vec!["bogus".into()];
        assert!(c.stage_list().is_err());
    }

    #[test]
    fn rejects_bad_schema_and_unknown_keys() {
        let good = example_config("d", "o", 0);
        assert!(cfg(&good.replace(SCHEMA, "other/9")).is_err());
        assert!(cfg(&format!("{good}\nmystery = 1\n")).is_err());
        assert!(cfg(&good.replace("fusion_weights = [0.5, 0.5]", "fusion_weights = [1.0]")).is_err());
    }

    #[test]
    fn fuse_without_runs_is_a_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::from_toml(&example_config("data", "out", 0), dir.path()).unwrap();
        c.stages = vec!["fuse".into()];
        match run_pipeline(&c) {
            Err(Error::MissingArtifact { stage, requires, .. }) => {
                assert_eq!(stage, "fuse");
                assert_eq!(requires, "bm25");
            }
            other => panic!("expected a dependency error, got {other:?}"),
        }
    }
}
