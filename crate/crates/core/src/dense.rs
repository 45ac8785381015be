//! Precomputed embeddings and exact top-k similarity search.
//!
//! Vector files hold one record per line: `id<TAB>v1,v2,...,vd`. Values are
//! stored as `f32`; all dot products accumulate in `f64`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::run::{top_k, ScoredDoc};
use crate::textio::{self, Header, Lines};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Dot,
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dot => "dot",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" | "ip" => Ok(Metric::Dot),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::Invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    metric: Metric,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    data: Vec<f32>,
    /// Squared L2 norms.
    norms: Vec<f64>,
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    cosine_from_parts(dot(a, b), dot(a, a), dot(b, b))
}

fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    let d = (aa * bb).sqrt();
    if d == 0.0 {
        0.0
    } else {
        (ab / d).clamp(-1.0, 1.0)
    }
}

impl EmbeddingStore {
    /// Build from `(id, vector)` records; enforces a single dimension, unique
    /// ids, finite values and (under cosine) non-zero vectors.
    pub fn from_records<I>(records: I, metric: Metric) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        let mut store = EmbeddingStore {
            dim: 0,
            metric,
            ids: Vec::new(),
            by_id: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
        };
        for (i, (id, v)) in records.into_iter().enumerate() {
            store.push(id, v).map_err(|m| Error::Invalid(format!("record {}: {m}", i + 1)))?;
        }
        if store.ids.is_empty() {
            return Err(Error::Invalid("no vectors".into()));
        }
        Ok(store)
    }

    fn push(&mut self, id: String, v: Vec<f32>) -> std::result::Result<(), String> {
        if v.is_empty() {
            return Err(format!("`{id}` has no values"));
        }
        if self.ids.is_empty() {
            self.dim = v.len();
        } else if v.len() != self.dim {
            return Err(format!(
                "`{id}` has dimension {} but the store has dimension {}",
                v.len(),
                self.dim
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("`{id}` has a non-finite value"));
        }
        let n = dot(&v, &v);
        if self.metric == Metric::Cosine && n == 0.0 {
            return Err(format!("`{id}` is a zero vector (undefined under cosine)"));
        }
        if self.by_id.contains_key(&id) {
            return Err(format!("duplicate id `{id}`"));
        }
        self.by_id.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&v);
        self.norms.push(n);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i)))
    }

    /// Exhaustive top-`k` against an arbitrary query vector.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<ScoredDoc>> {
        if query.len() != self.dim {
            return Err(Error::Invalid(format!(
                "query dimension {} does not match store dimension {}",
                query.len(),
                self.dim
            )));
        }
        let qn = dot(query, query);
        if self.metric == Metric::Cosine && qn == 0.0 {
            return Err(Error::Invalid("zero query vector under cosine".into()));
        }
        let scores: Vec<ScoredDoc> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let d = dot(query, self.row(i));
                let s = match self.metric {
                    Metric::Dot => d,
                    Metric::Cosine => cosine_from_parts(d, qn, self.norms[i]),
                };
                ScoredDoc::new(self.ids[i].clone(), s)
            })
            .collect();
        Ok(top_k(scores, k))
    }
}

/// Top-`k` documents for a query id looked up in the companion query store.
pub fn dense_search(
    docs: &EmbeddingStore,
    queries: &EmbeddingStore,
    query_id: &str,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    let q = queries
        .vector(query_id)
        .ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
    docs.search_vector(q, k)
}

pub fn read_embeddings<R: BufRead>(reader: R, name: &str, metric: Metric) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore {
        dim: 0,
        metric,
        ids: Vec::new(),
        by_id: HashMap::new(),
        data: Vec::new(),
        norms: Vec::new(),
    };
    for item in Lines::new(reader, name) {
        let (line_no, line) = item?;
        if textio::is_skippable(&line) {
            continue;
        }
        let Some((id, values)) = line.split_once('\t') else {
            return Err(Error::parse(name, line_no, "expected `id<TAB>v1,v2,...`"));
        };
        let v = values
            .split(',')
            .map(|x| x.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(name, line_no, format!("bad value for `{id}`: {e}")))?;
        store
            .push(id.to_string(), v)
            .map_err(|m| Error::parse(name, line_no, m))?;
    }
    if store.ids.is_empty() {
        return Err(Error::Invalid(format!("{name}: no vectors")));
    }
    Ok(store)
}

pub fn load_embeddings(path: &Path, metric: Metric) -> Result<EmbeddingStore> {
    read_embeddings(textio::open_reader(path)?, &textio::display_name(path), metric)
}

pub fn write_embeddings<W: Write + ?Sized>(w: &mut W, store: &EmbeddingStore, header: &Header) -> std::io::Result<()> {
    header.write_to(w)?;
    for (id, v) in store.iter() {
        write!(w, "{id}\t")?;
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                w.write_all(b",")?;
            }
            if *x == 0.0 {
                w.write_all(b"0")?;
            } else {
                write!(w, "{x}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
