//! Sparse retrieval: tokenization, inverted index and BM25 search.

mod index;
mod persist;
mod tokenize;

pub use index::{bm25_search, build_index, Bm25Params, InvertedIndex, Posting};
pub use persist::{read_index, write_index, INDEX_MAGIC, INDEX_VERSION};
pub use tokenize::{
    is_unigram_script, resolve_policy, tokenize, tokenize_spans, ScriptPolicy, Token, TokenStream,
};
