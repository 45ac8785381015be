//! Binary index file.
//!
//! Layout (little endian):
//!
//! ```text
//! magic     8 bytes  "MIRKIDX\0"
//! version   u32
//! policy    u8
//! metadata  u32 len + UTF-8 bytes
//! n_docs    u32
//!   n_docs × (u32 len + docid bytes, u32 doc length)
//! n_terms   u64
//!   n_terms × (u32 len + term bytes, u32 df, df × (u32 doc, u32 tf))
//! ```
//!
//! Terms are written in lexicographic order, so equal indexes serialize to
//! equal bytes.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::index::{InvertedIndex, Posting};
use super::tokenize::ScriptPolicy;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"MIRKIDX\0";
pub const INDEX_VERSION: u32 = 1;

fn write_str<W: Write + ?Sized>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u32::try_from(s.len()).map_err(io::Error::other)?;
    w.write_u32::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(corrupt)?;
    String::from_utf8(buf).map_err(|_| Error::Invalid("index file: invalid UTF-8 string".into()))
}

fn corrupt(e: io::Error) -> Error {
    Error::Invalid(format!("index file truncated or unreadable: {e}"))
}

pub fn write_index<W: Write + ?Sized>(w: &mut W, index: &InvertedIndex) -> io::Result<()> {
    w.write_all(INDEX_MAGIC)?;
    w.write_u32::<LittleEndian>(INDEX_VERSION)?;
    w.write_u8(index.policy.code())?;
    write_str(w, &index.metadata)?;
    w.write_u32::<LittleEndian>(index.docids.len() as u32)?;
    for (id, len) in index.docids.iter().zip(&index.doc_lengths) {
        write_str(w, id)?;
        w.write_u32::<LittleEndian>(*len)?;
    }
    w.write_u64::<LittleEndian>(index.postings.len() as u64)?;
    for (term, plist) in &index.postings {
        write_str(w, term)?;
        w.write_u32::<LittleEndian>(plist.len() as u32)?;
        for p in plist {
            w.write_u32::<LittleEndian>(p.doc)?;
            w.write_u32::<LittleEndian>(p.tf)?;
        }
    }
    Ok(())
}

pub fn read_index<R: Read>(r: &mut R) -> Result<InvertedIndex> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != INDEX_MAGIC {
        return Err(Error::Invalid("not an index file (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != INDEX_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported index version {version} (expected {INDEX_VERSION})"
        )));
    }
    let policy = ScriptPolicy::from_code(r.read_u8().map_err(corrupt)?)
        .ok_or_else(|| Error::Invalid("index file: unknown script policy".into()))?;
    let metadata = read_str(r)?;
    let n_docs = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    let mut docids = Vec::with_capacity(n_docs);
    let mut doc_lengths = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        docids.push(read_str(r)?);
        doc_lengths.push(r.read_u32::<LittleEndian>().map_err(corrupt)?);
    }
    let n_terms = r.read_u64::<LittleEndian>().map_err(corrupt)?;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let term = read_str(r)?;
        let df = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        let mut plist = Vec::with_capacity(df);
        for _ in 0..df {
            let doc = r.read_u32::<LittleEndian>().map_err(corrupt)?;
            let tf = r.read_u32::<LittleEndian>().map_err(corrupt)?;
            if doc as usize >= n_docs {
                return Err(Error::Invalid(format!(
                    "index file: posting for `{term}` points past the document table"
                )));
            }
            plist.push(Posting { doc, tf });
        }
        postings.insert(term, plist);
    }
    if n_docs == 0 {
        return Err(Error::Invalid("index file: no documents".into()));
    }
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    Ok(InvertedIndex {
        policy,
        avgdl: total as f64 / n_docs as f64,
        docids,
        doc_lengths,
        postings,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::sparse::build_index;

    fn sample() -> InvertedIndex {
        let docs = vec![
            Ok(Document::new("a", "Title", "alpha beta beta")),
            Ok(Document::new("b", "", "東京 タワー")),
        ];
        let mut idx = build_index(docs, ScriptPolicy::Auto).unwrap();
        idx.set_metadata("seed=3");
        idx
    }

    #[test]
    fn roundtrip_and_determinism() {
        let idx = sample();
        let mut a = Vec::new();
        write_index(&mut a, &idx).unwrap();
        let back = read_index(&mut a.as_slice()).unwrap();
        assert_eq!(back, idx);
        let mut b = Vec::new();
        write_index(&mut b, &sample()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(read_index(&mut &b"NOTANIDX...."[..]).is_err());
        let mut a = Vec::new();
        write_index(&mut a, &sample()).unwrap();
        a.truncate(a.len() - 3);
        assert!(read_index(&mut a.as_slice()).is_err());
    }

    #[test]
    fn version_mismatch() {
        let mut a = Vec::new();
        write_index(&mut a, &sample()).unwrap();
        a[8] = 99;
        let err = read_index(&mut a.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
