//! Shared plumbing for the line-oriented text formats: file opening, UTF-8
//! checked line iteration, `#` header comments, field escaping and float
//! rendering.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Leading `# ...` comment lines of an artifact. Readers skip them; writers
/// emit them first so provenance (seed, stage) travels with the data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Header(pub Vec<String>);

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, line: impl Into<String>) -> Self {
        self.0.push(line.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        for line in &self.0 {
            if line.is_empty() {
                writeln!(w, "#")?;
            } else {
                writeln!(w, "# {line}")?;
            }
        }
        Ok(())
    }

    /// Collect the leading comment block of a file.
    pub fn read(path: &Path) -> Result<Self> {
        let mut out = Vec::new();
        for item in Lines::open(path)? {
            let (_, line) = item?;
            match line.strip_prefix('#') {
                Some(rest) => out.push(rest.strip_prefix(' ').unwrap_or(rest).to_string()),
                None => break,
            }
        }
        Ok(Header(out))
    }
}

pub(crate) fn display_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Create `path` (and its parent directories), hand the buffered writer to
/// `f` and flush.
pub fn save_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut w = create_writer(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Iterator over `(1-based line number, line)` with invalid UTF-8 reported as
/// a parse error on the offending line.
pub struct Lines<R> {
    inner: R,
    file: String,
    line_no: usize,
    buf: Vec<u8>,
}

impl Lines<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Lines::new(open_reader(path)?, display_name(path)))
    }
}

impl<R: BufRead> Lines<R> {
    pub fn new(inner: R, file: impl Into<String>) -> Self {
        Lines {
            inner,
            file: file.into(),
            line_no: 0,
            buf: Vec::new(),
        }
    }

    pub fn file(&self) -> &str {
        &self.file
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line_no += 1;
                if self.buf.last() == Some(&b'\n') {
                    self.buf.pop();
                    if self.buf.last() == Some(&b'\r') {
                        self.buf.pop();
                    }
                }
                let buf = std::mem::take(&mut self.buf);
                Some(match String::from_utf8(buf) {
                    Ok(s) => Ok((self.line_no, s)),
                    Err(_) => Err(Error::parse(&self.file, self.line_no, "invalid UTF-8")),
                })
            }
            Err(e) => Some(Err(Error::Io {
                path: self.file.clone().into(),
                source: e,
            })),
        }
    }
}

/// True for lines the readers ignore: blank lines and `#` comments.
pub(crate) fn is_skippable(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#')
}

/// Escape backslash, tab, newline and carriage return so a value fits in one
/// tab-separated field.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Shortest decimal rendering that parses back to the same `f64`.
pub fn fmt_score(x: f64) -> String {
    // `{}` on f64 is round-trip exact; normalise negative zero.
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

pub(crate) fn parse_f64(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lines_report_bad_utf8_with_line_number() {
        let data: &[u8] = b"ok\n\xff\xfe\n";
        let mut it = Lines::new(data, "mem");
        assert_eq!(it.next().unwrap().unwrap(), (1, "ok".to_string()));
        match it.next().unwrap() {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crlf_is_stripped() {
        let data: &[u8] = b"a\r\nb";
        let got: Vec<_> = Lines::new(data, "mem").map(|l| l.unwrap().1).collect();
        assert_eq!(got, vec!["a", "b"]);
    }

    #[test]
    fn score_formatting() {
        assert_eq!(fmt_score(1.0), "1");
        assert_eq!(fmt_score(-0.0), "0");
        assert_eq!(fmt_score(0.15139), "0.15139");
    }

    proptest! {
        #[test]
        fn escape_roundtrip(s in "\\PC*|[\\\\\t\n\r a-z]*") {
            let e = escape_field(&s);
            prop_assert!(!e.contains('\t') && !e.contains('\n'));
            prop_assert_eq!(unescape_field(&e), s);
        }

        #[test]
        fn score_roundtrip(x in proptest::num::f64::NORMAL) {
            prop_assert_eq!(fmt_score(x).parse::<f64>().unwrap(), x);
        }
    }
}
