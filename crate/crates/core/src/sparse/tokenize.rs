//! Script-aware tokenizer.
//!
//! Text is walked by extended grapheme cluster so combining marks stay with
//! their base character. A cluster whose base character is alphanumeric is a
//! word character; anything else separates tokens. Under the unigram policy,
//! clusters from Han, Hiragana, Katakana, Hangul and Thai each become their
//! own token. Tokens are lowercased.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use unicode_segmentation::UnicodeSegmentation;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScriptPolicy {
    Whitespace,
    Unigram,
    #[default]
    Auto,
}

impl ScriptPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ScriptPolicy::Whitespace => "whitespace",
            ScriptPolicy::Unigram => "unigram",
            ScriptPolicy::Auto => "auto",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ScriptPolicy::Whitespace => 0,
            ScriptPolicy::Unigram => 1,
            ScriptPolicy::Auto => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ScriptPolicy::Whitespace),
            1 => Some(ScriptPolicy::Unigram),
            2 => Some(ScriptPolicy::Auto),
            _ => None,
        }
    }
}

impl fmt::Display for ScriptPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScriptPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "whitespace" => Ok(ScriptPolicy::Whitespace),
            "unigram" => Ok(ScriptPolicy::Unigram),
            "auto" => Ok(ScriptPolicy::Auto),
            other => Err(Error::Invalid(format!("unknown script policy `{other}`"))),
        }
    }
}

/// Ordered, normalized tokens. Never contains an empty string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A token and the byte range it came from in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Range<usize>,
}

pub fn is_unigram_script(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF          // CJK ext A
        | 0x4E00..=0x9FFF        // CJK unified
        | 0xF900..=0xFAFF        // CJK compatibility
        | 0x20000..=0x2EBEF      // CJK ext B..F
        | 0x30000..=0x3134F      // CJK ext G
        | 0x3040..=0x309F        // Hiragana
        | 0x30A0..=0x30FF        // Katakana
        | 0x31F0..=0x31FF        // Katakana phonetic ext
        | 0xFF66..=0xFF9F        // halfwidth Katakana
        | 0x1100..=0x11FF        // Hangul jamo
        | 0x3130..=0x318F        // Hangul compatibility jamo
        | 0xA960..=0xA97F
        | 0xAC00..=0xD7AF        // Hangul syllables
        | 0xD7B0..=0xD7FF
        | 0x0E00..=0x0E7F        // Thai
    )
}

/// Resolve `Auto` for one string: unigram when unigram-script characters
/// outnumber other alphanumeric characters.
pub fn resolve_policy(text: &str, policy: ScriptPolicy) -> ScriptPolicy {
    match policy {
        ScriptPolicy::Auto => {
            let (mut uni, mut other) = (0usize, 0usize);
            for c in text.chars().filter(|c| c.is_alphanumeric()) {
                if is_unigram_script(c) {
                    uni += 1;
                } else {
                    other += 1;
                }
            }
            if uni > other {
                ScriptPolicy::Unigram
            } else {
                ScriptPolicy::Whitespace
            }
        }
        p => p,
    }
}

pub fn tokenize_spans(text: &str, policy: ScriptPolicy) -> Vec<Token> {
    let unigram = resolve_policy(text, policy) == ScriptPolicy::Unigram;
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut word_end = 0;

    let flush = |out: &mut Vec<Token>, start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            let t = text[s..end].to_lowercase();
            if !t.is_empty() {
                out.push(Token { text: t, span: s..end });
            }
        }
    };

    for (offset, g) in text.grapheme_indices(true) {
        let base = g.chars().next().unwrap_or(' ');
        let end = offset + g.len();
        if unigram && is_unigram_script(base) {
            flush(&mut out, &mut word_start, word_end);
            out.push(Token {
                text: g.to_lowercase(),
                span: offset..end,
            });
        } else if base.is_alphanumeric() {
            word_start.get_or_insert(offset);
            word_end = end;
        } else {
            flush(&mut out, &mut word_start, word_end);
        }
    }
    flush(&mut out, &mut word_start, word_end);
    out
}

pub fn tokenize(text: &str, policy: ScriptPolicy) -> TokenStream {
    TokenStream(
        tokenize_spans(text, policy)
            .into_iter()
            .map(|t| t.text)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str, p: ScriptPolicy) -> Vec<String> {
        tokenize(s, p).into_tokens()
    }

    #[test]
    fn casefold_and_punctuation() {
        assert_eq!(
            toks("The Quick, quick fox", ScriptPolicy::Whitespace),
            vec!["the", "quick", "quick", "fox"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("", ScriptPolicy::Auto).is_empty());
        assert!(tokenize("  ,. ", ScriptPolicy::Unigram).is_empty());
    }

    #[test]
    fn cjk_unigrams() {
        assert_eq!(toks("北京市", ScriptPolicy::Unigram), vec!["北", "京", "市"]);
        assert_eq!(toks("北京市", ScriptPolicy::Auto), vec!["北", "京", "市"]);
        // Whitespace policy keeps the run as one token.
        assert_eq!(toks("北京市", ScriptPolicy::Whitespace), vec!["北京市"]);
    }

    #[test]
    fn mixed_scripts_under_unigram() {
        assert_eq!(
            toks("BM25は速い", ScriptPolicy::Unigram),
            vec!["bm25", "は", "速", "い"]
        );
    }

    #[test]
    fn thai_marks_stay_with_base() {
        // กิน = ก + ิ (combining vowel) + น
        assert_eq!(toks("กิน", ScriptPolicy::Unigram), vec!["กิ", "น"]);
        assert_eq!(toks("กิน ข้าว", ScriptPolicy::Whitespace), vec!["กิน", "ข้าว"]);
    }

    #[test]
    fn devanagari_word_not_split_on_marks() {
        assert_eq!(toks("हिन्दी भाषा", ScriptPolicy::Auto), vec!["हिन्दी", "भाषा"]);
    }

    #[test]
    fn auto_majority() {
        assert_eq!(resolve_policy("hello 世", ScriptPolicy::Auto), ScriptPolicy::Whitespace);
        assert_eq!(resolve_policy("a 世界", ScriptPolicy::Auto), ScriptPolicy::Unigram);
    }

    #[test]
    fn spans_point_into_source() {
        let s = "Hello, Wörld";
        for t in tokenize_spans(s, ScriptPolicy::Auto) {
            assert_eq!(s[t.span.clone()].to_lowercase(), t.text);
        }
    }

    proptest! {
        #[test]
        fn no_empty_tokens(s in "\\PC{0,40}") {
            for p in [ScriptPolicy::Whitespace, ScriptPolicy::Unigram, ScriptPolicy::Auto] {
                prop_assert!(tokenize(&s, p).tokens().iter().all(|t| !t.is_empty()));
            }
        }
    }
}
