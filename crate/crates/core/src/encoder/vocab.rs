use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SUBJ: &str = "[S]";
pub const PRED: &str = "[P]";
pub const OBJ: &str = "[O]";
pub const SEP: &str = "[SEP]";

/// Reserved tokens in id order. They always occupy ids `0..6`.
pub const RESERVED: [&str; 6] = [PAD, UNK, SUBJ, PRED, OBJ, SEP];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const SUBJ_ID: u32 = 2;
pub const PRED_ID: u32 = 3;
pub const OBJ_ID: u32 = 4;
pub const SEP_ID: u32 = 5;

// Markers recognized inside raw strings by the tokenizer.
const INLINE_MARKERS: [(&str, u32); 4] = [
    (SUBJ, SUBJ_ID),
    (PRED, PRED_ID),
    (OBJ, OBJ_ID),
    (SEP, SEP_ID),
];

/// A piece of tokenized input: either a reserved marker or a lowercased word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece<'a> {
    Marker(u32),
    Word(&'a str),
}

/// Splits on whitespace and punctuation, recognizing the inline markers.
/// Words are returned as slices of the input; callers lowercase them.
pub fn pieces(s: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut iter = s.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c == '[' {
            if let Some(&(tok, id)) = INLINE_MARKERS.iter().find(|(m, _)| s[i..].starts_with(m)) {
                if let Some(start) = word_start.take() {
                    out.push(Piece::Word(&s[start..i]));
                }
                out.push(Piece::Marker(id));
                // skip the rest of the marker
                for _ in 1..tok.len() {
                    iter.next();
                }
                continue;
            }
        }
        if c.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else if let Some(start) = word_start.take() {
            out.push(Piece::Word(&s[start..i]));
        }
    }
    if let Some(start) = word_start {
        out.push(Piece::Word(&s[start..]));
    }
    out
}

/// Token vocabulary with reserved markers first and contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_words(std::iter::empty::<String>()).expect("reserved tokens are valid")
    }
}

impl Vocab {
    /// Builds a vocab from corpus strings. Words with at least `min_count`
    /// occurrences are kept, ordered by count descending then token ascending.
    pub fn build<I, S>(corpus: I, min_count: usize) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for line in corpus {
            for piece in pieces(line.as_ref()) {
                if let Piece::Word(w) = piece {
                    *counts.entry(w.to_lowercase()).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !RESERVED.contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_words(words.into_iter().map(|(w, _)| w)).expect("counted words are unique")
    }

    /// Reserved tokens followed by `words` in the given order.
    fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Vocab> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        Self::from_tokens(tokens)
    }

    /// Full ordered token list, reserved tokens included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::invalid(format!(
                "vocab must start with the reserved tokens {RESERVED:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocab token {t:?}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocab token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, s: &str) -> Vec<u32> {
        pieces(s)
            .into_iter()
            .map(|p| match p {
                Piece::Marker(id) => id,
                Piece::Word(w) => self.id(&w.to_lowercase()).unwrap_or(UNK_ID),
            })
            .collect()
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Vocab> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Free-function form of [`Vocab::build`].
pub fn build_vocab<I, S>(corpus: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    Vocab::build(corpus, min_count)
}

/// Free-function form of [`Vocab::tokenize`].
pub fn tokenize(s: &str, v: &Vocab) -> Vec<u32> {
    v.tokenize(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_then_alpha_order() {
        let v = build_vocab(["a b", "a"], 1);
        assert_eq!(v.id("a"), Some(6));
        assert_eq!(v.id("b"), Some(7));
        let v2 = build_vocab(["b c", "c b"], 1);
        assert_eq!(v2.tokens()[6..], ["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocab(["a b", "a"], 2);
        assert_eq!(v.len(), 7);
        assert!(v.id("b").is_none());
    }

    #[test]
    fn reserved_always_present() {
        let v = build_vocab(Vec::<String>::new(), 1);
        assert_eq!(v.len(), RESERVED.len());
        for (i, r) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(r), Some(i as u32));
        }
    }

    #[test]
    fn tokenize_markers_and_words() {
        let v = build_vocab(["a b c"], 1);
        let ids = tokenize("[S] a [P] b [O] c", &v);
        assert_eq!(
            ids,
            vec![
                SUBJ_ID,
                v.id("a").unwrap(),
                PRED_ID,
                v.id("b").unwrap(),
                OBJ_ID,
                v.id("c").unwrap()
            ]
        );
        assert_eq!(tokenize("zzz", &v), vec![UNK_ID]);
        assert_eq!(tokenize("A, b[SEP]C", &v).len(), 4);
    }

    #[test]
    fn punctuation_splits_words() {
        let words: Vec<_> = pieces("Alan Bean's job: astronaut.")
            .into_iter()
            .filter_map(|p| match p {
                Piece::Word(w) => Some(w),
                _ => None,
            })
            .collect();
        assert_eq!(words, ["Alan", "Bean", "s", "job", "astronaut"]);
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocab(["x y z y"], 1);
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("a\nb\n").is_err());
    }
}
