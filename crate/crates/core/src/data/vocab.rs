//! Word-level vocabulary with reserved ids and a frequent-token set.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fame::FrequentSet;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Number of reserved ids; content tokens start here.
pub const RESERVED: usize = 4;
pub const RESERVED_NAMES: [&str; RESERVED] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    freqs: Vec<u64>,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index, freqs })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED_NAMES[UNK], String::as_str)
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.freqs.get(id).copied().unwrap_or(0)
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.freqs
    }

    /// Writes `id<TAB>token<TAB>frequency<TAB>in-frequent-set` lines.
    pub fn save(&self, path: &Path, frequent: &FrequentSet) -> Result<()> {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(&format!("{i}\t{t}\t{}\t{}\n", self.freqs[i], u8::from(frequent.contains(i))));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Vocabulary, FrequentSet)> {
        let text = fs::read_to_string(path)?;
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        let mut frequent = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_err = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let [id, token, freq, member] = fields[..] else {
                return Err(parse_err("expected 4 tab-separated fields"));
            };
            if id.parse::<usize>().ok() != Some(i) {
                return Err(parse_err("ids must be consecutive from 0"));
            }
            tokens.push(token.to_string());
            freqs.push(freq.parse().map_err(|_| parse_err("bad frequency"))?);
            if member == "1" {
                frequent.push(i);
            }
        }
        let vocab = Vocabulary::from_parts(tokens, freqs)?;
        let f = FrequentSet::from_ids(vocab.len(), frequent);
        Ok((vocab, f))
    }
}

/// Builds a vocabulary of at most `size` entries (reserved ids included)
/// from the most frequent corpus tokens, ties broken by first occurrence,
/// and the frequent set of the `freq_set_size` most frequent of them.
pub fn build_vocab<'a, I, S>(corpus: I, size: usize, freq_set_size: usize) -> Result<(Vocabulary, FrequentSet)>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = &'a str>,
{
    if size <= freq_set_size + RESERVED {
        return Err(Error::Config(format!(
            "vocabulary size {size} must exceed |F| {freq_set_size} + {RESERVED} reserved"
        )));
    }
    let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
    let mut seen = 0usize;
    for stream in corpus {
        for tok in stream {
            let entry = counts.entry(tok).or_insert((0, seen));
            entry.0 += 1;
            seen += 1;
        }
    }
    counts.retain(|t, _| !RESERVED_NAMES.contains(t));
    if counts.len() < freq_set_size.max(1) {
        return Err(Error::Input(format!(
            "corpus has {} distinct tokens, too few for a frequent set of {freq_set_size}",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&str, u64, usize)> = counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(size - RESERVED);

    let mut tokens: Vec<String> = RESERVED_NAMES.iter().map(|s| s.to_string()).collect();
    let mut freqs = vec![0u64; RESERVED];
    for (t, c, _) in ranked {
        tokens.push(t.to_string());
        freqs.push(c);
    }
    let vocab = Vocabulary::from_parts(tokens, freqs)?;
    let frequent = FrequentSet::from_frequencies(vocab.frequencies(), freq_set_size)?;
    Ok((vocab, frequent))
}

/// Whitespace split with lowercasing.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    words(text).iter().map(|w| vocab.id(w).unwrap_or(UNK)).collect()
}

/// Joins tokens with single spaces; pad and bos are skipped and output
/// stops at the first eos.
pub fn detokenize(ids: &[usize], vocab: &Vocabulary) -> String {
    ids.iter()
        .take_while(|&&t| t != EOS)
        .filter(|&&t| t != PAD && t != BOS)
        .map(|&t| vocab.token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(text: &str) -> Vec<Vec<String>> {
        vec![words(text)]
    }

    fn build(text: &str, size: usize, f: usize) -> Result<(Vocabulary, FrequentSet)> {
        let c = corpus(text);
        build_vocab(c.iter().map(|s| s.iter().map(String::as_str)), size, f)
    }

    #[test]
    fn frequency_ranking() {
        let (v, f) = build("a a a b b c", 7, 1).unwrap();
        assert_eq!(f.ids(), &[v.id("a").unwrap()]);
        assert_eq!(v.len(), 7);
        let (v, f) = build("a a a b b c d e", 7, 1).unwrap();
        assert_eq!(f.ids(), &[v.id("a").unwrap()]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.id("c"), Some(6));
        assert_eq!(v.id("d"), None);
    }

    #[test]
    fn frequent_set_has_requested_size() {
        let (v, f) = build("x y z x y x w v u t", 12, 3).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.contains(v.id("x").unwrap()));
    }

    #[test]
    fn rejects_tiny_corpus_and_bad_sizes() {
        assert!(matches!(build("", 10, 1), Err(Error::Input(_))));
        assert!(matches!(build("a", 10, 2), Err(Error::Input(_))));
        assert!(matches!(build("a b c d e", 5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn tokenize_round_trip() {
        let (v, _) = build("the cat sat on the mat", 20, 1).unwrap();
        let ids = tokenize("The cat  sat", &v);
        assert_eq!(ids, vec![v.id("the").unwrap(), v.id("cat").unwrap(), v.id("sat").unwrap()]);
        assert_eq!(detokenize(&ids, &v), "the cat sat");
        assert_eq!(tokenize("dog", &v), vec![UNK]);
        let mut with_eos = ids.clone();
        with_eos.extend([EOS, 5]);
        assert_eq!(detokenize(&with_eos, &v), "the cat sat");
    }

    #[test]
    fn save_load_round_trip() {
        let (v, f) = build("a a b c d e f", 10, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path, &f).unwrap();
        let (v2, f2) = Vocabulary::load(&path).unwrap();
        assert_eq!(v, v2);
        assert_eq!(f, f2);
    }
}
