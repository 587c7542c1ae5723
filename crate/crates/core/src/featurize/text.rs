use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::FeatureVectorWithMask;
use crate::dataset::Episode;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_FRAC: f64 = 0.001;
pub const DEFAULT_MAX_FRAC: f64 = 0.90;

/// Retained tokens in lexicographic order with their document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    pub tokens: Vec<String>,
    pub document_frequency: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    document_frequency: Vec<f64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Self::from_tokens(r.tokens, r.document_frequency)
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>, document_frequency: Vec<f64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            document_frequency,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// One token per line, in retained order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }
}

/// Keeps tokens whose document frequency lies strictly inside `(min_frac, max_frac)`.
pub fn build_vocab<'a, I>(corpus: I, min_frac: f64, max_frac: f64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if !(0.0 <= min_frac && min_frac < max_frac && max_frac <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "vocabulary bounds ({min_frac}, {max_frac}) must satisfy 0 <= min < max <= 1"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut docs = 0usize;
    for doc in corpus {
        docs += 1;
        let distinct: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    if docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let (tokens, freqs): (Vec<String>, Vec<f64>) = df
        .into_iter()
        .map(|(t, c)| (t.to_string(), c as f64 / docs as f64))
        .filter(|&(_, f)| f > min_frac && f < max_frac)
        .unzip();
    Ok(Vocabulary::from_tokens(tokens, freqs))
}

/// Token counts over the episode's notes of `note_type`; masked when the type is absent.
pub fn build_bow(episode: &Episode, note_type: &str, vocab: &Vocabulary) -> FeatureVectorWithMask {
    match episode.notes.get(note_type) {
        None => FeatureVectorWithMask::missing(vocab.len()),
        Some(tokens) => {
            let mut counts = vec![0.0; vocab.len()];
            for t in tokens {
                if let Some(i) = vocab.position(t) {
                    counts[i] += 1.0;
                }
            }
            FeatureVectorWithMask::observed(counts)
        }
    }
}

/// Smoothed TF-IDF with L2 row normalization: idf = ln((1+N)/(1+df)) + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    pub idf: Vec<f64>,
}

impl TfIdf {
    /// Fits on bag-of-words rows; masked rows are not documents.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVectorWithMask>,
    {
        let mut df = vec![0usize; dim];
        let mut n = 0usize;
        for r in rows {
            if !r.any_observed() {
                continue;
            }
            n += 1;
            for (d, &c) in df.iter_mut().zip(&r.values) {
                if c > 0.0 {
                    *d += 1;
                }
            }
        }
        let idf = df
            .into_iter()
            .map(|d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Self { idf }
    }

    pub fn transform(&self, counts: &FeatureVectorWithMask) -> Vec<f64> {
        let mut v: Vec<f64> = counts
            .values
            .iter()
            .zip(&counts.mask)
            .zip(&self.idf)
            .map(|((&c, &m), &w)| if m { c * w } else { 0.0 })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    fn vocab_of(corpus: &[Vec<String>], lo: f64, hi: f64) -> Vocabulary {
        build_vocab(corpus.iter().map(Vec::as_slice), lo, hi).unwrap()
    }

    #[test]
    fn too_common_token_dropped() {
        // "x" is in 19 of 20 notes (95%).
        let mut corpus = docs(&[&["x", "y"] as &[&str]; 19]);
        corpus.push(docs(&[&["z"]]).remove(0));
        let v = vocab_of(&corpus, 0.001, 0.9);
        assert!(v.position("x").is_none());
        assert!(v.position("z").is_some());
    }

    #[test]
    fn boundary_frequency_excluded() {
        // "r" appears in exactly 1 of 4 notes = min_frac.
        let corpus = docs(&[&["r", "a"], &["a"], &["b"], &["b"]]);
        let v = vocab_of(&corpus, 0.25, 0.9);
        assert!(v.position("r").is_none());
        assert!(v.position("a").is_some());
    }

    #[test]
    fn universal_token_excluded() {
        let corpus = docs(&[&["a"], &["a"], &["a"]]);
        assert!(vocab_of(&corpus, 0.001, 0.9).is_empty());
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(
            build_vocab(empty.iter().map(Vec::as_slice), 0.001, 0.9),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn vocab_sorted_and_order_invariant() {
        let corpus = docs(&[&["q", "b"], &["a"], &["c", "b"], &["zz"]]);
        let mut rev = corpus.clone();
        rev.reverse();
        let a = vocab_of(&corpus, 0.0, 0.9);
        let b = vocab_of(&rev, 0.0, 0.9);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.tokens, vec!["a", "b", "c", "q", "zz"]);
    }

    #[test]
    fn bow_counts_and_missing() {
        let v = Vocabulary::from_tokens(vec!["a".into(), "b".into()], vec![0.5, 0.5]);
        let mut e = Episode::new("e");
        e.notes.insert(
            "ecg".into(),
            ["a", "b", "a", "zzz"].iter().map(|s| s.to_string()).collect(),
        );
        let bow = build_bow(&e, "ecg", &v);
        assert_eq!(bow.values, vec![2.0, 1.0]);
        assert!(bow.mask.iter().all(|&m| m));
        let missing = build_bow(&e, "echo", &v);
        assert!(missing.mask.iter().all(|&m| !m));
        assert!(missing.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tfidf_rows_unit_or_zero() {
        let rows = vec![
            FeatureVectorWithMask::observed(vec![2.0, 0.0, 1.0]),
            FeatureVectorWithMask::observed(vec![0.0, 1.0, 1.0]),
            FeatureVectorWithMask::missing(3),
            FeatureVectorWithMask::observed(vec![0.0, 0.0, 0.0]),
        ];
        let tf = TfIdf::fit(&rows, 3);
        // N = 3 observed documents; token 2 appears in 2 of them.
        assert!((tf.idf[2] - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-12);
        for r in &rows {
            let norm: f64 = tf.transform(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
    }
}
