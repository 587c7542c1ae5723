use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 1,
            lr: 0.025,
            seed: 0,
        }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::InvalidConfig(
                "skipgram dim, window, epochs and min_count must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("skipgram lr {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Word vectors stored row-major, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    words: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl WordVectors {
    pub fn new(words: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != words.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: words.len() * dim,
                found: data.len(),
            });
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Self {
            words,
            dim,
            data,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(if nx > 0.0 && ny > 0.0 { dot / (nx * ny) } else { 0.0 })
    }

    /// Text format: `N d` header, then `token v1 .. vd` per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.words.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            s.push_str(w);
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, reason: String| Error::MalformedRecord {
            file: file.to_string(),
            line: line + 1,
            reason,
        };
        let (hl, header) = lines.next().ok_or_else(|| bad(0, "missing `N d` header".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let (n, dim) = match head.as_slice() {
            [n, d] => (
                n.parse::<usize>().map_err(|e| bad(hl, e.to_string()))?,
                d.parse::<usize>().map_err(|e| bad(hl, e.to_string()))?,
            ),
            _ => return Err(bad(hl, "header must be `N d`".into())),
        };
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (ln, line) in lines {
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-blank line");
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|e| bad(ln, format!("{f:?}: {e}")))?);
            }
            if data.len() - before != dim {
                return Err(bad(ln, format!("expected {dim} values, found {}", data.len() - before)));
            }
            words.push(word.to_string());
        }
        if words.len() != n {
            return Err(Error::format(
                file,
                format!("header declares {n} vectors, found {}", words.len()),
            ));
        }
        Self::new(words, dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_string(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?, &path.display().to_string())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Skipgram with negative sampling over whitespace-token documents.
///
/// Sequential single-writer updates, so the result is a pure function of
/// `(documents, config)`. Vocabulary order is lexicographic.
pub fn train_skipgram<D: AsRef<[String]>>(documents: &[D], config: &SkipgramConfig) -> Result<WordVectors> {
    config.validate()?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        for t in doc.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    counts.retain(|_, c| *c >= config.min_count);
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let words: Vec<String> = counts.keys().map(|w| w.to_string()).collect();
    let index: HashMap<&str, usize> = counts.keys().enumerate().map(|(i, w)| (*w, i)).collect();
    let freq: Vec<f64> = counts.values().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&freq).expect("positive weights");

    let sentences: Vec<Vec<usize>> = documents
        .iter()
        .map(|d| {
            d.as_ref()
                .iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect()
        })
        .collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    let total_steps = (total_tokens * config.epochs).max(1) as f64;

    let (v, d) = (words.len(), config.dim);
    let mut rng = util::rng(config.seed);
    let mut w_in: Vec<f64> = (0..v * d)
        .map(|_| (rng.random::<f64>() - 0.5) / d as f64)
        .collect();
    let mut w_out = vec![0.0; v * d];
    let mut grad = vec![0.0; d];
    let mut processed = 0usize;

    for _ in 0..config.epochs {
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = config.lr * (1.0 - processed as f64 / total_steps).max(1e-4);
                processed += 1;
                let reach = rng.random_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sent.len() - 1);
                for (cpos, &context) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let input = center * d;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = target * d;
                        let dot: f64 = (0..d).map(|j| w_in[input + j] * w_out[out + j]).sum();
                        let g = lr * (label - sigmoid(dot));
                        for j in 0..d {
                            grad[j] += g * w_out[out + j];
                            w_out[out + j] += g * w_in[input + j];
                        }
                    }
                    for j in 0..d {
                        w_in[input + j] += grad[j];
                    }
                }
            }
        }
    }
    WordVectors::new(words, d, w_in)
}
