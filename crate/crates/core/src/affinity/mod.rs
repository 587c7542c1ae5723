//! Episode affinity graph from admission text.

mod skipgram;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Episode, ADMISSION_ATTRIBUTES};
use crate::error::{Error, Result};
use crate::util;

pub use skipgram::{train_skipgram, SkipgramConfig, WordVectors};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Lowercased whitespace tokens of the admission type, location and diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionDocument {
    pub episode_id: String,
    pub tokens: Vec<String>,
}

impl AdmissionDocument {
    pub fn from_episode(episode: &Episode) -> Self {
        let tokens = ADMISSION_ATTRIBUTES
            .iter()
            .filter_map(|a| episode.categorical(a))
            .flat_map(str::split_whitespace)
            .map(str::to_lowercase)
            .collect();
        Self {
            episode_id: episode.episode_id.clone(),
            tokens,
        }
    }
}

impl AsRef<[String]> for AdmissionDocument {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

pub fn admission_documents(dataset: &Dataset) -> Vec<AdmissionDocument> {
    dataset.episodes.iter().map(AdmissionDocument::from_episode).collect()
}

/// Mean of the L2-normalized vectors of in-vocabulary tokens; zero when none.
pub fn sentence_vector(tokens: &[String], wv: &WordVectors) -> Vec<f64> {
    let mut acc = vec![0.0; wv.dim()];
    let mut n = 0usize;
    for t in tokens {
        let Some(v) = wv.get(t) else { continue };
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x / norm);
            n += 1;
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Undirected graph over episodes; `neighbors[i]` is sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinityGraph {
    pub ids: Vec<String>,
    pub neighbors: Vec<Vec<usize>>,
    pub self_loops: bool,
}

impl AffinityGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Undirected edge count, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, ns)| ns.iter().filter(|&&j| j > i).count())
            .sum()
    }

    pub fn isolated_count(&self) -> usize {
        self.neighbors.iter().filter(|n| n.is_empty()).count()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(i, ns)| ns.iter().all(|&j| self.has_edge(j, i)))
    }

    /// Adds `v ∈ N(v)` for every node.
    pub fn with_self_loops(mut self) -> Self {
        if !self.self_loops {
            for (i, ns) in self.neighbors.iter_mut().enumerate() {
                if let Err(p) = ns.binary_search(&i) {
                    ns.insert(p, i);
                }
            }
            self.self_loops = true;
        }
        self
    }

    pub fn from_edges(ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = ids.len();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: i.max(j) + 1,
                });
            }
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for ns in &mut neighbors {
            ns.sort_unstable();
            ns.dedup();
        }
        Ok(Self {
            ids,
            neighbors,
            self_loops: false,
        })
    }

    /// Edge list with `id_i < id_j`, sorted; self-loops are not written.
    pub fn edges_text(&self) -> String {
        let mut lines: Vec<(&str, &str)> = Vec::with_capacity(self.edge_count());
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns.iter().filter(|&&j| j > i) {
                let (a, b) = (self.ids[i].as_str(), self.ids[j].as_str());
                lines.push(if a < b { (a, b) } else { (b, a) });
            }
        }
        lines.sort_unstable();
        let mut s = String::new();
        for (a, b) in lines {
            s.push_str(a);
            s.push('\t');
            s.push_str(b);
            s.push('\n');
        }
        s
    }

    pub fn save_edges(&self, path: &Path) -> Result<()> {
        util::write_string(path, &self.edges_text())
    }

    /// Reads `graph.edges` over a known node list; unknown ids are an error.
    pub fn load_edges(path: &Path, ids: Vec<String>) -> Result<Self> {
        let text = util::read_to_string(path)?;
        let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut edges = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedRecord {
                file: path.display().to_string(),
                line: ln + 1,
                reason,
            };
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `id_i<TAB>id_j`".into()))?;
            let i = *pos.get(a).ok_or_else(|| bad(format!("unknown episode {a:?}")))?;
            let j = *pos.get(b).ok_or_else(|| bad(format!("unknown episode {b:?}")))?;
            edges.push((i, j));
        }
        Self::from_edges(ids, &edges)
    }
}

/// Connects `i` and `j` iff `exp(-‖vᵢ − vⱼ‖₂) > threshold`, evaluated as
/// `‖vᵢ − vⱼ‖₂ < −ln(threshold)`. All pairs are compared exactly.
pub fn build_graph(ids: Vec<String>, vectors: &[Vec<f64>], threshold: f64) -> Result<AffinityGraph> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "similarity threshold {threshold} must lie in (0, 1)"
        )));
    }
    if ids.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            found: vectors.len(),
        });
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let radius = -threshold.ln();
    let upper: Vec<Vec<usize>> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            ((i + 1)..vectors.len())
                .filter(|&j| {
                    let d2: f64 = vectors[i]
                        .iter()
                        .zip(&vectors[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d2.sqrt() < radius
                })
                .collect()
        })
        .collect();
    let edges: Vec<(usize, usize)> = upper
        .iter()
        .enumerate()
        .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
        .collect();
    let graph = AffinityGraph::from_edges(ids, &edges)?;
    debug_assert!(graph.is_symmetric());
    Ok(graph)
}

/// Word vectors, per-episode sentence vectors and the thresholded graph.
#[derive(Debug, Clone)]
pub struct GraphArtifacts {
    pub word_vectors: WordVectors,
    pub sentence_vectors: Vec<Vec<f64>>,
    pub graph: AffinityGraph,
}

/// Full pipeline over every episode. Pass `external` to skip skipgram training.
pub fn build_affinity_graph(
    dataset: &Dataset,
    skipgram: &SkipgramConfig,
    threshold: f64,
    external: Option<WordVectors>,
) -> Result<GraphArtifacts> {
    if dataset.episodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let docs = admission_documents(dataset);
    let word_vectors = match external {
        Some(wv) => wv,
        None => train_skipgram(&docs, skipgram)?,
    };
    let sentence_vectors: Vec<Vec<f64>> = docs
        .iter()
        .map(|d| sentence_vector(&d.tokens, &word_vectors))
        .collect();
    let ids = docs.into_iter().map(|d| d.episode_id).collect();
    let graph = build_graph(ids, &sentence_vectors, threshold)?;
    log::info!(
        "affinity graph: {} nodes, {} edges, {} isolated",
        graph.len(),
        graph.edge_count(),
        graph.isolated_count()
    );
    Ok(GraphArtifacts {
        word_vectors,
        sentence_vectors,
        graph,
    })
}
