//! Episode records, their on-disk layout, and labeled-subset sampling.
//!
//! A dataset directory holds `episodes.jsonl` (one episode per line),
//! `split.csv` (`episode_id,split`), and optionally `schema.json`.

mod mapping;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub use mapping::{map_category, CategoryMapping};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_clusters, SeriesGrouping, SyntheticConfig, ADMISSION_ATTRIBUTES,
    CLINICAL_VARIABLES, DEMOGRAPHIC_ATTRIBUTES,
};

/// Observation window length in hours.
pub const DEFAULT_WINDOW: f64 = 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityKind {
    NumericGroup,
    BagOfWords,
    CategoricalGroup,
}

/// One attribute type: a group of attributes that share an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySchema {
    pub type_id: String,
    pub kind: ModalityKind,
    pub attribute_names: Vec<String>,
    /// Input dimension; known only after featurization for bag-of-words types.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_dim: Option<usize>,
}

impl ModalitySchema {
    pub fn new(type_id: impl Into<String>, kind: ModalityKind, attributes: &[&str]) -> Self {
        Self {
            type_id: type_id.into(),
            kind,
            attribute_names: attributes.iter().map(|s| s.to_string()).collect(),
            domain_dim: None,
        }
    }
}

pub fn validate_schema(schema: &[ModalitySchema]) -> Result<()> {
    let mut seen = HashSet::new();
    for m in schema {
        if !seen.insert(m.type_id.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "duplicate type_id {:?} in schema",
                m.type_id
            )));
        }
        if m.attribute_names.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "type {:?} has no attributes",
                m.type_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mort: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub los: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dd: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    /// attribute name -> (hours since admission, value), sorted by time.
    #[serde(default)]
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    #[serde(default)]
    pub notes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub categoricals: BTreeMap<String, Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl Episode {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            episode_id: id.into(),
            series: BTreeMap::new(),
            notes: BTreeMap::new(),
            categoricals: BTreeMap::new(),
            labels: None,
        }
    }

    pub fn categorical(&self, name: &str) -> Option<&str> {
        self.categoricals.get(name).and_then(|v| v.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Vec<ModalitySchema>,
    pub episodes: Vec<Episode>,
    pub split: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.episodes.iter().map(|e| e.episode_id.as_str())
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    /// Episode indices (dataset order) belonging to `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| self.split_of(&e.episode_id) == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_ids(&self) -> Vec<&str> {
        self.indices(Split::Train)
            .into_iter()
            .map(|i| self.episodes[i].episode_id.as_str())
            .collect()
    }

    pub fn schema_type(&self, type_id: &str) -> Option<&ModalitySchema> {
        self.schema.iter().find(|m| m.type_id == type_id)
    }

    /// Checks id uniqueness, split coverage, and that every map key is declared.
    pub fn validate(&self) -> Result<()> {
        validate_schema(&self.schema)?;
        let mut seen = HashSet::new();
        for e in &self.episodes {
            if !seen.insert(e.episode_id.as_str()) {
                return Err(Error::DuplicateEpisodeId(e.episode_id.clone()));
            }
            check_keys(e, &self.schema)?;
            if !self.split.contains_key(&e.episode_id) {
                return Err(Error::InvalidSplit(format!(
                    "episode {:?} has no split assignment",
                    e.episode_id
                )));
            }
        }
        if let Some(extra) = self.split.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(Error::InvalidSplit(format!(
                "split.csv names unknown episode {extra:?}"
            )));
        }
        Ok(())
    }

    /// Writes `episodes.jsonl`, `split.csv` and `schema.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        util::create_dir_all(dir)?;
        let path = dir.join("episodes.jsonl");
        let mut w = util::create(&path)?;
        for e in &self.episodes {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|err| Error::io(&path, err))?;
        }
        w.flush().map_err(|err| Error::io(&path, err))?;

        let mut split = String::from("episode_id,split\n");
        for e in &self.episodes {
            if let Some(s) = self.split.get(&e.episode_id) {
                split.push_str(&format!("{},{}\n", e.episode_id, s));
            }
        }
        util::write_string(&dir.join("split.csv"), &split)?;
        util::write_string(
            &dir.join("schema.json"),
            &(serde_json::to_string_pretty(&self.schema)? + "\n"),
        )
    }
}

fn check_keys(e: &Episode, schema: &[ModalitySchema]) -> Result<()> {
    let declared = |kind: ModalityKind, name: &str| {
        schema
            .iter()
            .filter(|m| m.kind == kind)
            .any(|m| m.attribute_names.iter().any(|a| a == name))
    };
    let unknown = |name: &str| Error::UnknownAttribute {
        episode: e.episode_id.clone(),
        name: name.to_string(),
    };
    for k in e.series.keys() {
        if !declared(ModalityKind::NumericGroup, k) {
            return Err(unknown(k));
        }
    }
    for k in e.notes.keys() {
        if !declared(ModalityKind::BagOfWords, k) {
            return Err(unknown(k));
        }
    }
    for k in e.categoricals.keys() {
        if !declared(ModalityKind::CategoricalGroup, k) {
            return Err(unknown(k));
        }
    }
    Ok(())
}

/// Loads `episodes.jsonl` and `split.csv` from `dir` under the default 48 h window.
pub fn load_dataset(dir: &Path, schema: &[ModalitySchema]) -> Result<Dataset> {
    load_dataset_with_window(dir, schema, DEFAULT_WINDOW)
}

/// Loads a dataset using the `schema.json` stored alongside it.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let path = dir.join("schema.json");
    let schema: Vec<ModalitySchema> = serde_json::from_str(&util::read_to_string(&path)?)
        .map_err(|e| Error::format(&path, e.to_string()))?;
    load_dataset(dir, &schema)
}

pub fn load_dataset_with_window(
    dir: &Path,
    schema: &[ModalitySchema],
    window: f64,
) -> Result<Dataset> {
    validate_schema(schema)?;
    let text = util::read_to_string(&dir.join("episodes.jsonl"))?;
    let mut episodes = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            file: "episodes.jsonl".into(),
            line: line_no,
            reason,
        };
        let mut e: Episode = serde_json::from_str(line).map_err(|err| malformed(err.to_string()))?;
        for (name, points) in e.series.iter_mut() {
            for &(t, v) in points.iter() {
                if !(0.0..=window).contains(&t) || !v.is_finite() {
                    return Err(malformed(format!(
                        "series {name:?} has point ({t}, {v}) outside [0, {window}] or non-finite"
                    )));
                }
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        if !seen.insert(e.episode_id.clone()) {
            return Err(Error::DuplicateEpisodeId(e.episode_id));
        }
        check_keys(&e, schema)?;
        episodes.push(e);
    }

    let split_path = dir.join("split.csv");
    let mut reader = csv::Reader::from_path(&split_path)
        .map_err(|e| Error::format(&split_path, e.to_string()))?;
    let mut split = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let malformed = |reason: String| Error::MalformedRecord {
            file: "split.csv".into(),
            line: i + 2,
            reason,
        };
        if row.len() != 2 {
            return Err(malformed(format!("expected 2 fields, found {}", row.len())));
        }
        let s = match row[1].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(malformed(format!("unknown split {other:?}"))),
        };
        if split.insert(row[0].trim().to_string(), s).is_some() {
            return Err(Error::InvalidSplit(format!(
                "episode {:?} assigned twice",
                &row[0]
            )));
        }
    }

    let ds = Dataset {
        schema: schema.to_vec(),
        episodes,
        split,
    };
    ds.validate()?;
    Ok(ds)
}

/// Uniform sample of `n` training episode ids without replacement.
pub fn sample_labeled_subset(dataset: &Dataset, n: usize, seed: u64) -> Result<BTreeSet<String>> {
    let train = dataset.train_ids();
    if n > train.len() {
        return Err(Error::SubsetTooLarge {
            requested: n,
            available: train.len(),
        });
    }
    let mut rng = util::rng(seed);
    Ok(index::sample(&mut rng, train.len(), n)
        .into_iter()
        .map(|i| train[i].to_string())
        .collect())
}
