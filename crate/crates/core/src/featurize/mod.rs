//! Fixed-length inputs per attribute type, each entry paired with an
//! observed/missing flag.
//!
//! Missing entries always carry the value 0 (the masked-zero convention), so
//! a consumer that ignores the mask sees mean-imputed standardized data.

mod categorical;
mod standardize;
mod stats;
mod text;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Episode, ModalityKind, ModalitySchema, Split, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::util;

pub use categorical::{age_bucket, CategoricalEncoder, CategoricalLevels, OTHER_LEVEL};
pub use standardize::Standardizer;
pub use stats::{segment_series, segment_stats, SegmentStats, SEGMENT_NAMES, STAT_NAMES};
pub use text::{build_bow, build_vocab, TfIdf, Vocabulary, DEFAULT_MAX_FRAC, DEFAULT_MIN_FRAC};

/// Features per time-series variable: 7 segments x 9 statistics.
pub const FEATURES_PER_VARIABLE: usize = 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorWithMask {
    pub values: Vec<f64>,
    /// `true` = observed.
    pub mask: Vec<bool>,
}

impl FeatureVectorWithMask {
    pub fn observed(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        Self { values, mask }
    }

    pub fn missing(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            mask: vec![false; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn any_missing(&self) -> bool {
        self.mask.iter().any(|m| !m)
    }

    pub fn any_observed(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    /// `values[j] == 0` wherever `mask[j]` is false, and lengths agree.
    pub fn is_masked_zero(&self) -> bool {
        self.values.len() == self.mask.len()
            && self
                .values
                .iter()
                .zip(&self.mask)
                .all(|(&v, &m)| m || v == 0.0)
    }
}

pub fn timeseries_feature_names(variables: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(variables.len() * FEATURES_PER_VARIABLE);
    for v in variables {
        for seg in SEGMENT_NAMES {
            for stat in STAT_NAMES {
                names.push(format!("{v}:{seg}:{stat}"));
            }
        }
    }
    names
}

/// 63 features per variable in list order; the 9 statistics of an empty segment are masked.
pub fn build_timeseries_features(
    episode: &Episode,
    variables: &[String],
    window: f64,
) -> FeatureVectorWithMask {
    let mut values = Vec::with_capacity(variables.len() * FEATURES_PER_VARIABLE);
    let mut mask = Vec::with_capacity(variables.len() * FEATURES_PER_VARIABLE);
    for v in variables {
        let points = episode.series.get(v).map(Vec::as_slice).unwrap_or(&[]);
        for seg in segment_series(points, window) {
            let s = segment_stats(&seg);
            if s.observed {
                values.extend_from_slice(&s.values);
            } else {
                values.extend_from_slice(&[0.0; 9]);
            }
            mask.extend_from_slice(&[s.observed; 9]);
        }
    }
    FeatureVectorWithMask { values, mask }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizeConfig {
    pub window: f64,
    pub min_frac: f64,
    pub max_frac: f64,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            min_frac: DEFAULT_MIN_FRAC,
            max_frac: DEFAULT_MAX_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeTransform {
    Numeric {
        variables: Vec<String>,
        standardizer: Standardizer,
    },
    BagOfWords {
        note_type: String,
        vocab: Vocabulary,
        tfidf: TfIdf,
    },
    Categorical {
        encoder: CategoricalEncoder,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedType {
    pub schema: ModalitySchema,
    pub transform: TypeTransform,
}

impl FittedType {
    pub fn dim(&self) -> usize {
        match &self.transform {
            TypeTransform::Numeric { variables, .. } => variables.len() * FEATURES_PER_VARIABLE,
            TypeTransform::BagOfWords { vocab, .. } => vocab.len(),
            TypeTransform::Categorical { encoder } => encoder.dim(),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match &self.transform {
            TypeTransform::Numeric { variables, .. } => timeseries_feature_names(variables),
            TypeTransform::BagOfWords { note_type, vocab, .. } => {
                vocab.tokens.iter().map(|t| format!("{note_type}:{t}")).collect()
            }
            TypeTransform::Categorical { encoder } => encoder.feature_names(),
        }
    }

    /// Name of the source attribute for every column.
    pub fn column_attributes(&self) -> Vec<String> {
        match &self.transform {
            TypeTransform::Numeric { variables, .. } => variables
                .iter()
                .flat_map(|v| std::iter::repeat_n(v.clone(), FEATURES_PER_VARIABLE))
                .collect(),
            TypeTransform::BagOfWords {
                note_type, vocab, ..
            } => vec![note_type.clone(); vocab.len()],
            TypeTransform::Categorical { encoder } => encoder.column_attributes(),
        }
    }

    /// Model inputs for one episode: standardized numerics, raw counts, or one-hots.
    pub fn encode(&self, episode: &Episode, window: f64) -> FeatureVectorWithMask {
        match &self.transform {
            TypeTransform::Numeric {
                variables,
                standardizer,
            } => standardizer.transform(&build_timeseries_features(episode, variables, window)),
            TypeTransform::BagOfWords {
                note_type, vocab, ..
            } => build_bow(episode, note_type, vocab),
            TypeTransform::Categorical { encoder } => encoder.encode(episode),
        }
    }
}

/// Transformations fitted on the training split, one per attribute type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeaturizer {
    pub config: FeaturizeConfig,
    pub types: Vec<FittedType>,
}

impl FittedFeaturizer {
    /// Fits vocabularies, category levels and standardizers on training episodes only.
    pub fn fit(dataset: &Dataset, config: FeaturizeConfig) -> Result<Self> {
        let train: Vec<&Episode> = dataset
            .indices(Split::Train)
            .into_iter()
            .map(|i| &dataset.episodes[i])
            .collect();
        let types = dataset
            .schema
            .iter()
            .map(|schema| fit_type(schema, &train, &config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, types })
    }

    pub fn get(&self, type_id: &str) -> Option<&FittedType> {
        self.types.iter().find(|t| t.schema.type_id == type_id)
    }

    pub fn transform(&self, dataset: &Dataset) -> FeaturizedDataset {
        let types = self
            .types
            .iter()
            .map(|t| {
                let rows = dataset
                    .episodes
                    .par_iter()
                    .map(|e| t.encode(e, self.config.window))
                    .collect();
                TypeFeatures {
                    schema: t.schema.clone(),
                    feature_names: t.feature_names(),
                    rows,
                }
            })
            .collect();
        FeaturizedDataset {
            ids: dataset.ids().map(str::to_string).collect(),
            types,
        }
    }
}

fn fit_type(schema: &ModalitySchema, train: &[&Episode], config: &FeaturizeConfig) -> Result<FittedType> {
    let transform = match schema.kind {
        ModalityKind::NumericGroup => {
            let variables = schema.attribute_names.clone();
            let raw: Vec<FeatureVectorWithMask> = train
                .par_iter()
                .map(|e| build_timeseries_features(e, &variables, config.window))
                .collect();
            let standardizer = Standardizer::fit(&raw, variables.len() * FEATURES_PER_VARIABLE);
            TypeTransform::Numeric {
                variables,
                standardizer,
            }
        }
        ModalityKind::BagOfWords => {
            let [note_type] = schema.attribute_names.as_slice() else {
                return Err(Error::InvalidConfig(format!(
                    "bag-of-words type {:?} must name exactly one note type",
                    schema.type_id
                )));
            };
            let corpus: Vec<&[String]> = train
                .iter()
                .filter_map(|e| e.notes.get(note_type).map(Vec::as_slice))
                .collect();
            let vocab = match build_vocab(corpus, config.min_frac, config.max_frac) {
                Ok(v) => v,
                Err(Error::EmptyCorpus) => {
                    log::warn!("no training notes of type {note_type:?}; vocabulary is empty");
                    Vocabulary::from_tokens(Vec::new(), Vec::new())
                }
                Err(e) => return Err(e),
            };
            let counts: Vec<FeatureVectorWithMask> =
                train.iter().map(|e| build_bow(e, note_type, &vocab)).collect();
            let tfidf = TfIdf::fit(&counts, vocab.len());
            TypeTransform::BagOfWords {
                note_type: note_type.clone(),
                vocab,
                tfidf,
            }
        }
        ModalityKind::CategoricalGroup => TypeTransform::Categorical {
            encoder: CategoricalEncoder::fit(&schema.attribute_names, train.iter().copied()),
        },
    };
    let mut schema = schema.clone();
    let fitted = FittedType {
        schema: schema.clone(),
        transform,
    };
    schema.domain_dim = Some(fitted.dim());
    Ok(FittedType { schema, ..fitted })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeFeatures {
    pub schema: ModalitySchema,
    pub feature_names: Vec<String>,
    /// One row per episode, in dataset order.
    pub rows: Vec<FeatureVectorWithMask>,
}

impl TypeFeatures {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedDataset {
    pub ids: Vec<String>,
    pub types: Vec<TypeFeatures>,
}

impl FeaturizedDataset {
    pub fn get(&self, type_id: &str) -> Option<&TypeFeatures> {
        self.types.iter().find(|t| t.schema.type_id == type_id)
    }

    /// Writes `featurizer.json` plus `<type_id>/features.csv`, `mask.csv`
    /// (and `vocab.txt` for text types) under `dir`.
    pub fn save(&self, fitted: &FittedFeaturizer, dir: &Path) -> Result<()> {
        util::create_dir_all(dir)?;
        util::write_string(
            &dir.join("featurizer.json"),
            &serde_json::to_string(fitted)?,
        )?;
        for t in &self.types {
            let tdir = dir.join(&t.schema.type_id);
            util::create_dir_all(&tdir)?;
            let mut fw = csv::Writer::from_path(tdir.join("features.csv"))?;
            let mut mw = csv::Writer::from_path(tdir.join("mask.csv"))?;
            let header: Vec<&str> = std::iter::once("episode_id")
                .chain(t.feature_names.iter().map(String::as_str))
                .collect();
            fw.write_record(&header)?;
            mw.write_record(&header)?;
            for (id, row) in self.ids.iter().zip(&t.rows) {
                fw.write_record(
                    std::iter::once(id.clone()).chain(row.values.iter().map(|v| v.to_string())),
                )?;
                mw.write_record(
                    std::iter::once(id.clone())
                        .chain(row.mask.iter().map(|&m| if m { "1" } else { "0" }.to_string())),
                )?;
            }
            fw.flush().map_err(|e| Error::io(tdir.join("features.csv"), e))?;
            mw.flush().map_err(|e| Error::io(tdir.join("mask.csv"), e))?;
            if let Some(FittedType {
                transform: TypeTransform::BagOfWords { vocab, .. },
                ..
            }) = fitted.get(&t.schema.type_id)
            {
                util::write_string(&tdir.join("vocab.txt"), &vocab.to_text())?;
            }
        }
        Ok(())
    }

    /// Reads back what [`FeaturizedDataset::save`] wrote.
    pub fn load(dir: &Path) -> Result<(FittedFeaturizer, FeaturizedDataset)> {
        let fpath = dir.join("featurizer.json");
        let fitted: FittedFeaturizer = serde_json::from_str(&util::read_to_string(&fpath)?)
            .map_err(|e| Error::format(&fpath, e.to_string()))?;
        let mut ids: Option<Vec<String>> = None;
        let mut types = Vec::new();
        for ft in &fitted.types {
            let tdir = dir.join(&ft.schema.type_id);
            let (fids, names, values) = read_matrix(&tdir.join("features.csv"), |s| {
                s.parse::<f64>().map_err(|e| e.to_string())
            })?;
            let (mids, _, masks) = read_matrix(&tdir.join("mask.csv"), |s| match s {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(format!("mask value {other:?}")),
            })?;
            if fids != mids {
                return Err(Error::IdMisalignment(format!(
                    "{}: features.csv and mask.csv rows differ",
                    ft.schema.type_id
                )));
            }
            match &ids {
                None => ids = Some(fids),
                Some(prev) if *prev != fids => {
                    return Err(Error::IdMisalignment(format!(
                        "{}: episode order differs from other types",
                        ft.schema.type_id
                    )))
                }
                _ => {}
            }
            let rows = values
                .into_iter()
                .zip(masks)
                .map(|(values, mask)| FeatureVectorWithMask { values, mask })
                .collect();
            types.push(TypeFeatures {
                schema: ft.schema.clone(),
                feature_names: names,
                rows,
            });
        }
        Ok((
            fitted,
            FeaturizedDataset {
                ids: ids.unwrap_or_default(),
                types,
            },
        ))
    }
}

type Matrix<T> = (Vec<String>, Vec<String>, Vec<Vec<T>>);

fn read_matrix<T>(path: &Path, parse: impl Fn(&str) -> Result<T, String>) -> Result<Matrix<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() + 1 {
            return Err(Error::MalformedRecord {
                file: path.display().to_string(),
                line: i + 2,
                reason: format!("expected {} fields, found {}", names.len() + 1, rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(&parse)
            .collect::<Result<Vec<T>, String>>()
            .map_err(|reason| Error::MalformedRecord {
                file: path.display().to_string(),
                line: i + 2,
                reason,
            })?;
        rows.push(row);
    }
    Ok((ids, names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    #[test]
    fn seventeen_variables_give_1071_columns() {
        let vars: Vec<String> = crate::dataset::CLINICAL_VARIABLES
            .iter()
            .map(|s| s.to_string())
            .collect();
        let f = build_timeseries_features(&Episode::new("e"), &vars, 48.0);
        assert_eq!(f.len(), 1071);
        assert!(f.mask.iter().all(|&m| !m));
        assert!(f.is_masked_zero());
    }

    #[test]
    fn dense_variable_fully_observed() {
        let mut e = Episode::new("e");
        e.series.insert(
            "hr".into(),
            (0..=48).map(|t| (t as f64, 80.0 + t as f64)).collect(),
        );
        let f = build_timeseries_features(&e, &["hr".to_string()], 48.0);
        assert_eq!(f.len(), 63);
        assert!(f.mask.iter().all(|&m| m));
    }

    #[test]
    fn standardized_train_features_have_zero_mean_unit_variance() {
        let cfg = SyntheticConfig {
            episodes: 150,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg, 4).unwrap();
        let fitted = FittedFeaturizer::fit(&ds, FeaturizeConfig::default()).unwrap();
        let feats = fitted.transform(&ds);
        let ts = feats.get("timeseries").unwrap();
        let train = ds.indices(Split::Train);
        for j in 0..ts.dim() {
            let obs: Vec<f64> = train
                .iter()
                .filter(|&&i| ts.rows[i].mask[j])
                .map(|&i| ts.rows[i].values[j])
                .collect();
            if obs.is_empty() {
                continue;
            }
            let m = util::mean(&obs);
            let sd = util::std_pop(&obs);
            assert!(m.abs() < 1e-9, "feature {j} mean {m}");
            assert!(sd == 0.0 || (sd * sd - 1.0).abs() < 1e-9, "feature {j} var {}", sd * sd);
        }
        for t in &feats.types {
            assert!(t.rows.iter().all(FeatureVectorWithMask::is_masked_zero));
            assert_eq!(Some(t.dim()), t.schema.domain_dim);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = SyntheticConfig {
            episodes: 40,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg, 2).unwrap();
        let fitted = FittedFeaturizer::fit(&ds, FeaturizeConfig::default()).unwrap();
        let feats = fitted.transform(&ds);
        let dir = tempfile::tempdir().unwrap();
        feats.save(&fitted, dir.path()).unwrap();
        let (f2, feats2) = FeaturizedDataset::load(dir.path()).unwrap();
        assert_eq!(f2, fitted);
        assert_eq!(feats2, feats);
        assert!(dir.path().join("note_ecg/vocab.txt").exists());
    }
}
